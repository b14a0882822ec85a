"""Binary framing shared by coordinator, workers and clients.

A frame is a 4-byte big-endian payload length, a 1-byte message type and the
payload. Control payloads are UTF-8 JSON; PAGE and LOAD_TRIPLES payloads carry
TermIds as little-endian uint64.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass
from enum import IntEnum

PAGE_TUPLES = 1024
CREDIT_WINDOW = 4
MAX_FRAME = 1 << 31

_HEADER = struct.Struct(">IB")
_PAGE_HEADER = struct.Struct(">BHI")
END_FLAG = 0x01


class MsgType(IntEnum):
    HELLO = 1
    CATALOG = 2
    DICT_CHUNK = 3
    LOAD_TRIPLES = 4
    BOOTSTRAP_DONE = 5
    DEPLOY_PLAN = 6
    START = 7
    PAGE = 8
    END_STREAM = 9
    INSERT = 10
    DELETE = 11
    ACK = 12
    ERROR = 13
    STATS_REQ = 14
    STATS_RESP = 15


class ProtocolError(RuntimeError):
    pass


class ConnectionClosed(ProtocolError):
    pass


@dataclass
class Frame:
    type: int
    payload: bytes

    def json(self):
        return json.loads(self.payload.decode("utf-8")) if self.payload else {}


def encode_frame(mtype: int, payload: bytes = b"") -> bytes:
    if len(payload) >= MAX_FRAME:
        raise ProtocolError("payload too large")
    return _HEADER.pack(len(payload), int(mtype)) + payload


def encode_json(mtype: int, obj) -> bytes:
    return encode_frame(mtype, json.dumps(obj, separators=(",", ":")).encode("utf-8"))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise ConnectionClosed("peer closed the connection")
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> Frame:
    length, mtype = _HEADER.unpack(_recv_exact(sock, _HEADER.size))
    return Frame(mtype, _recv_exact(sock, length) if length else b"")


def send_frame(sock: socket.socket, mtype: int, payload: bytes = b"") -> None:
    sock.sendall(encode_frame(mtype, payload))


def send_json(sock: socket.socket, mtype: int, obj) -> None:
    sock.sendall(encode_json(mtype, obj))


def expect(frame: Frame, *types: int) -> Frame:
    if frame.type == MsgType.ERROR:
        raise ProtocolError(frame.json().get("error", "remote error"))
    if frame.type not in types:
        raise ProtocolError(f"unexpected message type {frame.type}")
    return frame


def request(sock: socket.socket, mtype: int, obj, *reply: int) -> Frame:
    send_json(sock, mtype, obj)
    return expect(read_frame(sock), *(reply or (MsgType.ACK,)))


# ---------------------------------------------------------------- pages


def encode_ids(rows, arity: int) -> bytes:
    flat = [v for row in rows for v in row]
    return struct.pack(f"<{len(flat)}Q", *flat) if arity else b""


def decode_ids(data: bytes, arity: int, count: int) -> list[tuple[int, ...]]:
    if arity == 0:
        return [()] * count
    flat = struct.unpack(f"<{count * arity}Q", data)
    return [flat[i : i + arity] for i in range(0, len(flat), arity)]


def encode_page(rows: list[tuple[int, ...]], arity: int, end: bool) -> bytes:
    """PAGE payload: flags u8, arity u16, count u32 (big-endian), then the tuples."""
    if len(rows) > PAGE_TUPLES:
        raise ProtocolError("page holds at most 1024 tuples")
    head = _PAGE_HEADER.pack(END_FLAG if end else 0, arity, len(rows))
    return head + encode_ids(rows, arity)


def decode_page(payload: bytes) -> tuple[list[tuple[int, ...]], bool]:
    if len(payload) < _PAGE_HEADER.size:
        raise ProtocolError("truncated page")
    flags, arity, count = _PAGE_HEADER.unpack_from(payload)
    body = payload[_PAGE_HEADER.size :]
    if len(body) != 8 * arity * count:
        raise ProtocolError("page length does not match its tuple count")
    if count > PAGE_TUPLES:
        raise ProtocolError("page holds more than 1024 tuples")
    return decode_ids(body, arity, count), bool(flags & END_FLAG)


def paginate(rows, size: int = PAGE_TUPLES):
    """Split a row iterator into (page, is_last) pairs; an empty stream yields one empty last page."""
    page: list = []
    pending = None
    for row in rows:
        page.append(row)
        if len(page) == size:
            if pending is not None:
                yield pending, False
            pending, page = page, []
    if pending is not None:
        if page:
            yield pending, False
            yield page, True
        else:
            yield pending, True
    else:
        yield page, True


def encode_triples(triples) -> bytes:
    return encode_ids(triples, 3)


def decode_triples(payload: bytes) -> list[tuple[int, int, int]]:
    if len(payload) % 24:
        raise ProtocolError("triple payload is not a multiple of 24 bytes")
    return decode_ids(payload, 3, len(payload) // 24)  # type: ignore[return-value]
