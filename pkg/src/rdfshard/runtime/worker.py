"""Worker process: holds one local triple store and serves sub-plans to peers
and the coordinator."""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from collections import OrderedDict
from collections.abc import Iterator

from ..store import Dictionary, Triple, TripleStore
from ..terms import Term, TermKind
from . import operators
from .wire import (
    CREDIT_WINDOW,
    ConnectionClosed,
    Frame,
    MsgType,
    ProtocolError,
    decode_page,
    decode_triples,
    encode_page,
    expect,
    paginate,
    read_frame,
    send_frame,
    send_json,
)

log = logging.getLogger(__name__)

MAX_DEPLOYMENTS = 1024


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def dict_chunk_lines(items) -> bytes:
    return "".join(f"{tid}\t{t.kind.value}\t{t.lexical}\n" for tid, t in items).encode("utf-8")


class WorkerState:
    def __init__(self, host_id: int | None = None):
        self.host_id = host_id
        self.peers: dict[int, str] = {}
        self.catalog: dict | None = None
        self.dictionary = Dictionary()
        self.store = TripleStore()
        self._pending: list[Triple] = []
        self.deployments: OrderedDict[int, dict] = OrderedDict()
        self.pages_fetched: dict[int, int] = {}
        self.lock = threading.Lock()

    # -- execution

    def subplan(self, query: int, op: int) -> dict:
        with self.lock:
            dep = self.deployments.get(query)
        if dep is None or op not in dep["ops"]:
            raise ProtocolError(f"no sub-plan for query {query} operator {op}")
        return dep["ops"][op]

    def fetcher(self, query: int):
        def fetch(node: dict) -> Iterator[tuple[int, ...]]:
            with self.lock:
                addr = self.deployments[query]["peers"][str(node["host"])]
            return self._pull(addr, query, node["id"])

        return fetch

    def _pull(self, addr: str, query: int, op: int) -> Iterator[tuple[int, ...]]:
        with socket.create_connection(parse_address(addr)) as sock:
            send_json(sock, MsgType.START, {"query": query, "op": op})
            while True:
                frame = expect(read_frame(sock), MsgType.PAGE)
                rows, end = decode_page(frame.payload)
                with self.lock:
                    self.pages_fetched[query] = self.pages_fetched.get(query, 0) + 1
                if not end:
                    send_frame(sock, MsgType.ACK)
                yield from rows
                if end:
                    return

    def rows(self, query: int, op: int) -> tuple[Iterator[tuple[int, ...]], int]:
        node = self.subplan(query, op)
        return operators.build(node, self.store, self.dictionary, self.fetcher(query)), len(node["schema"])


def _index_ops(node: dict, out: dict[int, dict]) -> None:
    if "id" in node:
        out[node["id"]] = node
    for c in node.get("children", []):
        if c["kind"] != "fetch":
            _index_ops(c, out)


class _Handler(socketserver.BaseRequestHandler):
    server: WorkerServer

    def handle(self) -> None:
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        state = self.server.state
        while True:
            try:
                frame = read_frame(sock)
            except (ConnectionClosed, OSError):
                return
            try:
                self.dispatch(sock, state, frame)
            except (ConnectionClosed, BrokenPipeError, ConnectionResetError):
                return
            except Exception as exc:  # reported to the peer, connection survives
                log.debug("worker error", exc_info=True)
                try:
                    send_json(sock, MsgType.ERROR, {"error": f"{type(exc).__name__}: {exc}"})
                except OSError:
                    return

    def dispatch(self, sock: socket.socket, state: WorkerState, frame: Frame) -> None:
        t = frame.type
        if t == MsgType.ACK:
            return  # late credit from a finished stream
        if t == MsgType.HELLO:
            body = frame.json()
            if "host" in body:
                state.host_id = body["host"]
            state.peers.update({int(k): v for k, v in body.get("peers", {}).items()})
            send_json(sock, MsgType.ACK, {"host": state.host_id, "triples": len(state.store)})
        elif t == MsgType.CATALOG:
            state.catalog = frame.json()
            send_json(sock, MsgType.ACK, {})
        elif t == MsgType.DICT_CHUNK:
            for line in frame.payload.decode("utf-8").splitlines():
                tid, kind, lexical = line.split("\t", 2)
                term = Term(TermKind(kind), lexical)
                if state.dictionary.lookup(term) is None:
                    state.dictionary.add(int(tid), term)
            send_json(sock, MsgType.ACK, {"terms": len(state.dictionary)})
        elif t == MsgType.LOAD_TRIPLES:
            state._pending.extend(Triple(*x) for x in decode_triples(frame.payload))
            send_json(sock, MsgType.ACK, {})
        elif t == MsgType.BOOTSTRAP_DONE:
            state.store = TripleStore(state._pending)
            state._pending = []
            send_json(sock, MsgType.ACK, {"triples": len(state.store)})
        elif t == MsgType.DEPLOY_PLAN:
            body = frame.json()
            ops: dict[int, dict] = {}
            for node in body["subplans"]:
                _index_ops(node, ops)
            with state.lock:
                state.deployments[body["query"]] = {"ops": ops, "peers": body["peers"]}
                while len(state.deployments) > MAX_DEPLOYMENTS:
                    old, _ = state.deployments.popitem(last=False)
                    state.pages_fetched.pop(old, None)
            send_json(sock, MsgType.ACK, {})
        elif t == MsgType.START:
            body = frame.json()
            if body.get("export"):
                rows, arity = iter(state.store.triples()), 3
            else:
                rows, arity = state.rows(body["query"], body["op"])
            self.stream(sock, rows, arity)
        elif t == MsgType.END_STREAM:
            q = frame.json().get("query")
            with state.lock:
                state.deployments.pop(q, None)
                state.pages_fetched.pop(q, None)
            send_json(sock, MsgType.ACK, {})
        elif t in (MsgType.INSERT, MsgType.DELETE):
            body = frame.json()
            dels = [Triple(*x) for x in body.get("delete", [])]
            ins = [Triple(*x) for x in body.get("insert", [])] if t == MsgType.INSERT else []
            for tr in dels + ins:
                for tid in tr:
                    state.dictionary.decode(tid)
            d, i = state.store.apply(dels, ins)
            send_json(sock, MsgType.ACK, {"deleted": d, "inserted": i})
        elif t == MsgType.STATS_REQ:
            body = frame.json()
            out = {"host": state.host_id, "triples": len(state.store)}
            if "query" in body:
                with state.lock:
                    out["pages"] = state.pages_fetched.get(body["query"], 0)
            send_json(sock, MsgType.STATS_RESP, out)
        else:
            send_json(sock, MsgType.ERROR, {"error": f"unknown message type {t}"})

    def stream(self, sock: socket.socket, rows, arity: int) -> None:
        """Remote Sender: pages of up to 1024 tuples, at most CREDIT_WINDOW unacknowledged."""
        unacked = 0
        for page, last in paginate(rows):
            send_frame(sock, MsgType.PAGE, encode_page(page, arity, last))
            if last:
                return
            unacked += 1
            while unacked >= CREDIT_WINDOW:
                expect(read_frame(sock), MsgType.ACK)
                unacked -= 1


class WorkerServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int] = ("127.0.0.1", 0), host_id: int | None = None):
        super().__init__(address, _Handler)
        self.state = WorkerState(host_id)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> WorkerServer:
        self._thread = threading.Thread(target=self.serve_forever, name=f"worker-{self.address}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
