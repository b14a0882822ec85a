"""Client-facing coordinator service: queries, EXPLAIN and updates over the same framing."""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from dataclasses import dataclass

from ..sparql import render_sparql
from ..store import parse_ntriples_line
from ..terms import Term, TermKind
from .coordinator import Coordinator, Update
from .wire import ConnectionClosed, MsgType, read_frame, request, send_json
from .worker import parse_address

log = logging.getLogger(__name__)


def parse_update_lines(lines) -> list[Update]:
    """``+ <triple>`` inserts, ``- <triple>`` deletes; blank and ``#`` lines are skipped."""
    out = []
    for n, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        op, rest = line[0], line[1:]
        if op not in "+-":
            raise ValueError(f"line {n}: expected '+' or '-' before the triple")
        triple = parse_ntriples_line(rest, n)
        if triple is None:
            raise ValueError(f"line {n}: missing triple")
        out.append(Update(op, triple))
    return out


def _term_json(t: Term) -> list[str]:
    return [t.kind.value, t.lexical]


class _ClientHandler(socketserver.BaseRequestHandler):
    server: CoordinatorServer

    def handle(self) -> None:
        sock: socket.socket = self.request
        coord = self.server.coordinator
        while True:
            try:
                frame = read_frame(sock)
            except (ConnectionClosed, OSError):
                return
            try:
                body = frame.json() if frame.payload else {}
                if frame.type == MsgType.START and body.get("explain"):
                    reply = {"explain": coord.explain(body["sparql"])}
                elif frame.type == MsgType.START:
                    res = coord.execute(body["sparql"])
                    reply = {
                        "vars": res.vars,
                        "rows": [[_term_json(t) for t in row] for row in res.rows],
                        "remote_pages": res.remote_pages,
                    }
                elif frame.type == MsgType.INSERT:
                    res = coord.apply_updates(parse_update_lines(body["lines"]))
                    reply = {"hosts": res.hosts, "deleted": res.deleted, "inserted": res.inserted}
                elif frame.type == MsgType.STATS_REQ:
                    reply = {"workers": coord.worker_stats()}
                else:
                    raise ValueError(f"unsupported request type {frame.type}")
                send_json(sock, MsgType.ACK, reply)
            except Exception as exc:
                log.debug("client request failed", exc_info=True)
                try:
                    send_json(sock, MsgType.ERROR, {"error": f"{type(exc).__name__}: {exc}"})
                except OSError:
                    return


class CoordinatorServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, coordinator: Coordinator, address: tuple[str, int] = ("127.0.0.1", 0)):
        super().__init__(address, _ClientHandler)
        self.coordinator = coordinator

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> CoordinatorServer:
        threading.Thread(target=self.serve_forever, name="coordinator", daemon=True).start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


@dataclass
class RemoteResult:
    vars: list[str]
    rows: list[tuple[Term, ...]]
    remote_pages: int


class CoordinatorClient:
    """Talks to a CoordinatorServer; one connection per request."""

    def __init__(self, address: str, timeout: float | None = 300.0):
        self.address = address
        self.timeout = timeout

    def _request(self, mtype: int, body: dict) -> dict:
        with socket.create_connection(parse_address(self.address), timeout=self.timeout) as sock:
            return request(sock, mtype, body, MsgType.ACK).json()

    def execute(self, sparql) -> RemoteResult:
        text = sparql if isinstance(sparql, str) else (sparql.text or render_sparql(sparql))
        r = self._request(MsgType.START, {"sparql": text})
        rows = [tuple(Term(TermKind(k), lex) for k, lex in row) for row in r["rows"]]
        return RemoteResult(r["vars"], rows, r["remote_pages"])

    def explain(self, sparql: str) -> str:
        return self._request(MsgType.START, {"sparql": sparql, "explain": True})["explain"]

    def update(self, lines: list[str]) -> dict:
        return self._request(MsgType.INSERT, {"lines": lines})

    def stats(self) -> dict:
        return self._request(MsgType.STATS_REQ, {})
