"""Coordinator: bootstraps workers, plans and runs queries, routes updates."""

from __future__ import annotations

import itertools
import socket
import threading
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from ..allocation import Catalog, collect_stats, remainder_host
from ..fragments import FragmentRouter
from ..planner import PlanOp, explain, plan_query
from ..sparql import Query, parse_sparql
from ..store import Dictionary, Triple
from ..terms import Term
from .deploy import Deployment, split_and_deploy
from .wire import (
    ConnectionClosed,
    MsgType,
    ProtocolError,
    decode_page,
    encode_frame,
    encode_triples,
    expect,
    read_frame,
    request,
    send_frame,
    send_json,
)
from .worker import dict_chunk_lines, parse_address

DICT_BATCH = 20000
LOAD_BATCH = 20000


class QueryAborted(RuntimeError):
    pass


class UpdateRejected(RuntimeError):
    pass


@dataclass
class QueryResult:
    vars: list[str]
    rows: list[tuple[Term, ...]]
    remote_pages: int
    plan: PlanOp

    def bag(self) -> Counter:
        return Counter(self.rows)


@dataclass
class UpdateResult:
    hosts: list[int]
    deleted: int = 0
    inserted: int = 0


@dataclass
class Update:
    """``op`` is "+", "-" or "~" (modify ``old`` into ``new``)."""

    op: str
    old: tuple[Term, Term, Term]
    new: tuple[Term, Term, Term] | None = None


@dataclass
class _Batch:
    delete: list[list[int]] = field(default_factory=list)
    insert: list[list[int]] = field(default_factory=list)


class Coordinator:
    def __init__(self, catalog: Catalog, workers: Sequence[str], timeout: float | None = 60.0):
        if len(workers) != catalog.n_hosts:
            raise ValueError(f"catalog expects {catalog.n_hosts} workers, got {len(workers)}")
        self.catalog = catalog
        self.workers = list(workers)
        self.timeout = timeout
        self._qids = itertools.count(1)
        self._lock = threading.RLock()
        self._router: FragmentRouter | None = None

    # -- connections

    def _connect(self, host: int) -> socket.socket:
        try:
            sock = socket.create_connection(parse_address(self.workers[host]), timeout=self.timeout)
        except OSError as exc:
            raise ConnectionClosed(f"host {host} unreachable: {exc}") from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return sock

    def _call(self, host: int, mtype: int, obj, *reply: int):
        with self._connect(host) as sock:
            return request(sock, mtype, obj, *reply).json()

    def peers(self) -> dict[str, str]:
        return {str(i): a for i, a in enumerate(self.workers)}

    def hello(self) -> list[dict]:
        return [self._call(h, MsgType.HELLO, {"host": h, "peers": self.peers()}) for h in range(len(self.workers))]

    @property
    def dictionary(self) -> Dictionary:
        return self.catalog.get_dictionary()

    @property
    def router(self) -> FragmentRouter:
        if self._router is None:
            self._router = FragmentRouter(self.catalog.fragmentation, self.dictionary)
        return self._router

    # -- bootstrapping

    def host_of(self, t: Triple) -> tuple[int, int]:
        """(fragment id, host) responsible for an encoded triple."""
        fid = self.router.fragment_of(t)
        if fid == self.catalog.fragmentation.remainder_id:
            subject = self.dictionary.decode(t.s).lexical
            return fid, remainder_host(subject, self.catalog.n_hosts)
        return fid, self.catalog.allocation.host_of(fid)

    def _note_polarity(self, t: Triple) -> None:
        pol = self.router.polarity(t)
        if self.catalog.fragmentation.fragment_for_polarity(pol) == self.catalog.fragmentation.remainder_id:
            self.catalog.note_spill(pol)

    def bootstrap(self, source: Iterable[tuple[Term, Term, Term]]) -> Catalog:
        """Build the dictionary in one pass, ship it, route every triple to its host."""
        d = Dictionary()
        encoded = [Triple(d.encode(s), d.encode(p), d.encode(o)) for s, p, o in source]
        self.catalog.dictionary = d
        self._router = None
        n = self.catalog.n_hosts
        socks = [self._connect(h) for h in range(n)]
        try:
            for h, sock in enumerate(socks):
                request(sock, MsgType.HELLO, {"host": h, "peers": self.peers()})
                request(sock, MsgType.CATALOG, self.catalog.to_json())
            items = list(d.items())
            for i in range(0, len(items), DICT_BATCH):
                payload = encode_frame(MsgType.DICT_CHUNK, dict_chunk_lines(items[i : i + DICT_BATCH]))
                for sock in socks:
                    sock.sendall(payload)
                for sock in socks:
                    expect(read_frame(sock), MsgType.ACK)
            per_host: list[list[Triple]] = [[] for _ in range(n)]
            per_frag: dict[int, list[Triple]] = {f.id: [] for f in self.catalog.fragmentation.fragments}
            for t in dict.fromkeys(encoded):
                fid, h = self.host_of(t)
                per_host[h].append(t)
                per_frag[fid].append(t)
                if fid == self.catalog.fragmentation.remainder_id:
                    self._note_polarity(t)
            for h, sock in enumerate(socks):
                ts = per_host[h]
                for i in range(0, len(ts), LOAD_BATCH):
                    send_frame(sock, MsgType.LOAD_TRIPLES, encode_triples(ts[i : i + LOAD_BATCH]))
                    expect(read_frame(sock), MsgType.ACK)
            for sock in socks:
                send_json(sock, MsgType.BOOTSTRAP_DONE, {})
            for sock in socks:
                expect(read_frame(sock), MsgType.ACK)
        finally:
            for sock in socks:
                sock.close()
        self.catalog.stats = {fid: collect_stats(ts) for fid, ts in per_frag.items()}
        return self.catalog

    # -- queries

    def plan(self, query: Query | str) -> PlanOp:
        if isinstance(query, str):
            query = parse_sparql(query)
        with self._lock:
            return plan_query(query, self.catalog)

    def explain(self, query: Query | str) -> str:
        return explain(self.plan(query))

    def execute(self, query: Query | str) -> QueryResult:
        if isinstance(query, str):
            query = parse_sparql(query)
        plan = self.plan(query)
        qid = next(self._qids)
        dep = split_and_deploy(plan, qid)
        try:
            ids, pages = self._run(dep)
        except (ProtocolError, OSError) as exc:
            raise QueryAborted(f"query {qid} aborted: {exc}") from exc
        d = self.dictionary
        rows = [tuple(d.decode(x) for x in row) for row in ids]
        return QueryResult(list(plan.schema), rows, pages, plan)

    def _run(self, dep: Deployment) -> tuple[list[tuple[int, ...]], int]:
        for h, subplans in dep.subplans.items():
            self._call(h, MsgType.DEPLOY_PLAN, {"query": dep.query_id, "subplans": subplans, "peers": self.peers()})
        rows: list[tuple[int, ...]] = []
        try:
            with self._connect(dep.root_host) as sock:
                send_json(sock, MsgType.START, {"query": dep.query_id, "op": dep.root_op})
                while True:
                    frame = expect(read_frame(sock), MsgType.PAGE)
                    page, end = decode_page(frame.payload)
                    rows.extend(page)
                    if end:
                        break
                    send_frame(sock, MsgType.ACK)
            pages = sum(
                self._call(h, MsgType.STATS_REQ, {"query": dep.query_id}, MsgType.STATS_RESP)["pages"]
                for h in dep.hosts
            )
        finally:
            for h in dep.hosts:
                try:
                    self._call(h, MsgType.END_STREAM, {"query": dep.query_id})
                except (ProtocolError, OSError):
                    pass
        return rows, pages

    # -- updates

    def _encode_new(self, terms: Iterable[Term]) -> list[tuple[int, Term]]:
        d = self.dictionary
        fresh = []
        for t in terms:
            if d.lookup(t) is None:
                fresh.append((d.encode(t), t))
        return fresh

    def _lookup(self, triple: tuple[Term, Term, Term]) -> Triple | None:
        ids = [self.dictionary.lookup(x) for x in triple]
        return None if None in ids else Triple(*ids)  # type: ignore[arg-type]

    def _adjust_stats(self, fid: int, t: Triple, delta: int) -> None:
        from ..allocation import FragmentStats

        st = self.catalog.stats.setdefault(fid, FragmentStats())
        st.triples = max(0, st.triples + delta)
        prop = st.properties.setdefault(t.p, [0, 0, 0])
        prop[0] = max(0, prop[0] + delta)
        if delta > 0:
            prop[1], prop[2] = max(prop[1], 1), max(prop[2], 1)
            st.distinct_p = max(st.distinct_p, len(st.properties))
            st.distinct_s, st.distinct_o = max(st.distinct_s, 1), max(st.distinct_o, 1)
        objs = st.po.get(t.p)
        if objs is not None and t.o in objs:
            objs[t.o] = max(0, objs[t.o] + delta)
        elif delta > 0:
            st.po_complete = False

    def apply_updates(self, updates: Sequence[Update]) -> UpdateResult:
        """Route a batch of updates, one message per affected host; modifies that
        change host become a delete plus an insert."""
        with self._lock:
            new_terms = self._encode_new(
                x for u in updates if u.op in "+~" for x in (u.new if u.op == "~" else u.old)  # type: ignore[union-attr]
            )
            batches: dict[int, _Batch] = {}
            moves: list[tuple[int, int, Triple, Triple, int, int]] = []
            touched: list[tuple[int, Triple, int]] = []
            for u in updates:
                if u.op == "+":
                    t = self._lookup(u.old)
                    fid, h = self.host_of(t)  # type: ignore[arg-type]
                    batches.setdefault(h, _Batch()).insert.append(list(t))  # type: ignore[arg-type]
                    touched.append((fid, t, 1))  # type: ignore[arg-type]
                elif u.op == "-":
                    t = self._lookup(u.old)
                    if t is None:
                        continue
                    fid, h = self.host_of(t)
                    batches.setdefault(h, _Batch()).delete.append(list(t))
                    touched.append((fid, t, -1))
                elif u.op == "~":
                    old, new = self._lookup(u.old), self._lookup(u.new)  # type: ignore[arg-type]
                    fn, hn = self.host_of(new)  # type: ignore[arg-type]
                    if old is None:
                        batches.setdefault(hn, _Batch()).insert.append(list(new))  # type: ignore[arg-type]
                        touched.append((fn, new, 1))  # type: ignore[arg-type]
                        continue
                    fo, ho = self.host_of(old)
                    if ho == hn:
                        b = batches.setdefault(ho, _Batch())
                        b.delete.append(list(old))
                        b.insert.append(list(new))  # type: ignore[arg-type]
                        touched += [(fo, old, -1), (fn, new, 1)]  # type: ignore[list-item]
                    else:
                        moves.append((ho, hn, old, new, fo, fn))  # type: ignore[arg-type]
                else:
                    raise ValueError(f"unknown update operation {u.op!r}")
            hosts = sorted(set(batches) | {h for m in moves for h in m[:2]})
            # every host must be reachable before anything is applied
            for h in hosts:
                self._call(h, MsgType.HELLO, {})
            if new_terms:
                lines = dict_chunk_lines(new_terms)
                for h in range(self.catalog.n_hosts):
                    with self._connect(h) as sock:
                        send_frame(sock, MsgType.DICT_CHUNK, lines)
                        expect(read_frame(sock), MsgType.ACK)
            result = UpdateResult(hosts)
            for h, b in sorted(batches.items()):
                r = self._call(h, MsgType.INSERT, {"delete": b.delete, "insert": b.insert})
                result.deleted += r["deleted"]
                result.inserted += r["inserted"]
            for ho, hn, old, new, fo, fn in moves:
                r = self._call(ho, MsgType.DELETE, {"delete": [list(old)]})
                try:
                    r2 = self._call(hn, MsgType.INSERT, {"insert": [list(new)]})
                except (ProtocolError, OSError) as exc:
                    if r["deleted"]:
                        self._call(ho, MsgType.INSERT, {"insert": [list(old)]})
                    raise UpdateRejected(f"modify rolled back: {exc}") from exc
                result.deleted += r["deleted"]
                result.inserted += r2["inserted"]
                touched += [(fo, old, -1), (fn, new, 1)]
            for fid, t, delta in touched:
                self._adjust_stats(fid, t, delta)
                if delta > 0 and fid == self.catalog.fragmentation.remainder_id:
                    self._note_polarity(t)
            return result

    def insert(self, triple: tuple[Term, Term, Term]) -> UpdateResult:
        return self.apply_updates([Update("+", triple)])

    def delete(self, triple: tuple[Term, Term, Term]) -> UpdateResult:
        return self.apply_updates([Update("-", triple)])

    def modify(self, old: tuple[Term, Term, Term], new: tuple[Term, Term, Term]) -> UpdateResult:
        return self.apply_updates([Update("~", old, new)])

    # -- inspection

    def export(self) -> list[list[Triple]]:
        """Every worker's triples (as encoded ids), host by host."""
        out = []
        for h in range(self.catalog.n_hosts):
            ts: list[Triple] = []
            with self._connect(h) as sock:
                send_json(sock, MsgType.START, {"export": True})
                while True:
                    page, end = decode_page(expect(read_frame(sock), MsgType.PAGE).payload)
                    ts.extend(Triple(*x) for x in page)
                    if end:
                        break
                    send_frame(sock, MsgType.ACK)
            out.append(ts)
        return out

    def worker_stats(self) -> list[dict]:
        return [self._call(h, MsgType.STATS_REQ, {}, MsgType.STATS_RESP) for h in range(self.catalog.n_hosts)]
