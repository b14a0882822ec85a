"""Pull-based operators over rows of TermIds, built from serialized sub-plans."""

from __future__ import annotations

import heapq
from collections.abc import Callable, Iterable, Iterator
from itertools import chain

from ..planner import filter_from_json
from ..sparql import Compare
from ..store import Dictionary, TripleStore
from ..terms import compare

Row = tuple[int, ...]
_POS = {"S": 0, "P": 1, "O": 2}


def _key(positions: list[int]) -> Callable[[Row], tuple]:
    return lambda row: tuple(row[i] for i in positions)


def scan(store: TripleStore, dictionary: Dictionary | None, node: dict) -> Iterator[Row]:
    order = node["order"]
    ids = tuple(node["ids"])
    names = node["names"]
    schema = node["schema"]
    # key slot -> variable name, in index order
    slot_names = [names[_POS[c]] for c in order]
    first = {}
    same = []
    for i, name in enumerate(slot_names):
        if name is None:
            continue
        if name in first:
            same.append((first[name], i))
        else:
            first[name] = i
    out = [first[v] for v in schema]
    tests = [(schema.index(f.var), _filter_fn(f, dictionary)) for f in map(filter_from_json, node.get("filters", ()))]
    for key in store.scan_keys(ids, order):
        if same and any(key[a] != key[b] for a, b in same):
            continue
        row = tuple(key[i] for i in out)
        if tests and not all(fn(row[i]) for i, fn in tests):
            continue
        yield row


def _filter_fn(f, dictionary: Dictionary | None) -> Callable[[int], bool]:
    if dictionary is None:
        raise RuntimeError("filters need the dictionary")
    cache: dict[int, bool] = {}

    def test(tid: int) -> bool:
        v = cache.get(tid)
        if v is None:
            term = dictionary.decode(tid)
            if isinstance(f, Compare):
                v = compare(term, f.op, f.const)
            else:
                v = term.is_iri if f.func == "isIRI" else term.is_literal
            cache[tid] = v
        return v

    return test


def merge_join(left: Iterable[Row], right: Iterable[Row], lschema, rschema, key: str) -> Iterator[Row]:
    """Sorted merge on ``key``; groups of equal keys produce their cross product,
    remaining shared variables are checked per pair."""
    lk, rk = lschema.index(key), rschema.index(key)
    shared = [(lschema.index(v), rschema.index(v)) for v in lschema if v in rschema and v != key]
    extra = [i for i, v in enumerate(rschema) if v not in lschema]
    li, ri = iter(left), iter(right)
    lrow = next(li, None)
    rrow = next(ri, None)
    while lrow is not None and rrow is not None:
        a, b = lrow[lk], rrow[rk]
        if a < b:
            lrow = next(li, None)
        elif a > b:
            rrow = next(ri, None)
        else:
            lgroup = [lrow]
            lrow = next(li, None)
            while lrow is not None and lrow[lk] == a:
                lgroup.append(lrow)
                lrow = next(li, None)
            rgroup = [rrow]
            rrow = next(ri, None)
            while rrow is not None and rrow[rk] == a:
                rgroup.append(rrow)
                rrow = next(ri, None)
            for l in lgroup:
                for r in rgroup:
                    if all(l[x] == r[y] for x, y in shared):
                        yield l + tuple(r[i] for i in extra)


def hash_join(left: Iterable[Row], right: Iterable[Row], lschema, rschema, build: int) -> Iterator[Row]:
    shared = [v for v in lschema if v in rschema]
    lpos = [lschema.index(v) for v in shared]
    rpos = [rschema.index(v) for v in shared]
    extra = [i for i, v in enumerate(rschema) if v not in lschema]
    table: dict[tuple, list[Row]] = {}
    if build == 0:
        for l in left:
            table.setdefault(tuple(l[i] for i in lpos), []).append(l)
        for r in right:
            tail = tuple(r[i] for i in extra)
            for l in table.get(tuple(r[i] for i in rpos), ()):
                yield l + tail
    else:
        for r in right:
            table.setdefault(tuple(r[i] for i in rpos), []).append(r)
        for l in left:
            for r in table.get(tuple(l[i] for i in lpos), ()):
                yield l + tuple(r[i] for i in extra)


def bmu(left: Iterable[Row], right: Iterable[Row], schema, sorted_by) -> Iterator[Row]:
    """Order-preserving two-way merge without duplicate elimination."""
    if not sorted_by:
        return chain(left, right)
    return heapq.merge(left, right, key=_key([schema.index(v) for v in sorted_by]))


def project(rows: Iterable[Row], child_schema, vars_) -> Iterator[Row]:
    pos = [child_schema.index(v) for v in vars_]
    return (tuple(r[i] for i in pos) for r in rows)


def sort(rows: Iterable[Row], schema, vars_) -> Iterator[Row]:
    return iter(sorted(rows, key=_key([schema.index(v) for v in vars_])))


def filter_rows(rows: Iterable[Row], schema, filters, dictionary) -> Iterator[Row]:
    tests = [(schema.index(f.var), _filter_fn(f, dictionary)) for f in map(filter_from_json, filters)]
    return (r for r in rows if all(fn(r[i]) for i, fn in tests))


def build(node: dict, store: TripleStore, dictionary: Dictionary | None, fetch: Callable[[dict], Iterator[Row]]) -> Iterator[Row]:
    """Iterator for a serialized sub-plan; ``fetch`` opens remote inputs."""
    kind = node["kind"]
    kids = node.get("children", [])

    def sub(i: int) -> Iterator[Row]:
        return build(kids[i], store, dictionary, fetch)

    if kind == "scan":
        return scan(store, dictionary, node)
    if kind == "fetch":
        return fetch(node)
    if kind == "mergejoin":
        return merge_join(sub(0), sub(1), kids[0]["schema"], kids[1]["schema"], node["vars"][0])
    if kind == "hashjoin":
        return hash_join(sub(0), sub(1), kids[0]["schema"], kids[1]["schema"], node.get("build", 0))
    if kind == "bmu":
        return bmu(sub(0), sub(1), node["schema"], node["sorted_by"])
    if kind == "project":
        return project(sub(0), kids[0]["schema"], node["vars"])
    if kind == "sort":
        return sort(sub(0), kids[0]["schema"], node["vars"])
    if kind == "filter":
        return filter_rows(sub(0), kids[0]["schema"], node["filters"], dictionary)
    if kind == "union":
        return chain.from_iterable(sub(i) for i in range(len(kids)))
    if kind == "empty":
        return iter(())
    raise ValueError(f"unknown operator kind {kind!r}")
