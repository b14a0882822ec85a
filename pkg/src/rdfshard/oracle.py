"""Reference evaluator over a single in-memory triple list.

Deliberately naive (backtracking over per-property buckets) and independent
of the planner and runtime; used to check distributed results.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from collections.abc import Iterable

from .sparql import Compare, GraphPattern, Query, TriplePattern, Var, parse_sparql
from .terms import Term, compare


class CentralStore:
    def __init__(self, triples: Iterable[tuple[Term, Term, Term]]):
        self.triples = list(dict.fromkeys(tuple(t) for t in triples))
        self.by_p: dict[Term, list[tuple[Term, Term, Term]]] = defaultdict(list)
        self.by_ps: dict[tuple[Term, Term], list[tuple[Term, Term, Term]]] = defaultdict(list)
        self.by_po: dict[tuple[Term, Term], list[tuple[Term, Term, Term]]] = defaultdict(list)
        for t in self.triples:
            self.by_p[t[1]].append(t)
            self.by_ps[(t[1], t[0])].append(t)
            self.by_po[(t[1], t[2])].append(t)

    def candidates(self, tp: TriplePattern, b: dict[str, Term]):
        s, p, o = (b.get(n.name, None) if isinstance(n, Var) else n for n in tp)
        if p is None:
            return self.triples
        if s is not None:
            return self.by_ps.get((p, s), ())
        if o is not None:
            return self.by_po.get((p, o), ())
        return self.by_p.get(p, ())


def _match(tp: TriplePattern, t, b: dict[str, Term]) -> dict[str, Term] | None:
    out = dict(b)
    for node, val in zip(tp, t):
        if isinstance(node, Var):
            cur = out.get(node.name)
            if cur is None:
                out[node.name] = val
            elif cur != val:
                return None
        elif node != val:
            return None
    return out


def _passes(f, b: dict[str, Term]) -> bool:
    term = b[f.var]
    if isinstance(f, Compare):
        return compare(term, f.op, f.const)
    return term.is_iri if f.func == "isIRI" else term.is_literal


def solutions(gp: GraphPattern, store: CentralStore):
    pats = list(gp.triples)

    def rec(remaining: list[TriplePattern], b: dict[str, Term]):
        if not remaining:
            if all(_passes(f, b) for f in gp.filters):
                yield b
            return
        # most-bound pattern first
        tp = max(remaining, key=lambda x: sum(1 for n in x if not isinstance(n, Var) or n.name in b))
        rest = [x for x in remaining if x is not tp]
        for t in store.candidates(tp, b):
            nb = _match(tp, t, b)
            if nb is not None:
                yield from rec(rest, nb)

    yield from rec(pats, {})


def evaluate(query: Query | str, store: CentralStore) -> Counter:
    """Result bag: Counter over projected rows of Terms (UNION branches add up)."""
    if isinstance(query, str):
        query = parse_sparql(query)
    out_vars = query.output_vars()
    bag: Counter = Counter()
    for gp in query.patterns:
        for b in solutions(gp, store):
            bag[tuple(b[v] for v in out_vars)] += 1
    return bag
