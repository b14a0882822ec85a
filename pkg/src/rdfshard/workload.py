"""Query-load analysis: constant frequencies, normalization, anonymization and
the global query graph over anonymized triple patterns."""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from itertools import combinations

from .sparql import GraphPattern, LogEntry, TriplePattern, Var
from .terms import Term

OMEGA = "Ω"


@dataclass(frozen=True)
class AnonPattern:
    """A triple pattern whose variables all collapsed into Ω (stored as None)."""

    s: Term | None
    p: Term | None
    o: Term | None

    def __iter__(self):
        return iter((self.s, self.p, self.o))

    def sort_key(self) -> tuple:
        return tuple(("", "") if c is None else (c.kind.value, c.lexical) for c in self)

    def __lt__(self, other: AnonPattern) -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return "(" + ", ".join(OMEGA if c is None else c.to_ntriples() for c in self) + ")"

    @classmethod
    def of(cls, tp: TriplePattern) -> AnonPattern:
        return cls(*(None if isinstance(n, Var) else n for n in tp))


def anonymize(tp: TriplePattern | AnonPattern) -> AnonPattern:
    if isinstance(tp, AnonPattern):
        return tp
    return AnonPattern.of(tp)


def constant_frequencies(ql: Iterable[LogEntry]) -> Counter[Term]:
    """Multiplicity-weighted occurrences of subject/object constants over all patterns."""
    freq: Counter[Term] = Counter()
    for entry in ql:
        for gp in entry.query.patterns:
            for tp in gp.triples + gp.optional:
                for node in (tp.s, tp.o):
                    if isinstance(node, Term):
                        freq[node] += entry.multiplicity
    return freq


def normalize_group(gp: GraphPattern, freq: Counter[Term], theta: int) -> list[TriplePattern]:
    """Patterns of ``gp`` (required then optional) with rare subject/object constants
    replaced by fresh variables. Properties are left alone."""
    out: list[TriplePattern] = []
    fresh = 0
    for tp in gp.triples + gp.optional:
        nodes = []
        for pos, node in zip("spo", tp):
            if pos != "p" and isinstance(node, Term) and freq[node] < theta:
                fresh += 1
                node = Var(f"\0norm{fresh}")
            nodes.append(node)
        out.append(TriplePattern(*nodes))
    return out


def _normalized_queries(ql: Sequence[LogEntry], theta: int):
    if theta < 1:
        raise ValueError("theta must be >= 1")
    freq = constant_frequencies(ql)
    for entry in ql:
        yield entry, [normalize_group(gp, freq, theta) for gp in entry.query.patterns]


def normalize_and_anonymize(ql: Sequence[LogEntry], theta: int) -> dict[AnonPattern, int]:
    """Φ(QL) with f(p): the weighted number of queries containing each anonymized pattern."""
    phi: Counter[AnonPattern] = Counter()
    for entry, groups in _normalized_queries(ql, theta):
        seen = {AnonPattern.of(tp) for pats in groups for tp in pats}
        for ap in seen:
            phi[ap] += entry.multiplicity
    return dict(sorted(phi.items(), key=lambda kv: kv[0].sort_key()))


def edge_key(a: AnonPattern, b: AnonPattern) -> tuple[AnonPattern, AnonPattern]:
    return (a, b) if a.sort_key() <= b.sort_key() else (b, a)


@dataclass
class GlobalQueryGraph:
    nodes: dict[AnonPattern, int] = field(default_factory=dict)
    edges: dict[tuple[AnonPattern, AnonPattern], int] = field(default_factory=dict)

    def weight(self, a: AnonPattern, b: AnonPattern) -> int:
        return self.edges.get(edge_key(a, b), 0)

    def dump(self) -> str:
        lines = [f"{a}\t{b}\t{w}" for (a, b), w in self.edges.items()]
        return "\n".join(lines) + ("\n" if lines else "")


def build_global_query_graph(ql: Sequence[LogEntry], theta: int) -> GlobalQueryGraph:
    """Nodes are Φ(QL); an edge joins two anonymized patterns whenever some query
    has occurrences of them sharing a variable, weighted by witness count."""
    nodes: Counter[AnonPattern] = Counter()
    edges: Counter[tuple[AnonPattern, AnonPattern]] = Counter()
    for entry, groups in _normalized_queries(ql, theta):
        seen_nodes: set[AnonPattern] = set()
        seen_edges: set[tuple[AnonPattern, AnonPattern]] = set()
        for pats in groups:
            anon = [AnonPattern.of(tp) for tp in pats]
            seen_nodes.update(anon)
            for i, j in combinations(range(len(pats)), 2):
                if set(pats[i].vars()) & set(pats[j].vars()):
                    seen_edges.add(edge_key(anon[i], anon[j]))
        for ap in seen_nodes:
            nodes[ap] += entry.multiplicity
        for e in seen_edges:
            edges[e] += entry.multiplicity
    return GlobalQueryGraph(
        dict(sorted(nodes.items(), key=lambda kv: kv[0].sort_key())),
        dict(sorted(edges.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].sort_key()))),
    )


def query_filters(ql: Iterable[LogEntry]) -> list[tuple[GraphPattern, int]]:
    """Graph patterns of the log paired with multiplicity (for filter-derived predicates)."""
    return [(gp, e.multiplicity) for e in ql for gp in e.query.patterns]
