"""Fragment allocation to hosts, remainder hashing, the statistics catalog and
the host-count sweep."""

from __future__ import annotations

import heapq
import json
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .costmodel import CostModel
from .fragments import Fragmentation
from .store import Dictionary, Triple
from .workload import GlobalQueryGraph

CATALOG_VERSION = 1
DEFAULT_TRIPLE_BYTES = 100
TOP_PO = 1000
REMAINDER_HASH = "fnv1a-subject"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def remainder_host(subject_lexical: str, n_hosts: int) -> int:
    """Host of a remainder triple: FNV-1a of the subject's lexical form modulo n."""
    if n_hosts < 1:
        raise ValueError("need at least one host")
    return fnv1a_64(subject_lexical.encode("utf-8")) % n_hosts


class AllocationError(RuntimeError):
    def __init__(self, fragment: int, deficit: int):
        super().__init__(f"no host can store fragment {fragment}: short by {deficit} bytes")
        self.fragment = fragment
        self.deficit = deficit


# ---------------------------------------------------------------- fragment graph


@dataclass
class FragmentQueryGraph:
    nodes: list[int]
    edges: dict[tuple[int, int], int] = field(default_factory=dict)

    def weight(self, a: int, b: int) -> int:
        return self.edges.get((min(a, b), max(a, b)), 0)

    def to_json(self) -> dict:
        return {"nodes": self.nodes, "edges": [[a, b, w] for (a, b), w in sorted(self.edges.items())]}

    @classmethod
    def from_json(cls, obj: Mapping) -> FragmentQueryGraph:
        return cls(list(obj["nodes"]), {(a, b): w for a, b, w in obj["edges"]})


def build_fragment_graph(gql: GlobalQueryGraph, fragmentation: Fragmentation) -> FragmentQueryGraph:
    """w(a, b) sums the weights of G(QL) edges {p, r} with a overlapping p and b overlapping r."""
    overlap_cache: dict = {}

    def over(ap):
        if ap not in overlap_cache:
            overlap_cache[ap] = fragmentation.overlapping(ap)
        return overlap_cache[ap]

    edges: Counter[tuple[int, int]] = Counter()
    for (p, r), w in gql.edges.items():
        pairs = {(min(a, b), max(a, b)) for a in over(p) for b in over(r)}
        for key in pairs:
            edges[key] += w
    return FragmentQueryGraph([f.id for f in fragmentation.fragments], dict(sorted(edges.items())))


# ---------------------------------------------------------------- allocation


@dataclass
class Host:
    id: int
    capacity: int | None = None
    address: str = ""
    fragments: list[int] = field(default_factory=list)
    load: int = 0
    used: int = 0


def fragment_loads(fragmentation: Fragmentation) -> dict[int, int]:
    return {f.id: f.load for f in fragmentation.fragments}


def uniform_load(loads: Fragmentation | Mapping[int, int], n_hosts: int) -> Fraction:
    """U = L / n with L the total load over all fragments."""
    if isinstance(loads, Fragmentation):
        loads = fragment_loads(loads)
    return Fraction(sum(loads.values()), n_hosts)


def benefit(fragment: int, host: Host, uniform: Fraction | float, graph: FragmentQueryGraph) -> float:
    """(2U / (U + CL_h)) * A, with A = Σ (w(m, m') + 1) over the host's fragments, or 1 on an empty host."""
    u = Fraction(uniform)
    balance = Fraction(2) if u + host.load == 0 else 2 * u / (u + host.load)
    affinity = sum(graph.weight(fragment, m) + 1 for m in host.fragments) if host.fragments else 1
    return float(balance * affinity)


@dataclass
class Allocation:
    n_hosts: int
    assignment: dict[int, int]
    remainder_id: int
    remainder_hash: str = REMAINDER_HASH

    def host_of(self, fragment: int) -> int:
        return self.assignment[fragment]

    def fragments_on(self, host: int) -> list[int]:
        return sorted(f for f, h in self.assignment.items() if h == host)


def allocate(
    fragmentation: Fragmentation,
    graph: FragmentQueryGraph,
    hosts: int | Sequence[Host],
    triple_bytes: int = DEFAULT_TRIPLE_BYTES,
    loads: Mapping[int, int] | None = None,
) -> Allocation:
    """Greedy benefit-driven placement of every non-remainder fragment.

    Fragments go in descending load (ties: lower id) to the feasible host with
    the highest benefit (ties: lower host id). ``loads`` overrides f*s per
    fragment, e.g. to replay a published table.
    """
    if isinstance(hosts, int):
        hosts = [Host(i) for i in range(hosts)]
    hosts = [Host(h.id, h.capacity, h.address) for h in hosts]
    if not hosts:
        raise ValueError("need at least one host")
    load = fragment_loads(fragmentation) | dict(loads or {})
    u = uniform_load(load, len(hosts))
    todo = sorted((f for f in fragmentation.fragments if not f.remainder), key=lambda f: (-load[f.id], f.id))
    assignment: dict[int, int] = {}
    for frag in todo:
        need = frag.size * triple_bytes
        feasible = [h for h in hosts if h.capacity is None or h.used + need <= h.capacity]
        if not feasible:
            deficit = min(h.used + need - h.capacity for h in hosts)  # type: ignore[operator]
            raise AllocationError(frag.id, deficit)
        best = max(feasible, key=lambda h: (benefit(frag.id, h, u, graph), -h.id))
        best.fragments.append(frag.id)
        best.load += load[frag.id]
        best.used += need
        assignment[frag.id] = best.id
    return Allocation(len(hosts), assignment, fragmentation.remainder_id)


# ---------------------------------------------------------------- statistics


@dataclass
class FragmentStats:
    """Per-fragment counts; ``properties`` maps property id -> [count, distinct s, distinct o]."""

    triples: int = 0
    distinct_s: int = 0
    distinct_p: int = 0
    distinct_o: int = 0
    properties: dict[int, list[int]] = field(default_factory=dict)
    po: dict[int, dict[int, int]] = field(default_factory=dict)
    po_complete: bool = True

    def to_json(self) -> dict:
        return {
            "triples": self.triples,
            "distinct_s": self.distinct_s,
            "distinct_p": self.distinct_p,
            "distinct_o": self.distinct_o,
            "properties": {str(p): v for p, v in sorted(self.properties.items())},
            "po": {str(p): {str(o): c for o, c in objs.items()} for p, objs in sorted(self.po.items())},
            "po_complete": self.po_complete,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> FragmentStats:
        return cls(
            obj["triples"],
            obj["distinct_s"],
            obj["distinct_p"],
            obj["distinct_o"],
            {int(p): list(v) for p, v in obj["properties"].items()},
            {int(p): {int(o): c for o, c in objs.items()} for p, objs in obj["po"].items()},
            obj.get("po_complete", True),
        )


def collect_stats(triples: Iterable[Triple], scale: float = 1.0, top_po: int = TOP_PO) -> FragmentStats:
    """Statistics over one fragment's triples; ``scale`` extrapolates from a sample."""
    ts = list(triples)

    def sc(x: int) -> int:
        return int(round(x * scale))

    by_p: dict[int, list[Triple]] = defaultdict(list)
    for t in ts:
        by_p[t.p].append(t)
    props = {}
    po: dict[int, dict[int, int]] = {}
    ranked: list[tuple[int, int, int]] = []
    for p, group in by_p.items():
        props[p] = [sc(len(group)), sc(len({t.s for t in group})), sc(len({t.o for t in group}))]
        for o, c in Counter(t.o for t in group).items():
            ranked.append((c, p, o))
    for c, p, o in heapq.nsmallest(top_po, ranked, key=lambda x: (-x[0], x[1], x[2])):
        po.setdefault(p, {})[o] = sc(c)
    po = {p: dict(sorted(objs.items())) for p, objs in sorted(po.items())}
    return FragmentStats(
        sc(len(ts)),
        sc(len({t.s for t in ts})),
        len(by_p),
        sc(len({t.o for t in ts})),
        dict(sorted(props.items())),
        po,
        len(ranked) <= top_po,
    )


# ---------------------------------------------------------------- catalog


class CatalogError(ValueError):
    pass


@dataclass
class HostInfo:
    id: int
    address: str = ""
    capacity: int | None = None


@dataclass
class Catalog:
    """Everything the coordinator plans with: fragment definitions and sizes, host
    mappings, per-fragment statistics and the cost-model constants."""

    fragmentation: Fragmentation
    allocation: Allocation
    hosts: list[HostInfo]
    stats: dict[int, FragmentStats] = field(default_factory=dict)
    cost_model: CostModel = field(default_factory=CostModel)
    dictionary_path: str | None = None
    spill: list[tuple[bool, ...]] = field(default_factory=list)
    version: int = CATALOG_VERSION
    dictionary: Dictionary | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        self.validate()

    @property
    def n_hosts(self) -> int:
        return self.allocation.n_hosts

    def validate(self) -> None:
        ids = {f.id for f in self.fragmentation.fragments}
        for frag, host in self.allocation.assignment.items():
            if frag not in ids:
                raise CatalogError(f"allocation names undefined fragment {frag}")
            if not 0 <= host < self.n_hosts:
                raise CatalogError(f"fragment {frag} mapped to unknown host {host}")
        for f in self.fragmentation.fragments:
            if not f.remainder and f.id not in self.allocation.assignment:
                raise CatalogError(f"fragment {f.id} is not allocated")
        for fid, st in self.stats.items():
            if fid not in ids:
                raise CatalogError(f"statistics for undefined fragment {fid}")
            if min(st.triples, st.distinct_s, st.distinct_p, st.distinct_o) < 0:
                raise CatalogError(f"negative statistics for fragment {fid}")

    def hosts_of(self, fragment: int) -> list[int]:
        if fragment == self.fragmentation.remainder_id:
            return list(range(self.n_hosts))
        return [self.allocation.assignment[fragment]]

    def note_spill(self, polarity: tuple[bool, ...]) -> bool:
        """Record that the remainder now holds triples of an unlisted minterm."""
        if any(polarity) and polarity not in self.spill:
            self.spill.append(polarity)
            self.spill.sort()
            return True
        return False

    def get_dictionary(self) -> Dictionary:
        if self.dictionary is None:
            if not self.dictionary_path:
                raise CatalogError("catalog has no dictionary")
            self.dictionary = Dictionary.load(self.dictionary_path)
        return self.dictionary

    def to_json(self) -> dict:
        frag = self.fragmentation.to_json()
        return {
            "version": self.version,
            "cost_model": self.cost_model.to_json(),
            "dictionary_path": self.dictionary_path,
            "predicates": frag["predicates"],
            "fragments": frag["fragments"],
            "allocation": {str(f): h for f, h in sorted(self.allocation.assignment.items())},
            "remainder": {
                "id": self.allocation.remainder_id,
                "hash": self.allocation.remainder_hash,
                "hosts": self.allocation.n_hosts,
                "spill": [[int(v) for v in pol] for pol in self.spill],
            },
            "hosts": [{"id": h.id, "address": h.address, "capacity": h.capacity} for h in self.hosts],
            "stats": {str(f): st.to_json() for f, st in sorted(self.stats.items())},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_json(cls, obj: Mapping) -> Catalog:
        if not isinstance(obj, Mapping) or "version" not in obj:
            raise CatalogError("not a catalog")
        if obj["version"] != CATALOG_VERSION:
            raise CatalogError(f"unsupported catalog version {obj['version']!r}")
        try:
            fragmentation = Fragmentation.from_json({"predicates": obj["predicates"], "fragments": obj["fragments"]})
            rem = obj["remainder"]
            if rem["hash"] != REMAINDER_HASH:
                raise CatalogError(f"unknown remainder hash {rem['hash']!r}")
            allocation = Allocation(
                rem["hosts"], {int(f): h for f, h in obj["allocation"].items()}, rem["id"], rem["hash"]
            )
            return cls(
                fragmentation=fragmentation,
                allocation=allocation,
                hosts=[HostInfo(h["id"], h.get("address", ""), h.get("capacity")) for h in obj["hosts"]],
                stats={int(f): FragmentStats.from_json(s) for f, s in obj["stats"].items()},
                cost_model=CostModel.from_json(obj["cost_model"]),
                dictionary_path=obj.get("dictionary_path"),
                spill=[tuple(bool(v) for v in pol) for pol in rem.get("spill", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CatalogError):
                raise
            raise CatalogError(f"corrupt catalog: {exc}") from exc

    @classmethod
    def loads(cls, text: str) -> Catalog:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"corrupt catalog: {exc}") from exc
        return cls.from_json(obj)

    @classmethod
    def load(cls, path: str | Path) -> Catalog:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def stats_from_store(
    triples: Iterable[Triple], router, fragmentation: Fragmentation, scale: float = 1.0
) -> dict[int, FragmentStats]:
    """Route ``triples`` to fragments and collect statistics for each fragment."""
    groups: dict[int, list[Triple]] = {f.id: [] for f in fragmentation.fragments}
    for t in triples:
        groups[router.fragment_of(t)].append(t)
    return {fid: collect_stats(ts, scale) for fid, ts in groups.items()}


# ---------------------------------------------------------------- host-count sweep


@dataclass
class SweepResult:
    best: int
    costs: list[tuple[int, float]]


def optimal_host_count(
    fragmentation: Fragmentation,
    graph: FragmentQueryGraph,
    ql,
    stats: dict[int, FragmentStats],
    dictionary: Dictionary,
    n_range: Iterable[int],
    cost_model: CostModel | None = None,
    capacity: int | None = None,
    triple_bytes: int = DEFAULT_TRIPLE_BYTES,
) -> SweepResult:
    """Allocate for each n, plan the executable queries of ``ql`` and keep the n
    with the lowest multiplicity-weighted estimated cost (ties: smaller n)."""
    from .planner import plan_query
    from .sparql import validate_executable

    model = cost_model or CostModel()
    costs: list[tuple[int, float]] = []
    for n in sorted(set(n_range)):
        alloc = allocate(fragmentation, graph, [Host(i, capacity) for i in range(n)], triple_bytes)
        catalog = Catalog(
            fragmentation, alloc, [HostInfo(i, "", capacity) for i in range(n)], stats, model, dictionary=dictionary
        )
        total = 0.0
        for entry in ql:
            if validate_executable(entry.query) is not None:
                continue
            total += entry.multiplicity * plan_query(entry.query, catalog).cost
        costs.append((n, total))
    if not costs:
        raise ValueError("empty host-count range")
    best = min(costs, key=lambda nc: (nc[1], nc[0]))[0]
    return SweepResult(best, costs)
