"""Minterm fragmentation of a triple set driven by simple predicates mined from
a query load, with COM_MIN-style predicate reduction."""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .sparql import Compare, LogEntry, TypeTest, Var
from .store import Dictionary, Triple, TripleStore
from .terms import Term, compare, order_key
from .workload import AnonPattern

COMPONENTS = ("subj", "prop", "obj")
_COMPONENT_RANK = {"prop": 0, "obj": 1, "subj": 2}
_COMPONENT_INDEX = {"subj": 0, "prop": 1, "obj": 2}
DEFAULT_PREDICATE_CAP = 24


class TooManyPredicates(ValueError):
    pass


@dataclass(frozen=True)
class SimplePredicate:
    """A constraint on one triple component: ``component op const`` or ``func(component)``."""

    component: str
    op: str | None = None
    const: Term | None = None
    func: str | None = None

    def __post_init__(self) -> None:
        if self.component not in COMPONENTS:
            raise ValueError(f"bad component {self.component!r}")
        if (self.op is None) == (self.func is None):
            raise ValueError("a predicate is either a comparison or a function")
        if self.op is not None and self.const is None:
            raise ValueError("comparison without constant")
        if self.component == "prop" and self.op is not None and (self.op != "=" or not self.const.is_iri):
            raise ValueError("property predicates must be IRI equalities")

    @classmethod
    def eq(cls, component: str, const: Term) -> SimplePredicate:
        return cls(component, "=", const)

    @property
    def index(self) -> int:
        return _COMPONENT_INDEX[self.component]

    def holds(self, term: Term) -> bool:
        if self.func is not None:
            return term.is_iri if self.func == "isIRI" else term.is_literal
        return compare(term, self.op, self.const)  # type: ignore[arg-type]

    def sort_key(self) -> tuple:
        if self.func is not None:
            return (_COMPONENT_RANK[self.component], 1, self.func, "")
        return (_COMPONENT_RANK[self.component], 0, self.const.lexical, self.op)  # type: ignore[union-attr]

    def __str__(self) -> str:
        if self.func is not None:
            return f"{self.func}({self.component})"
        return f"{self.component}{self.op}{self.const.to_ntriples()}"  # type: ignore[union-attr]

    def to_json(self) -> dict:
        if self.func is not None:
            return {"component": self.component, "func": self.func}
        c = self.const
        return {"component": self.component, "op": self.op, "kind": c.kind.value, "lexical": c.lexical}  # type: ignore[union-attr]

    @classmethod
    def from_json(cls, obj: Mapping) -> SimplePredicate:
        from .terms import TermKind

        if "func" in obj:
            return cls(obj["component"], func=obj["func"])
        return cls(obj["component"], obj["op"], Term(TermKind(obj["kind"]), obj["lexical"]))


Literal = tuple[SimplePredicate, bool]


# ------------------------------------------------------------ satisfiability


def _interval_ok(bounds: list[tuple[str, object]]) -> bool:
    lo = hi = None
    lo_inc = hi_inc = True
    for op, v in bounds:
        if op in (">", ">="):
            inc = op == ">="
            if lo is None or v > lo or (v == lo and not inc):
                lo, lo_inc = v, inc
        else:
            inc = op == "<="
            if hi is None or v < hi or (v == hi and not inc):
                hi, hi_inc = v, inc
    if lo is None or hi is None:
        return True
    if lo < hi:
        return True
    return lo == hi and lo_inc and hi_inc


_NEGATE = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def _component_satisfiable(component: str, lits: list[Literal]) -> bool:
    pos_eq = {p.const for p, pol in lits if pol and p.op == "="}
    if len(pos_eq) > 1:
        return False
    if pos_eq:
        (value,) = pos_eq
        if component != "obj" and value.is_literal:
            return False
        return all(p.holds(value) == pol for p, pol in lits)

    kinds = {"iri"} if component != "obj" else {"iri", "literal"}
    for p, pol in lits:
        if p.func is None:
            continue
        want = "iri" if p.func == "isIRI" else "literal"
        kinds = kinds & {want} if pol else kinds - {want}
    if not kinds:
        return False

    ordered = [(p, pol) for p, pol in lits if p.op not in (None, "=")]
    positives = [p for p, pol in ordered if pol]
    if not positives:
        return True
    domains = {order_key(p.const)[:2] if order_key(p.const)[0] == 1 else (0,) for p in positives}  # type: ignore[arg-type]
    if len(domains) > 1:
        return False
    (domain,) = domains
    bounds: list[tuple[str, object]] = []
    for p, pol in ordered:
        key = order_key(p.const)  # type: ignore[arg-type]
        if (key[:2] if key[0] == 1 else (0,)) != domain:
            continue
        value = key[1] if key[0] == 0 else key[2]
        bounds.append((p.op if pol else _NEGATE[p.op], value))  # type: ignore[index]
    return _interval_ok(bounds)


def satisfiable(literals: Iterable[Literal]) -> bool:
    """Whether some triple can satisfy the conjunction of (predicate, polarity) literals.

    Contradictions are detected per component; when in doubt the answer is True.
    """
    by_comp: dict[str, list[Literal]] = {c: [] for c in COMPONENTS}
    for p, pol in literals:
        by_comp[p.component].append((p, pol))
    return all(_component_satisfiable(c, lits) for c, lits in by_comp.items() if lits)


def pattern_literals(pattern: AnonPattern) -> list[Literal]:
    return [(SimplePredicate.eq(comp, c), True) for comp, c in zip(COMPONENTS, pattern) if c is not None]


def minterm_literals(predicates: Sequence[SimplePredicate], polarity: Sequence[bool]) -> list[Literal]:
    return list(zip(predicates, polarity))


def overlaps(literals: Sequence[Literal], pattern: AnonPattern) -> bool:
    """Logical overlap of a minterm with an anonymized pattern (no data access)."""
    return satisfiable(list(literals) + pattern_literals(pattern))


# ------------------------------------------------------------ sample access


class SampleView:
    """Column arrays of a sample store plus cached per-predicate truth masks."""

    def __init__(self, store: TripleStore, dictionary: Dictionary):
        triples = store.triples()
        self.dictionary = dictionary
        arr = np.array(triples, dtype=np.int64).reshape(-1, 3)
        self.columns = [arr[:, 0], arr[:, 1], arr[:, 2]]
        self._uniq = [np.unique(c, return_inverse=True) for c in self.columns]
        self._masks: dict[SimplePredicate, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.columns[0])

    def mask(self, pred: SimplePredicate) -> np.ndarray:
        m = self._masks.get(pred)
        if m is None:
            uniq, inverse = self._uniq[pred.index]
            truth = np.fromiter(
                (pred.holds(self.dictionary.decode(int(u))) for u in uniq), dtype=bool, count=len(uniq)
            )
            m = truth[inverse] if len(uniq) else np.zeros(0, dtype=bool)
            self._masks[pred] = m
        return m


def generate_minterms(
    predicates: Sequence[SimplePredicate],
    sample: SampleView | None = None,
    cap: int | None = DEFAULT_PREDICATE_CAP,
) -> list[tuple[tuple[bool, ...], int | None]]:
    """Satisfiable polarity vectors over ``predicates`` by recursive refinement.

    With a sample, only branches matching at least one sample triple survive,
    except the all-negative branch, which is always kept. Each result carries
    the number of matching sample triples (None without a sample).
    """
    preds = list(predicates)
    if cap is not None and len(preds) > cap:
        raise TooManyPredicates(f"{len(preds)} simple predicates exceed the cap of {cap}")
    out: list[tuple[tuple[bool, ...], int | None]] = []
    n = len(sample) if sample is not None else 0
    masks = [sample.mask(p) for p in preds] if sample is not None else None

    def rec(i: int, pol: list[bool], rows: np.ndarray | None, all_negative: bool) -> None:
        if i == len(preds):
            out.append((tuple(pol), None if rows is None else int(rows.sum())))
            return
        for value in (True, False):
            lits = list(zip(preds[: i + 1], pol + [value]))
            if not satisfiable(lits):
                continue
            sub = None
            if rows is not None:
                sub = rows & masks[i] if value else rows & ~masks[i]  # type: ignore[index]
                if not (all_negative and not value) and not sub.any():
                    continue
            rec(i + 1, pol + [value], sub, all_negative and not value)

    rec(0, [], np.ones(n, dtype=bool) if sample is not None else None, True)
    return out


# ------------------------------------------------------------ predicate mining


def extract_simple_predicates(phi: Iterable[AnonPattern], ql: Iterable[LogEntry] = ()) -> list[SimplePredicate]:
    """S(QL): equalities from every constant position of Φ(QL), plus filter-derived
    predicates at every position where the filtered variable occurs."""
    preds: set[SimplePredicate] = set()
    for ap in phi:
        for comp, c in zip(COMPONENTS, ap):
            if c is not None:
                preds.add(SimplePredicate.eq(comp, c))
    for entry in ql:
        for gp in entry.query.patterns:
            for f in gp.filters:
                for tp in gp.triples + gp.optional:
                    for comp, node in zip(COMPONENTS, tp):
                        if not (isinstance(node, Var) and node.name == f.var):
                            continue
                        if isinstance(f, TypeTest):
                            if comp != "prop":
                                preds.add(SimplePredicate(comp, func=f.func))
                        elif isinstance(f, Compare):
                            if comp == "prop" and (f.op != "=" or not f.const.is_iri):
                                continue
                            if comp == "subj" and f.op == "=" and f.const.is_literal:
                                continue
                            preds.add(SimplePredicate(comp, f.op, f.const))
    return sorted(preds, key=SimplePredicate.sort_key)


# ------------------------------------------------------------ signatures / COM_MIN


def _frequency(literals: Sequence[Literal], phi: Mapping[AnonPattern, int]) -> int:
    return sum(f for ap, f in phi.items() if overlaps(literals, ap))


def signature(
    predicates: Sequence[SimplePredicate], sample: SampleView, phi: Mapping[AnonPattern, int]
) -> tuple[tuple[int, int], ...]:
    """Sorted multiset of (f(m), s(m)) over the non-empty fragments of ``predicates``."""
    sig = []
    for pol, count in generate_minterms(predicates, sample, cap=None):
        if count:
            sig.append((_frequency(minterm_literals(predicates, pol), phi), count))
    return tuple(sorted(sig))


def _multiset_distance(a: Sequence, b: Sequence) -> int:
    ca, cb = Counter(a), Counter(b)
    return sum(((ca - cb) + (cb - ca)).values())


def com_min(
    predicates: Sequence[SimplePredicate], sample: SampleView, phi: Mapping[AnonPattern, int]
) -> list[SimplePredicate]:
    """Reduce ``predicates`` to a subset that is complete and minimal w.r.t. the
    fragmentation signature."""
    order = sorted(set(predicates), key=SimplePredicate.sort_key)
    if not order:
        return []
    cache: dict[frozenset, tuple] = {}

    def sig(subset: Iterable[SimplePredicate]) -> tuple:
        key = frozenset(subset)
        if key not in cache:
            cache[key] = signature(sorted(key, key=SimplePredicate.sort_key), sample, phi)
        return cache[key]

    base = sig(())
    start = max(order, key=lambda p: (_multiset_distance(sig([p]), base), -order.index(p)))
    current = [start]
    for _ in range(4 * len(order) + 4):
        changed = False
        for p in order:
            if p not in current and sig(current + [p]) != sig(current):
                current.append(p)
                changed = True
        for p in sorted(current, key=SimplePredicate.sort_key):
            rest = [q for q in current if q != p]
            if sig(rest) == sig(current):
                current = rest
                changed = True
        if not changed:
            break
    return sorted(current, key=SimplePredicate.sort_key)


# ------------------------------------------------------------ fragments


@dataclass
class Fragment:
    id: int
    polarity: tuple[bool, ...]
    freq: int
    size: int
    remainder: bool = False

    @property
    def load(self) -> int:
        return self.freq * self.size


@dataclass
class Fragmentation:
    predicates: tuple[SimplePredicate, ...]
    fragments: list[Fragment]
    _by_polarity: dict[tuple[bool, ...], int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._by_polarity = {f.polarity: f.id for f in self.fragments if not f.remainder}
        if sum(f.remainder for f in self.fragments) != 1:
            raise ValueError("a fragmentation has exactly one remainder fragment")

    @property
    def remainder(self) -> Fragment:
        return next(f for f in self.fragments if f.remainder)

    @property
    def remainder_id(self) -> int:
        return self.remainder.id

    def get(self, fid: int) -> Fragment:
        for f in self.fragments:
            if f.id == fid:
                return f
        raise KeyError(fid)

    def literals(self, fid_or_polarity) -> list[Literal]:
        pol = self.get(fid_or_polarity).polarity if isinstance(fid_or_polarity, int) else fid_or_polarity
        return minterm_literals(self.predicates, pol)

    def minterm_str(self, fragment: Fragment, compact: bool = True) -> str:
        """Minterm text; compact form lists positive predicates and folds the rest into ζ."""
        if compact:
            parts = [str(p) for p, v in zip(self.predicates, fragment.polarity) if v]
            return " ∧ ".join(parts + ["ζ"])
        parts = [str(p) if v else "¬" + str(p) for p, v in zip(self.predicates, fragment.polarity)]
        return " ∧ ".join(parts) if parts else "⊤"

    def fragment_for_polarity(self, polarity: tuple[bool, ...]) -> int:
        return self._by_polarity.get(polarity, self.remainder_id)

    def polarity_of(self, terms: Sequence[Term]) -> tuple[bool, ...]:
        return tuple(p.holds(terms[p.index]) for p in self.predicates)

    def fragment_of_terms(self, terms: Sequence[Term]) -> int:
        return self.fragment_for_polarity(self.polarity_of(terms))

    def overlapping(self, pattern: AnonPattern, spill: Iterable[tuple[bool, ...]] = ()) -> list[int]:
        """Fragment ids that may hold triples matching ``pattern``.

        The remainder also stores triples whose polarity vector names no listed
        fragment (``spill``), so it overlaps whenever any of those vectors does.
        """
        out = [f.id for f in self.fragments if not f.remainder and overlaps(self.literals(f.polarity), pattern)]
        rem = self.remainder
        if overlaps(self.literals(rem.polarity), pattern) or any(
            overlaps(self.literals(v), pattern) for v in spill
        ):
            out.append(rem.id)
        return out

    def table(self) -> str:
        lines = ["id | minterm | freq | size | load"]
        for f in self.fragments:
            label = "ζ (remainder)" if f.remainder else self.minterm_str(f)
            lines.append(f"{f.id} | {label} | {f.freq} | {f.size} | {f.load}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "predicates": [p.to_json() for p in self.predicates],
            "fragments": [
                {"id": f.id, "polarity": [int(v) for v in f.polarity], "freq": f.freq, "size": f.size, "remainder": f.remainder}
                for f in self.fragments
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> Fragmentation:
        preds = tuple(SimplePredicate.from_json(p) for p in obj["predicates"])
        frags = [
            Fragment(f["id"], tuple(bool(v) for v in f["polarity"]), f["freq"], f["size"], f.get("remainder", False))
            for f in obj["fragments"]
        ]
        return cls(preds, frags)


def fragment_stats(
    predicates: Sequence[SimplePredicate],
    sample: SampleView,
    fraction: float,
    phi: Mapping[AnonPattern, int],
    cap: int | None = DEFAULT_PREDICATE_CAP,
) -> Fragmentation:
    """Fragments with f(m), s(m) scaled from the sample, numbered by descending load.

    Empty non-remainder fragments are dropped; the remainder takes the last id.
    """
    preds = tuple(predicates)
    rows = []
    remainder = None
    for pol, count in generate_minterms(preds, sample, cap=cap):
        size = max(0, round(count / fraction))  # type: ignore[operator]
        freq = _frequency(minterm_literals(preds, pol), phi)
        if not any(pol):
            remainder = (pol, freq, size)
        elif size > 0:
            rows.append((pol, freq, size))
    rows.sort(key=lambda r: (-r[1] * r[2], -r[2], [not v for v in r[0]]))
    frags = [Fragment(i, pol, f, s) for i, (pol, f, s) in enumerate(rows, start=1)]
    assert remainder is not None
    pol, f, s = remainder
    frags.append(Fragment(len(frags) + 1, pol, f, s, remainder=True))
    return Fragmentation(preds, frags)


class FragmentRouter:
    """Maps id-encoded triples to fragment ids, caching predicate results per term."""

    def __init__(self, fragmentation: Fragmentation, dictionary: Dictionary):
        self.fragmentation = fragmentation
        self.dictionary = dictionary
        self._cache: list[dict[int, bool]] = [{} for _ in fragmentation.predicates]

    def polarity(self, t: Triple) -> tuple[bool, ...]:
        out = []
        for pred, cache in zip(self.fragmentation.predicates, self._cache):
            tid = t[pred.index]
            v = cache.get(tid)
            if v is None:
                v = cache[tid] = pred.holds(self.dictionary.decode(tid))
            out.append(v)
        return tuple(out)

    def fragment_of(self, t: Triple) -> int:
        return self.fragmentation.fragment_for_polarity(self.polarity(t))


def fragment_of(t: Triple, fragmentation: Fragmentation, dictionary: Dictionary) -> int:
    terms = [dictionary.decode(x) for x in t]
    return fragmentation.fragment_of_terms(terms)


@dataclass
class PartitionResult:
    all_predicates: list[SimplePredicate]
    fragmentation: Fragmentation


def partition(
    store: TripleStore,
    dictionary: Dictionary,
    ql: Sequence[LogEntry],
    theta: int = 2,
    fraction: float = 0.1,
    seed: int = 0,
    cap: int = DEFAULT_PREDICATE_CAP,
) -> PartitionResult:
    """Mine predicates from ``ql``, reduce them on a sample of ``store`` and build fragments."""
    from .workload import normalize_and_anonymize

    phi = normalize_and_anonymize(ql, theta)
    sample = SampleView(store.sample(fraction, seed), dictionary)
    s_all = extract_simple_predicates(phi, ql)
    reduced = com_min(s_all, sample, phi)
    if len(reduced) > cap:
        raise TooManyPredicates(f"{len(reduced)} predicates after reduction exceed the cap of {cap}")
    return PartitionResult(s_all, fragment_stats(reduced, sample, fraction, phi, cap))
