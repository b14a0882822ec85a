"""Dictionary-encoded in-memory triple store with all six index orders."""

from __future__ import annotations

import io
import re
import threading
from collections import Counter
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import NamedTuple, TextIO

import numpy as np
from sortedcontainers import SortedList

from .terms import Term, TermKind

ORDERS = ("SPO", "SOP", "PSO", "POS", "OSP", "OPS")
_POS = {"S": 0, "P": 1, "O": 2}
_MAX_ID = 1 << 64


class Triple(NamedTuple):
    s: int
    p: int
    o: int


Pattern = tuple  # (s | None, p | None, o | None)


class NTriplesError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class Dictionary:
    """Bijective Term <-> id mapping with dense ids starting at 1."""

    def __init__(self) -> None:
        self._forward: dict[Term, int] = {}
        self._reverse: list[Term] = []

    def __len__(self) -> int:
        return len(self._reverse)

    def __contains__(self, term: Term) -> bool:
        return term in self._forward

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Dictionary) and self._reverse == other._reverse

    @property
    def next_id(self) -> int:
        return len(self._reverse) + 1

    def encode(self, term: Term) -> int:
        tid = self._forward.get(term)
        if tid is None:
            self._reverse.append(term)
            tid = len(self._reverse)
            self._forward[term] = tid
        return tid

    def lookup(self, term: Term) -> int | None:
        return self._forward.get(term)

    def decode(self, tid: int) -> Term:
        if tid <= 0 or tid > len(self._reverse):
            raise KeyError(f"unassigned term id {tid}")
        return self._reverse[tid - 1]

    def items(self) -> Iterator[tuple[int, Term]]:
        for i, term in enumerate(self._reverse, start=1):
            yield i, term

    def add(self, tid: int, term: Term) -> None:
        """Install an externally assigned id; ids must arrive densely."""
        if tid == len(self._reverse) + 1:
            self._reverse.append(term)
            self._forward[term] = tid
        elif tid > len(self._reverse) + 1:
            raise ValueError(f"dictionary gap before id {tid}")
        elif self._reverse[tid - 1] != term:
            raise ValueError(f"id {tid} already bound to {self._reverse[tid - 1]}")

    def dump(self, out: TextIO) -> None:
        for tid, term in self.items():
            if "\t" in term.lexical or "\n" in term.lexical:
                raise ValueError(f"term {tid} cannot be exported: contains tab/newline")
            out.write(f"{tid}\t{term.kind.value}\t{term.lexical}\n")

    def dumps(self) -> str:
        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            self.dump(fh)

    @classmethod
    def loads(cls, text: str) -> Dictionary:
        d = cls()
        for line in text.splitlines():
            if not line:
                continue
            tid, kind, lexical = line.split("\t", 2)
            d.add(int(tid), Term(TermKind(kind), lexical))
        return d

    @classmethod
    def load(cls, path: str | Path) -> Dictionary:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------- N-Triples

_TERM_RE = re.compile(
    r"""\s*(?:
        <(?P<iri>[^<>"{}|^`\\\s]*)>
      | (?P<bnode>_:[A-Za-z0-9_][A-Za-z0-9_.\-]*)
      | (?P<lit>"(?:[^"\\\n\r]|\\.)*"(?:@[A-Za-z]+(?:-[A-Za-z0-9]+)*|\^\^<[^<>"{}|^`\\\s]*>)?)
    )""",
    re.X,
)
_END_RE = re.compile(r"\s*\.\s*(?:#.*)?$")


def _parse_term(line: str, pos: int, lineno: int) -> tuple[Term, int]:
    m = _TERM_RE.match(line, pos)
    if m is None:
        raise NTriplesError(lineno, f"expected term at column {pos + 1}")
    if m.group("iri") is not None:
        if not m.group("iri"):
            raise NTriplesError(lineno, "empty IRI")
        return Term(TermKind.IRI, m.group("iri")), m.end()
    if m.group("bnode") is not None:
        return Term(TermKind.IRI, m.group("bnode")), m.end()
    return Term(TermKind.LITERAL, m.group("lit")), m.end()


def parse_ntriples_line(line: str, lineno: int = 1) -> tuple[Term, Term, Term] | None:
    """Parse one line; blank lines and comments give None."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    s, pos = _parse_term(line, 0, lineno)
    p, pos = _parse_term(line, pos, lineno)
    o, pos = _parse_term(line, pos, lineno)
    if not _END_RE.match(line, pos):
        raise NTriplesError(lineno, "expected '.' after object")
    if s.is_literal:
        raise NTriplesError(lineno, "literal subject")
    if p.is_literal or p.lexical.startswith("_:"):
        raise NTriplesError(lineno, "literal property" if p.is_literal else "blank node property")
    return s, p, o


def iter_ntriples(source) -> Iterator[tuple[Term, Term, Term]]:
    """Yield term triples from a path, a text/binary stream, or an iterable of lines."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from iter_ntriples(fh)
        return
    for lineno, raw in enumerate(source, start=1):
        line = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
        parsed = parse_ntriples_line(line, lineno)
        if parsed is not None:
            yield parsed


def parse_ntriples(source, dictionary: Dictionary) -> list[Triple]:
    """Parse N-Triples, assigning ids in line order then s/p/o order."""
    enc = dictionary.encode
    return [Triple(enc(s), enc(p), enc(o)) for s, p, o in iter_ntriples(source)]


def format_ntriples(s: Term, p: Term, o: Term) -> str:
    return f"{s.to_ntriples()} {p.to_ntriples()} {o.to_ntriples()} .\n"


# --------------------------------------------------------------------- store


def order_key(order: str, t: Triple) -> tuple[int, int, int]:
    return tuple(t[_POS[c]] for c in order)  # type: ignore[return-value]


def _from_key(order: str, key: tuple[int, int, int]) -> Triple:
    vals = [0, 0, 0]
    for c, v in zip(order, key):
        vals[_POS[c]] = v
    return Triple(*vals)


def compatible_orders(pattern: Pattern) -> list[str]:
    """Index orders whose leading components cover exactly the bound positions."""
    bound = {c for c, v in zip("SPO", pattern) if v is not None}
    return [o for o in ORDERS if set(o[: len(bound)]) == bound]


class IncompatibleOrder(ValueError):
    pass


class TripleStore:
    """Set of triples held in six sorted index orders plus count tables.

    One writer at a time; readers take consistent snapshots under the same lock.
    """

    def __init__(self, triples: Iterable[Triple] = ()) -> None:
        self._lock = threading.RLock()
        unique = sorted(set(Triple(*t) for t in triples))
        self._indexes = {o: SortedList(order_key(o, t) for t in unique) for o in ORDERS}
        self.property_counts: Counter[int] = Counter()
        self.po_counts: Counter[tuple[int, int]] = Counter()
        self.ps_counts: Counter[tuple[int, int]] = Counter()
        for t in unique:
            self._count(t, 1)

    def _count(self, t: Triple, delta: int) -> None:
        for table, key in ((self.property_counts, t.p), (self.po_counts, (t.p, t.o)), (self.ps_counts, (t.p, t.s))):
            table[key] += delta
            if table[key] == 0:
                del table[key]

    def __len__(self) -> int:
        return len(self._indexes["SPO"])

    def __contains__(self, t: object) -> bool:
        return tuple(t) in self._indexes["SPO"]  # type: ignore[arg-type]

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TripleStore) and self.triples() == other.triples()

    def triples(self) -> list[Triple]:
        with self._lock:
            return [Triple(*k) for k in self._indexes["SPO"]]

    def insert(self, t: Triple) -> bool:
        t = Triple(*t)
        with self._lock:
            if t in self._indexes["SPO"]:
                return False
            for o, idx in self._indexes.items():
                idx.add(order_key(o, t))
            self._count(t, 1)
            return True

    def delete(self, t: Triple) -> bool:
        t = Triple(*t)
        with self._lock:
            if t not in self._indexes["SPO"]:
                return False
            for o, idx in self._indexes.items():
                idx.remove(order_key(o, t))
            self._count(t, -1)
            return True

    def apply(self, deletes: Iterable[Triple] = (), inserts: Iterable[Triple] = ()) -> tuple[int, int]:
        """Deletes then inserts as one step for readers; returns (deleted, inserted)."""
        with self._lock:
            d = sum(self.delete(t) for t in deletes)
            i = sum(self.insert(t) for t in inserts)
        return d, i

    def index(self, order: str) -> list[tuple[int, int, int]]:
        with self._lock:
            return list(self._indexes[order])

    def _range(self, pattern: Pattern, order: str) -> tuple[SortedList, tuple, tuple] | None:
        if order not in ORDERS:
            raise IncompatibleOrder(f"unknown index order {order!r}")
        if order not in compatible_orders(pattern):
            raise IncompatibleOrder(f"order {order} cannot serve pattern {pattern}")
        prefix = tuple(pattern[_POS[c]] for c in order if pattern[_POS[c]] is not None)
        if not prefix:
            return None
        hi = prefix + (_MAX_ID,) * (3 - len(prefix))
        return self._indexes[order], prefix, hi

    def scan(self, pattern: Pattern, order: str = "SPO") -> list[Triple]:
        """Matching triples in ``order``; bound components must prefix the order."""
        with self._lock:
            rng = self._range(pattern, order)
            if rng is None:
                keys = list(self._indexes[order])
            else:
                idx, lo, hi = rng
                keys = list(idx.irange(lo, hi))
        return [_from_key(order, k) for k in keys]

    def scan_keys(self, pattern: Pattern, order: str) -> list[tuple[int, int, int]]:
        """Like scan but returns the raw index keys (components in ``order``)."""
        with self._lock:
            rng = self._range(pattern, order)
            if rng is None:
                return list(self._indexes[order])
            idx, lo, hi = rng
            return list(idx.irange(lo, hi))

    def cardinality(self, pattern: Pattern) -> int:
        s, p, o = pattern
        with self._lock:
            if s is None and p is None and o is None:
                return len(self)
            if p is not None and s is None and o is None:
                return self.property_counts.get(p, 0)
            if p is not None and o is not None and s is None:
                return self.po_counts.get((p, o), 0)
            if p is not None and s is not None and o is None:
                return self.ps_counts.get((p, s), 0)
            order = compatible_orders(pattern)[0]
            rng = self._range(pattern, order)
            assert rng is not None
            idx, lo, hi = rng
            return idx.bisect_right(hi) - idx.bisect_left(lo)

    def sample(self, fraction: float, seed: int = 0) -> TripleStore:
        if not 0 < fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        triples = self.triples()
        if fraction == 1:
            return TripleStore(triples)
        keep = np.random.default_rng(seed).random(len(triples)) < fraction
        return TripleStore(t for t, k in zip(triples, keep) if k)

    def export(self, dictionary: Dictionary, out: TextIO) -> None:
        for t in self.triples():
            out.write(format_ntriples(dictionary.decode(t.s), dictionary.decode(t.p), dictionary.decode(t.o)))
