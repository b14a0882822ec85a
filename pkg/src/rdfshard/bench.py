"""Evaluation harness: synthetic data, random star/path queries, the
by-property baseline and timed CSV runs."""

from __future__ import annotations

import csv
import logging
import random
import time
from collections import defaultdict
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass
from typing import TextIO

from .allocation import FragmentQueryGraph
from .fragments import Fragment, Fragmentation, SimplePredicate, _frequency, minterm_literals
from .sparql import GraphPattern, LogEntry, Query, TriplePattern, Var, parse_sparql, render_sparql
from .store import Dictionary, TripleStore
from .terms import RDF_TYPE, Term
from .workload import normalize_and_anonymize

log = logging.getLogger(__name__)

UNI = "http://example.org/uni/"


# ---------------------------------------------------------------- synthetic data


def synthetic_dataset(n_triples: int = 100_000, seed: int = 0) -> list[tuple[Term, Term, Term]]:
    """A university-style graph of people, courses, departments and papers.

    Deterministic for a seed; at least ``n_triples`` distinct triples.
    """
    rng = random.Random(seed)
    u = lambda local: Term.iri(UNI + local)  # noqa: E731
    rdf_type = Term.iri(RDF_TYPE)
    p = {name: u(name) for name in (
        "name", "email", "age", "memberOf", "advisor", "takesCourse", "knows",
        "teacher", "offeredBy", "subOrgOf", "title", "year", "author", "cites",
    )}
    out: dict[tuple[Term, Term, Term], None] = {}

    def add(s, prop, o):
        out[(s, prop, o)] = None

    n_univ = max(2, n_triples // 20000)
    n_dept = max(4, n_triples // 2500)
    n_course = max(10, n_triples // 300)
    n_prof = max(10, n_triples // 120)
    n_student = max(20, n_triples // 16)
    n_paper = max(10, n_triples // 45)
    for i in range(n_univ):
        add(u(f"univ{i}"), rdf_type, u("University"))
        add(u(f"univ{i}"), p["name"], Term.literal(f"University {i}"))
    for i in range(n_dept):
        d = u(f"dept{i}")
        add(d, rdf_type, u("Department"))
        add(d, p["name"], Term.literal(f"Department {i}"))
        add(d, p["subOrgOf"], u(f"univ{i % n_univ}"))
    profs = [u(f"prof{i}") for i in range(n_prof)]
    for i, pr in enumerate(profs):
        add(pr, rdf_type, u("Professor"))
        add(pr, p["name"], Term.literal(f"Professor {i}"))
        add(pr, p["email"], Term.literal(f"prof{i}@example.org"))
        add(pr, p["memberOf"], u(f"dept{rng.randrange(n_dept)}"))
        add(pr, p["age"], Term.integer(rng.randint(30, 70)))
    for i in range(n_course):
        c = u(f"course{i}")
        add(c, rdf_type, u("Course"))
        add(c, p["name"], Term.literal(f"Course {i}"))
        add(c, p["teacher"], rng.choice(profs))
        add(c, p["offeredBy"], u(f"dept{rng.randrange(n_dept)}"))
    students = [u(f"student{i}") for i in range(n_student)]
    for i, st in enumerate(students):
        add(st, rdf_type, u("Student"))
        add(st, p["name"], Term.literal(f"Student {i}"))
        add(st, p["memberOf"], u(f"dept{rng.randrange(n_dept)}"))
        add(st, p["age"], Term.integer(rng.randint(18, 30)))
        if rng.random() < 0.5:
            add(st, p["email"], Term.literal(f"student{i}@example.org"))
        if rng.random() < 0.3:
            add(st, p["advisor"], rng.choice(profs))
        for _ in range(rng.randint(1, 3)):
            add(st, p["takesCourse"], u(f"course{rng.randrange(n_course)}"))
        for _ in range(rng.randint(0, 2)):
            add(st, p["knows"], rng.choice(students))
    for i in range(n_paper):
        x = u(f"paper{i}")
        add(x, rdf_type, u("Paper"))
        add(x, p["title"], Term.literal(f"Paper {i}"))
        add(x, p["year"], Term.integer(rng.randint(1995, 2012)))
        for _ in range(rng.randint(1, 3)):
            add(x, p["author"], rng.choice(profs if rng.random() < 0.6 else students))
        for _ in range(rng.randint(0, 2)):
            if i:
                add(x, p["cites"], u(f"paper{rng.randrange(i)}"))
    filler = 0
    while len(out) < n_triples:
        add(u(f"misc{filler}"), u(f"note{filler % 7}"), Term.literal(f"note {filler}"))
        filler += 1
    return list(out)


# ---------------------------------------------------------------- query generation


@dataclass(frozen=True)
class GenConfig:
    count: int = 100
    max_star: int = 6
    max_path: int = 4
    seed: int = 0
    bind_probability: float = 0.5
    attempts: int = 20

    def __post_init__(self) -> None:
        if self.max_star < 1 or self.max_path < 1:
            raise ValueError("pattern maxima must be at least 1")


class _Graph:
    def __init__(self, triples: Iterable[tuple[Term, Term, Term]]):
        self.by_s: dict[Term, list[tuple[Term, Term, Term]]] = defaultdict(list)
        self.by_p: dict[Term, list[tuple[Term, Term, Term]]] = defaultdict(list)
        for t in triples:
            self.by_s[t[0]].append(t)
            self.by_p[t[1]].append(t)
        self.props = sorted(self.by_p, key=lambda x: x.lexical)


def _star(g: _Graph, rng: random.Random, k: int, bind: bool) -> list[TriplePattern] | None:
    seed_t = rng.choice(g.by_p[rng.choice(g.props)])
    picked = [seed_t]
    seen = {seed_t[1]}
    others = [t for t in g.by_s[seed_t[0]] if t[1] not in seen]
    rng.shuffle(others)
    for t in others:
        if len(picked) == k:
            break
        if t[1] not in seen:
            seen.add(t[1])
            picked.append(t)
    if len(picked) < k:
        return None
    s = Var("s")
    pats = [TriplePattern(s, t[1], Var(f"o{i}")) for i, t in enumerate(picked)]
    if bind:
        i = rng.randrange(len(pats))
        pats[i] = TriplePattern(s, picked[i][1], picked[i][2])
    return pats


def _path(g: _Graph, rng: random.Random, k: int, bind: bool) -> list[TriplePattern] | None:
    def extendable(x, steps_left: int) -> bool:
        return steps_left == 0 or x[2] in g.by_s

    first = [x for x in g.by_p[rng.choice(g.props)] if extendable(x, k - 1)]
    if not first:
        return None
    walk = [rng.choice(first)]
    while len(walk) < k:
        left = k - len(walk) - 1
        nxt = [x for x in g.by_s[walk[-1][2]] if x not in walk and extendable(x, left)]
        if not nxt:
            return None
        walk.append(rng.choice(nxt))
    pats = [TriplePattern(Var(f"v{i}"), x[1], Var(f"v{i + 1}")) for i, x in enumerate(walk)]
    # long unbound paths explode; anchor them at their start
    if bind or k >= 3:
        pats[0] = TriplePattern(walk[0][0], walk[0][1], Var("v1"))
    return pats


def generate_queries(
    triples: Iterable[tuple[Term, Term, Term]], cfg: GenConfig = GenConfig()
) -> list[Query]:
    """Random star and path queries built along actual data, so each has a result."""
    g = _Graph(triples)
    if not g.props:
        raise ValueError("cannot generate queries over an empty store")
    rng = random.Random(cfg.seed)
    out: list[Query] = []
    for qi in range(cfg.count):
        star = rng.random() < 0.5
        k = rng.randint(1, cfg.max_star if star else cfg.max_path)
        bind = rng.random() < cfg.bind_probability
        pats = None
        for _ in range(cfg.attempts):
            pats = (_star if star else _path)(g, rng, k, bind)
            if pats is not None:
                break
        if pats is None:
            log.warning("query %d skipped: no %s of %d co-occurring patterns found", qi, "star" if star else "path", k)
            continue
        gp = GraphPattern(tuple(pats))
        text = render_sparql(Query(tuple(gp.vars()), (gp,)))
        out.append(parse_sparql(text))
    return out


# ---------------------------------------------------------------- baseline


def by_property_fragmentation(
    ql: Sequence[LogEntry], store: TripleStore, dictionary: Dictionary, theta: int = 2
) -> tuple[Fragmentation, FragmentQueryGraph]:
    """One fragment per property named in the load plus the remainder, with an
    edgeless fragment graph so allocation ignores co-occurrence."""
    total = len(store)
    property_counts = {dictionary.decode(p): c for p, c in store.property_counts.items()}
    props = sorted(
        {tp.p for e in ql for gp in e.query.patterns for tp in gp.triples + gp.optional if isinstance(tp.p, Term)},
        key=lambda t: t.lexical,
    )
    preds = tuple(SimplePredicate.eq("prop", p) for p in props)
    phi = normalize_and_anonymize(ql, theta) if ql else {}
    rows = []
    for i, p in enumerate(props):
        pol = tuple(j == i for j in range(len(props)))
        size = property_counts.get(p, 0)
        if size:
            rows.append((pol, _frequency(minterm_literals(preds, pol), phi), size))
    rows.sort(key=lambda r: (-r[1] * r[2], -r[2], [not v for v in r[0]]))
    frags = [Fragment(i, pol, f, s) for i, (pol, f, s) in enumerate(rows, start=1)]
    none = tuple(False for _ in props)
    rest = total - sum(r[2] for r in rows)
    frags.append(Fragment(len(frags) + 1, none, _frequency(minterm_literals(preds, none), phi), rest, remainder=True))
    fm = Fragmentation(preds, frags)
    return fm, FragmentQueryGraph([f.id for f in frags], {})


# ---------------------------------------------------------------- timed runs


@dataclass(frozen=True)
class BenchConfig:
    concurrency: int = 1
    interval_ms: float = 1000.0
    repetitions: int = 1
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if self.interval_ms <= 0:
            raise ValueError("interval must be positive")
        if self.concurrency < 1:
            raise ValueError("concurrency must be at least 1")


CSV_FIELDS = ["query_id", "run", "concurrency", "response_ms", "rows", "remote_pages"]


def _timed(coordinator, query: Query) -> tuple[float, int, int]:
    t0 = time.perf_counter()
    res = coordinator.execute(query)
    return (time.perf_counter() - t0) * 1000.0, len(res.rows), res.remote_pages


def bench(coordinator, queries: Sequence[Query], cfg: BenchConfig, out: TextIO | None = None) -> list[dict]:
    """Each query is issued ``concurrency`` times at once, one batch per interval, per run."""
    records: list[dict] = []
    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        for run in range(cfg.repetitions):
            for qid, q in enumerate(queries):
                start = time.perf_counter()
                futures = [pool.submit(_timed, coordinator, q) for _ in range(cfg.concurrency)]
                for fut in futures:
                    rec = {"query_id": qid, "run": run, "concurrency": cfg.concurrency}
                    try:
                        ms, rows, pages = fut.result(timeout=cfg.timeout_s)
                        rec.update(response_ms=round(ms, 3), rows=rows, remote_pages=pages)
                    except FutureTimeout:
                        rec.update(response_ms="timeout", rows="", remote_pages="")
                    records.append(rec)
                rest = cfg.interval_ms / 1000.0 - (time.perf_counter() - start)
                if rest > 0:
                    time.sleep(rest)
    if out is not None:
        write_csv(records, out)
    return records


def write_csv(records: Iterable[dict], out: TextIO) -> None:
    w = csv.DictWriter(out, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r)

