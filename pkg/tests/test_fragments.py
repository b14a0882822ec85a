import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdfshard.example import db
from rdfshard.fragments import (
    FragmentRouter,
    SampleView,
    SimplePredicate,
    TooManyPredicates,
    com_min,
    extract_simple_predicates,
    fragment_of,
    generate_minterms,
    minterm_literals,
    overlaps,
    partition,
    satisfiable,
    signature,
)
from rdfshard.sparql import LogEntry, parse_sparql
from rdfshard.store import Dictionary, Triple, TripleStore
from rdfshard.terms import RDF_TYPE, Term
from rdfshard.workload import AnonPattern, normalize_and_anonymize

RDF = Term.iri(RDF_TYPE)
GE_1E9 = SimplePredicate("obj", ">=", Term.integer(1000000000))


def eq(comp, term):
    return SimplePredicate.eq(comp, term)


def test_example_simple_predicates(example_log, example_partition):
    phi = normalize_and_anonymize(example_log, 2)
    got = set(extract_simple_predicates(phi, example_log))
    expected = {
        eq("prop", RDF), eq("prop", db("located")), eq("prop", db("population")), eq("prop", db("revenue")),
        eq("prop", db("name")), eq("obj", db("city")), eq("obj", db("Germany")), eq("obj", Term.literal("Apple")),
        GE_1E9,
    }
    assert got == expected
    assert set(example_partition.all_predicates) == expected


def test_all_omega_has_no_predicates():
    assert extract_simple_predicates({AnonPattern(None, None, None): 1}) == []


def test_type_test_filter_predicate():
    q = parse_sparql("SELECT ?o WHERE { ?s <http://x/p> ?o . FILTER(isIRI(?o)) }")
    preds = extract_simple_predicates({}, [LogEntry(q)])
    assert SimplePredicate("obj", func="isIRI") in preds


@pytest.mark.parametrize("lits, ok", [
    ([(eq("prop", db("a")), True), (eq("prop", db("b")), True)], False),
    ([(SimplePredicate("obj", func="isLiteral"), True), (SimplePredicate("obj", func="isIRI"), True)], False),
    ([(SimplePredicate("obj", ">", Term.integer(10)), True), (SimplePredicate("obj", "<", Term.integer(5)), True)], False),
    ([(eq("prop", db("a")), True), (eq("obj", db("b")), True)], True),
])
def test_satisfiable(lits, ok):
    assert satisfiable(lits) is ok


def test_minterm_counts():
    assert len(generate_minterms([eq("prop", db("a")), eq("obj", db("b"))])) == 4
    pols = [pol for pol, _ in generate_minterms([eq("prop", db("a")), eq("prop", db("b"))])]
    assert len(pols) == 3 and (True, True) not in pols


def test_cap():
    preds = [eq("subj", db(f"x{i}")) for i in range(5)]
    with pytest.raises(TooManyPredicates):
        generate_minterms(preds, cap=4)


def test_load_table_fragments(example_fragmentation):
    fm = example_fragmentation
    assert [f.size for f in fm.fragments] == [2000, 4499, 3000, 3000, 2000, 1700, 300, 1, 3000]
    assert GE_1E9 not in fm.predicates
    assert len(fm.fragments) == 9 and fm.fragments[-1].remainder
    by_size = {(f.size, f.freq) for f in fm.fragments}
    assert (3000, 1) in by_size  # population: f=1, s=3000
    assert fm.fragments[0].freq == 11 and fm.fragments[0].load == 22000


def test_frequencies_match_overlap_oracle(example_fragmentation, example_log):
    phi = normalize_and_anonymize(example_log, 2)
    fm = example_fragmentation
    for f in fm.fragments:
        lits = minterm_literals(fm.predicates, f.polarity)
        brute = 0
        for ap, w in phi.items():
            checks = list(lits) + [(eq(c, v), True) for c, v in zip(("subj", "prop", "obj"), ap) if v is not None]
            if satisfiable(checks):
                brute += w
        assert f.freq == brute


def test_overlaps_examples(example_fragmentation):
    fm = example_fragmentation
    name_not_apple = next(f for f in fm.fragments if f.size == 4499)
    assert not overlaps(fm.literals(name_not_apple.id), AnonPattern(None, db("name"), Term.literal("Apple")))
    assert overlaps(fm.literals(fm.remainder_id), AnonPattern(None, None, None))
    type_not_city = next(f for f in fm.fragments if f.size == 2000 and f.freq == 1)
    assert overlaps(fm.literals(type_not_city.id), AnonPattern(None, RDF, None))


def test_fragment_of_examples(example_fragmentation, example_encoded):
    store, d = example_encoded
    fm = example_fragmentation
    c1 = db("company0")
    d2 = Dictionary()
    for tid, term in d.items():
        d2.add(tid, term)
    t = Triple(d2.encode(c1), d2.encode(db("name")), d2.encode(Term.literal("Apple")))
    assert fragment_of(t, fm, d2) == 8
    other = Triple(d2.encode(db("x")), d2.encode(db("unmentioned")), d2.encode(db("y")))
    assert fragment_of(other, fm, d2) == fm.remainder_id


def test_example_router_is_total(example_fragmentation, example_encoded):
    store, d = example_encoded
    router = FragmentRouter(example_fragmentation, d)
    counts = {}
    for t in store:
        fid = router.fragment_of(t)
        counts[fid] = counts.get(fid, 0) + 1
    assert counts == {f.id: f.size for f in example_fragmentation.fragments}


def test_com_min_drops_never_splitting_predicate():
    d = Dictionary()
    ts = [Triple(d.encode(db(f"s{i}")), d.encode(db("p" if i < 15 else "q")), d.encode(db("o"))) for i in range(20)]
    sample = SampleView(TripleStore(ts), d)
    phi = {AnonPattern(None, db("p"), None): 3}
    ghost = eq("obj", db("never"))
    useful = eq("prop", db("p"))
    assert com_min([ghost, useful], sample, phi) == [useful]


def test_com_min_keeps_load_splitter():
    d = Dictionary()
    ts = [Triple(d.encode(db(f"s{i}")), d.encode(db("p" if i % 2 else "q")), d.encode(db("o"))) for i in range(20)]
    sample = SampleView(TripleStore(ts), d)
    phi = {AnonPattern(None, db("p"), None): 4}
    assert com_min([eq("prop", db("p"))], sample, phi) == [eq("prop", db("p"))]


# ---------------------------------------------------------------- random instances

PROPS = [db(f"p{i}") for i in range(4)]
OBJS = [db(f"o{i}") for i in range(4)] + [Term.integer(i) for i in (1, 5, 50)] + [Term.literal("t")]
SUBJ = [db(f"s{i}") for i in range(6)]


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = random.Random(seed)
    n = rng.randint(1, 400)
    terms = {(rng.choice(SUBJ), rng.choice(PROPS), rng.choice(OBJS)) for _ in range(n)}
    log = []
    for _ in range(rng.randint(1, 5)):
        pats = []
        for j in range(rng.randint(1, 3)):
            p = rng.choice(PROPS).to_ntriples() if rng.random() < 0.8 else f"?p{j}"
            o = rng.choice(OBJS).to_ntriples() if rng.random() < 0.4 else f"?o{j}"
            pats.append(f"?s {p} {o} .")
        filt = " FILTER(?o0 > 3)" if rng.random() < 0.3 and "?o0" in " ".join(pats) else ""
        log.append(LogEntry(parse_sparql("SELECT * WHERE { " + " ".join(pats) + filt + " }"), rng.randint(1, 4)))
    return sorted(terms), log


@settings(max_examples=50, deadline=None)
@given(instances())
def test_disjoint_and_complete(inst):
    terms, log = inst
    d = Dictionary()
    store = TripleStore(Triple(d.encode(s), d.encode(p), d.encode(o)) for s, p, o in terms)
    fm = partition(store, d, log, theta=2, fraction=1.0).fragmentation
    for t in store:
        spo = [d.decode(x) for x in t]
        owners = [
            f.id for f in fm.fragments if not f.remainder
            and all(p.holds(spo[p.index]) == v for p, v in zip(fm.predicates, f.polarity))
        ]
        assert len(owners) <= 1
        assert fm.fragment_of_terms(spo) == (owners[0] if owners else fm.remainder_id)
    assert sum(f.size for f in fm.fragments) == len(store)


@settings(max_examples=50, deadline=None)
@given(instances())
def test_com_min_minimal_and_idempotent(inst):
    terms, log = inst
    d = Dictionary()
    store = TripleStore(Triple(d.encode(s), d.encode(p), d.encode(o)) for s, p, o in terms)
    phi = normalize_and_anonymize(log, 2)
    sample = SampleView(store, d)
    s_all = extract_simple_predicates(phi, log)
    reduced = com_min(s_all, sample, phi)
    sig = signature(reduced, sample, phi)
    assert sig == signature(s_all, sample, phi)
    for p in reduced:
        assert signature([q for q in reduced if q != p], sample, phi) != sig
    assert com_min(reduced, sample, phi) == reduced
