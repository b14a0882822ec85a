import pytest

from rdfshard.example import db
from rdfshard.sparql import LogEntry, parse_query_log, parse_sparql
from rdfshard.terms import RDF_TYPE, Term
from rdfshard.workload import (
    AnonPattern,
    build_global_query_graph,
    constant_frequencies,
    normalize_and_anonymize,
)

RDF = Term.iri(RDF_TYPE)


def test_constant_frequencies(example_log):
    freq = constant_frequencies(example_log)
    assert freq[db("Germany")] == 3
    assert freq[db("city")] == 3
    assert freq[Term.literal("Apple")] == 10
    assert freq[db("USA")] == 1
    assert freq[db("company")] == 1
    assert constant_frequencies([]) == {}


def test_single_query_multiplicity():
    q = parse_sparql("SELECT ?s WHERE { ?s <http://x/p> <http://x/c> }")
    assert constant_frequencies([LogEntry(q, 5)]) == {Term.iri("http://x/c"): 5}


def test_normalization_theta2(example_log):
    phi = normalize_and_anonymize(example_log, 2)
    consts = {c for ap in phi for c in (ap.s, ap.o) if c is not None}
    assert db("USA") not in consts and db("company") not in consts
    assert {db("Germany"), db("city"), Term.literal("Apple")} <= consts
    assert phi[AnonPattern(None, db("name"), Term.literal("Apple"))] == 10


def test_theta1_keeps_everything(example_log):
    phi = normalize_and_anonymize(example_log, 1)
    consts = {c for ap in phi for c in (ap.s, ap.o) if c is not None}
    assert {db("USA"), db("company")} <= consts


def test_theta_must_be_positive(example_log):
    with pytest.raises(ValueError):
        normalize_and_anonymize(example_log, 0)


def test_global_query_graph_weights(example_log):
    g = build_global_query_graph(example_log, 2)
    apple = AnonPattern(None, db("name"), Term.literal("Apple"))
    revenue = AnonPattern(None, db("revenue"), None)
    assert g.weight(apple, revenue) == 10
    assert g.weight(AnonPattern(None, RDF, db("city")), AnonPattern(None, db("located"), db("Germany"))) == 2


def test_single_pattern_is_isolated():
    log = parse_query_log("SELECT ?s WHERE { ?s <http://x/p> ?o }")
    g = build_global_query_graph(log, 2)
    assert list(g.nodes) == [AnonPattern(None, Term.iri("http://x/p"), None)]
    assert g.edges == {}
