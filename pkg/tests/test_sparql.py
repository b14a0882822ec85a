import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdfshard.example import DB, EXAMPLE_QUERY_LOG, CITY_QUERY, PREFIXES, db
from rdfshard.sparql import (
    Compare,
    GraphPattern,
    LogEntry,
    Query,
    SparqlSyntaxError,
    TriplePattern,
    TypeTest,
    UnsupportedFeature,
    Var,
    format_query_log,
    parse_query_log,
    parse_sparql,
    render_sparql,
    validate_executable,
)
from rdfshard.terms import RDF_TYPE, Term


def test_city_query_shape():
    q = parse_sparql(CITY_QUERY)
    assert q.projection == ("name",)
    (gp,) = q.patterns
    assert len(gp.triples) == 3 and not gp.optional and not gp.filters
    assert gp.triples[0] == TriplePattern(Var("s"), Term.iri(RDF_TYPE), db("city"))


def test_filter_compare():
    q = parse_sparql(PREFIXES + "SELECT ?c WHERE { ?s db:name ?c . ?s db:revenue ?r . FILTER(?r >= 1000000000) }")
    assert q.patterns[0].filters == (Compare("r", ">=", Term.integer(1000000000)),)


def test_select_star():
    q = parse_sparql("SELECT * WHERE { ?s ?p ?o }")
    assert q.projection is None
    assert q.patterns[0].triples == (TriplePattern(Var("s"), Var("p"), Var("o")),)
    assert q.output_vars() == ["s", "p", "o"]


def test_a_keyword_and_type_tests():
    q = parse_sparql(f"SELECT ?o WHERE {{ ?s a <{DB}city> . ?s <{DB}name> ?o . FILTER(isLiteral(?o)) }}")
    assert q.patterns[0].triples[0].p == Term.iri(RDF_TYPE)
    assert q.patterns[0].filters == (TypeTest("isLiteral", "o"),)


def test_union_and_optional():
    q = parse_sparql("SELECT ?s WHERE { { ?s <p> ?o } UNION { ?s <q> ?o } }")
    assert len(q.patterns) == 2
    assert validate_executable(q) is None
    q2 = parse_sparql("SELECT ?s WHERE { ?s <p> ?o . OPTIONAL { ?s <q> ?x } }")
    assert validate_executable(q2) == "OPTIONAL execution"
    assert validate_executable(parse_sparql(CITY_QUERY)) is None


def test_disconnected_not_executable():
    q = parse_sparql("SELECT * WHERE { ?a <p> ?b . ?c <q> ?d }")
    assert validate_executable(q) == "disconnected join graph"


@pytest.mark.parametrize("text", [
    "SELECT DISTINCT ?s WHERE { ?s ?p ?o }",
    "SELECT ?s WHERE { ?s ?p ?o } LIMIT 3",
    "ASK { ?s ?p ?o }",
])
def test_unsupported(text):
    with pytest.raises(UnsupportedFeature):
        parse_sparql(text)


def test_syntax_error_span():
    with pytest.raises(SparqlSyntaxError) as err:
        parse_sparql("SELECT ?s WHERE { ?s ?p }")
    assert err.value.span is not None


def test_undeclared_prefix():
    with pytest.raises(SparqlSyntaxError):
        parse_sparql("SELECT ?s WHERE { ?s nope:x ?o }")


def test_query_log_multiplicities():
    log = parse_query_log(EXAMPLE_QUERY_LOG)
    assert [e.multiplicity for e in log] == [2, 1, 1, 1, 10]
    assert parse_query_log(format_query_log(log)) == log


iris = st.sampled_from([Term.iri(f"http://x/{c}") for c in "abcd"])
consts = iris | st.sampled_from([Term.literal("v"), Term.integer(7), Term.literal("w", lang="en")])
variables = st.sampled_from([Var(v) for v in ("s", "o", "x")])
patterns = st.builds(TriplePattern, variables | iris, variables | iris, variables | consts)


@st.composite
def queries(draw):
    groups = []
    for _ in range(draw(st.integers(1, 2))):
        triples = tuple(draw(st.lists(patterns, min_size=1, max_size=4)))
        names = sorted({v for tp in triples for v in tp.vars()})
        filters = ()
        if names and draw(st.booleans()):
            filters = (Compare(draw(st.sampled_from(names)), draw(st.sampled_from(["<", "<=", "=", ">=", ">"])), Term.integer(5)),)
        groups.append(GraphPattern(triples, (), filters))
    common = set.intersection(*(set(gp.vars()) for gp in groups))
    proj = None
    if common and draw(st.booleans()):
        proj = (draw(st.sampled_from(sorted(common))),)
    return Query(proj, tuple(groups))


@settings(max_examples=150, deadline=None)
@given(queries())
def test_render_roundtrip(q):
    assert parse_sparql(render_sparql(q)) == q


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(queries(), st.integers(1, 20)), min_size=1, max_size=4))
def test_log_roundtrip(items):
    log = [LogEntry(q, m) for q, m in items]
    assert parse_query_log(format_query_log(log)) == log
