import pytest

from rdfshard.example import CITY_QUERY, PREFIXES
from rdfshard.planner import PlanOp, plan_query
from rdfshard.runtime.deploy import DeploymentError, split_and_deploy
from rdfshard.sparql import parse_sparql


def test_single_host_plan_has_no_exchanges(example_catalog):
    plan = plan_query(parse_sparql(PREFIXES + 'SELECT ?r WHERE { ?s db:name "Apple" . ?s db:revenue ?r }'), example_catalog)
    dep = split_and_deploy(plan, 1)
    assert dep.exchanges == [] and dep.hosts == [0]
    assert dep.root_host == 0 and dep.root_op == plan.id


def test_city_exchanges(city_catalog):
    plan = plan_query(parse_sparql(CITY_QUERY), city_catalog)
    dep = split_and_deploy(plan, 7)
    assert {(e.producer_host, e.consumer_host) for e in dep.exchanges} == {(1, 0), (2, 0)}
    assert len(dep.exchanges) == 3  # two type scans and the name scan
    assert dep.hosts == [0, 1, 2]


@pytest.mark.parametrize("body", [
    "?s rdf:type ?t . ?s db:located ?c",
    "?s ?p ?o . ?s db:population ?x",
    "?s db:name ?c . ?s db:revenue ?r",
])
def test_exchanges_cover_cross_host_edges(example_catalog, body):
    plan = plan_query(parse_sparql(f"{PREFIXES}SELECT * WHERE {{ {body} }}"), example_catalog)
    dep = split_and_deploy(plan)
    cross = {(c.id, op.id) for op in plan.walk() for c in op.children if c.hh != op.hh}
    assert {(e.producer_op, e.consumer_op) for e in dep.exchanges} == cross
    placed = [n["id"] for roots in dep.subplans.values() for n in roots]
    assert sorted(placed) == sorted([plan.id] + [p for p, _ in cross])


def test_missing_home_host_rejected():
    with pytest.raises(DeploymentError, match="home host"):
        split_and_deploy(PlanOp("empty", hh=None))
