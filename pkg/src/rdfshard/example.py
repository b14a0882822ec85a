"""The cities/companies worked example: synthetic data plus its query load."""

from __future__ import annotations

from collections.abc import Iterator
from typing import TextIO

from .store import format_ntriples
from .terms import RDF_TYPE, Term

DB = "http://example.org/db/"
PREFIXES = f"PREFIX db: <{DB}>\nPREFIX rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#>\n"

N_CITIES = 3000
N_COMPANIES = 2000
N_NAMED_COMPANIES = 1500
N_IN_GERMANY = 300
N_LOCATED_ELSEWHERE = 1700
N_FILLER = 3000

EXAMPLE_QUERY_LOG = f"""#x 2
{PREFIXES}SELECT ?n WHERE {{ ?s rdf:type db:city . ?s db:located db:Germany . ?s db:name ?n . }}
###
{PREFIXES}SELECT ?p WHERE {{ ?s rdf:type db:city . ?s db:located db:USA . ?s db:population ?p . }}
###
{PREFIXES}SELECT ?s WHERE {{ ?s rdf:type db:company . ?s db:located db:Germany . }}
###
{PREFIXES}SELECT ?c ?r WHERE {{ ?s db:name ?c . ?s db:revenue ?r . FILTER(?r >= 1000000000) }}
###
#x 10
{PREFIXES}SELECT ?r WHERE {{ ?s db:name "Apple" . ?s db:revenue ?r . }}
"""

CITY_QUERY = f"""{PREFIXES}SELECT ?name WHERE {{
  ?s rdf:type db:city .
  ?s db:located db:Germany .
  ?s db:name ?name . }}
"""

_COUNTRIES = ["France", "USA", "Spain", "Italy", "Japan", "Brazil", "Canada"]


def db(local: str) -> Term:
    return Term.iri(DB + local)


def example_terms() -> Iterator[tuple[Term, Term, Term]]:
    """Triples of the worked example in a fixed order.

    3000 cities and 2000 companies, every revenue at least 10^9, names for all
    cities and 1500 companies (one named "Apple"), 300 subjects located in
    Germany and 1700 elsewhere, populations for all cities and 3000 filler
    triples over properties no query mentions.
    """
    rdf_type = Term.iri(RDF_TYPE)
    city, company = db("city"), db("company")
    name, located, population, revenue = db("name"), db("located"), db("population"), db("revenue")
    germany = db("Germany")
    for i in range(N_CITIES):
        c = db(f"city{i}")
        yield c, rdf_type, city
        yield c, name, Term.literal(f"City {i}")
        yield c, population, Term.integer(10_000 + 37 * i)
        if i < N_IN_GERMANY:
            yield c, located, germany
        elif i < N_IN_GERMANY + N_LOCATED_ELSEWHERE:
            yield c, located, db(_COUNTRIES[i % len(_COUNTRIES)])
    for j in range(N_COMPANIES):
        c = db(f"company{j}")
        yield c, rdf_type, company
        yield c, revenue, Term.integer(1_000_000_000 + 1_000_003 * j)
        if j < N_NAMED_COMPANIES:
            yield c, name, Term.literal("Apple" if j == 0 else f"Company {j}")
    for k in range(N_FILLER):
        yield db(f"thing{k}"), db(f"related{k % 5}"), db(f"thing{(k * 7 + 1) % N_FILLER}")


def write_example(out: TextIO) -> int:
    n = 0
    for s, p, o in example_terms():
        out.write(format_ntriples(s, p, o))
        n += 1
    return n
