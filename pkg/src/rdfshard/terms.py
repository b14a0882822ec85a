"""RDF terms and the value semantics shared by filters and fragment predicates."""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from functools import lru_cache

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
XSD = "http://www.w3.org/2001/XMLSchema#"

COMPARE_OPS = ("<", "<=", "=", ">=", ">")


class TermKind(str, Enum):
    IRI = "iri"
    LITERAL = "literal"


@dataclass(frozen=True, order=True)
class Term:
    """An IRI or literal.

    IRIs carry their text without angle brackets. Literals carry their full
    N-Triples token (quotes, escapes, language tag or datatype included), so two
    literals are equal only if their lexical forms agree exactly.
    """

    kind: TermKind
    lexical: str

    def __post_init__(self) -> None:
        if not self.lexical:
            raise ValueError("empty term")

    @classmethod
    def iri(cls, text: str) -> Term:
        return cls(TermKind.IRI, text)

    @classmethod
    def literal(cls, value: str, *, lang: str | None = None, datatype: str | None = None) -> Term:
        token = '"' + escape_string(value) + '"'
        if lang:
            token += "@" + lang
        elif datatype:
            token += "^^<" + datatype + ">"
        return cls(TermKind.LITERAL, token)

    @classmethod
    def integer(cls, value: int) -> Term:
        return cls.literal(str(value), datatype=XSD + "integer")

    @property
    def is_iri(self) -> bool:
        return self.kind is TermKind.IRI

    @property
    def is_literal(self) -> bool:
        return self.kind is TermKind.LITERAL

    def to_ntriples(self) -> str:
        if self.is_iri:
            if self.lexical.startswith("_:"):
                return self.lexical
            return "<" + self.lexical + ">"
        return self.lexical

    def __str__(self) -> str:
        return self.to_ntriples()


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t", "b": "\b", "f": "\f", "'": "'"}


def escape_string(value: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in value)


def unescape_string(body: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(body):
            raise ValueError("dangling escape")
        nxt = body[i + 1]
        if nxt in _UNESCAPES:
            out.append(_UNESCAPES[nxt])
            i += 2
        elif nxt == "u":
            out.append(chr(int(body[i + 2 : i + 6], 16)))
            i += 6
        elif nxt == "U":
            out.append(chr(int(body[i + 2 : i + 10], 16)))
            i += 10
        else:
            raise ValueError(f"bad escape \\{nxt}")
    return "".join(out)


_LITERAL_RE = re.compile(r'^"((?:[^"\\]|\\.)*)"(?:@[A-Za-z0-9-]+|\^\^<[^>]*>)?$', re.S)


def literal_body(term: Term) -> str:
    """The unescaped string content of a literal."""
    m = _LITERAL_RE.match(term.lexical)
    if m is None:
        raise ValueError(f"malformed literal {term.lexical!r}")
    return unescape_string(m.group(1))


@lru_cache(maxsize=1 << 16)
def numeric_value(term: Term) -> Decimal | None:
    """Decimal value of a literal whose content parses as a number, else None."""
    if not term.is_literal:
        return None
    try:
        body = literal_body(term).strip()
    except ValueError:
        return None
    if not body or body.lower() in ("nan", "inf", "-inf", "+inf", "infinity", "-infinity"):
        return None
    try:
        value = Decimal(body)
    except InvalidOperation:
        return None
    return value if value.is_finite() else None


def order_key(term: Term) -> tuple:
    """Sort key under which ordering comparisons are evaluated.

    Numbers order numerically and form their own domain; everything else
    orders by kind and then by lexical form.
    """
    num = numeric_value(term)
    if num is not None:
        return (0, num)
    return (1, term.kind.value, term.lexical)


def compare(term: Term, op: str, const: Term) -> bool:
    """Evaluate ``term op const``.

    ``=`` is term identity. Ordering operators only hold between two numbers
    or between two non-numeric terms of the same kind; across domains the
    comparison is false, like a SPARQL type error inside FILTER.
    """
    if op == "=":
        return term == const
    a, b = order_key(term), order_key(const)
    if a[0] != b[0] or (a[0] == 1 and a[1] != b[1]):
        return False
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(f"unknown comparison operator {op!r}")
