"""Parser for the SPARQL subset: SELECT over basic graph patterns with
FILTER, OPTIONAL and UNION, into the B(q) = {(T, O, F)} query model."""

from __future__ import annotations

import re
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .terms import RDF_TYPE, XSD, Term, unescape_string


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "?" + self.name


Node = Union[Var, Term]


@dataclass(frozen=True)
class TriplePattern:
    s: Node
    p: Node
    o: Node

    def __iter__(self) -> Iterator[Node]:
        return iter((self.s, self.p, self.o))

    def vars(self) -> list[str]:
        seen: list[str] = []
        for n in self:
            if isinstance(n, Var) and n.name not in seen:
                seen.append(n.name)
        return seen

    def __str__(self) -> str:
        return " ".join(_render_node(n) for n in self)


@dataclass(frozen=True)
class Compare:
    var: str
    op: str
    const: Term

    def __str__(self) -> str:
        return f"?{self.var} {self.op} {self.const.to_ntriples()}"


@dataclass(frozen=True)
class TypeTest:
    func: str  # "isIRI" | "isLiteral"
    var: str

    def __str__(self) -> str:
        return f"{self.func}(?{self.var})"


FilterExpr = Union[Compare, TypeTest]


@dataclass(frozen=True)
class GraphPattern:
    triples: tuple[TriplePattern, ...]
    optional: tuple[TriplePattern, ...] = ()
    filters: tuple[FilterExpr, ...] = ()

    def vars(self, include_optional: bool = True) -> list[str]:
        seen: list[str] = []
        pats = self.triples + (self.optional if include_optional else ())
        for tp in pats:
            for v in tp.vars():
                if v not in seen:
                    seen.append(v)
        return seen


@dataclass(frozen=True)
class Query:
    projection: tuple[str, ...] | None  # None means SELECT *
    patterns: tuple[GraphPattern, ...]
    text: str = field(default="", compare=False, repr=False)

    def output_vars(self) -> list[str]:
        if self.projection is not None:
            return list(self.projection)
        seen: list[str] = []
        for gp in self.patterns:
            for v in gp.vars(include_optional=False):
                if v not in seen:
                    seen.append(v)
        return seen


class SparqlSyntaxError(ValueError):
    def __init__(self, message: str, span: tuple[int, int] | None = None):
        where = f" at {span[0]}..{span[1]}" if span else ""
        super().__init__(message + where)
        self.span = span


class UnsupportedFeature(SparqlSyntaxError):
    def __init__(self, feature: str, span: tuple[int, int] | None = None):
        super().__init__(f"unsupported SPARQL feature: {feature}", span)
        self.feature = feature


# ------------------------------------------------------------------ lexing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<lang>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<dtype>\^\^)
  | (?P<number>[+-]?(?:\d*\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+))
  | (?P<pname>(?:[A-Za-z][A-Za-z0-9_.\-]*)?:(?:[A-Za-z0-9_][A-Za-z0-9_.\-]*[A-Za-z0-9_\-]|[A-Za-z0-9_])?)
  | (?P<bnode>_:[A-Za-z0-9_]+)
  | (?P<op><=|>=|!=|&&|\|\||[<>=!])
  | (?P<punct>[{}().;,*/|+^])
  | (?P<word>[A-Za-z][A-Za-z0-9_]*)
    """,
    re.X,
)

_UNSUPPORTED_WORDS = {
    "DISTINCT": "DISTINCT",
    "REDUCED": "REDUCED",
    "LIMIT": "LIMIT",
    "OFFSET": "OFFSET",
    "ORDER": "ORDER BY",
    "GROUP": "GROUP BY",
    "HAVING": "HAVING",
    "CONSTRUCT": "CONSTRUCT",
    "DESCRIBE": "DESCRIBE",
    "ASK": "ASK",
    "FROM": "FROM",
    "GRAPH": "GRAPH",
    "MINUS": "MINUS",
    "SERVICE": "SERVICE",
    "BIND": "BIND",
    "VALUES": "VALUES",
    "REGEX": "regex()",
    "BOUND": "bound()",
    "STR": "str()",
    "LANG": "lang()",
    "COUNT": "aggregates",
    "SUM": "aggregates",
    "MIN": "aggregates",
    "MAX": "aggregates",
    "AVG": "aggregates",
    "NOT": "NOT EXISTS",
    "EXISTS": "EXISTS",
    "ISBLANK": "isBlank()",
    "SAMETERM": "sameTerm()",
    "BASE": "BASE",
}


@dataclass
class _Tok:
    kind: str
    text: str
    start: int
    end: int

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def is_word(self, *words: str) -> bool:
        return self.kind == "word" and self.text.upper() in words


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SparqlSyntaxError(f"unexpected character {text[pos]!r}", (pos, pos + 1))
        kind = m.lastgroup
        assert kind is not None
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), m.start(), m.end()))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text), len(text)))
    return toks


# ------------------------------------------------------------------ parsing


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.prefixes: dict[str, str] = {}

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_punct(self, ch: str) -> _Tok:
        t = self.tok
        if t.kind != "punct" or t.text != ch:
            raise SparqlSyntaxError(f"expected {ch!r}, found {t.text or 'end of input'!r}", t.span)
        return self.advance()

    def check_unsupported(self, t: _Tok) -> None:
        if t.kind == "word" and t.text.upper() in _UNSUPPORTED_WORDS:
            raise UnsupportedFeature(_UNSUPPORTED_WORDS[t.text.upper()], t.span)

    def parse(self) -> Query:
        while self.tok.is_word("PREFIX", "BASE"):
            kw = self.advance()
            if kw.text.upper() == "BASE":
                raise UnsupportedFeature("BASE", kw.span)
            name = self.advance()
            if name.kind != "pname" or not name.text.endswith(":"):
                raise SparqlSyntaxError("expected prefix name", name.span)
            iri = self.advance()
            if iri.kind != "iri":
                raise SparqlSyntaxError("expected IRI in PREFIX", iri.span)
            self.prefixes[name.text[:-1]] = iri.text[1:-1]
        self.check_unsupported(self.tok)
        if not self.tok.is_word("SELECT"):
            raise SparqlSyntaxError("expected SELECT", self.tok.span)
        self.advance()
        self.check_unsupported(self.tok)
        projection: tuple[str, ...] | None
        if self.tok.kind == "punct" and self.tok.text == "*":
            self.advance()
            projection = None
        else:
            names: list[str] = []
            while self.tok.kind == "var":
                names.append(self.advance().text[1:])
            if self.tok.kind == "punct" and self.tok.text == "(":
                raise UnsupportedFeature("projection expressions", self.tok.span)
            if not names:
                raise SparqlSyntaxError("expected projection", self.tok.span)
            projection = tuple(names)
        self.check_unsupported(self.tok)
        if self.tok.is_word("WHERE"):
            self.advance()
        branches = self.parse_where()
        t = self.tok
        if t.kind != "eof":
            self.check_unsupported(t)
            raise SparqlSyntaxError(f"unexpected trailing {t.text!r}", t.span)
        query = Query(projection, tuple(branches), text=self.text)
        _check_query(query)
        return query

    def parse_where(self) -> list[GraphPattern]:
        open_tok = self.expect_punct("{")
        # { { A } UNION { B } ... }
        if self.tok.kind == "punct" and self.tok.text == "{":
            save = self.i
            groups = [self.parse_group()]
            while self.tok.is_word("UNION"):
                self.advance()
                groups.append(self.parse_group())
            if self.tok.kind == "punct" and self.tok.text == "}":
                self.advance()
                return groups
            if len(groups) > 1:
                raise UnsupportedFeature("UNION mixed with other graph patterns", open_tok.span)
            self.i = save
        self.i -= 1
        return [self.parse_group()]

    def parse_group(self, allow_optional: bool = True) -> GraphPattern:
        self.expect_punct("{")
        triples: list[TriplePattern] = []
        optional: list[TriplePattern] = []
        filters: list[FilterExpr] = []
        while True:
            t = self.tok
            if t.kind == "punct" and t.text == "}":
                self.advance()
                break
            if t.kind == "eof":
                raise SparqlSyntaxError("unterminated group", t.span)
            if t.kind == "punct" and t.text == ".":
                self.advance()
                continue
            if t.is_word("FILTER"):
                self.advance()
                filters.extend(self.parse_filter())
                continue
            if t.is_word("OPTIONAL"):
                if not allow_optional:
                    raise UnsupportedFeature("nested OPTIONAL", t.span)
                self.advance()
                inner = self.parse_group(allow_optional=False)
                optional.extend(inner.triples)
                filters.extend(inner.filters)
                continue
            if t.is_word("UNION"):
                raise UnsupportedFeature("UNION mixed with other graph patterns", t.span)
            if t.kind == "punct" and t.text == "{":
                inner = self.parse_group(allow_optional)
                if self.tok.is_word("UNION"):
                    raise UnsupportedFeature("UNION mixed with other graph patterns", self.tok.span)
                triples.extend(inner.triples)
                optional.extend(inner.optional)
                filters.extend(inner.filters)
                continue
            self.check_unsupported(t)
            triples.extend(self.parse_triples_block())
        return GraphPattern(tuple(triples), tuple(optional), tuple(filters))

    def parse_triples_block(self) -> list[TriplePattern]:
        out: list[TriplePattern] = []
        subj_tok = self.tok
        subj = self.parse_node()
        if isinstance(subj, Term) and subj.is_literal:
            raise SparqlSyntaxError("literal in subject position", subj_tok.span)
        while True:
            verb_tok = self.tok
            if verb_tok.kind == "word" and verb_tok.text == "a":
                self.advance()
                verb: Node = Term.iri(RDF_TYPE)
            else:
                verb = self.parse_node()
                if isinstance(verb, Term) and verb.is_literal:
                    raise SparqlSyntaxError("literal in property position", verb_tok.span)
            if self.tok.kind == "punct" and self.tok.text in "/|*+^":
                raise UnsupportedFeature("property paths", self.tok.span)
            while True:
                obj = self.parse_node()
                out.append(TriplePattern(subj, verb, obj))
                if self.tok.kind == "punct" and self.tok.text == ",":
                    self.advance()
                    continue
                break
            if self.tok.kind == "punct" and self.tok.text == ";":
                self.advance()
                if self.tok.kind == "punct" and self.tok.text in ".}":
                    break
                continue
            break
        t = self.tok
        if t.kind == "punct" and t.text == ".":
            self.advance()
        elif not (t.kind == "punct" and t.text == "}") and not t.is_word("FILTER", "OPTIONAL"):
            self.check_unsupported(t)
            raise SparqlSyntaxError(f"expected '.' or '}}', found {t.text!r}", t.span)
        return out

    def parse_node(self) -> Node:
        t = self.advance()
        if t.kind == "var":
            return Var(t.text[1:])
        if t.kind == "iri":
            return Term.iri(t.text[1:-1])
        if t.kind == "pname":
            return Term.iri(self.expand(t))
        if t.kind == "string":
            return self.finish_literal(t)
        if t.kind == "number":
            return _number_term(t.text)
        if t.kind == "word" and t.text in ("true", "false"):
            return Term.literal(t.text, datatype=XSD + "boolean")
        if t.kind == "bnode" or (t.kind == "punct" and t.text == "["):
            raise UnsupportedFeature("blank nodes in patterns", t.span)
        if t.kind == "punct" and t.text == "(":
            raise UnsupportedFeature("collections", t.span)
        self.check_unsupported(t)
        raise SparqlSyntaxError(f"expected term, found {t.text or 'end of input'!r}", t.span)

    def expand(self, t: _Tok) -> str:
        prefix, _, local = t.text.partition(":")
        if prefix not in self.prefixes:
            raise SparqlSyntaxError(f"undeclared prefix {prefix!r}", t.span)
        return self.prefixes[prefix] + local

    def finish_literal(self, t: _Tok) -> Term:
        body = unescape_string(t.text[1:-1])
        if self.tok.kind == "lang":
            return Term.literal(body, lang=self.advance().text[1:])
        if self.tok.kind == "dtype":
            self.advance()
            dt = self.advance()
            if dt.kind == "iri":
                return Term.literal(body, datatype=dt.text[1:-1])
            if dt.kind == "pname":
                return Term.literal(body, datatype=self.expand(dt))
            raise SparqlSyntaxError("expected datatype IRI", dt.span)
        return Term.literal(body)

    # FILTER ( a && b ) | FILTER isIRI(?x)
    def parse_filter(self) -> list[FilterExpr]:
        t = self.tok
        if t.kind == "word":
            return [self.parse_call()]
        self.expect_punct("(")
        exprs = self.parse_conjunction()
        self.expect_punct(")")
        return exprs

    def parse_conjunction(self) -> list[FilterExpr]:
        exprs = self.parse_atom()
        while True:
            t = self.tok
            if t.kind == "op" and t.text == "&&":
                self.advance()
                exprs.extend(self.parse_atom())
            elif t.kind == "op" and t.text == "||":
                raise UnsupportedFeature("disjunctive filters", t.span)
            else:
                return exprs

    def parse_atom(self) -> list[FilterExpr]:
        t = self.tok
        if t.kind == "punct" and t.text == "(":
            self.advance()
            exprs = self.parse_conjunction()
            self.expect_punct(")")
            return exprs
        if t.kind == "op" and t.text == "!":
            raise UnsupportedFeature("negated filters", t.span)
        if t.kind == "word" and t.text not in ("true", "false"):
            return [self.parse_call()]
        left_tok = self.tok
        left = self.parse_node()
        op_tok = self.advance()
        if op_tok.kind != "op" or op_tok.text in ("&&", "||", "!"):
            raise SparqlSyntaxError("expected comparison operator", op_tok.span)
        if op_tok.text == "!=":
            raise UnsupportedFeature("!= comparisons", op_tok.span)
        right_tok = self.tok
        right = self.parse_node()
        if isinstance(left, Var) and isinstance(right, Term):
            return [Compare(left.name, op_tok.text, right)]
        if isinstance(left, Term) and isinstance(right, Var):
            return [Compare(right.name, _FLIP[op_tok.text], left)]
        if isinstance(left, Var):
            raise UnsupportedFeature("variable-to-variable comparison", (left_tok.start, right_tok.end))
        raise SparqlSyntaxError("comparison needs a variable", (left_tok.start, right_tok.end))

    def parse_call(self) -> FilterExpr:
        t = self.advance()
        name = t.text.upper()
        if name in ("ISIRI", "ISURI", "ISLITERAL"):
            self.expect_punct("(")
            v = self.advance()
            if v.kind != "var":
                raise SparqlSyntaxError("type test needs a variable", v.span)
            self.expect_punct(")")
            return TypeTest("isLiteral" if name == "ISLITERAL" else "isIRI", v.text[1:])
        self.check_unsupported(t)
        raise UnsupportedFeature(f"function {t.text}()", t.span)


_FLIP = {"<": ">", "<=": ">=", "=": "=", ">=": "<=", ">": "<"}


def _number_term(text: str) -> Term:
    if re.fullmatch(r"[+-]?\d+", text):
        return Term.literal(text, datatype=XSD + "integer")
    if "e" in text.lower():
        return Term.literal(text, datatype=XSD + "double")
    return Term.literal(text, datatype=XSD + "decimal")


def _check_query(query: Query) -> None:
    for gp in query.patterns:
        if not gp.triples:
            raise SparqlSyntaxError("graph pattern without required triple patterns")
        bound = set(gp.vars())
        for f in gp.filters:
            if f.var not in bound:
                raise SparqlSyntaxError(f"filter variable ?{f.var} does not occur in the graph pattern")
        if query.projection is not None:
            for v in query.projection:
                if v not in bound:
                    raise SparqlSyntaxError(f"projected variable ?{v} missing from a UNION branch")


def parse_sparql(text: str) -> Query:
    """Parse query text into the graph-pattern query model."""
    return _Parser(text).parse()


# --------------------------------------------------------------- rendering


def _render_node(n: Node) -> str:
    return str(n)


def _render_group(gp: GraphPattern, indent: str) -> list[str]:
    lines = [f"{indent}{tp} ." for tp in gp.triples]
    for f in gp.filters:
        lines.append(f"{indent}FILTER({f})")
    if gp.optional:
        lines.append(f"{indent}OPTIONAL {{")
        lines.extend(f"{indent}  {tp} ." for tp in gp.optional)
        lines.append(f"{indent}}}")
    return lines


def render_sparql(query: Query) -> str:
    """Canonical text form; parse_sparql(render_sparql(q)) == q."""
    head = "SELECT " + ("*" if query.projection is None else " ".join("?" + v for v in query.projection))
    if len(query.patterns) == 1:
        body = _render_group(query.patterns[0], "  ")
        return "\n".join([head + " WHERE {", *body, "}"]) + "\n"
    lines = [head + " WHERE {"]
    for i, gp in enumerate(query.patterns):
        lines.append("  {" if i == 0 else "  } UNION {")
        lines.extend(_render_group(gp, "    "))
    lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- executability


def _connected(patterns: Iterable[TriplePattern]) -> bool:
    pats = list(patterns)
    if len(pats) <= 1:
        return True
    reached = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        vi = set(pats[i].vars())
        for j, pj in enumerate(pats):
            if j not in reached and vi & set(pj.vars()):
                reached.add(j)
                frontier.append(j)
    return len(reached) == len(pats)


def validate_executable(query: Query) -> str | None:
    """None when the engine can execute ``query``, otherwise the reason it cannot."""
    for gp in query.patterns:
        if gp.optional:
            return "OPTIONAL execution"
        if not _connected(gp.triples):
            return "disconnected join graph"
    if query.projection is None and len(query.patterns) > 1:
        first = set(query.patterns[0].vars())
        if any(set(gp.vars()) != first for gp in query.patterns[1:]):
            return "SELECT * over UNION branches with different variables"
    return None


# ---------------------------------------------------------------- query logs


@dataclass(frozen=True)
class LogEntry:
    query: Query
    multiplicity: int = 1


_MULT_RE = re.compile(r"^#x\s+(\d+)\s*$")


def parse_query_log(text: str) -> list[LogEntry]:
    """Queries separated by lines holding only ``###``; a leading ``#x N`` sets multiplicity."""
    entries: list[LogEntry] = []
    chunks: list[list[str]] = [[]]
    for line in text.splitlines():
        if line.strip() == "###":
            chunks.append([])
        else:
            chunks[-1].append(line)
    for chunk in chunks:
        lines = list(chunk)
        while lines and not lines[0].strip():
            lines.pop(0)
        if not lines or not "".join(lines).strip():
            continue
        mult = 1
        m = _MULT_RE.match(lines[0].strip())
        if m:
            mult = int(m.group(1))
            if mult < 1:
                raise ValueError("multiplicity must be >= 1")
            lines = lines[1:]
        entries.append(LogEntry(parse_sparql("\n".join(lines)), mult))
    return entries


def read_query_log(path: str | Path) -> list[LogEntry]:
    return parse_query_log(Path(path).read_text(encoding="utf-8"))


def format_query_log(entries: Iterable[LogEntry]) -> str:
    parts = []
    for e in entries:
        text = render_sparql(e.query)
        if e.multiplicity != 1:
            text = f"#x {e.multiplicity}\n" + text
        parts.append(text)
    return "###\n".join(parts)


__all__ = [
    "Compare",
    "FilterExpr",
    "GraphPattern",
    "LogEntry",
    "Query",
    "SparqlSyntaxError",
    "TriplePattern",
    "TypeTest",
    "UnsupportedFeature",
    "Var",
    "format_query_log",
    "parse_query_log",
    "parse_sparql",
    "read_query_log",
    "render_sparql",
    "validate_executable",
]
