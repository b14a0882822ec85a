"""Distributed query planning: join ordering over index scans, localization of
leaves to hosts, home-host assignment, partial-join rewrites and EXPLAIN."""

from __future__ import annotations

import copy
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from itertools import combinations
from typing import TYPE_CHECKING

from .costmodel import CostModel, cost, execution_cost
from .sparql import Compare, FilterExpr, GraphPattern, Query, TriplePattern, TypeTest, Var, validate_executable
from .store import ORDERS, compatible_orders
from .terms import Term, TermKind
from .workload import AnonPattern

if TYPE_CHECKING:
    from .allocation import Catalog, FragmentStats

SEL_COMPARE = 1 / 3
SEL_TYPE = 1 / 2
DP_LIMIT = 12
_POSITIONS = "SPO"


class PlanningError(ValueError):
    pass


@dataclass(eq=False)
class PlanOp:
    """A physical operator. ``vars`` holds the join key (merge join), the shared
    variables (hash join), the sort key or the projection list."""

    kind: str
    children: list[PlanOp] = field(default_factory=list)
    schema: tuple[str, ...] = ()
    sorted_by: tuple[str, ...] = ()
    vars: tuple[str, ...] = ()
    pattern: TriplePattern | None = None
    ids: tuple[int | None, int | None, int | None] | None = None
    order: str | None = None
    fragments: tuple[int, ...] = ()
    share: float = 1.0
    filters: tuple[FilterExpr, ...] = ()
    build: int = 0
    hh: int | None = None
    excard: float | None = None
    xc: float | None = None
    cost: float | None = None
    distinct: dict[str, float] = field(default_factory=dict)
    id: int | None = None

    def walk(self) -> Iterator[PlanOp]:
        yield self
        for c in self.children:
            yield from c.walk()

    def copy(self) -> PlanOp:
        return copy.deepcopy(self)

    def label(self) -> str:
        k = self.kind
        if k == "scan":
            text = f"IndexScan {self.order} {self.pattern} frags={','.join(map(str, self.fragments))}"
            if self.filters:
                text += " filter " + " && ".join(str(f) for f in self.filters)
            return text
        if k == "mergejoin":
            return "MergeJoin " + " ".join("?" + v for v in self.vars)
        if k == "hashjoin":
            return "HashJoin " + " ".join("?" + v for v in self.vars) + f" build={'LR'[self.build]}"
        if k == "bmu":
            return "BMU"
        if k == "sort":
            return "Sort " + " ".join("?" + v for v in self.vars)
        if k == "project":
            return "Project " + " ".join("?" + v for v in self.vars)
        if k == "filter":
            return "Filter " + " && ".join(str(f) for f in self.filters)
        if k == "union":
            return "Union"
        if k == "empty":
            return "Empty " + " ".join("?" + v for v in self.schema)
        return k

    # -- serialization for deployment

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind, "schema": list(self.schema), "sorted_by": list(self.sorted_by)}
        if self.id is not None:
            out["id"] = self.id
        if self.hh is not None:
            out["hh"] = self.hh
        if self.vars:
            out["vars"] = list(self.vars)
        if self.kind == "scan":
            out["order"] = self.order
            out["ids"] = list(self.ids or (None, None, None))
            out["names"] = [n.name if isinstance(n, Var) else None for n in self.pattern]  # type: ignore[union-attr]
        if self.filters:
            out["filters"] = [filter_to_json(f) for f in self.filters]
        if self.kind == "hashjoin":
            out["build"] = self.build
        if self.children:
            out["children"] = [c.to_json() for c in self.children]
        return out


def filter_to_json(f: FilterExpr) -> dict:
    if isinstance(f, Compare):
        return {"var": f.var, "op": f.op, "const": [f.const.kind.value, f.const.lexical]}
    return {"var": f.var, "func": f.func}


def filter_from_json(obj: dict) -> FilterExpr:
    if "func" in obj:
        return TypeTest(obj["func"], obj["var"])
    kind, lexical = obj["const"]
    return Compare(obj["var"], obj["op"], Term(TermKind(kind), lexical))


def chain_inputs(op: PlanOp) -> list[PlanOp]:
    """Non-BMU inputs of a BMU chain, left to right; ``[op]`` for anything else."""
    if op.kind != "bmu":
        return [op]
    return [x for c in op.children for x in chain_inputs(c)]


def bmu_chain(inputs: Sequence[PlanOp]) -> PlanOp:
    acc = inputs[0]
    for nxt in inputs[1:]:
        acc = PlanOp("bmu", [acc, nxt], schema=acc.schema, sorted_by=acc.sorted_by)
    return acc


# ---------------------------------------------------------------- estimation


def _leaf_estimate(st: FragmentStats, ids) -> tuple[float, list[float]]:
    """Estimated matches of a pattern in one fragment plus distinct counts per position."""
    s, p, o = ids
    if p is not None:
        prop = st.properties.get(p)
        if not prop:
            return 0.0, [0.0, 0.0, 0.0]
        card, ds, do = (float(x) for x in prop)
        dp = 1.0
    else:
        card, ds, dp, do = float(st.triples), float(st.distinct_s), float(st.distinct_p), float(st.distinct_o)
    if o is not None:
        exact = st.po.get(p, {}).get(o) if p is not None else None
        if exact is not None:
            card = float(exact)
        elif p is not None and st.po_complete:
            card = 0.0
        else:
            card = card / do if do else 0.0
        do = 1.0
    if s is not None:
        card = card / ds if ds else 0.0
        ds = 1.0
    return card, [min(d, card) for d in (ds, dp, do)]


class Estimator:
    """excard and per-variable distinct counts from the catalog statistics."""

    def __init__(self, catalog: Catalog):
        self.catalog = catalog

    def _fragment_estimate(self, fid: int, ids) -> tuple[float, list[float]]:
        st = self.catalog.stats.get(fid)
        if st is None:
            size = float(self.catalog.fragmentation.get(fid).size)
            return size, [size, size, size]
        return _leaf_estimate(st, ids)

    def scan(self, op: PlanOp) -> None:
        rem = self.catalog.fragmentation.remainder_id
        # A remainder share scales the cardinality only: distinct counts keep the
        # whole value domain so that partial joins sum to the unsplit estimate.
        card = full = 0.0
        dist = [0.0, 0.0, 0.0]
        for fid in op.fragments:
            c, d = self._fragment_estimate(fid, op.ids)
            card += c * (op.share if fid == rem else 1.0)
            full += c
            dist = [a + b for a, b in zip(dist, d)]
        names: dict[str, float] = {}
        for node, d in zip(op.pattern, dist):  # type: ignore[arg-type]
            if isinstance(node, Var):
                names[node.name] = min(names.get(node.name, d), d)
        sel = math.prod(SEL_COMPARE if isinstance(f, Compare) else SEL_TYPE for f in op.filters)
        op.excard = card * sel
        op.distinct = {v: min(d, full * sel) for v, d in names.items()}

    def annotate(self, op: PlanOp) -> float:
        for c in op.children:
            if c.excard is None or c.kind != "scan":
                self.annotate(c)
        k = op.kind
        kids = op.children
        if k == "scan":
            self.scan(op)
        elif k in ("mergejoin", "hashjoin"):
            left, right = kids
            denom = 1.0
            for v in set(left.schema) & set(right.schema):
                denom *= max(left.distinct[v], right.distinct[v])
            op.excard = left.excard * right.excard / denom if denom > 0 else 0.0  # type: ignore[operator]
            op.distinct = {
                v: min(c.distinct[v] for c in kids if v in c.distinct) for v in op.schema
            }
        elif k in ("bmu", "union"):
            op.excard = sum(c.excard for c in kids)  # type: ignore[misc]
            op.distinct = {v: min(sum(c.distinct.get(v, 0.0) for c in kids), op.excard) for v in op.schema}
        elif k == "filter":
            sel = math.prod(SEL_COMPARE if isinstance(f, Compare) else SEL_TYPE for f in op.filters)
            op.excard = kids[0].excard * sel  # type: ignore[operator]
            op.distinct = {v: kids[0].distinct[v] for v in op.schema}
        elif k in ("sort", "project"):
            op.excard = kids[0].excard
            op.distinct = {v: kids[0].distinct[v] for v in op.schema}
        elif k == "empty":
            op.excard = 0.0
            op.distinct = {v: 0.0 for v in op.schema}
        else:
            raise PlanningError(f"cannot estimate operator {k!r}")
        return op.excard  # type: ignore[return-value]


def local_cost(op: PlanOp, model: CostModel) -> float:
    """Plan cost with every operator on one host (no transfers)."""
    op.xc = execution_cost(op, model)
    op.cost = op.xc + max((local_cost(c, model) for c in op.children), default=0.0)
    return op.cost


# ---------------------------------------------------------------- initial plan


def _resolve(tp: TriplePattern, catalog: Catalog) -> tuple[int | None, ...] | None:
    """TermIds of the pattern's constants (None for variables); None if a constant is unknown."""
    d = catalog.get_dictionary()
    ids = []
    for n in tp:
        if isinstance(n, Var):
            ids.append(None)
        else:
            tid = d.lookup(n)
            if tid is None:
                return None
            ids.append(tid)
    return tuple(ids)


def _scan_layout(tp: TriplePattern, order: str) -> tuple[str, ...]:
    nodes = list(tp)
    out: list[str] = []
    for c in order:
        node = nodes[_POSITIONS.index(c)]
        if isinstance(node, Var) and node.name not in out:
            out.append(node.name)
    return tuple(out)


def leaf_scans(
    tp: TriplePattern, ids, fragments: tuple[int, ...], filters: tuple[FilterExpr, ...]
) -> list[PlanOp]:
    """One scan per distinct leading sort variable, using the first compatible index order."""
    probe = tuple(None if i is None else 1 for i in ids)
    seen: dict[str | None, PlanOp] = {}
    for order in compatible_orders(probe):  # type: ignore[arg-type]
        layout = _scan_layout(tp, order)
        lead = layout[0] if layout else None
        if lead not in seen:
            seen[lead] = PlanOp(
                "scan", schema=layout, sorted_by=layout, pattern=tp, ids=ids, order=order,
                fragments=fragments, filters=filters,
            )
    return sorted(seen.values(), key=lambda op: ORDERS.index(op.order))  # type: ignore[arg-type]


def make_join(kind: str, left: PlanOp, right: PlanOp, key: str | None = None) -> PlanOp:
    schema = left.schema + tuple(v for v in right.schema if v not in left.schema)
    shared = tuple(v for v in left.schema if v in right.schema)
    if kind == "mergejoin":
        return PlanOp("mergejoin", [left, right], schema=schema, sorted_by=(key,), vars=(key,))  # type: ignore[arg-type]
    build = 0 if (left.excard or 0) <= (right.excard or 0) else 1
    return PlanOp("hashjoin", [left, right], schema=schema, vars=shared, build=build)


def _join_candidates(left: dict, right: dict, est: Estimator, model: CostModel) -> list[PlanOp]:
    """Merge joins for every shared variable both sides can deliver sorted, plus a hash join."""
    any_l = left[None]
    any_r = right[None]
    shared = [v for v in any_l.schema if v in any_r.schema]
    out = []
    for v in shared:
        if v in left and v in right:
            out.append(make_join("mergejoin", left[v], right[v], v))
    if shared:
        out.append(make_join("hashjoin", any_l, any_r))
    for op in out:
        est.annotate(op)
        if op.kind == "hashjoin":
            op.build = 0 if op.children[0].excard <= op.children[1].excard else 1
        local_cost(op, model)
    return out


def _record(table: dict, op: PlanOp) -> None:
    lead = op.sorted_by[0] if op.sorted_by else None
    for key in {lead, None}:
        cur = table.get(key)
        if cur is None or op.cost < cur.cost - 1e-9 * max(1.0, abs(cur.cost)):
            table[key] = op


def _dp(leaves: list[list[PlanOp]], est: Estimator, model: CostModel) -> PlanOp:
    n = len(leaves)
    best: dict[int, dict] = {}
    for i, scans in enumerate(leaves):
        table: dict = {}
        for s in scans:
            est.annotate(s)
            local_cost(s, model)
            _record(table, s)
        best[1 << i] = table
    full = (1 << n) - 1
    for mask in sorted(range(1, full + 1), key=lambda m: (bin(m).count("1"), m)):
        if mask in best:
            continue
        table = {}
        low = mask & -mask
        sub = (mask - 1) & mask
        while sub:
            if sub & low and sub in best and (mask ^ sub) in best:
                for op in _join_candidates(best[sub], best[mask ^ sub], est, model):
                    _record(table, op)
            sub = (sub - 1) & mask
        if table:
            best[mask] = table
    if full not in best:
        raise PlanningError("disconnected join graph")
    return best[full][None]


def _greedy(leaves: list[list[PlanOp]], est: Estimator, model: CostModel) -> PlanOp:
    parts: list[dict] = []
    for scans in leaves:
        table: dict = {}
        for s in scans:
            est.annotate(s)
            local_cost(s, model)
            _record(table, s)
        parts.append(table)
    while len(parts) > 1:
        choice = None
        for i, j in combinations(range(len(parts)), 2):
            for op in _join_candidates(parts[i], parts[j], est, model):
                key = (op.excard, op.cost)
                if choice is None or key < choice[0]:
                    choice = (key, i, j, op)
        if choice is None:
            raise PlanningError("disconnected join graph")
        _, i, j, op = choice
        table = {}
        _record(table, op)
        parts = [p for k, p in enumerate(parts) if k not in (i, j)] + [table]
    return parts[0][None]


def _branch_plan(gp: GraphPattern, catalog: Catalog, est: Estimator, model: CostModel) -> PlanOp:
    spill = catalog.spill
    fused: list[list[FilterExpr]] = [[] for _ in gp.triples]
    for f in gp.filters:
        idx = next(i for i, tp in enumerate(gp.triples) if f.var in tp.vars())
        fused[idx].append(f)
    leaves: list[list[PlanOp]] = []
    for tp, fl in zip(gp.triples, fused):
        ids = _resolve(tp, catalog)
        frags = tuple(catalog.fragmentation.overlapping(AnonPattern.of(tp), spill)) if ids is not None else ()
        if not frags:
            schema = tuple(gp.vars(include_optional=False))
            return PlanOp("empty", schema=schema)
        leaves.append(leaf_scans(tp, ids, frags, tuple(fl)))
    if len(leaves) <= DP_LIMIT:
        return _dp(leaves, est, model)
    return _greedy(leaves, est, model)


def initial_plan(query: Query, catalog: Catalog, model: CostModel | None = None) -> PlanOp:
    """Host-agnostic plan: cheapest join tree per branch under a projection (and a union)."""
    reason = validate_executable(query)
    if reason is not None:
        raise PlanningError(reason)
    model = model or catalog.cost_model
    est = Estimator(catalog)
    out_vars = tuple(query.output_vars())
    branches = []
    for gp in query.patterns:
        body = _branch_plan(gp, catalog, est, model)
        proj = PlanOp("project", [body], schema=out_vars, vars=out_vars)
        if body.kind == "empty":
            proj = PlanOp("empty", schema=out_vars)
        branches.append(proj)
    root = branches[0] if len(branches) == 1 else PlanOp("union", branches, schema=out_vars)
    est.annotate(root)
    local_cost(root, model)
    return root


# ---------------------------------------------------------------- localization


def localize(plan: PlanOp, catalog: Catalog) -> PlanOp:
    """Pin every scan to the hosts holding its overlapping fragments; several hosts
    become a left-deep BMU chain of per-host scans in the same index order."""
    n = catalog.n_hosts
    rem = catalog.fragmentation.remainder_id

    def visit(op: PlanOp) -> PlanOp:
        if op.kind != "scan":
            op.children = [visit(c) for c in op.children]
            return op
        by_host: dict[int, list[int]] = {}
        for fid in op.fragments:
            for h in catalog.hosts_of(fid):
                by_host.setdefault(h, []).append(fid)
        if not by_host:
            return PlanOp("empty", schema=op.schema, sorted_by=op.sorted_by)
        scans = []
        for h in sorted(by_host):
            s = copy.copy(op)
            s.children = []
            s.fragments = tuple(by_host[h])
            s.share = 1.0 / n if rem in s.fragments else 1.0
            s.hh = h
            s.excard = None
            scans.append(s)
        return bmu_chain(scans)

    out = visit(plan.copy())
    for op in out.walk():
        op.excard = None
    Estimator(catalog).annotate(out)
    return out


# ---------------------------------------------------------------- home hosts


def _assign(op: PlanOp, root_host: int, model: CostModel) -> None:
    if op.kind == "scan":
        return
    if op.kind == "bmu":
        raise PlanningError("BMU chains are assigned through their parent")
    chain_kids = []
    for c in op.children:
        if c.kind == "bmu":
            for x in chain_inputs(c):
                _assign(x, root_host, model)
            chain_kids.append(c)
        else:
            _assign(c, root_host, model)
    cands = {root_host}
    for c in op.children:
        cands.update(x.hh for x in chain_inputs(c))  # type: ignore[misc]
    best = None
    for h in sorted(cands):
        op.hh = h
        for c in chain_kids:
            for b in c.walk():
                if b.kind == "bmu":
                    b.hh = h
        c_op = cost(op, model)
        if best is None or c_op < best[0]:
            best = (c_op, h)
    op.hh = best[1]  # type: ignore[index]
    for c in chain_kids:
        for b in c.walk():
            if b.kind == "bmu":
                b.hh = op.hh
    cost(op, model)


def assign_home_hosts(plan: PlanOp, catalog: Catalog, model: CostModel | None = None) -> PlanOp:
    """Try each host as the root candidate and keep the cheapest plan (ties: lowest host)."""
    model = model or catalog.cost_model
    best: tuple[float, PlanOp] | None = None
    for r in range(catalog.n_hosts):
        p = plan.copy()
        for op in p.walk():
            if op.kind == "empty":
                op.hh = r
        _assign(p, r, model)
        c = cost(p, model)
        if best is None or c < best[0]:
            best = (c, p)
    return best[1]  # type: ignore[index]


# ---------------------------------------------------------------- transformations


def _remainder_only(op: PlanOp, rem: int) -> bool:
    return op.kind == "scan" and op.fragments == (rem,)


def provably_empty(a: PlanOp, b: PlanOp, join: PlanOp, rem: int) -> bool:
    """Remainder triples are placed by subject hash, so remainder-only scans on
    different hosts cannot agree on a shared subject variable."""
    if not (_remainder_only(a, rem) and _remainder_only(b, rem)) or a.hh == b.hh:
        return False
    sa, sb = a.pattern.s, b.pattern.s  # type: ignore[union-attr]
    return isinstance(sa, Var) and sa == sb and sa.name in a.schema and sa.name in b.schema


def _replace(root: PlanOp, target: PlanOp, new: PlanOp) -> PlanOp:
    if root is target:
        return new
    root.children = [_replace(c, target, new) for c in root.children]
    return root


def _clear(op: PlanOp) -> None:
    for x in op.walk():
        if x.kind != "scan":
            x.excard = None


def _partial_join_rewrite(join: PlanOp, rem: int) -> PlanOp | None:
    left, right = join.children
    ins_l, ins_r = chain_inputs(left), chain_inputs(right)
    if len(ins_l) * len(ins_r) <= 1:
        return None
    # pairing whole subtrees would re-run them once per partner
    if any(x.kind != "scan" for x in ins_l + ins_r):
        return None
    parts = []
    for a in ins_l:
        for b in ins_r:
            if provably_empty(a, b, join, rem):
                continue
            if join.kind == "mergejoin":
                parts.append(make_join("mergejoin", a.copy(), b.copy(), join.vars[0]))
            else:
                parts.append(make_join("hashjoin", a.copy(), b.copy()))
    if not parts:
        return PlanOp("empty", schema=join.schema, sorted_by=join.sorted_by)
    return bmu_chain(parts)


def _hash_to_merge(join: PlanOp) -> list[PlanOp]:
    out = []
    left, right = join.children
    for v in join.vars:
        kids = []
        for c in (left, right):
            c2 = c.copy()
            if not (c2.sorted_by and c2.sorted_by[0] == v):
                c2 = PlanOp("sort", [c2], schema=c2.schema, sorted_by=(v,), vars=(v,))
            kids.append(c2)
        out.append(make_join("mergejoin", kids[0], kids[1], v))
    return out


def apply_transformations(
    plan: PlanOp, catalog: Catalog, model: CostModel | None = None, max_rounds: int = 64
) -> PlanOp:
    """Greedy rewrites accepted only when they lower c(plan)."""
    model = model or catalog.cost_model
    rem = catalog.fragmentation.remainder_id
    est = Estimator(catalog)
    current = plan
    current_cost = cost(current, model)
    for _ in range(max_rounds):
        improved = False
        joins = [op for op in current.walk() if op.kind in ("mergejoin", "hashjoin")]
        for idx, j in enumerate(reversed(joins)):
            candidates = []
            rewrite = _partial_join_rewrite(j, rem)
            if rewrite is not None:
                candidates.append(rewrite)
            if j.kind == "hashjoin":
                candidates.extend(_hash_to_merge(j))
            for cand in candidates:
                trial = current.copy()
                target = [op for op in trial.walk() if op.kind in ("mergejoin", "hashjoin")][::-1][idx]
                trial = _replace(trial, target, cand)
                _clear(trial)
                est.annotate(trial)
                for op in trial.walk():
                    if op.kind == "hashjoin":
                        op.build = 0 if op.children[0].excard <= op.children[1].excard else 1
                trial = assign_home_hosts(trial, catalog, model)
                c = cost(trial, model)
                if c < current_cost - 1e-9 * max(1.0, abs(current_cost)):
                    current, current_cost = trial, c
                    improved = True
                    break
            if improved:
                break
        if not improved:
            break
    return current


# ---------------------------------------------------------------- entry points


def _fmt(x: float | None) -> str:
    if x is None:
        return "?"
    r = round(x)
    return str(int(r)) if abs(x - r) < 1e-6 else f"{x:.2f}"


def explain(plan: PlanOp) -> str:
    lines = []

    def rec(op: PlanOp, depth: int) -> None:
        lines.append(f"{'  ' * depth}{op.label()} [hh={op.hh} excard={_fmt(op.excard)} xc={_fmt(op.xc)}]")
        for c in op.children:
            rec(c, depth + 1)

    rec(plan, 0)
    return "\n".join(lines) + "\n"


def number_ops(plan: PlanOp) -> PlanOp:
    for i, op in enumerate(plan.walk()):
        op.id = i
    return plan


def plan_query(query: Query, catalog: Catalog, model: CostModel | None = None, transform: bool = True) -> PlanOp:
    """Full pipeline: initial plan, localization, home hosts, transformations."""
    model = model or catalog.cost_model
    plan = initial_plan(query, catalog, model)
    plan = localize(plan, catalog)
    plan = assign_home_hosts(plan, catalog, model)
    if transform:
        plan = apply_transformations(plan, catalog, model)
    cost(plan, model)
    return number_ops(plan)
