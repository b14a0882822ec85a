"""Distributed response-time cost model over host-annotated plans."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .planner import PlanOp

PAGE_SIZE = 1024


@dataclass(frozen=True)
class CostModel:
    t_page: float = 10000.0
    c_scan: float = 1.0
    c_cmp: float = 1.0
    c_out: float = 1.0
    c_build: float = 2.0
    c_probe: float = 1.0

    def __post_init__(self) -> None:
        if any(v < 0 for v in asdict(self).values()):
            raise ValueError("cost coefficients must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> CostModel:
        return cls(**obj)


def pages(excard: float) -> int:
    return math.ceil(excard / PAGE_SIZE) if excard > 0 else 0


def transfer_cost(child: PlanOp, parent: PlanOp, model: CostModel) -> float:
    """Cost of shipping ``child``'s output to ``parent``: zero when co-located."""
    if child.hh is None or parent.hh is None:
        raise ValueError(f"missing home host on {child.kind} -> {parent.kind}")
    if child.hh == parent.hh:
        return 0.0
    return model.t_page * pages(child.excard)


def execution_cost(op: PlanOp, model: CostModel) -> float:
    kind = op.kind
    kids = op.children
    if kind == "scan":
        return model.c_scan * op.excard
    if kind in ("mergejoin", "bmu"):
        return model.c_cmp * sum(k.excard for k in kids) + model.c_out * op.excard
    if kind == "hashjoin":
        build, probe = sorted((k.excard for k in kids))
        return model.c_build * build + model.c_probe * probe + model.c_out * op.excard
    if kind == "sort":
        n = kids[0].excard
        return model.c_cmp * n * math.ceil(math.log2(n + 1))
    if kind in ("filter", "project", "union"):
        return model.c_out * op.excard
    if kind == "empty":
        return 0.0
    raise ValueError(f"no execution cost for operator kind {kind!r}")


def cost(op: PlanOp, model: CostModel) -> float:
    """c(op) = xc(op) + max over children (tc(child, op) + c(child)); annotates xc and cost."""
    if op.excard is None:
        raise ValueError(f"missing cardinality on {op.kind}")
    child_part = 0.0
    for child in op.children:
        child_part = max(child_part, transfer_cost(child, op, model) + cost(child, model))
    op.xc = execution_cost(op, model)
    op.cost = op.xc + child_part
    return op.cost
