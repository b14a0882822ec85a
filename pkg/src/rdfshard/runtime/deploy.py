"""Cutting a host-annotated plan into per-host sub-plans joined by exchanges."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..planner import PlanOp, number_ops


@dataclass(frozen=True)
class Exchange:
    """Remote Sender at ``producer_host`` feeding a Remote Fetcher at ``consumer_host``."""

    producer_op: int
    producer_host: int
    consumer_op: int
    consumer_host: int


@dataclass
class Deployment:
    query_id: int
    root_op: int
    root_host: int
    subplans: dict[int, list[dict]] = field(default_factory=dict)
    exchanges: list[Exchange] = field(default_factory=list)

    @property
    def hosts(self) -> list[int]:
        return sorted(self.subplans)


class DeploymentError(RuntimeError):
    pass


def split_and_deploy(plan: PlanOp, query_id: int = 0) -> Deployment:
    """One sub-plan per maximal same-host subtree; every cross-host edge becomes a
    fetch placeholder on the consumer side plus an exchange record."""
    if plan.id is None:
        number_ops(plan)
    for op in plan.walk():
        if op.hh is None:
            raise DeploymentError(f"operator {op.id} ({op.kind}) has no home host")
    dep = Deployment(query_id, plan.id, plan.hh)  # type: ignore[arg-type]

    def cut(op: PlanOp) -> dict:
        node = op.to_json()
        kids = []
        for c in op.children:
            if c.hh != op.hh:
                dep.exchanges.append(Exchange(c.id, c.hh, op.id, op.hh))  # type: ignore[arg-type]
                kids.append({"kind": "fetch", "id": c.id, "host": c.hh, "schema": list(c.schema), "sorted_by": list(c.sorted_by)})
                dep.subplans.setdefault(c.hh, []).append(cut(c))  # type: ignore[arg-type]
            else:
                kids.append(cut(c))
        if kids:
            node["children"] = kids
        return node

    dep.subplans.setdefault(plan.hh, []).insert(0, cut(plan))  # type: ignore[arg-type]
    cross = sum(1 for op in plan.walk() for c in op.children if c.hh != op.hh)
    if cross != len(dep.exchanges):
        raise DeploymentError("exchange edges do not cover the cross-host plan edges")
    return dep
