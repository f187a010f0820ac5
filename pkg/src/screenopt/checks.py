"""Menu auditing: run every structural and economic check on a raw item list.

Menus under audit come from files users may have edited, so the checks work
on the rows as given (including a broken or missing null item) instead of
silently repairing them. Participation is judged against the instance's own
outside option, which is how a hand-raised price shows up as a violation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UnorderedGridError
from .gconvex import (
    Allocation,
    INEQ_TOL,
    MenuItem,
    PRICE_EQ_TOL,
    PRODUCT_EQ_TOL,
    is_g_convex,
    is_incentive_compatible,
    is_nondecreasing,
)
from .model import ProblemInstance, _g_over_agents, eval_profit
from .solver import select_items

CHECK_NAMES = ("menu-structure", "participation", "incentive-compatibility",
               "g-convexity", "monotonicity")


@dataclass(frozen=True)
class CheckRow:
    name: str
    status: str  # "pass" | "fail" | "not-checked"
    detail: str
    witness: Optional[tuple] = None

    @property
    def passed(self) -> bool:
        return self.status != "fail"


@dataclass(frozen=True)
class CheckReport:
    rows: tuple[CheckRow, ...]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def row(self, name: str) -> CheckRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)


def _structure_row(instance: ProblemInstance, items: Sequence[MenuItem]) -> CheckRow:
    box = instance.product_box
    lo, cap = instance.prices.z_lower, instance.prices.cap
    nulls = [it for it in items if it.is_null]
    if len(nulls) != 1:
        return CheckRow("menu-structure", "fail", f"expected exactly one null item, found {len(nulls)}")
    null = nulls[0]
    if (np.max(np.abs(null.product - instance.outside.y_null), initial=0.0) > PRODUCT_EQ_TOL
            or abs(null.price - instance.outside.z_null) > PRICE_EQ_TOL):
        return CheckRow("menu-structure", "fail", "null item differs from the outside option",
                        (tuple(null.product), null.price))
    seen = set()
    for idx, item in enumerate(items):
        key = (tuple(item.product), item.price)
        if key in seen:
            return CheckRow("menu-structure", "fail", f"duplicate item at row {idx}", key)
        seen.add(key)
        if (np.any(item.product < box[:, 0] - INEQ_TOL)
                or np.any(item.product > box[:, 1] + INEQ_TOL)):
            return CheckRow("menu-structure", "fail", f"item {idx} product outside the box", key)
        if not (lo - INEQ_TOL <= item.price <= cap + INEQ_TOL):
            return CheckRow("menu-structure", "fail", f"item {idx} price outside [{lo}, {cap}]", key)
    return CheckRow("menu-structure", "pass", "null item present, domains respected, no duplicates")


def run_menu_checks(instance: ProblemInstance, items: Sequence[MenuItem]) -> CheckReport:
    """Audit a raw menu: structure, participation, IC, G-convexity, monotonicity."""
    rows = [_structure_row(instance, items)]

    util = np.column_stack([_g_over_agents(instance, it.product, it.price) for it in items])
    prof = np.column_stack([
        np.array([eval_profit(instance, x, it.product, it.price) for x in instance.agents.points])
        for it in items
    ])
    chosen = select_items(util, prof)
    envelope = util.max(axis=1)
    n = instance.n_agents

    reservation = instance.reservation_utilities
    short = envelope - reservation
    if np.all(short >= -INEQ_TOL):
        rows.append(CheckRow("participation", "pass", "every agent attains its reservation utility"))
    else:
        worst = int(np.argmin(short))
        rows.append(CheckRow(
            "participation", "fail",
            f"agent {worst} attains {envelope[worst]:.6g} below reservation {reservation[worst]:.6g}",
            (worst, float(envelope[worst]), float(reservation[worst]))))

    allocation = Allocation(
        chosen_item=chosen,
        utilities=envelope,
        prices=np.array([items[j].price for j in chosen]),
        products=np.array([items[j].product for j in chosen]),
        profit_contribs=instance.agents.weights * prof[np.arange(n), chosen],
    )
    ic = is_incentive_compatible(instance, allocation)
    if ic:
        rows.append(CheckRow("incentive-compatibility", "pass", "best-response assignment is IC"))
    else:
        rows.append(CheckRow(
            "incentive-compatibility", "fail",
            f"agent pair {ic.violating_pair} violates IC by {ic.violation:.3g}",
            ic.violating_pair))

    candidates = [it.product for it in items]
    convexity = is_g_convex(instance, envelope, candidates)
    if convexity:
        rows.append(CheckRow("g-convexity", "pass", "G-subdifferential nonempty at every agent"))
    else:
        rows.append(CheckRow(
            "g-convexity", "fail",
            f"empty G-subdifferential at agents {convexity.empty_agents}",
            convexity.empty_agents))

    try:
        mono = is_nondecreasing(instance, envelope)
        if mono:
            rows.append(CheckRow("monotonicity", "pass", "envelope nondecreasing in agent coordinates"))
        else:
            rows.append(CheckRow(
                "monotonicity", "fail",
                f"envelope decreases along comparable pair {mono.witness}", mono.witness))
    except UnorderedGridError:
        rows.append(CheckRow("monotonicity", "not-checked", "agent grid has no comparable pairs"))

    return CheckReport(tuple(rows))


def check_report_to_dict(report: CheckReport) -> dict:
    return {
        "checks": [
            {"name": row.name, "status": row.status, "detail": row.detail,
             "witness": list(row.witness) if row.witness is not None else None}
            for row in report.rows
        ],
        "passed": bool(report.passed),
    }
