"""Exhaustive ground-truth optimizer over product/price grids.

Enumerates every menu of bounded size whose items come from a finite grid,
so the result is the exact maximizer over that set. Exists for validating
the pattern-search solver at desk scale, not for performance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import BudgetExceededError
from .gconvex import Menu
from .model import ProblemInstance, _g_over_agents, eval_profit
from .parallel import chunk_ranges, chunked_map
from .solver import SolveReport, _boundary_hits, aggregate_profit, select_items

ENUMERATION_GUARD = 10**8
_CHUNK = 4096


@dataclass(frozen=True)
class OracleConfig:
    """Finite enumeration grids; menu size counts non-null items."""

    product_grid: tuple[tuple[float, float, int], ...]
    price_grid: tuple[float, float, int]
    max_menu_size: int = 2

    def __post_init__(self):
        if not (0 <= self.max_menu_size <= 3):
            raise ValueError("max_menu_size must lie in [0, 3]")
        for lo, hi, count in self.product_grid:
            if count < 1 or hi < lo:
                raise ValueError("each product grid axis needs min <= max and count >= 1")
        lo, hi, count = self.price_grid
        if count < 1 or hi < lo:
            raise ValueError("price grid needs min <= max and count >= 1")


def _grid_items(instance: ProblemInstance, config: OracleConfig) -> list[tuple[np.ndarray, float]]:
    box = instance.product_box
    for axis, (lo, hi, _) in enumerate(config.product_grid):
        if lo < box[axis, 0] - 1e-12 or hi > box[axis, 1] + 1e-12:
            raise ValueError(f"product grid axis {axis} leaves the product box")
    p_lo, p_hi, _ = config.price_grid
    if p_lo < instance.prices.z_lower - 1e-12 or p_hi > instance.prices.cap + 1e-12:
        raise ValueError("price grid leaves the price interval")

    axes = [np.linspace(lo, hi, count) for lo, hi, count in config.product_grid]
    mesh = np.meshgrid(*axes, indexing="ij")
    products = np.stack([m.ravel() for m in mesh], axis=1)
    prices = np.linspace(*config.price_grid)
    null_key = (tuple(instance.outside.y_null), instance.outside.z_null)
    items = []
    for y in products:
        for z in prices:
            if (tuple(y), float(z)) == null_key:
                continue  # the null item is always present anyway
            items.append((y, float(z)))
    return items


def _menu_count(n_items: int, max_size: int) -> int:
    return sum(math.comb(n_items, k) for k in range(max_size + 1))


def solve_bruteforce(instance: ProblemInstance, config: OracleConfig,
                     workers: int = 1) -> SolveReport:
    """Exact argmax over all grid menus of size <= max_menu_size.

    Ties break lexicographically on the tuple of enumerated item indices, so
    the result is byte-identical for any worker count.
    """
    items = _grid_items(instance, config)
    total = _menu_count(len(items), config.max_menu_size)
    if total > ENUMERATION_GUARD:
        raise BudgetExceededError(
            f"{total} menus exceed the {ENUMERATION_GUARD} enumeration guard"
        )

    # Per-item utility and profit columns over the agent grid, computed once.
    util_cols = [_g_over_agents(instance, y, z) for y, z in items]
    prof_cols = [
        np.array([eval_profit(instance, x, y, z) for x in instance.agents.points])
        for y, z in items
    ]
    null_util = _g_over_agents(instance, instance.outside.y_null, instance.outside.z_null)
    null_prof = np.array([
        eval_profit(instance, x, instance.outside.y_null, instance.outside.z_null)
        for x in instance.agents.points
    ])
    weights = instance.agents.weights

    combos: list[tuple[int, ...]] = []
    for size in range(config.max_menu_size + 1):
        combos.extend(combinations(range(len(items)), size))

    def profit_of(combo: tuple[int, ...]) -> float:
        util = np.column_stack([null_util] + [util_cols[j] for j in combo])
        prof = np.column_stack([null_prof] + [prof_cols[j] for j in combo])
        chosen = select_items(util, prof)
        rows = np.arange(util.shape[0])
        return float((weights * prof[rows, chosen]).sum())

    def best_in_range(bounds: tuple[int, int]) -> tuple[float, tuple[int, ...]]:
        lo, hi = bounds
        best_profit, best_combo = -math.inf, combos[lo]
        for combo in combos[lo:hi]:
            profit = profit_of(combo)
            if profit > best_profit or (profit == best_profit and combo < best_combo):
                best_profit, best_combo = profit, combo
        return best_profit, best_combo

    chunks = chunk_ranges(len(combos), _CHUNK)
    results = chunked_map(best_in_range, chunks, workers)
    best_profit = max(profit for profit, _ in results)
    best_combo = min(combo for profit, combo in results if profit == best_profit)

    menu = Menu.build(instance, [items[j] for j in best_combo])
    profit, allocation = aggregate_profit(instance, menu)
    null_only_profit = float((weights * null_prof).sum())
    trace = [(0, null_only_profit)]
    if len(combos) > 1 and profit > null_only_profit:
        trace.append((len(combos) - 1, profit))
    return SolveReport(
        best_menu=menu,
        best_allocation=allocation,
        best_profit=profit,
        profit_trace=tuple(trace),
        termination="converged",
        boundary_hits=_boundary_hits(instance, menu),
        seed=0,
    )
