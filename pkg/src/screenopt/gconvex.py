"""Discrete G-convex analysis: envelopes, subdifferentials, IC checks.

On the finite agent grid, incentive compatibility of an assignment, the
G-convexity of a utility profile (nonempty G-subdifferential at every grid
agent, with respect to a declared finite candidate set), and the
menu-from-assignment construction are all mutually consistent checkable
surrogates of the continuum notions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    InconsistentPriceError,
    MenuValidationError,
    UnattainableUtilityError,
    UnorderedGridError,
)
from .model import ProblemInstance, _g_over_agents, invert_price_h

INEQ_TOL = 1e-9          # additive tolerance on all G-inequalities
PRODUCT_EQ_TOL = 1e-12   # per-coordinate product equality
PRICE_EQ_TOL = 1e-8      # price agreement for shared products


def _readonly(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MenuItem:
    """One (product, price) offer; the null item mirrors the outside option."""

    product: np.ndarray
    price: float
    is_null: bool = False

    def __post_init__(self):
        object.__setattr__(self, "product", _readonly(np.asarray(self.product, dtype=float).ravel()))
        object.__setattr__(self, "price", float(self.price))


@dataclass(frozen=True)
class Menu:
    """Finite offer list; always contains exactly one null item."""

    items: tuple[MenuItem, ...]

    def __post_init__(self):
        items = tuple(self.items)
        if not items:
            raise MenuValidationError("menu must contain at least one item")
        if sum(1 for it in items if it.is_null) != 1:
            raise MenuValidationError("menu must contain exactly one null item")
        seen = set()
        for it in items:
            key = (tuple(it.product), it.price)
            if key in seen:
                raise MenuValidationError(f"duplicate menu item {key}")
            seen.add(key)
        object.__setattr__(self, "items", items)

    @classmethod
    def build(cls, instance: ProblemInstance, offers: Iterable[tuple] = ()) -> "Menu":
        """Null item plus the given (product, price) offers, deduplicated."""
        null = MenuItem(instance.outside.y_null, instance.outside.z_null, is_null=True)
        items = [null]
        seen = {(tuple(null.product), null.price)}
        for product, price in offers:
            item = MenuItem(product, price)
            key = (tuple(item.product), item.price)
            if key in seen:
                continue
            seen.add(key)
            items.append(item)
        return cls(tuple(items))

    @property
    def null_index(self) -> int:
        return next(i for i, it in enumerate(self.items) if it.is_null)

    def __len__(self) -> int:
        return len(self.items)


def validate_menu(instance: ProblemInstance, menu: Menu) -> None:
    """Check the instance-dependent menu invariants, raising on violation."""
    box = instance.product_box
    lo, hi = instance.prices.z_lower, instance.prices.cap
    for idx, item in enumerate(menu.items):
        if item.product.shape[0] != instance.product_dim:
            raise MenuValidationError(f"item {idx}: product dimension {item.product.shape[0]}")
        if np.any(item.product < box[:, 0] - INEQ_TOL) or np.any(item.product > box[:, 1] + INEQ_TOL):
            raise MenuValidationError(f"item {idx}: product outside the product box")
        if not (lo - INEQ_TOL <= item.price <= hi + INEQ_TOL):
            raise MenuValidationError(f"item {idx}: price {item.price} outside [{lo}, {hi}]")
        if item.is_null:
            if (np.max(np.abs(item.product - instance.outside.y_null), initial=0.0) > PRODUCT_EQ_TOL
                    or abs(item.price - instance.outside.z_null) > PRICE_EQ_TOL):
                raise MenuValidationError("null item must equal the outside option")


@dataclass(frozen=True)
class UtilityProfile:
    """Per-agent utility values u_i on the grid."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise ValueError("utility profile must be finite")
        object.__setattr__(self, "values", _readonly(values))

    def __len__(self) -> int:
        return self.values.shape[0]


def _profile_values(instance: ProblemInstance, u) -> np.ndarray:
    values = u.values if isinstance(u, UtilityProfile) else np.asarray(u, dtype=float).ravel()
    if values.shape[0] != instance.n_agents:
        raise ValueError("utility profile length must equal the agent count")
    return values


@dataclass(frozen=True)
class Allocation:
    """Per-agent outcome: chosen item, achieved utility, bundle, and price."""

    chosen_item: np.ndarray   # (n,) int indices into the menu
    utilities: np.ndarray     # (n,)
    prices: np.ndarray        # (n,)
    products: np.ndarray      # (n, N)
    profit_contribs: np.ndarray  # (n,) weights mu_i * pi_i

    def __post_init__(self):
        object.__setattr__(self, "chosen_item", np.asarray(self.chosen_item, dtype=int))
        self.chosen_item.setflags(write=False)
        for name in ("utilities", "prices", "profit_contribs"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "products", _readonly(np.atleast_2d(self.products)))

    @property
    def n_agents(self) -> int:
        return self.utilities.shape[0]


def g_envelope(instance: ProblemInstance, menu: Menu) -> UtilityProfile:
    """Pointwise best utility over the menu, u_i = max_j G(x_i, y_j, z_j)."""
    validate_menu(instance, menu)
    util = np.column_stack([_g_over_agents(instance, it.product, it.price) for it in menu.items])
    return UtilityProfile(util.max(axis=1))


def item_utility_matrix(instance: ProblemInstance, menu: Menu) -> np.ndarray:
    """G(x_i, y_j, z_j) for every agent i and menu item j, shape (n, k)."""
    return np.column_stack([_g_over_agents(instance, it.product, it.price) for it in menu.items])


def g_subdifferential(instance: ProblemInstance, u, agent_index: int,
                      candidates: Sequence) -> list[np.ndarray]:
    """Candidates y supporting u at agent x_i in the G-sense.

    A candidate is kept when u(x') >= G(x', y, H(x_i, y, u_i)) - tol for every
    grid agent x'. Candidates whose price inversion is unattainable at
    (x_i, y, u_i) are skipped.
    """
    values = _profile_values(instance, u)
    x_i = instance.agents.points[agent_index]
    u_i = values[agent_index]
    kept = []
    for cand in candidates:
        y = np.asarray(cand, dtype=float).ravel()
        try:
            price = invert_price_h(instance, x_i, y, u_i)
        except UnattainableUtilityError:
            continue
        support = _g_over_agents(instance, y, price)
        if np.all(values >= support - INEQ_TOL):
            kept.append(y)
    return kept


@dataclass(frozen=True)
class GConvexityResult:
    """Outcome of the discrete G-convexity check."""

    is_g_convex: bool
    empty_agents: tuple[int, ...] = ()

    def __bool__(self) -> bool:
        return self.is_g_convex


def is_g_convex(instance: ProblemInstance, u, candidates: Sequence) -> GConvexityResult:
    """True iff the G-subdifferential is nonempty at every grid agent."""
    values = _profile_values(instance, u)
    empty = []
    for i in range(instance.n_agents):
        if not g_subdifferential(instance, values, i, candidates):
            empty.append(i)
    return GConvexityResult(not empty, tuple(empty))


@dataclass(frozen=True)
class ICResult:
    """Outcome of the pairwise incentive-compatibility check."""

    is_incentive_compatible: bool
    violating_pair: Optional[tuple[int, int]] = None
    violation: float = 0.0

    def __bool__(self) -> bool:
        return self.is_incentive_compatible


def is_incentive_compatible(instance: ProblemInstance, assignment: Allocation) -> ICResult:
    """Check G(x_i, y_i, z_i) >= G(x_i, y_j, z_j) - tol for every agent pair.

    Returns the maximally violating (i, j) on failure; lowest pair wins ties.
    """
    n = assignment.n_agents
    if n != instance.n_agents:
        raise ValueError("allocation size must match the agent grid")
    # envy[i, j] = utility agent i would get from agent j's bundle
    envy = np.column_stack([
        _g_over_agents(instance, assignment.products[j], assignment.prices[j]) for j in range(n)
    ])
    own = np.array([envy[i, i] for i in range(n)])
    gaps = envy - own[:, None]
    np.fill_diagonal(gaps, -np.inf)
    worst = float(gaps.max(initial=-np.inf))
    if worst <= INEQ_TOL:
        return ICResult(True)
    flat = int(np.argmax(gaps))
    pair = (flat // n, flat % n)
    return ICResult(False, pair, worst)


def menu_from_assignment(instance: ProblemInstance, assignment: Allocation) -> Menu:
    """Posted-price menu implementing an incentive-compatible assignment.

    Groups agents by assigned product (coordinatewise within tolerance); IC
    forces the group's prices to agree, so each distinct product becomes one
    item. The null item is appended when no agent already holds it.
    """
    items: list[tuple[np.ndarray, float]] = []
    for i in range(assignment.n_agents):
        y_i = assignment.products[i]
        z_i = float(assignment.prices[i])
        for y_seen, z_seen in items:
            if np.max(np.abs(y_seen - y_i), initial=0.0) <= PRODUCT_EQ_TOL:
                if abs(z_seen - z_i) > PRICE_EQ_TOL:
                    raise InconsistentPriceError(
                        f"product {y_i} carries prices {z_seen} and {z_i}; assignment is not IC"
                    )
                break
        else:
            items.append((y_i, z_i))

    null_y = instance.outside.y_null
    null_z = instance.outside.z_null
    menu_items = []
    have_null = False
    for y, z in items:
        is_null = (not have_null
                   and np.max(np.abs(y - null_y), initial=0.0) <= PRODUCT_EQ_TOL
                   and abs(z - null_z) <= PRICE_EQ_TOL)
        if is_null:
            have_null = True
            menu_items.append(MenuItem(null_y, null_z, is_null=True))
        else:
            menu_items.append(MenuItem(y, z))
    if not have_null:
        menu_items.append(MenuItem(null_y, null_z, is_null=True))
    return Menu(tuple(menu_items))


@dataclass(frozen=True)
class MonotonicityResult:
    """Outcome of the coordinatewise-nondecreasing check."""

    is_nondecreasing: bool
    witness: Optional[tuple[int, int]] = None

    def __bool__(self) -> bool:
        return self.is_nondecreasing


def is_nondecreasing(instance: ProblemInstance, u) -> MonotonicityResult:
    """Check u(x) <= u(x') + tol whenever x <= x' coordinatewise on the grid.

    Pairs are compared in the componentwise order; raises UnorderedGridError
    when no two grid points are comparable.
    """
    values = _profile_values(instance, u)
    pts = instance.agents.points
    n = pts.shape[0]
    comparable = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if np.all(pts[i] <= pts[j]):
                comparable += 1
                if values[i] > values[j] + 1e-12:
                    return MonotonicityResult(False, (i, j))
    if n > 1 and comparable == 0:
        raise UnorderedGridError("no coordinatewise-comparable agent pairs on this grid")
    return MonotonicityResult(True)


def subdifferential_radius(instance: ProblemInstance, u, candidates: Sequence,
                           interior_agent_indices: Sequence[int]) -> float:
    """Largest 2-norm among subdifferential elements at the given agents."""
    radius = 0.0
    values = _profile_values(instance, u)
    for idx in interior_agent_indices:
        for y in g_subdifferential(instance, values, int(idx), candidates):
            radius = max(radius, float(np.linalg.norm(y)))
    return radius
