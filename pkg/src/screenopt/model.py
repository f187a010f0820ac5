"""Problem instances: agent grids, utility families, profit functions.

A :class:`ProblemInstance` bundles everything an operation needs: the discrete
agent grid with probability weights, the agents' utility ``G(x, y, z)``, the
principal's profit ``pi(x, y, z)``, the price interval, the outside option,
and the finite product box the solver searches. Utility is strictly
decreasing in the price ``z``, which makes the price inversion
``H(x, y, u)`` well defined; the built-in bilinear families invert in closed
form and everything else falls back to bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DomainViolationError,
    MonotonicityViolationError,
    NonFiniteResultError,
    UnattainableUtilityError,
)

DOMAIN_TOL = 1e-9
BISECTION_TOL = 1e-10
BISECTION_MAX_ITERS = 200

QUASILINEAR = "quasilinear"
COERCIVE_QUADRATIC = "coercive-quadratic"
SEPARABLE_PRICE = "separable-price"
CUSTOM_MONOTONE = "custom-monotone"

UTILITY_FAMILIES = (QUASILINEAR, COERCIVE_QUADRATIC, SEPARABLE_PRICE, CUSTOM_MONOTONE)


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AgentGrid:
    """Finite agent population: type vectors in R^M with probability masses."""

    points: np.ndarray
    weights: np.ndarray
    dim_m: int

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if points.shape[0] < 1:
            raise ValueError("agent grid needs at least one point")
        if points.shape[1] != self.dim_m:
            raise ValueError(f"agent points must have length {self.dim_m}")
        if weights.shape[0] != points.shape[0]:
            raise ValueError("weights and points must have equal length")
        if np.any(weights < 0):
            raise ValueError("agent weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("agent weights must sum to 1 within 1e-12")
        uniq = {tuple(row) for row in points}
        if len(uniq) != points.shape[0]:
            raise ValueError("agent points must be pairwise distinct")
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def uniform(cls, points) -> "AgentGrid":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        return cls(points=points, weights=np.full(n, 1.0 / n), dim_m=points.shape[1])

    @classmethod
    def product_grid(cls, axes: list[tuple[float, float, int]]) -> "AgentGrid":
        """Uniformly weighted cartesian grid; one (min, max, count) per axis."""
        coords = [np.linspace(lo, hi, count) for lo, hi, count in axes]
        mesh = np.meshgrid(*coords, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        return cls.uniform(points)

    @property
    def n_agents(self) -> int:
        return self.points.shape[0]

    def bounding_box(self) -> np.ndarray:
        """Axis-aligned hull of the grid, shape (M, 2)."""
        return np.stack([self.points.min(axis=0), self.points.max(axis=0)], axis=1)


@dataclass(frozen=True)
class PriceInterval:
    """Price range (z_lower, z_upper); numeric_cap stands in for an infinite top."""

    z_lower: float
    z_upper: float
    numeric_cap: float

    def __post_init__(self):
        if not self.z_lower < self.z_upper:
            raise ValueError("z_lower must be below z_upper")
        if not math.isfinite(self.numeric_cap):
            raise ValueError("numeric_cap must be finite")
        if self.numeric_cap <= self.z_lower:
            raise ValueError("numeric_cap must exceed z_lower")

    @property
    def cap(self) -> float:
        """Finite upper price used in computations."""
        return self.numeric_cap if math.isinf(self.z_upper) else min(self.z_upper, self.numeric_cap)

    @property
    def unbounded_above(self) -> bool:
        return math.isinf(self.z_upper)


def _bilinear(matrix: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    return float(x @ matrix @ y)


# Custom strictly-monotone utilities loadable from instance files. Each entry
# maps an expression id to (evaluator builder, gradient builder or None).
# "bilinear-plus-price" deliberately breaks price monotonicity; it exists so
# the assumption validator's failure path can be exercised end to end.
def _custom_utility_builders():
    def log_price(matrix, z_lower):
        def g(x, y, z):
            return _bilinear(matrix, x, y) - math.log1p(z - z_lower)

        def grad(x, y, z):
            return matrix @ y

        return g, grad

    def plus_price(matrix, z_lower):
        def g(x, y, z):
            return _bilinear(matrix, x, y) + z

        def grad(x, y, z):
            return matrix @ y

        return g, grad

    return {"bilinear-log-price": log_price, "bilinear-plus-price": plus_price}


CUSTOM_UTILITY_EXPRESSIONS = _custom_utility_builders()


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """Agents' utility G(x, y, z), one of the built-in families or a custom evaluator.

    Families:
      quasilinear       G = <x, Q y> - z
      coercive-quadratic    G = sum_i x_i y_i^2 - z            (M == N)
      separable-price   G = <x, Q y> - (f1*z + f3*z^3)
      custom-monotone   arbitrary evaluator, declared strictly decreasing in z
    """

    family: str
    params: dict = field(default_factory=dict)
    evaluator: Optional[Callable] = None
    gradient_x: Optional[Callable] = None
    has_closed_h: bool = False
    has_gradient: bool = False

    def __post_init__(self):
        if self.family not in UTILITY_FAMILIES:
            raise ValueError(f"unknown utility family {self.family!r}")
        if self.family == CUSTOM_MONOTONE and self.evaluator is None:
            raise ValueError("custom-monotone requires an evaluator")

    @classmethod
    def quasilinear(cls, matrix) -> "UtilitySpec":
        matrix = _readonly(np.atleast_2d(matrix))
        return cls(QUASILINEAR, {"matrix": matrix}, has_closed_h=True, has_gradient=True)

    @classmethod
    def coercive_quadratic(cls) -> "UtilitySpec":
        return cls(COERCIVE_QUADRATIC, {}, has_closed_h=True, has_gradient=True)

    @classmethod
    def separable_price(cls, matrix, f_linear: float = 0.0, f_cubic: float = 1.0) -> "UtilitySpec":
        if f_linear < 0 or f_cubic < 0 or f_linear + f_cubic <= 0:
            raise ValueError("price transform needs f_linear, f_cubic >= 0, not both zero")
        matrix = _readonly(np.atleast_2d(matrix))
        params = {"matrix": matrix, "f_linear": float(f_linear), "f_cubic": float(f_cubic)}
        return cls(SEPARABLE_PRICE, params, has_closed_h=False, has_gradient=True)

    @classmethod
    def custom_monotone(cls, evaluator, gradient_x=None, params: dict | None = None) -> "UtilitySpec":
        return cls(
            CUSTOM_MONOTONE,
            dict(params or {}),
            evaluator=evaluator,
            gradient_x=gradient_x,
            has_closed_h=False,
            has_gradient=gradient_x is not None,
        )

    @classmethod
    def custom_expression(cls, expression: str, matrix, z_lower: float) -> "UtilitySpec":
        """Build a custom-monotone spec from the file-loadable registry."""
        if expression not in CUSTOM_UTILITY_EXPRESSIONS:
            raise ValueError(f"unknown custom utility expression {expression!r}")
        matrix = _readonly(np.atleast_2d(matrix))
        g, grad = CUSTOM_UTILITY_EXPRESSIONS[expression](matrix, z_lower)
        spec = cls.custom_monotone(g, gradient_x=grad, params={"expression": expression, "matrix": matrix})
        return spec


# Profit expressions loadable from instance files.
PROFIT_EXPRESSIONS = ("price", "price-minus-linear-cost", "price-minus-quadratic-cost")


@dataclass(frozen=True, eq=False)
class ProfitSpec:
    """Principal's per-transaction profit pi(x, y, z) with declared bounds."""

    evaluator: Callable
    lower_bound: float
    joint_bound_c0: Optional[float] = None
    expression: Optional[str] = None
    params: dict = field(default_factory=dict)

    @classmethod
    def from_expression(cls, expression: str, params: dict, lower_bound: float,
                        joint_bound_c0: float | None = None) -> "ProfitSpec":
        if expression == "price":
            evaluator = lambda x, y, z: z  # noqa: E731
            kept = {}
        elif expression == "price-minus-linear-cost":
            cost = _readonly(np.asarray(params["cost"], dtype=float).ravel())
            evaluator = lambda x, y, z, c=cost: z - float(c @ y)  # noqa: E731
            kept = {"cost": cost}
        elif expression == "price-minus-quadratic-cost":
            cost = _readonly(np.asarray(params["cost"], dtype=float).ravel())
            evaluator = lambda x, y, z, c=cost: z - 0.5 * float(c @ (np.asarray(y) ** 2))  # noqa: E731
            kept = {"cost": cost}
        else:
            raise ValueError(f"unknown profit expression {expression!r}")
        return cls(evaluator, float(lower_bound), joint_bound_c0, expression, kept)


@dataclass(frozen=True)
class OutsideOption:
    """The always-available null bundle (y_null, z_null)."""

    y_null: np.ndarray
    z_null: float

    def __post_init__(self):
        object.__setattr__(self, "y_null", _readonly(np.asarray(self.y_null, dtype=float).ravel()))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Immutable bundle of everything a screening computation needs."""

    agents: AgentGrid
    utility: UtilitySpec
    profit: ProfitSpec
    prices: PriceInterval
    outside: OutsideOption
    product_dim: int
    product_box: np.ndarray  # (N, 2) axis-aligned search bounds

    def __post_init__(self):
        box = np.atleast_2d(np.asarray(self.product_box, dtype=float))
        if box.shape != (self.product_dim, 2):
            raise ValueError(f"product_box must have shape ({self.product_dim}, 2)")
        if np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("each product_box axis needs min < max")
        object.__setattr__(self, "product_box", _readonly(box))
        if self.outside.y_null.shape[0] != self.product_dim:
            raise ValueError("y_null dimension must equal product_dim")
        if np.any(self.outside.y_null < box[:, 0] - DOMAIN_TOL) or np.any(
            self.outside.y_null > box[:, 1] + DOMAIN_TOL
        ):
            raise ValueError("product_box must contain y_null")
        cap = self.prices.cap
        if not (self.prices.z_lower - DOMAIN_TOL <= self.outside.z_null <= cap + DOMAIN_TOL):
            raise ValueError("z_null must lie in the closed price domain")
        if self.utility.family == COERCIVE_QUADRATIC and self.agents.dim_m != self.product_dim:
            raise ValueError("coercive-quadratic family requires M == N")
        mat = self.utility.params.get("matrix")
        if mat is not None and mat.shape != (self.agents.dim_m, self.product_dim):
            raise ValueError("utility matrix must have shape (M, N)")
        # Cache reservation utilities; they are used on every envelope call.
        res = np.array([_g_raw(self, x, self.outside.y_null, self.outside.z_null)
                        for x in self.agents.points])
        if not np.all(np.isfinite(res)):
            raise ValueError("reservation utility must be finite on every grid point")
        object.__setattr__(self, "_reservation", _readonly(res))

    @property
    def n_agents(self) -> int:
        return self.agents.n_agents

    @property
    def reservation_utilities(self) -> np.ndarray:
        return self._reservation


def _g_raw(instance: ProblemInstance, x, y, z: float) -> float:
    """Evaluate G without domain checks (internal probes step slightly outside)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    spec = instance.utility
    if spec.family == QUASILINEAR:
        value = _bilinear(spec.params["matrix"], x, y) - z
    elif spec.family == COERCIVE_QUADRATIC:
        value = float(x @ (y * y)) - z
    elif spec.family == SEPARABLE_PRICE:
        p = spec.params
        value = _bilinear(p["matrix"], x, y) - (p["f_linear"] * z + p["f_cubic"] * z**3)
    else:
        value = float(spec.evaluator(x, y, z))
    if not math.isfinite(value):
        raise NonFiniteResultError(f"utility evaluator returned {value!r} at x={x}, y={y}, z={z}")
    return value


def _g_over_agents(instance: ProblemInstance, y, z: float) -> np.ndarray:
    """G(x_i, y, z) for every grid agent; vectorized for the built-in families."""
    y = np.asarray(y, dtype=float)
    spec = instance.utility
    pts = instance.agents.points
    if spec.family == QUASILINEAR:
        values = pts @ (spec.params["matrix"] @ y) - z
    elif spec.family == COERCIVE_QUADRATIC:
        values = pts @ (y * y) - z
    elif spec.family == SEPARABLE_PRICE:
        p = spec.params
        values = pts @ (p["matrix"] @ y) - (p["f_linear"] * z + p["f_cubic"] * z**3)
    else:
        values = np.array([float(spec.evaluator(x, y, z)) for x in pts])
    if not np.all(np.isfinite(values)):
        raise NonFiniteResultError(f"utility evaluator returned non-finite values at y={y}, z={z}")
    return values


def grad_x_g(instance: ProblemInstance, x, y, z: float) -> np.ndarray:
    """D_x G, closed form when the family provides it, else central differences."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    spec = instance.utility
    if spec.family in (QUASILINEAR, SEPARABLE_PRICE):
        return np.asarray(spec.params["matrix"] @ y, dtype=float)
    if spec.family == COERCIVE_QUADRATIC:
        return y * y
    if spec.gradient_x is not None:
        return np.asarray(spec.gradient_x(x, y, z), dtype=float)
    step = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    grad = np.empty(x.shape[0])
    for k in range(x.shape[0]):
        hi = x.copy()
        lo = x.copy()
        hi[k] += step
        lo[k] -= step
        grad[k] = (_g_raw(instance, hi, y, z) - _g_raw(instance, lo, y, z)) / (2 * step)
    return grad


def _check_domain(instance: ProblemInstance, x, y, z: float) -> None:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    bbox = instance.agents.bounding_box()
    if x.shape[0] != instance.agents.dim_m:
        raise DomainViolationError(f"agent vector has length {x.shape[0]}, expected {instance.agents.dim_m}")
    if np.any(x < bbox[:, 0] - DOMAIN_TOL) or np.any(x > bbox[:, 1] + DOMAIN_TOL):
        raise DomainViolationError(f"agent type {x} outside the grid bounding box")
    if y.shape[0] != instance.product_dim:
        raise DomainViolationError(f"product vector has length {y.shape[0]}, expected {instance.product_dim}")
    box = instance.product_box
    if np.any(y < box[:, 0] - DOMAIN_TOL) or np.any(y > box[:, 1] + DOMAIN_TOL):
        raise DomainViolationError(f"product {y} outside the product box")
    if not (instance.prices.z_lower - DOMAIN_TOL <= z <= instance.prices.cap + DOMAIN_TOL):
        raise DomainViolationError(
            f"price {z} outside [{instance.prices.z_lower}, {instance.prices.cap}]"
        )


def eval_g(instance: ProblemInstance, x, y, z: float) -> float:
    """Agents' utility G(x, y, z) with domain validation."""
    _check_domain(instance, x, y, z)
    return _g_raw(instance, x, y, z)


def eval_profit(instance: ProblemInstance, x, y, z: float) -> float:
    """Principal's profit pi(x, y, z); non-finite values are an error."""
    value = float(instance.profit.evaluator(np.asarray(x, float), np.asarray(y, float), z))
    if not math.isfinite(value):
        raise NonFiniteResultError(f"profit evaluator returned {value!r} at x={x}, y={y}, z={z}")
    return value


def reservation_utility(instance: ProblemInstance, x) -> float:
    """Utility of the outside option, u_null(x) = G(x, y_null, z_null)."""
    return eval_g(instance, x, instance.outside.y_null, instance.outside.z_null)


def attainable_utility_range(instance: ProblemInstance, x, y) -> tuple[float, float]:
    """Utility interval reachable by prices in [z_lower, cap] (low, high)."""
    lo = _g_raw(instance, x, y, instance.prices.cap)
    hi = _g_raw(instance, x, y, instance.prices.z_lower)
    return lo, hi


def invert_price_h(instance: ProblemInstance, x, y, u: float) -> float:
    """Price H(x, y, u) at which agent x gets exactly utility u on product y.

    Closed form for the quasilinear and coercive-quadratic families; bisection on
    [z_lower, cap] otherwise. Raises UnattainableUtilityError when u lies
    outside the reachable range and MonotonicityViolationError when the
    bracket shows G is not decreasing in z.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z_lo, z_hi = instance.prices.z_lower, instance.prices.cap
    u_lo, u_hi = attainable_utility_range(instance, x, y)
    if u_lo > u_hi:
        raise MonotonicityViolationError(
            f"G increases in z on [{z_lo}, {z_hi}] at x={x}, y={y} (A2 violated)"
        )
    if not (u_lo - DOMAIN_TOL <= u <= u_hi + DOMAIN_TOL):
        raise UnattainableUtilityError(
            f"utility {u} outside attainable range [{u_lo}, {u_hi}] at x={x}, y={y}"
        )

    spec = instance.utility
    if spec.has_closed_h:
        if spec.family == QUASILINEAR:
            z = _bilinear(spec.params["matrix"], x, y) - u
        else:  # coercive-quadratic
            z = float(x @ (y * y)) - u
        return float(min(max(z, z_lo), z_hi))

    # Bisection: g(z) = G(z) - u decreases from >= 0 at z_lo to <= 0 at z_hi.
    f_lo = u_hi - u
    f_hi = u_lo - u
    if f_lo < -DOMAIN_TOL or f_hi > DOMAIN_TOL:
        raise MonotonicityViolationError(
            f"bracket [{z_lo}, {z_hi}] does not straddle utility {u} at x={x}, y={y}"
        )
    lo, hi = z_lo, z_hi
    for _ in range(BISECTION_MAX_ITERS):
        if (hi - lo) / 2 < BISECTION_TOL:
            break
        mid = (lo + hi) / 2
        if _g_raw(instance, x, y, mid) - u >= 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2
