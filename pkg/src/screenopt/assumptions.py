"""Sampled validation of the model assumptions behind the screening problem.

Assumptions quantify over continua, so every check here is a seeded
finite-sample probe: a "pass" means no violation was found at tolerance
1e-9 over the declared sample budget, nothing more. Reports are pure
functions of (instance, sample_count, seed); the worker count never
changes the result because samples are drawn up front and merged in
sample order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonFiniteResultError
from .model import ProblemInstance, _g_raw, eval_profit, grad_x_g
from .parallel import chunk_ranges, chunked_map

CHECK_TOL = 1e-9
ASSUMPTION_IDS = ("A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10")

_N_DIRECTIONS_RANDOM = 8
_N_RADII = 16
_CHUNK = 256


@dataclass(frozen=True)
class AssumptionCheck:
    """Status of one assumption probe, with a concrete witness on failure."""

    assumption: str
    status: str  # "pass" | "fail" | "not-checked"
    detail: str
    witness: Optional[tuple] = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass(frozen=True)
class AssumptionReport:
    """All probe outcomes plus the constants fitted along the way."""

    checks: tuple[AssumptionCheck, ...]
    lipschitz_k: Optional[float]
    a4_constants: Optional[tuple[float, float, float, float]]  # (alpha, a1, a2, b)
    a6_constants: Optional[tuple[float, float, float]]         # (beta, c, d)
    coercivity_table: tuple[tuple[float, float], ...]          # (radius, min 1-norm of D_x G)
    joint_bound_c0: Optional[float]
    sample_count: int
    seed: int

    def check(self, assumption: str) -> AssumptionCheck:
        for item in self.checks:
            if item.assumption == assumption:
                return item
        raise KeyError(assumption)

    @property
    def all_pass(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def failed(self) -> tuple[str, ...]:
        return tuple(c.assumption for c in self.checks if c.status == "fail")

    def coercivity_radius_for(self, s: float) -> Optional[float]:
        """Smallest probed radius beyond which the gradient 1-norm stays >= s."""
        table = self.coercivity_table
        for i, (radius, _) in enumerate(table):
            if all(value >= s for _, value in table[i:]):
                return radius
        return None


def check_price_monotonicity(instance: ProblemInstance, sample_count: int, seed: int):
    """Sampled strict-decrease probe of G in z; returns (ok, witness or None).

    A sample fails when G does not drop by more than 1e-9 over a macroscopic
    price gap, which catches both increasing and flat evaluators.
    """
    rng = np.random.default_rng(seed)
    bbox = instance.agents.bounding_box()
    box = instance.product_box
    lo, cap = instance.prices.z_lower, instance.prices.cap
    span = cap - lo
    for _ in range(sample_count):
        x = rng.uniform(bbox[:, 0], bbox[:, 1])
        y = rng.uniform(box[:, 0], box[:, 1])
        z1 = rng.uniform(lo, cap - 0.05 * span)
        z2 = z1 + rng.uniform(0.05 * span, cap - z1)
        if _g_raw(instance, x, y, z2) - _g_raw(instance, x, y, z1) > -CHECK_TOL:
            return False, (_pt(x), _pt(y), float(z1), float(z2))
    return True, None


def _chunked_values(fn, count: int, workers: int):
    """Evaluate fn(i) for i < count; returns (values, first_error_index)."""

    def run(bounds):
        lo, hi = bounds
        values = np.empty(hi - lo)
        for i in range(lo, hi):
            try:
                values[i - lo] = fn(i)
            except NonFiniteResultError:
                return values, i
        return values, None

    parts = chunked_map(run, chunk_ranges(count, _CHUNK), workers)
    bad = [err for _, err in parts if err is not None]
    values = np.concatenate([vals for vals, _ in parts]) if parts else np.empty(0)
    return values, (min(bad) if bad else None)


def _first_violation(flags: np.ndarray) -> Optional[int]:
    idx = np.flatnonzero(flags)
    return int(idx[0]) if idx.size else None


def _pt(arr) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(arr))


def _fit_upper_bound(features: np.ndarray, targets: np.ndarray):
    """Least-squares coefficients, slope-clipped positive, intercept lifted
    so the bound holds on the fit sample with a 5%-of-spread margin."""
    coef, *_ = np.linalg.lstsq(features, targets, rcond=None)
    coef[:-1] = np.maximum(coef[:-1], 1e-9)
    resid = targets - features @ coef
    spread = float(targets.max() - targets.min()) if targets.size else 0.0
    coef[-1] += float(resid.max(initial=0.0)) + 0.05 * spread + CHECK_TOL
    return coef


def _unit_directions(n_dim: int, rng: np.random.Generator) -> np.ndarray:
    dirs = []
    for axis in range(n_dim):
        for sign in (1.0, -1.0):
            d = np.zeros(n_dim)
            d[axis] = sign
            dirs.append(d)
    raw = rng.normal(size=(_N_DIRECTIONS_RANDOM, n_dim))
    for row in raw:
        norm = np.linalg.norm(row)
        if norm > 1e-12:
            dirs.append(row / norm)
    return np.array(dirs)


def _max_ray_radius(box: np.ndarray, direction: np.ndarray) -> float:
    """Largest t with t*direction inside the box (0 when the ray exits at once)."""
    t_max = math.inf
    for axis in range(box.shape[0]):
        d = direction[axis]
        lo, hi = box[axis]
        if d > 1e-15:
            t_max = min(t_max, hi / d)
        elif d < -1e-15:
            t_max = min(t_max, lo / d)
        elif not (lo <= 0.0 <= hi):
            return 0.0
    return max(t_max, 0.0)


def validate_assumptions(instance: ProblemInstance, sample_count: int, seed: int,
                         workers: int = 1) -> AssumptionReport:
    """Probe the model assumptions on seeded samples and report pass/fail.

    Failures are report entries with witnesses, never exceptions. A4 and A6
    fit their constants by least squares on one batch and verify them on a
    fresh batch; A5 reports the largest observed difference quotient; A7
    records the gradient 1-norm along rays toward the product-box walls.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be at least 100")

    rng = np.random.default_rng(seed)
    bbox = instance.agents.bounding_box()
    box = instance.product_box
    z_lo, z_cap = instance.prices.z_lower, instance.prices.cap
    n = sample_count
    half = n // 2

    xs = rng.uniform(bbox[:, 0], bbox[:, 1], size=(n, bbox.shape[0]))
    ys = rng.uniform(box[:, 0], box[:, 1], size=(n, box.shape[0]))
    zs = rng.uniform(z_lo, z_cap, size=n)

    span = z_cap - z_lo
    z1 = rng.uniform(z_lo, z_cap - 0.05 * span, size=n)
    z2 = z1 + rng.uniform(0.05 * span, z_cap - z1)

    x_low = rng.uniform(bbox[:, 0], bbox[:, 1], size=(n, bbox.shape[0]))
    x_high = rng.uniform(x_low, bbox[:, 1])

    x_pair_a = rng.uniform(bbox[:, 0], bbox[:, 1], size=(half, bbox.shape[0]))
    x_pair_b = rng.uniform(bbox[:, 0], bbox[:, 1], size=(half, bbox.shape[0]))
    y_pair = rng.uniform(box[:, 0], box[:, 1], size=(half, box.shape[0]))
    z_pair = rng.uniform(z_lo, z_cap, size=half)

    xs_f = rng.uniform(bbox[:, 0], bbox[:, 1], size=(half, bbox.shape[0]))
    ys_f = rng.uniform(box[:, 0], box[:, 1], size=(half, box.shape[0]))
    zs_f = rng.uniform(z_lo, z_cap, size=half)

    directions = _unit_directions(instance.product_dim, rng)
    probe_x = rng.uniform(bbox[:, 0], bbox[:, 1], size=(6, bbox.shape[0]))
    probe_z = np.array([z_lo, 0.5 * (z_lo + z_cap), z_cap])

    y_null, z_null = instance.outside.y_null, instance.outside.z_null
    checks: dict[str, AssumptionCheck] = {}

    # --- A1: finiteness plus cap dominance by the outside option ------------
    u_main, err_main = _chunked_values(lambda i: _g_raw(instance, xs[i], ys[i], zs[i]), n, workers)
    if err_main is not None:
        i = err_main
        checks["A1"] = AssumptionCheck(
            "A1", "fail", "utility evaluator returned a non-finite value",
            (_pt(xs[i]), _pt(ys[i]), float(zs[i])))
    else:
        g_cap, _ = _chunked_values(lambda i: _g_raw(instance, xs[i], ys[i], z_cap), n, workers)
        u_res, _ = _chunked_values(lambda i: _g_raw(instance, xs[i], y_null, z_null), n, workers)
        bad = _first_violation(g_cap > u_res + CHECK_TOL)
        if bad is None:
            checks["A1"] = AssumptionCheck(
                "A1", "pass",
                "G finite on samples; cap-priced products never beat the outside option")
        else:
            checks["A1"] = AssumptionCheck(
                "A1", "fail", "a cap-priced product beats the outside option",
                (_pt(xs[bad]), _pt(ys[bad]), z_cap, float(g_cap[bad]), float(u_res[bad])))

    # --- A2: strictly decreasing in price -----------------------------------
    diffs, err = _chunked_values(
        lambda i: _g_raw(instance, xs[i], ys[i], z2[i]) - _g_raw(instance, xs[i], ys[i], z1[i]),
        n, workers)
    bad = err if err is not None else _first_violation(diffs > -CHECK_TOL)
    if bad is None:
        checks["A2"] = AssumptionCheck("A2", "pass", "G strictly decreasing over sampled price gaps")
    else:
        checks["A2"] = AssumptionCheck(
            "A2", "fail", "G failed to decrease over a sampled price gap",
            (_pt(xs[bad]), _pt(ys[bad]), float(z1[bad]), float(z2[bad])))

    # --- A3: coordinate monotonicity in the agent type ----------------------
    gaps, err = _chunked_values(
        lambda i: _g_raw(instance, x_high[i], ys[i], zs[i]) - _g_raw(instance, x_low[i], ys[i], zs[i]),
        n, workers)
    bad = err if err is not None else _first_violation(gaps < -CHECK_TOL)
    if bad is None:
        checks["A3"] = AssumptionCheck("A3", "pass", "G coordinate-nondecreasing on sampled type pairs")
    else:
        checks["A3"] = AssumptionCheck(
            "A3", "fail", "utility decreased along a coordinatewise type increase",
            (_pt(x_low[bad]), _pt(x_high[bad]), _pt(ys[bad]), float(zs[bad])))

    # --- A4: price inversion superlinearly bounded in the product -----------
    a4_alpha = float(instance.utility.params.get("a4_alpha", 2.0))
    a4_constants = None
    if err_main is not None:
        checks["A4"] = AssumptionCheck("A4", "not-checked", "skipped: utility evaluator not finite")
    else:
        u_fresh, err_f = _chunked_values(
            lambda i: _g_raw(instance, xs_f[i], ys_f[i], zs_f[i]), half, workers)
        # H(x, y, G(x, y, z)) == z, so (z, u) pairs sample H exactly.
        feats = np.column_stack([
            -np.sum(np.abs(ys) ** a4_alpha, axis=1), -u_main, np.ones(n)])
        coef = _fit_upper_bound(feats, zs)
        a1, a2, b = float(coef[0]), float(coef[1]), float(coef[2])
        a4_constants = (a4_alpha, a1, a2, b)
        if err_f is not None:
            checks["A4"] = AssumptionCheck("A4", "not-checked", "skipped: utility evaluator not finite")
        else:
            bound = -a1 * np.sum(np.abs(ys_f) ** a4_alpha, axis=1) - a2 * u_fresh + b
            bad = _first_violation(zs_f > bound + CHECK_TOL)
            if bad is None:
                checks["A4"] = AssumptionCheck(
                    "A4", "pass", "fitted superlinear price bound holds on the fresh batch")
            else:
                checks["A4"] = AssumptionCheck(
                    "A4", "fail", "fitted superlinear price bound violated on the fresh batch",
                    (_pt(xs_f[bad]), _pt(ys_f[bad]), float(zs_f[bad]), float(bound[bad])))

    # --- A5: gradient Lipschitz in the agent type ---------------------------
    def quotient(i: int) -> float:
        dx = np.linalg.norm(x_pair_a[i] - x_pair_b[i])
        if dx < 1e-12:
            return 0.0
        ga = grad_x_g(instance, x_pair_a[i], y_pair[i], z_pair[i])
        gb = grad_x_g(instance, x_pair_b[i], y_pair[i], z_pair[i])
        return float(np.linalg.norm(ga - gb) / dx)

    quotients, err = _chunked_values(quotient, half, workers)
    lipschitz_k = None
    if err is not None or not np.all(np.isfinite(quotients)):
        checks["A5"] = AssumptionCheck("A5", "fail", "gradient difference quotient not finite")
    else:
        lipschitz_k = float(quotients.max(initial=0.0))
        checks["A5"] = AssumptionCheck(
            "A5", "pass", f"largest observed difference quotient {lipschitz_k:.6g}")

    # --- A6: gradient 1-norm sublinearly bounded in the product -------------
    a6_beta = min(float(instance.utility.params.get("a6_beta", 2.0)), a4_alpha)
    a6_constants = None
    grad_norm, err = _chunked_values(
        lambda i: float(np.abs(grad_x_g(instance, xs[i], ys[i], zs[i])).sum()), n, workers)
    if err is not None:
        checks["A6"] = AssumptionCheck("A6", "not-checked", "skipped: gradient not finite")
    else:
        feats = np.column_stack([np.sum(np.abs(ys) ** a6_beta, axis=1), np.ones(n)])
        coef = _fit_upper_bound(feats, grad_norm)
        c, d = float(coef[0]), float(coef[1])
        a6_constants = (a6_beta, c, d)
        grad_fresh, err_f = _chunked_values(
            lambda i: float(np.abs(grad_x_g(instance, xs_f[i], ys_f[i], zs_f[i])).sum()),
            half, workers)
        if err_f is not None:
            checks["A6"] = AssumptionCheck("A6", "not-checked", "skipped: gradient not finite")
        else:
            bound = c * np.sum(np.abs(ys_f) ** a6_beta, axis=1) + d
            bad = _first_violation(grad_fresh > bound + CHECK_TOL)
            if bad is None:
                checks["A6"] = AssumptionCheck(
                    "A6", "pass", "fitted gradient growth bound holds on the fresh batch")
            else:
                checks["A6"] = AssumptionCheck(
                    "A6", "fail", "fitted gradient growth bound violated on the fresh batch",
                    (_pt(xs_f[bad]), _pt(ys_f[bad]), float(grad_fresh[bad]), float(bound[bad])))

    # --- A7: coercivity of the gradient 1-norm along rays -------------------
    r_hi = max((_max_ray_radius(box, d) for d in directions), default=0.0)
    table: list[tuple[float, float]] = []
    if r_hi > 0:
        radii = np.linspace(r_hi / _N_RADII, r_hi, _N_RADII)

        def min_norm_at(radius_index: int) -> float:
            radius = radii[radius_index]
            best = math.inf
            for d in directions:
                y = radius * d
                if np.any(y < box[:, 0] - 1e-9) or np.any(y > box[:, 1] + 1e-9):
                    continue
                for x in probe_x:
                    for z in probe_z:
                        best = min(best, float(np.abs(grad_x_g(instance, x, y, z)).sum()))
            return best

        try:
            norms = chunked_map(min_norm_at, list(range(_N_RADII)), workers)
        except NonFiniteResultError:
            norms = []
        table = [(float(r), float(m)) for r, m in zip(radii, norms) if math.isfinite(m)]

    if len(table) < 2:
        checks["A7"] = AssumptionCheck(
            "A7", "not-checked", "product box admits no usable rays from the origin")
    else:
        non_monotone = None
        for (r_a, m_a), (r_b, m_b) in zip(table, table[1:]):
            if m_b < m_a - CHECK_TOL:
                non_monotone = (r_a, m_a, r_b, m_b)
                break
        grew = table[-1][1] >= table[0][1] + 1e-6
        if non_monotone is None and grew:
            checks["A7"] = AssumptionCheck(
                "A7", "pass", "gradient 1-norm grows toward the product-box walls")
        elif non_monotone is not None:
            checks["A7"] = AssumptionCheck(
                "A7", "fail", "gradient 1-norm dips while the product grows", non_monotone)
        else:
            checks["A7"] = AssumptionCheck(
                "A7", "fail", "gradient 1-norm stagnates toward the product-box walls",
                (table[0][0], table[0][1], table[-1][0], table[-1][1]))

    # --- A8: integrable (finite) reservation utilities ----------------------
    if np.all(np.isfinite(instance.reservation_utilities)):
        checks["A8"] = AssumptionCheck("A8", "pass", "reservation utility finite on every grid point")
    else:
        bad = int(np.flatnonzero(~np.isfinite(instance.reservation_utilities))[0])
        checks["A8"] = AssumptionCheck(
            "A8", "fail", "non-finite reservation utility", (bad,))

    # --- A9: profit continuity and uniform lower bound ----------------------
    pi_main, err_pi = _chunked_values(
        lambda i: eval_profit(instance, xs[i], ys[i], zs[i]), n, workers)
    if err_pi is not None:
        i = err_pi
        checks["A9"] = AssumptionCheck(
            "A9", "fail", "profit evaluator returned a non-finite value",
            (_pt(xs[i]), _pt(ys[i]), float(zs[i])))
    else:
        bad = _first_violation(pi_main < instance.profit.lower_bound - CHECK_TOL)
        if bad is not None:
            checks["A9"] = AssumptionCheck(
                "A9", "fail", "profit fell below the declared lower bound",
                (_pt(xs[bad]), _pt(ys[bad]), float(zs[bad]), float(pi_main[bad])))
        else:
            jump = None
            for i in range(min(100, n)):
                base = pi_main[i]
                for probe in ("y", "z"):
                    eps = 1e-6
                    if probe == "y":
                        y_step = ys[i].copy()
                        axis = i % box.shape[0]
                        center = 0.5 * (box[axis, 0] + box[axis, 1])
                        y_step[axis] += eps if y_step[axis] <= center else -eps
                        moved = eval_profit(instance, xs[i], y_step, zs[i])
                    else:
                        z_step = zs[i] + (eps if zs[i] <= 0.5 * (z_lo + z_cap) else -eps)
                        moved = eval_profit(instance, xs[i], ys[i], z_step)
                    if abs(moved - base) > 1e-2 * (1.0 + abs(base)):
                        jump = (_pt(xs[i]), _pt(ys[i]), float(zs[i]), float(moved - base))
                        break
                if jump:
                    break
            if jump is None:
                checks["A9"] = AssumptionCheck(
                    "A9", "pass", "profit finite, above its lower bound, and jump-free on probes")
            else:
                checks["A9"] = AssumptionCheck(
                    "A9", "fail", "profit jumped across an infinitesimal step", jump)

    # --- A10: profit plus utility uniformly bounded -------------------------
    joint_c0 = instance.profit.joint_bound_c0
    if err_main is not None or err_pi is not None:
        checks["A10"] = AssumptionCheck("A10", "not-checked", "skipped: evaluator not finite")
    else:
        joint = pi_main + u_main
        observed = float(joint.max(initial=-math.inf))
        if joint_c0 is None:
            joint_c0 = observed
            checks["A10"] = AssumptionCheck(
                "A10", "pass", f"no bound declared; probed C0 = {observed:.6g}")
        else:
            bad = _first_violation(joint > joint_c0 + CHECK_TOL)
            if bad is None:
                checks["A10"] = AssumptionCheck(
                    "A10", "pass", f"max sampled profit+utility {observed:.6g} within declared C0")
            else:
                checks["A10"] = AssumptionCheck(
                    "A10", "fail", "sampled profit+utility exceeds the declared C0",
                    (_pt(xs[bad]), _pt(ys[bad]), float(zs[bad]), float(joint[bad])))

    ordered = tuple(checks[a] for a in ASSUMPTION_IDS)
    return AssumptionReport(
        checks=ordered,
        lipschitz_k=lipschitz_k,
        a4_constants=a4_constants,
        a6_constants=a6_constants,
        coercivity_table=tuple(table),
        joint_bound_c0=joint_c0,
        sample_count=sample_count,
        seed=seed,
    )
