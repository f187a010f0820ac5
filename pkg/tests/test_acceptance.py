"""Acceptance suite: one test per criterion, one printed line per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see the pass/fail lines.
Every tolerance is pinned here; nothing is deferred to later calibration.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from screenopt import (
    OracleConfig,
    SolveConfig,
    g_envelope,
    g_subdifferential,
    invert_price_h,
    is_g_convex,
    is_incentive_compatible,
    is_nondecreasing,
    menu_from_assignment,
    aggregate_profit,
    solve,
    solve_bruteforce,
    subdifferential_radius,
    validate_assumptions,
)
from screenopt.cli import main
from screenopt.model import attainable_utility_range, eval_g
from conftest import INSTANCE_DIR, random_menu


@contextmanager
def criterion(number: int, name: str):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number} ({name}): FAIL "
              f"({time.monotonic() - started:.2f}s)")
        raise
    print(f"[acceptance] criterion {number} ({name}): PASS "
          f"({time.monotonic() - started:.2f}s)")


def test_criterion_1_h_inversion(family_suite):
    with criterion(1, "H-inversion correctness, 10k samples"):
        started = time.monotonic()
        rng = np.random.default_rng(101)
        for name, inst in family_suite:
            tol = 1e-10 if inst.utility.has_closed_h else 1e-8
            bbox = inst.agents.bounding_box()
            box = inst.product_box
            for _ in range(2500):
                x = rng.uniform(bbox[:, 0], bbox[:, 1])
                y = rng.uniform(box[:, 0], box[:, 1])
                u_lo, u_hi = attainable_utility_range(inst, x, y)
                u = rng.uniform(u_lo, u_hi)
                z = invert_price_h(inst, x, y, u)
                assert abs(eval_g(inst, x, y, z) - u) <= tol, name
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"H-inversion took {elapsed:.2f}s (budget 5s)"


def test_criterion_2_ic_iff_g_convex(family_suite):
    with criterion(2, "IC equivalence suite, 200 menus x 4 families"):
        started = time.monotonic()
        for name, inst in family_suite:
            rng = np.random.default_rng(202)
            for _ in range(200):
                menu = random_menu(inst, rng)
                _, alloc = aggregate_profit(inst, menu)
                assert is_incentive_compatible(inst, alloc), name
                u = g_envelope(inst, menu)
                candidates = [item.product for item in menu.items]
                assert is_g_convex(inst, u, candidates), name
                for i in range(inst.n_agents):
                    kept = g_subdifferential(inst, u, i, candidates)
                    assert any(np.array_equal(y, alloc.products[i]) for y in kept), name
        elapsed = time.monotonic() - started
        assert elapsed < 30.0, f"IC suite took {elapsed:.2f}s (budget 30s)"


def test_criterion_3_taxation_round_trip(family_suite):
    with criterion(3, "taxation-principle round trip"):
        for name, inst in family_suite:
            rng = np.random.default_rng(303)
            for _ in range(50):
                menu = random_menu(inst, rng)
                profit, alloc = aggregate_profit(inst, menu)
                rebuilt = menu_from_assignment(inst, alloc)
                profit2, alloc2 = aggregate_profit(inst, rebuilt)
                assert np.all(np.abs(alloc2.utilities - alloc.utilities) <= 1e-8), name
                assert abs(profit2 - profit) <= 1e-8, name


def test_criterion_4_monotonicity(family_suite, a3_violating):
    with criterion(4, "envelope monotonicity under coordinate-monotone G"):
        for name, inst in family_suite:
            rng = np.random.default_rng(404)
            for _ in range(25):
                menu = random_menu(inst, rng)
                assert is_nondecreasing(inst, g_envelope(inst, menu)), name
        # the deliberately decreasing family must yield a documented witness
        report = validate_assumptions(a3_violating, 300, seed=404)
        assert report.check("A3").status == "fail"
        from screenopt import Menu
        u = g_envelope(a3_violating, Menu.build(a3_violating))
        result = is_nondecreasing(a3_violating, u)
        assert not result and result.witness is not None
        print(f"[acceptance]   A3-violating witness: agents {result.witness}, "
              f"u={tuple(round(float(v), 6) for v in u.values)}")


def test_criterion_5_subdifferential_boundedness(coercive_quadratic):
    with criterion(5, "subdifferential radius within coercivity probe"):
        pts = coercive_quadratic.agents.points
        u = 0.5 * pts.sum(axis=1)  # |u| <= R = 1 on the grid
        assert np.max(np.abs(u)) <= 1.0
        interior = [i for i, p in enumerate(pts)
                    if np.all(p >= 0.3 - 1e-12) and np.all(p <= 0.7 + 1e-12)]
        report = validate_assumptions(coercive_quadratic, 400, seed=505)
        s = 4.0 * 1.0 * np.sqrt(2.0) / 0.2  # 4 R sqrt(M) / delta
        r_s = report.coercivity_radius_for(s)
        assert r_s is not None
        rng = np.random.default_rng(505)
        ring = [r * d / np.linalg.norm(d)
                for r in (5.5, 6.5, 7.9) for d in rng.normal(size=(8, 2))]
        candidates = [p for p in ring if np.all(np.abs(p) <= 8.0)]
        candidates += [[0.7, 0.7], [1.0, 1.0], [0.0, 0.0]]
        radius = subdifferential_radius(coercive_quadratic, u, candidates, interior)
        assert radius <= r_s + 1e-6, f"radius {radius} exceeds probe bound {r_s}"


def test_criterion_6_oracle_equivalence(single_agent, two_type):
    with criterion(6, "solver matches oracle on both fixtures"):
        started = time.monotonic()
        oracle_single = solve_bruteforce(single_agent, OracleConfig(
            product_grid=((0.0, 2.0, 9),), price_grid=(0.0, 2.0, 21), max_menu_size=1))
        assert oracle_single.best_profit == pytest.approx(0.5, abs=1e-12)
        report = solve(single_agent, SolveConfig(seed=606, menu_size=1, restarts=5))
        assert report.best_profit >= 0.99 * oracle_single.best_profit

        oracle_two = solve_bruteforce(two_type, OracleConfig(
            product_grid=((0.0, 2.0, 9),), price_grid=(0.0, 2.0, 21), max_menu_size=2))
        assert oracle_two.best_profit == pytest.approx(0.4, abs=1e-12)  # frozen fixture
        report2 = solve(two_type, SolveConfig(seed=606, menu_size=2, restarts=5))
        assert report2.best_profit >= 0.99 * oracle_two.best_profit
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"oracle equivalence took {elapsed:.2f}s (budget 60s)"


def test_criterion_7_constraints_of_every_solve(family_suite):
    with criterion(7, "participation and IC on every solve output"):
        for name, inst in family_suite:
            for seed in (1, 707):
                report = solve(inst, SolveConfig(seed=seed, menu_size=2,
                                                 restarts=2, max_iters=800))
                alloc = report.best_allocation
                ic = is_incentive_compatible(inst, alloc)
                assert ic and ic.violation <= 1e-9, name
                assert np.all(alloc.utilities >= inst.reservation_utilities - 1e-9), name


def test_criterion_8_byte_identical_artifacts(tmp_path):
    with criterion(8, "byte-identical artifacts across runs and workers"):
        instance = str(INSTANCE_DIR / "two_type.yaml")
        outputs = {}
        for label, extra in {
            "run1": ["--workers", "1"],
            "run2": ["--workers", "1"],
            "run8": ["--workers", "8"],
        }.items():
            out = tmp_path / label
            code = main(["solve", instance, "--seed", "7", "--menu-size", "2",
                         "--restarts", "3", "--out", str(out)] + extra)
            assert code == 0
            outputs[label] = {
                name: (out / name).read_bytes()
                for name in ("report.json", "menu.csv", "allocation.csv", "trace.csv")
            }
        assert outputs["run1"] == outputs["run2"]
        assert outputs["run1"] == outputs["run8"]
