"""Instance files, CSV exports, JSON reports, and run manifests.

Instance files are YAML with the sections documented in
docs/instance_schema.md. All reals are 64-bit floats; exports print reals
with 17 significant digits so artifacts are byte-stable and round-trip
exactly. JSON is written with sorted keys for the same reason.
"""

from __future__ import annotations

import io
import json
import math
import os
from typing import Any

import numpy as np
import yaml

from .assumptions import AssumptionReport
from .errors import InstanceSchemaError
from .gconvex import Allocation, Menu, MenuItem
from .model import (
    PROFIT_EXPRESSIONS,
    AgentGrid,
    CUSTOM_UTILITY_EXPRESSIONS,
    OutsideOption,
    PriceInterval,
    ProblemInstance,
    ProfitSpec,
    UtilitySpec,
)
from .solver import SolveReport

TOOL_NAME = "screenopt"


def fmt_real(value: float) -> str:
    """17-significant-digit decimal rendering; round-trips float64 exactly."""
    return f"{float(value):.17g}"


# --------------------------------------------------------------------------
# instance schema
# --------------------------------------------------------------------------

def _require(mapping: dict, key: str, path: str) -> Any:
    if not isinstance(mapping, dict) or key not in mapping:
        raise InstanceSchemaError(f"{path}.{key}" if path else key, "missing required field")
    return mapping[key]


def _real(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceSchemaError(path, f"expected a real number, got {value!r}")
    return float(value)


def _real_vector(value: Any, path: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise InstanceSchemaError(path, "expected a nonempty list of reals")
    return [_real(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _axis_bounds(value: Any, path: str, want_count: bool) -> tuple:
    if not isinstance(value, dict):
        raise InstanceSchemaError(path, "expected a mapping with min/max")
    lo = _real(_require(value, "min", path), f"{path}.min")
    hi = _real(_require(value, "max", path), f"{path}.max")
    if not want_count:
        return lo, hi
    count = _require(value, "count", path)
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise InstanceSchemaError(f"{path}.count", "expected a positive integer")
    return lo, hi, count


def _build_agents(data: Any) -> AgentGrid:
    if not isinstance(data, dict):
        raise InstanceSchemaError("agents", "expected a mapping")
    has_points = "points" in data
    has_grid = "grid" in data
    if has_points == has_grid:
        raise InstanceSchemaError("agents", "declare exactly one of 'points' or 'grid'")
    if has_grid:
        axes_raw = data["grid"]
        if not isinstance(axes_raw, list) or not axes_raw:
            raise InstanceSchemaError("agents.grid", "expected a list of axis mappings")
        axes = [_axis_bounds(ax, f"agents.grid[{i}]", want_count=True)
                for i, ax in enumerate(axes_raw)]
        weights_decl = data.get("weights", "uniform")
        if weights_decl != "uniform":
            raise InstanceSchemaError("agents.weights", "grid agents support only 'uniform' weights")
        return AgentGrid.product_grid(axes)
    points_raw = data["points"]
    if not isinstance(points_raw, list) or not points_raw:
        raise InstanceSchemaError("agents.points", "expected a nonempty list of vectors")
    points = [_real_vector(p, f"agents.points[{i}]") for i, p in enumerate(points_raw)]
    weights_decl = _require(data, "weights", "agents")
    if weights_decl == "uniform":
        return AgentGrid.uniform(points)
    weights = _real_vector(weights_decl, "agents.weights")
    try:
        return AgentGrid(points=np.asarray(points), weights=np.asarray(weights),
                         dim_m=len(points[0]))
    except ValueError as exc:
        raise InstanceSchemaError("agents", str(exc)) from exc


def _build_utility(data: Any, z_lower: float) -> UtilitySpec:
    if not isinstance(data, dict):
        raise InstanceSchemaError("utility", "expected a mapping")
    family = _require(data, "family", "utility")
    params = data.get("params", {}) or {}
    if not isinstance(params, dict):
        raise InstanceSchemaError("utility.params", "expected a mapping")

    def matrix_param() -> np.ndarray:
        raw = _require(params, "matrix", "utility.params")
        if not isinstance(raw, list) or not raw:
            raise InstanceSchemaError("utility.params.matrix", "expected a nonempty matrix")
        rows = [_real_vector(r, f"utility.params.matrix[{i}]") for i, r in enumerate(raw)]
        if len({len(r) for r in rows}) != 1:
            raise InstanceSchemaError("utility.params.matrix", "rows must share one length")
        return np.asarray(rows)

    try:
        if family == "quasilinear":
            spec = UtilitySpec.quasilinear(matrix_param())
        elif family == "coercive-quadratic":
            spec = UtilitySpec.coercive_quadratic()  # M == N checked at instance level
        elif family == "separable-price":
            spec = UtilitySpec.separable_price(
                matrix_param(),
                f_linear=_real(params.get("f_linear", 0.0), "utility.params.f_linear"),
                f_cubic=_real(params.get("f_cubic", 1.0), "utility.params.f_cubic"),
            )
        elif family == "custom-monotone":
            expression = _require(params, "expression", "utility.params")
            if expression not in CUSTOM_UTILITY_EXPRESSIONS:
                raise InstanceSchemaError(
                    "utility.params.expression",
                    f"unknown expression {expression!r}; known: {sorted(CUSTOM_UTILITY_EXPRESSIONS)}")
            spec = UtilitySpec.custom_expression(expression, matrix_param(), z_lower)
        else:
            raise InstanceSchemaError("utility.family", f"unknown family {family!r}")
    except ValueError as exc:
        raise InstanceSchemaError("utility", str(exc)) from exc

    extras = {}
    for key in ("a4_alpha", "a6_beta"):
        if key in params:
            extras[key] = _real(params[key], f"utility.params.{key}")
    if extras:
        spec = UtilitySpec(spec.family, {**spec.params, **extras}, spec.evaluator,
                           spec.gradient_x, spec.has_closed_h, spec.has_gradient)
    return spec


def _build_profit(data: Any) -> ProfitSpec:
    if not isinstance(data, dict):
        raise InstanceSchemaError("profit", "expected a mapping")
    expression = _require(data, "expression", "profit")
    if expression not in PROFIT_EXPRESSIONS:
        raise InstanceSchemaError(
            "profit.expression", f"unknown expression {expression!r}; known: {list(PROFIT_EXPRESSIONS)}")
    params = data.get("params", {}) or {}
    if not isinstance(params, dict):
        raise InstanceSchemaError("profit.params", "expected a mapping")
    if expression != "price":
        cost = _real_vector(_require(params, "cost", "profit.params"), "profit.params.cost")
        params = {"cost": cost}
    lower_bound = _real(_require(data, "lower_bound", "profit"), "profit.lower_bound")
    c0 = data.get("joint_bound_c0")
    if c0 is not None:
        c0 = _real(c0, "profit.joint_bound_c0")
    try:
        return ProfitSpec.from_expression(expression, params, lower_bound, c0)
    except (KeyError, ValueError) as exc:
        raise InstanceSchemaError("profit", str(exc)) from exc


def _build_prices(data: Any) -> PriceInterval:
    if not isinstance(data, dict):
        raise InstanceSchemaError("prices", "expected a mapping")
    z_lower = _real(_require(data, "z_lower", "prices"), "prices.z_lower")
    upper_raw = _require(data, "z_upper", "prices")
    if isinstance(upper_raw, str):
        if upper_raw.lower() not in ("inf", "+inf", ".inf", "infinity"):
            raise InstanceSchemaError("prices.z_upper", f"expected a real or 'inf', got {upper_raw!r}")
        z_upper = math.inf
    else:
        z_upper = _real(upper_raw, "prices.z_upper")
    cap_raw = data.get("numeric_cap")
    if cap_raw is None:
        if math.isinf(z_upper):
            raise InstanceSchemaError("prices.numeric_cap", "required when z_upper is infinite")
        cap = z_upper
    else:
        cap = _real(cap_raw, "prices.numeric_cap")
    try:
        return PriceInterval(z_lower, z_upper, cap)
    except ValueError as exc:
        raise InstanceSchemaError("prices", str(exc)) from exc


def build_instance_from_dict(data: dict) -> ProblemInstance:
    """Build and validate a ProblemInstance from the documented mapping form.

    Raises InstanceSchemaError naming the offending key on any schema or
    consistency violation.
    """
    if not isinstance(data, dict):
        raise InstanceSchemaError("instance", "expected a mapping at the top level")
    agents = _build_agents(_require(data, "agents", ""))
    prices = _build_prices(_require(data, "prices", ""))
    utility = _build_utility(_require(data, "utility", ""), prices.z_lower)
    profit = _build_profit(_require(data, "profit", ""))

    outside_raw = _require(data, "outside", "")
    y_null = _real_vector(_require(outside_raw, "y_null", "outside"), "outside.y_null")
    z_null = _real(_require(outside_raw, "z_null", "outside"), "outside.z_null")

    box_raw = _require(data, "product_box", "")
    if not isinstance(box_raw, list) or not box_raw:
        raise InstanceSchemaError("product_box", "expected a list of axis mappings")
    box = [_axis_bounds(ax, f"product_box[{i}]", want_count=False) for i, ax in enumerate(box_raw)]

    try:
        return ProblemInstance(
            agents=agents,
            utility=utility,
            profit=profit,
            prices=prices,
            outside=OutsideOption(np.asarray(y_null), z_null),
            product_dim=len(box),
            product_box=np.asarray(box),
        )
    except ValueError as exc:
        raise InstanceSchemaError("instance", str(exc)) from exc


def load_instance(path: str) -> ProblemInstance:
    """Load an instance YAML file; schema errors name the offending key."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as exc:
        raise InstanceSchemaError("file", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InstanceSchemaError("file", f"invalid YAML in {path}: {exc}") from exc
    return build_instance_from_dict(data)


# --------------------------------------------------------------------------
# CSV exports
# --------------------------------------------------------------------------

def menu_to_csv(menu: Menu) -> str:
    n_dim = menu.items[0].product.shape[0]
    out = io.StringIO()
    header = [f"y_{k + 1}" for k in range(n_dim)] + ["price", "is_null"]
    out.write(",".join(header) + "\n")
    for item in menu.items:
        row = [fmt_real(v) for v in item.product]
        row.append(fmt_real(item.price))
        row.append("true" if item.is_null else "false")
        out.write(",".join(row) + "\n")
    return out.getvalue()


def parse_menu_csv(text: str) -> list[MenuItem]:
    """Parse exported menu rows back into items (structure is not validated)."""
    lines = [line for line in text.strip().splitlines() if line.strip()]
    if not lines:
        raise InstanceSchemaError("menu", "empty menu file")
    header = lines[0].split(",")
    if len(header) < 3 or header[-2] != "price" or header[-1] != "is_null":
        raise InstanceSchemaError("menu", "header must be y_1..y_N,price,is_null")
    n_dim = len(header) - 2
    items = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != n_dim + 2:
            raise InstanceSchemaError("menu", f"line {lineno}: expected {n_dim + 2} cells")
        try:
            product = [float(c) for c in cells[:n_dim]]
            price = float(cells[n_dim])
        except ValueError as exc:
            raise InstanceSchemaError("menu", f"line {lineno}: {exc}") from exc
        flag = cells[-1].strip().lower()
        if flag not in ("true", "false"):
            raise InstanceSchemaError("menu", f"line {lineno}: is_null must be true/false")
        items.append(MenuItem(product, price, is_null=flag == "true"))
    return items


def allocation_to_csv(menu: Menu, allocation: Allocation) -> str:
    n_dim = allocation.products.shape[1]
    out = io.StringIO()
    header = (["agent_index"] + [f"y_{k + 1}" for k in range(n_dim)]
              + ["price", "is_null", "u", "profit_contrib"])
    out.write(",".join(header) + "\n")
    for i in range(allocation.n_agents):
        item = menu.items[int(allocation.chosen_item[i])]
        row = [str(i)]
        row += [fmt_real(v) for v in allocation.products[i]]
        row.append(fmt_real(allocation.prices[i]))
        row.append("true" if item.is_null else "false")
        row.append(fmt_real(allocation.utilities[i]))
        row.append(fmt_real(allocation.profit_contribs[i]))
        out.write(",".join(row) + "\n")
    return out.getvalue()


def trace_to_csv(trace) -> str:
    out = io.StringIO()
    out.write("iteration,profit\n")
    for iteration, profit in trace:
        out.write(f"{iteration},{fmt_real(profit)}\n")
    return out.getvalue()


# --------------------------------------------------------------------------
# JSON reports
# --------------------------------------------------------------------------

def menu_to_dict(menu: Menu) -> list[dict]:
    return [
        {"product": [float(v) for v in item.product], "price": float(item.price),
         "is_null": bool(item.is_null)}
        for item in menu.items
    ]


def allocation_to_dict(menu: Menu, allocation: Allocation) -> list[dict]:
    rows = []
    for i in range(allocation.n_agents):
        rows.append({
            "agent_index": i,
            "item": int(allocation.chosen_item[i]),
            "product": [float(v) for v in allocation.products[i]],
            "price": float(allocation.prices[i]),
            "utility": float(allocation.utilities[i]),
            "profit_contrib": float(allocation.profit_contribs[i]),
        })
    return rows


def solve_report_to_dict(report: SolveReport) -> dict:
    return {
        "best_profit": float(report.best_profit),
        "menu": menu_to_dict(report.best_menu),
        "allocation": allocation_to_dict(report.best_menu, report.best_allocation),
        "profit_trace": [[int(i), float(p)] for i, p in report.profit_trace],
        "termination": report.termination,
        "boundary_hits": [int(i) for i in report.boundary_hits],
        "seed": int(report.seed),
    }


def assumption_report_to_dict(report: AssumptionReport) -> dict:
    checks = {}
    for check in report.checks:
        checks[check.assumption] = {
            "status": check.status,
            "detail": check.detail,
            "witness": list(check.witness) if check.witness is not None else None,
        }
    constants = {
        "lipschitz_k": report.lipschitz_k,
        "a4": None if report.a4_constants is None else dict(
            zip(("alpha", "a1", "a2", "b"), (float(v) for v in report.a4_constants))),
        "a6": None if report.a6_constants is None else dict(
            zip(("beta", "c", "d"), (float(v) for v in report.a6_constants))),
        "joint_bound_c0": report.joint_bound_c0,
        "coercivity_table": [[float(r), float(m)] for r, m in report.coercivity_table],
    }
    return {
        "assumptions": checks,
        "constants": constants,
        "sample_count": int(report.sample_count),
        "seed": int(report.seed),
        "all_pass": bool(report.all_pass),
    }


def dumps_json(payload: Any) -> str:
    return json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n"


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    return value


def atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    os.replace(tmp, path)
