"""Instance schema goldens, CSV/JSON rendering, atomic writes."""

import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screenopt import Menu, aggregate_profit
from screenopt.errors import InstanceSchemaError
from screenopt.formats import (
    allocation_to_csv,
    atomic_write_text,
    build_instance_from_dict,
    dumps_json,
    fmt_real,
    load_instance,
    menu_to_csv,
    parse_menu_csv,
)
from conftest import INSTANCE_DIR

MENU_GOLDEN = (
    "y_1,price,is_null\n"
    "0,0,true\n"
    "1.25,0.69999999999999996,false\n"
    "2,1.1000000000000001,false\n"
)

ALLOCATION_GOLDEN = (
    "agent_index,y_1,price,is_null,u,profit_contrib\n"
    "0,0,0,true,0,0\n"
    "1,2,1.1000000000000001,false,0.69999999999999996,0.050000000000000044\n"
)


def _two_type_dict():
    return {
        "agents": {"points": [[0.3], [0.9]], "weights": [0.5, 0.5]},
        "utility": {"family": "quasilinear", "params": {"matrix": [[1.0]]}},
        "profit": {"expression": "price", "lower_bound": 0.0},
        "prices": {"z_lower": 0.0, "z_upper": "inf", "numeric_cap": 4.0},
        "outside": {"y_null": [0.0], "z_null": 0.0},
        "product_box": [{"min": 0.0, "max": 2.0}],
    }


class TestInstanceSchema:
    def test_golden_instance_files_load(self):
        expectations = {
            "two_type.yaml": (2, "quasilinear", 4.0),
            "single_agent.yaml": (1, "quasilinear", 4.0),
            "coercive_quadratic.yaml": (25, "coercive-quadratic", 200.0),
            "separable_cubic.yaml": (2, "separable-price", 2.0),
            "custom_log.yaml": (3, "custom-monotone", 10.0),
            "bad_increasing_price.yaml": (1, "custom-monotone", 4.0),
        }
        for name, (n_agents, family, cap) in expectations.items():
            inst = load_instance(str(INSTANCE_DIR / name))
            assert inst.n_agents == n_agents, name
            assert inst.utility.family == family, name
            assert inst.prices.cap == cap, name

    def test_two_type_field_values(self, two_type):
        assert list(two_type.agents.points.ravel()) == [0.3, 0.9]
        assert list(two_type.agents.weights) == [0.5, 0.5]
        assert math.isinf(two_type.prices.z_upper)
        assert two_type.profit.expression == "price-minus-quadratic-cost"
        assert list(two_type.profit.params["cost"]) == [0.5]
        assert two_type.profit.joint_bound_c0 == 2.0
        assert list(two_type.product_box.ravel()) == [0.0, 2.0]

    def test_missing_section_names_key(self):
        data = _two_type_dict()
        del data["prices"]
        with pytest.raises(InstanceSchemaError) as err:
            build_instance_from_dict(data)
        assert err.value.key == "prices"

    def test_unknown_family(self):
        data = _two_type_dict()
        data["utility"]["family"] = "mystery"
        with pytest.raises(InstanceSchemaError) as err:
            build_instance_from_dict(data)
        assert err.value.key == "utility.family"

    def test_unknown_custom_expression(self):
        data = _two_type_dict()
        data["utility"] = {"family": "custom-monotone",
                           "params": {"expression": "nope", "matrix": [[1.0]]}}
        with pytest.raises(InstanceSchemaError) as err:
            build_instance_from_dict(data)
        assert err.value.key == "utility.params.expression"

    def test_points_and_grid_are_exclusive(self):
        data = _two_type_dict()
        data["agents"]["grid"] = [{"min": 0.0, "max": 1.0, "count": 2}]
        with pytest.raises(InstanceSchemaError) as err:
            build_instance_from_dict(data)
        assert err.value.key == "agents"

    def test_numeric_cap_required_for_infinite_upper(self):
        data = _two_type_dict()
        del data["prices"]["numeric_cap"]
        with pytest.raises(InstanceSchemaError) as err:
            build_instance_from_dict(data)
        assert err.value.key == "prices.numeric_cap"

    def test_cap_defaults_to_finite_upper(self):
        data = _two_type_dict()
        data["prices"] = {"z_lower": 0.0, "z_upper": 3.0}
        inst = build_instance_from_dict(data)
        assert inst.prices.cap == 3.0

    def test_bad_weights_named(self):
        data = _two_type_dict()
        data["agents"]["weights"] = [0.5, "lots"]
        with pytest.raises(InstanceSchemaError) as err:
            build_instance_from_dict(data)
        assert err.value.key == "agents.weights[1]"

    def test_inconsistent_dimensions_rejected(self):
        data = _two_type_dict()
        data["outside"]["y_null"] = [0.0, 0.0]
        with pytest.raises(InstanceSchemaError):
            build_instance_from_dict(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InstanceSchemaError) as err:
            load_instance(str(tmp_path / "missing.yaml"))
        assert err.value.key == "file"


class TestCsv:
    def test_menu_golden_bytes(self, two_type):
        menu = Menu.build(two_type, [([1.25], 0.7), ([2.0], 1.1)])
        assert menu_to_csv(menu) == MENU_GOLDEN

    def test_allocation_golden_bytes(self, two_type):
        menu = Menu.build(two_type, [([1.25], 0.7), ([2.0], 1.1)])
        _, alloc = aggregate_profit(two_type, menu)
        assert allocation_to_csv(menu, alloc) == ALLOCATION_GOLDEN

    def test_menu_round_trip(self, two_type):
        menu = Menu.build(two_type, [([1.25], 0.7), ([2.0], 1.1)])
        items = parse_menu_csv(menu_to_csv(menu))
        assert len(items) == len(menu)
        for parsed, original in zip(items, menu.items):
            assert list(parsed.product) == list(original.product)
            assert parsed.price == original.price
            assert parsed.is_null == original.is_null

    def test_parse_rejects_bad_header(self):
        with pytest.raises(InstanceSchemaError):
            parse_menu_csv("y_1,cost,is_null\n0,0,true\n")

    def test_parse_rejects_bad_flag(self):
        with pytest.raises(InstanceSchemaError):
            parse_menu_csv("y_1,price,is_null\n0,0,maybe\n")

    def test_parse_rejects_wrong_cell_count(self):
        with pytest.raises(InstanceSchemaError):
            parse_menu_csv("y_1,y_2,price,is_null\n0,0,true\n")

    @given(st.floats(allow_nan=False, allow_infinity=False))
    @settings(max_examples=300, deadline=None)
    def test_fmt_real_round_trips_float64(self, value):
        assert float(fmt_real(value)) == value


class TestJson:
    def test_sorted_and_newline_terminated(self):
        text = dumps_json({"b": 1, "a": [np.float64(0.5)]})
        assert text == '{\n  "a": [\n    0.5\n  ],\n  "b": 1\n}\n'

    def test_numpy_scalars_become_plain(self):
        payload = json.loads(dumps_json({"v": np.int64(3), "w": np.array([1.0, 2.0])}))
        assert payload == {"v": 3, "w": [1.0, 2.0]}

    def test_atomic_write(self, tmp_path):
        target = tmp_path / "report.json"
        atomic_write_text(str(target), "one\n")
        atomic_write_text(str(target), "two\n")
        assert target.read_text() == "two\n"
        assert not os.path.exists(str(target) + ".tmp")
