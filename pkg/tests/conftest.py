"""Shared instance fixtures; file-backed ones double as schema golden inputs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from screenopt import (
    AgentGrid,
    Menu,
    OutsideOption,
    PriceInterval,
    ProblemInstance,
    ProfitSpec,
    UtilitySpec,
    invert_price_h,
    reservation_utility,
)
from screenopt.errors import UnattainableUtilityError
from screenopt.formats import load_instance

INSTANCE_DIR = Path(__file__).resolve().parent.parent / "instances"


@pytest.fixture(scope="session")
def two_type():
    return load_instance(str(INSTANCE_DIR / "two_type.yaml"))


@pytest.fixture(scope="session")
def single_agent():
    return load_instance(str(INSTANCE_DIR / "single_agent.yaml"))


@pytest.fixture(scope="session")
def coercive_quadratic():
    return load_instance(str(INSTANCE_DIR / "coercive_quadratic.yaml"))


@pytest.fixture(scope="session")
def separable_cubic():
    return load_instance(str(INSTANCE_DIR / "separable_cubic.yaml"))


@pytest.fixture(scope="session")
def custom_log():
    return load_instance(str(INSTANCE_DIR / "custom_log.yaml"))


@pytest.fixture(scope="session")
def bad_increasing():
    return load_instance(str(INSTANCE_DIR / "bad_increasing_price.yaml"))


@pytest.fixture(scope="session")
def family_suite(two_type, coercive_quadratic, separable_cubic, custom_log):
    """The four built-in families behind one fixture list."""
    return [
        ("quasilinear", two_type),
        ("coercive-quadratic", coercive_quadratic),
        ("separable-price", separable_cubic),
        ("custom-monotone", custom_log),
    ]


@pytest.fixture(scope="session")
def a3_violating():
    """Quasilinear with a negative type coefficient: utility falls in x."""
    return ProblemInstance(
        agents=AgentGrid.uniform([[0.0], [1.0]]),
        utility=UtilitySpec.quasilinear([[-1.0]]),
        profit=ProfitSpec.from_expression("price", {}, lower_bound=0.0),
        prices=PriceInterval(0.0, float("inf"), 4.0),
        outside=OutsideOption([1.0], 0.0),
        product_dim=1,
        product_box=[[0.0, 2.0]],
    )


def random_menu(instance, rng, max_items: int = 4) -> Menu:
    """Seeded random menu; about half the prices anchor a random agent at
    its reservation utility so that items actually sell."""
    n_items = int(rng.integers(1, max_items + 1))
    box = instance.product_box
    lo, cap = instance.prices.z_lower, instance.prices.cap
    offers = []
    for _ in range(n_items):
        y = rng.uniform(box[:, 0], box[:, 1])
        if rng.random() < 0.5:
            anchor = instance.agents.points[rng.integers(0, instance.n_agents)]
            try:
                price = invert_price_h(
                    instance, anchor, y, reservation_utility(instance, anchor))
                price = float(np.clip(price - abs(rng.normal(0.0, 0.1)), lo, cap))
            except UnattainableUtilityError:
                price = float(rng.uniform(lo, cap))
        else:
            price = float(rng.uniform(lo, cap))
        offers.append((y, price))
    return Menu.build(instance, offers)
