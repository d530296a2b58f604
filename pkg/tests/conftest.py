import math

import numpy as np
import pytest

from methods.builtin import builtin_model
from methods.spectral import build_model
from models.laws import (
    ConstantExcursions,
    GeometricExcursions,
    OrientationLaw,
    PatternTable,
    WeightLaw,
    WeightMode,
)
from models.pattern import DOWN, UP, OffspringPattern


def within_3se(values, expected: float) -> bool:
    x = np.asarray(values, dtype=float)
    se = x.std(ddof=1) / math.sqrt(len(x))
    return abs(x.mean() - expected) <= 3.0 * se


@pytest.fixture(scope="session")
def brownian():
    return builtin_model("brownian")


@pytest.fixture(scope="session")
def brownian_gamma():
    return builtin_model("brownian-gamma")


@pytest.fixture(scope="session")
def figure4():
    return builtin_model("figure4")


@pytest.fixture(scope="session")
def asymmetric():
    return builtin_model("asymmetric")


@pytest.fixture(scope="session")
def binary_cascade():
    return builtin_model("binary-cascade")


@pytest.fixture(scope="session")
def straight_line():
    """Z = 2 with weights 1/2: every crossing is two half-length subcrossings."""
    law = OrientationLaw(ConstantExcursions(UP, 0), ConstantExcursions(DOWN, 0))
    return build_model(law, WeightLaw(WeightMode.CONSTANT), first_crossing_override=1.0, name="straight-line")


def small_table_law() -> OrientationLaw:
    up = PatternTable(
        UP,
        (
            (OffspringPattern.parse("++"), 0.3),
            (OffspringPattern.parse("+-++"), 0.4),
            (OffspringPattern.parse("-+++"), 0.3),
        ),
    )
    down = PatternTable(
        DOWN,
        (
            (OffspringPattern.parse("--"), 0.5),
            (OffspringPattern.parse("-+--"), 0.2),
            (OffspringPattern.parse("+---"), 0.2),
            (OffspringPattern.parse("+--+--"), 0.1),
        ),
    )
    return OrientationLaw(up, down)


@pytest.fixture(scope="session")
def table_model():
    """Finite pattern tables with Up/Down-asymmetric laws and constant weights."""
    return build_model(small_table_law(), WeightLaw(WeightMode.CONSTANT), name="table")


@pytest.fixture(scope="session")
def geometric_law():
    return OrientationLaw(GeometricExcursions(UP, 0.5), GeometricExcursions(DOWN, 0.5))
