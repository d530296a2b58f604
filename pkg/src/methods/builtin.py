"""Named models that can be simulated without a configuration file."""

import logging
from typing import Callable, Mapping, Union

from methods.spectral import build_model
from models.errors import ConfigError, UnknownModel
from models.laws import (
    ConstantExcursions,
    Gamma,
    GeometricExcursions,
    LogNormal,
    OrientationLaw,
    WeightFamily,
    WeightLaw,
    WeightMode,
)
from models.model import ModelSpec
from models.pattern import DOWN, UP

logger = logging.getLogger(__name__)

Param = Union[str, float, int]

DEFAULTS: dict[str, dict[str, Param]] = {
    "brownian": {"p": 0.5, "excursion_up": 0.5},
    "brownian-gamma": {"p": 0.5, "excursion_up": 0.5, "shape": 2.0},
    "figure4": {"p": 0.6, "excursion_up": 0.5, "shape": 2.0},
    "binary-cascade": {"family": "gamma", "shape": 2.0, "sigma": 0.5, "first_crossing": 0.5},
    "asymmetric": {"p_up": 0.4, "p_down": 0.6, "excursion_up": 0.5, "weights": "constant", "shape": 2.0},
}


def _float(params: Mapping[str, Param], key: str) -> float:
    try:
        return float(params[key])
    except ValueError:
        raise ConfigError(f"parameter {key} must be a number, got {params[key]!r}") from None


def _symmetric_geometric(params: Mapping[str, Param]) -> OrientationLaw:
    p, e = _float(params, "p"), _float(params, "excursion_up")
    return OrientationLaw(GeometricExcursions(UP, p, e), GeometricExcursions(DOWN, p, e))


def _gamma(params: Mapping[str, Param]) -> WeightLaw:
    # the scale is irrelevant once the law is normalised
    return WeightLaw(WeightMode.IID, up=Gamma(_float(params, "shape"), 1.0))


def _brownian(params: Mapping[str, Param]) -> ModelSpec:
    return build_model(_symmetric_geometric(params), WeightLaw(WeightMode.CONSTANT), name="brownian")


def _brownian_gamma(params: Mapping[str, Param]) -> ModelSpec:
    return build_model(_symmetric_geometric(params), _gamma(params), name="brownian-gamma")


def _figure4(params: Mapping[str, Param]) -> ModelSpec:
    return build_model(_symmetric_geometric(params), _gamma(params), name="figure4")


def _binary_cascade(params: Mapping[str, Param]) -> ModelSpec:
    law = OrientationLaw(ConstantExcursions(UP, 0), ConstantExcursions(DOWN, 0))
    family: WeightFamily
    if params["family"] == "gamma":
        family = Gamma(_float(params, "shape"), 1.0)
    elif params["family"] == "lognormal":
        family = LogNormal(0.0, _float(params, "sigma"))
    else:
        raise ConfigError(f"binary-cascade weights must be gamma or lognormal, got {params['family']!r}")
    return build_model(
        law,
        WeightLaw(WeightMode.IID, up=family),
        first_crossing_override=_float(params, "first_crossing"),
        name="binary-cascade",
    )


def _asymmetric(params: Mapping[str, Param]) -> ModelSpec:
    e = _float(params, "excursion_up")
    law = OrientationLaw(GeometricExcursions(UP, _float(params, "p_up"), e), GeometricExcursions(DOWN, _float(params, "p_down"), e))
    if params["weights"] == "constant":
        weights = WeightLaw(WeightMode.CONSTANT)
    elif params["weights"] == "gamma":
        weights = _gamma(params)
    else:
        raise ConfigError(f"asymmetric weights must be constant or gamma, got {params['weights']!r}")
    return build_model(law, weights, name="asymmetric")


CATALOG: dict[str, Callable[[Mapping[str, Param]], ModelSpec]] = {
    "brownian": _brownian,
    "brownian-gamma": _brownian_gamma,
    "figure4": _figure4,
    "binary-cascade": _binary_cascade,
    "asymmetric": _asymmetric,
}


def builtin_model(name: str, params: Mapping[str, Param] | None = None) -> ModelSpec:
    if name not in CATALOG:
        raise UnknownModel(f"unknown builtin model {name!r}; choose from {', '.join(CATALOG)}")
    merged = dict(DEFAULTS[name])
    for key, value in (params or {}).items():
        if key not in merged:
            raise ConfigError(f"builtin {name} has no parameter {key!r}; known: {', '.join(merged)}")
        merged[key] = value
    logger.info("builtin model %s with %s", name, merged)
    try:
        return CATALOG[name](merged)
    except ValueError as e:
        raise ConfigError(f"builtin {name}: {e}") from e


def parse_params(items: list[str]) -> dict[str, str]:
    """`key=value` strings from the command line."""
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"expected key=value, got {item!r}")
        params[key.strip()] = value.strip()
    return params
