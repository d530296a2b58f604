import math

import pytest

from methods.builtin import CATALOG, builtin_model, parse_params
from methods.spectral import check_assumptions, spectral_summary
from models.errors import ConfigError, UnknownModel
from models.laws import WeightMode
from models.pattern import UP


@pytest.mark.parametrize("name", list(CATALOG))
def test_every_builtin_builds(name):
    model = builtin_model(name)
    assert model.name == name
    assert spectral_summary(model).mu > 2.0 or name == "binary-cascade"


def test_brownian_constants():
    s = spectral_summary(builtin_model("brownian"))
    assert s.mu == pytest.approx(4.0)
    assert s.hurst_H == pytest.approx(0.5)
    assert s.fixed_point_a == pytest.approx(0.5)
    assert s.right_v == pytest.approx((1.0, 1.0))


def test_figure4_defaults():
    model = builtin_model("figure4")
    s = spectral_summary(model)
    assert s.mu == pytest.approx(2.0 + 2.0 * 0.4 / 0.6)
    assert model.weight_law.mode is WeightMode.IID
    assert check_assumptions(model).passed


def test_binary_cascade_needs_no_fixed_point():
    s = spectral_summary(builtin_model("binary-cascade"))
    assert s.mu == 2.0
    assert s.fixed_point_a == 0.5
    assert s.hurst_H == 1.0
    assert not check_assumptions(builtin_model("binary-cascade")).passed


def test_lognormal_cascade():
    model = builtin_model("binary-cascade", {"family": "lognormal", "sigma": "0.3"})
    assert model.weight_law.family(UP).mean == pytest.approx(0.5)


def test_overrides_are_parsed():
    s = spectral_summary(builtin_model("brownian", {"p": "0.25"}))
    assert s.mu == pytest.approx(2.0 + 2.0 * 0.75 / 0.25)
    assert math.log(2.0) / math.log(s.mu) == pytest.approx(s.hurst_H)


def test_asymmetric_gamma_weights():
    model = builtin_model("asymmetric", {"weights": "gamma"})
    assert model.weight_law.mode is WeightMode.IID
    s = spectral_summary(model)
    assert s.mu_plus != pytest.approx(s.mu_minus)
    assert s.mu1 == pytest.approx(1.0)


@pytest.mark.parametrize(
    "name, params, error",
    [
        ("levy", {}, UnknownModel),
        ("brownian", {"shape": "2"}, ConfigError),
        ("brownian", {"p": "half"}, ConfigError),
        ("brownian", {"p": "1.5"}, ConfigError),
        ("brownian-gamma", {"shape": "-1"}, ConfigError),
        ("binary-cascade", {"family": "pareto"}, ConfigError),
        ("asymmetric", {"weights": "table"}, ConfigError),
    ],
)
def test_bad_builtin_requests(name, params, error):
    with pytest.raises(error):
        builtin_model(name, params)


def test_parse_params():
    assert parse_params(["p=0.3", " shape = 4 "]) == {"p": "0.3", "shape": "4"}
    assert parse_params([]) == {}
    with pytest.raises(ConfigError):
        parse_params(["p"])
    with pytest.raises(ConfigError):
        parse_params(["=3"])
