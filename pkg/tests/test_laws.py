import math

import numpy as np
import pytest
from conftest import small_table_law, within_3se

from models.errors import ConfigError, InfiniteMoment, InvalidPattern, RejectionLimitExceeded
from models.laws import (
    ConstantExcursions,
    Empirical,
    Gamma,
    GeometricExcursions,
    LogNormal,
    PatternTable,
    WeightLaw,
    WeightMode,
)
from models.pattern import DOWN, UP, OffspringPattern, validate_pattern
from models.state import make_rng


@pytest.mark.parametrize("parent", [UP, DOWN])
def test_geometric_patterns_are_valid(parent):
    law = GeometricExcursions(parent, 0.5)
    rng = make_rng(1)
    for _ in range(10_000):
        assert validate_pattern(law.sample(rng), parent)


def test_brownian_offspring_law():
    # P(Z = 2x) = 2^-x
    law = GeometricExcursions(UP, 0.5)
    rng = make_rng(2)
    z = np.array([law.sample(rng).z for _ in range(20_000)])
    assert within_3se(z == 2, 0.5)
    assert within_3se(z == 4, 0.25)
    assert within_3se(z, law.mean_z())
    assert law.mean_z() == 4.0


def test_geometric_mean_counts():
    law = GeometricExcursions(DOWN, 0.6)
    e = law.mean_excursions()
    assert e == pytest.approx(0.4 / 0.6)
    assert law.mean_counts() == (e, e + 2.0)


def test_first_up_prob():
    assert GeometricExcursions(UP, 0.5).first_up_prob() == pytest.approx(0.75)
    assert GeometricExcursions(DOWN, 0.5).first_up_prob() == pytest.approx(0.25)
    assert ConstantExcursions(UP, 0).first_up_prob() == 1.0
    assert ConstantExcursions(DOWN, 0).first_up_prob() == 0.0


@pytest.mark.parametrize("v", [(1.0, 1.0), (1.4, 0.6), (0.5, 1.5)])
def test_tilted_geometric_matches_its_moments(v):
    law = GeometricExcursions(UP, 0.6).tilted(*v)
    rng = make_rng(3)
    patterns = [law.sample(rng) for _ in range(20_000)]
    assert all(validate_pattern(a, UP) for a in patterns[:1000])
    excursions = np.array([len(a.excursions) for a in patterns])
    assert within_3se(excursions, law.mean_excursions())
    assert within_3se(excursions == 0, law.zero_prob())


def test_tilted_geometric_weights():
    # with v = (1, 1) the tilt is proportional to Z = 2e + 2
    base = GeometricExcursions(DOWN, 0.5)
    law = base.tilted(1.0, 1.0)
    z_mean = base.mean_z()
    expected_zero = 0.5 * 2 / z_mean
    assert law.zero_prob() == pytest.approx(expected_zero)


def test_tilted_geometric_limits(monkeypatch):
    law = GeometricExcursions(UP, 0.5).tilted(1.4, 0.6)
    with pytest.raises(ConfigError):
        law.tilted(1.0, 1.0)
    monkeypatch.setattr("models.laws.MAX_REJECTIONS", 0)
    with pytest.raises(RejectionLimitExceeded):
        law.sample(make_rng(0))


def test_pattern_table_validation():
    with pytest.raises(InvalidPattern):
        PatternTable(UP, ((OffspringPattern.parse("++"), 0.5),))
    with pytest.raises(InvalidPattern):
        PatternTable(UP, ((OffspringPattern.parse("--"), 1.0),))
    with pytest.raises(InvalidPattern):
        PatternTable(DOWN, ())


def test_pattern_table_tilt_is_size_bias():
    law = small_table_law().down
    tilted = law.tilted(1.0, 1.0)
    total = sum(a.z * p for a, p in law.entries)
    for (a, p), (b, q) in zip(law.entries, tilted.support()):
        assert a == b
        assert q == pytest.approx(a.z * p / total)


def test_pattern_table_sampling_frequencies():
    law = small_table_law().up
    rng = make_rng(4)
    draws = [str(law.sample(rng)) for _ in range(20_000)]
    for a, p in law.entries:
        assert within_3se([d == str(a) for d in draws], p)


def test_gamma_moments():
    g = Gamma(2.0, 0.5)
    assert g.mean == 1.0
    assert g.moment(2.0) == pytest.approx(2.0 * 3.0 * 0.25)
    rng = make_rng(5)
    x = g.sample(rng, 100_000)
    assert within_3se(np.log(x), g.log_mean())
    assert within_3se(x * np.log(x), g.r_log_r())
    with pytest.raises(InfiniteMoment):
        g.moment(-2.0)


def test_size_biased_draws():
    rng = make_rng(6)
    for family in (Gamma(2.0, 0.5), LogNormal(-0.2, 0.4)):
        draws = np.array([family.sample_size_biased(rng) for _ in range(50_000)])
        # E[R * R] / E[R] under the base law
        assert within_3se(draws, family.moment(2.0) / family.mean)
        assert within_3se(np.log(draws), family.size_biased_log_mean())


def test_scaled_families_keep_their_shape():
    assert Gamma(2.0, 1.0).scaled(0.25) == Gamma(2.0, 0.25)
    ln = LogNormal(0.0, 0.5).scaled(math.e)
    assert ln.mu == pytest.approx(1.0) and ln.sigma == 0.5


def test_empirical_family():
    e = Empirical((0.1, 0.2, 0.3, 0.4))
    assert not e.exact
    assert e.mean == pytest.approx(0.25)
    assert e.moment_stderr(1.0) > 0
    assert e.scaled(2.0).values == (0.2, 0.4, 0.6, 0.8)
    with pytest.raises(ValueError):
        Empirical((1.0,))


def test_weight_table_lengths_checked():
    a = OffspringPattern.parse("+-++")
    with pytest.raises(InvalidPattern):
        WeightLaw(WeightMode.TABLE, table={(UP, a): (0.5, 0.5)})
    law = WeightLaw(WeightMode.TABLE, table={(UP, a): (0.1, 0.2, 0.3, 0.4)})
    assert law.weights_for(UP, a) == (0.1, 0.2, 0.3, 0.4)
    with pytest.raises(InvalidPattern):
        law.weights_for(DOWN, a)


def test_orientation_dependence():
    same = WeightLaw(WeightMode.IID, up=Gamma(2.0, 1.0))
    split = WeightLaw(WeightMode.IID, up=Gamma(2.0, 1.0), down=Gamma(3.0, 1.0))
    assert not same.orientation_dependent
    assert split.orientation_dependent
    assert split.family(DOWN) == Gamma(3.0, 1.0)
