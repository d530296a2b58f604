import numpy as np
import pytest
from conftest import within_3se

from methods.engine import initialize_random_start, run, step
from methods.sizebias import (
    SpineChains,
    TiltedLaws,
    check_assumption4,
    expand_spine,
    random_start_initialize,
    spine_chains,
    tilt,
)
from methods.spectral import build_model, spectral_summary
from models.laws import Empirical, OrientationLaw, PatternTable, WeightLaw, WeightMode
from models.model import Status
from models.pattern import DOWN, UP, OffspringPattern, validate_pattern
from models.state import Mode, make_rng


def _parts(model):
    summary = spectral_summary(model)
    return summary, tilt(model, summary), spine_chains(summary, np.array(summary.m1))


@pytest.fixture(scope="module")
def symmetric_table():
    def table(parent, rows):
        return PatternTable(parent, tuple((OffspringPattern.parse(a), p) for a, p in rows))

    law = OrientationLaw(
        table(UP, [("++", 0.5), ("+-++", 0.25), ("-+++", 0.25)]),
        table(DOWN, [("--", 0.5), ("-+--", 0.25), ("+---", 0.25)]),
    )
    return build_model(law, WeightLaw(WeightMode.CONSTANT), name="symmetric-table")


def test_tilted_table_frequencies(symmetric_table):
    _, tilted, _ = _parts(symmetric_table)
    base = symmetric_table.orientation_law.up
    total = sum(a.z * p for a, p in base.entries)
    rng = make_rng(1)
    draws = [str(tilted.sample(UP, rng)[0]) for _ in range(20_000)]
    for a, p in base.entries:
        assert within_3se([d == str(a) for d in draws], a.z * p / total)


def test_tilted_table_with_asymmetric_eigenvector(table_model):
    summary, tilted, _ = _parts(table_model)
    v_up, v_down = summary.right_v
    assert v_up != pytest.approx(v_down)
    for parent in (UP, DOWN):
        base = table_model.orientation_law.law(parent).entries
        scores = [p * (a.count(UP) * v_up + a.count(DOWN) * v_down) for a, p in base]
        for (a, _), (b, q), s in zip(base, tilted.pattern_law(parent).support(), scores):
            assert a == b
            assert q == pytest.approx(s / sum(scores))


@pytest.mark.parametrize("name", ["brownian", "asymmetric", "figure4"])
def test_spine_chains_are_stochastic(name, request):
    summary, _, chains = _parts(request.getfixturevalue(name))
    for m in (chains.down_matrix, chains.up_matrix):
        assert np.allclose(m.sum(axis=1), 1.0)
        assert np.all(m >= 0)
        assert np.allclose(chains.stationary @ m, chains.stationary)
    u, v = np.array(summary.left_u), np.array(summary.right_v)
    assert np.allclose(chains.stationary, u * v / (u @ v))


def test_random_start_orientation_law(asymmetric):
    summary, tilted, chains = _parts(asymmetric)
    ups = [random_start_initialize(asymmetric, tilted, chains, seed).top.parent_orientation is UP for seed in range(10_000)]
    assert within_3se(ups, chains.stationary[0])


def test_grown_spine_levels_follow_stationary_law(asymmetric):
    _, tilted, chains = _parts(asymmetric)
    ups = []
    for seed in range(10_000):
        state = random_start_initialize(asymmetric, tilted, chains, seed)
        while state.depth < 3:
            step(state)
        # levels above the first are grown by expand_spine
        ups.append(state.levels[2].parent_orientation is UP)
    assert within_3se(ups, chains.stationary[0])


def test_random_start_patterns_stay_valid(asymmetric, brownian_gamma):
    for model in (asymmetric, brownian_gamma):
        state = initialize_random_start(model, 9)
        for _ in range(3000):
            step(state)
            for level in state.levels:
                assert validate_pattern(level.parent_pattern, level.parent_orientation)


def test_spinal_slot_is_size_biased(brownian_gamma):
    summary, tilted, _ = _parts(brownian_gamma)
    family = brownian_gamma.weight_law.family(UP)
    rng = make_rng(3)
    picks = []
    for _ in range(20_000):
        pattern, weights, j = tilted.sample(UP, rng)
        assert validate_pattern(pattern, UP)
        picks.append(weights[j - 1])
    assert within_3se(picks, family.moment(2.0) / family.mean)
    assert within_3se(np.log(picks), tilted.spinal_log_weight(UP))


def test_sample_given_child(figure4):
    _, tilted, _ = _parts(figure4)
    rng = make_rng(4)
    for parent in (UP, DOWN):
        for child in (UP, DOWN):
            pattern, _, j = tilted.sample_given(parent, child, rng)
            assert pattern.orientation(j) is child


def test_assumption4_closed_form(brownian):
    _, tilted, chains = _parts(brownian)
    check = check_assumption4(brownian, tilted, chains)
    assert check.status is Status.PASS
    assert check.value == pytest.approx(np.log(0.25))


def test_assumption4_monte_carlo(geometric_law):
    values = tuple(float(x) for x in make_rng(5).gamma(2.0, 1.0, 200))
    model = build_model(geometric_law, WeightLaw(WeightMode.IID, up=Empirical(values)))
    _, tilted, chains = _parts(model)
    check = check_assumption4(model, tilted, chains, make_rng(6))
    assert "Monte Carlo" in check.detail
    assert check.status is Status.PASS
    assert check.tolerance > 0


def test_random_start_state(figure4):
    state = initialize_random_start(figure4, 7)
    assert state.mode is Mode.RANDOM_START
    tilted, chains = state.tilted
    assert isinstance(tilted, TiltedLaws) and isinstance(chains, SpineChains)
    assert (state.k, state.t, state.y) == (0, 0.0, 0)
    assert state.levels[0].kappa == 0
    points = []
    run(state, 5000, points.append)
    t = np.array([p.t for p in points])
    assert points[0].k == 1 and t[0] > 0
    assert np.all(np.diff(t) > 0)
    assert all(p.y - q.y == p.orientation.value for q, p in zip(points, points[1:]))


def test_spine_expansion_can_add_several_levels(straight_line):
    summary, tilted, chains = _parts(straight_line)
    grown = []
    for seed in range(50):
        state = random_start_initialize(straight_line, tilted, chains, seed)
        before = state.depth
        expand_spine(state)
        assert not state.top.exhausted
        assert all(level.kappa == 0 for level in state.levels)
        grown.append(state.depth - before)
    assert max(grown) >= 2
    assert min(grown) == 0


def test_random_start_durations_for_constant_weights(straight_line):
    state = initialize_random_start(straight_line, 8, check=False)
    points = []
    run(state, 200, points.append)
    assert [p.t for p in points] == [float(k) for k in range(1, 201)]
    assert state.levels[0].parent_orientation in (UP, DOWN)
