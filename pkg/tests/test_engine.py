import math
import time

import numpy as np
import pytest
from conftest import within_3se

from methods.engine import (
    expand,
    increment,
    initialize,
    load_state,
    restore,
    run,
    save_state,
    snapshot,
    step,
)
from methods.spectral import spectral_summary
from models.errors import AssumptionViolation, NumericUnderflow, SnapshotError
from models.pattern import DOWN, UP, OffspringPattern, validate_pattern
from models.state import CrossingLevelState, SimulatorState, make_rng


def collect(state, n):
    points = []
    run(state, n, points.append)
    return points


def test_initialize_brownian(brownian):
    state = initialize(brownian, 11)
    assert state.k == 1
    assert state.depth == 0
    first = state.levels[0].orientation
    assert state.t == 1.0
    assert state.y == first.value
    assert state.spine_weights == [0.25]
    assert state.pending.k == 1 and state.pending.duration == 1.0


def test_initialize_refuses_failed_assumptions(binary_cascade):
    with pytest.raises(AssumptionViolation):
        initialize(binary_cascade, 1)
    state = initialize(binary_cascade, 1, allow_violations=True)
    assert state.k == 1


def test_first_crossing_law(asymmetric):
    summary = spectral_summary(asymmetric)
    ups = [initialize(asymmetric, seed, summary=summary, check=False).levels[0].orientation is UP for seed in range(10_000)]
    assert within_3se(ups, summary.fixed_point_a)


def test_constant_weights_give_unit_durations(brownian):
    state = initialize(brownian, 3)
    points = collect(state, 10_000)
    assert [p.k for p in points[:3]] == [1, 2, 3]
    t = np.array([p.t for p in points])
    assert np.max(np.abs(t - np.arange(1, 10_001))) < 1e-9


def test_straight_line_walk(straight_line):
    state = initialize(straight_line, 0, check=False)
    points = collect(state, 1000)
    assert all(p.y == p.k for p in points)
    assert all(p.t == p.k for p in points)
    # one new level every time the count doubles
    assert state.depth == math.ceil(math.log2(1000))


def test_path_invariants(figure4):
    state = initialize(figure4, 5)
    points = collect(state, 20_000)
    t = np.array([p.t for p in points])
    y = np.array([p.y for p in points])
    assert np.all(np.diff(t) > 0)
    assert all(p.duration > 0 and math.isfinite(p.duration) for p in points)
    assert np.all(np.diff(y) == [p.orientation.value for p in points[1:]])
    assert points[0].y == points[0].orientation.value


def test_levels_stay_consistent(figure4):
    state = initialize(figure4, 6)
    for _ in range(2000):
        step(state)
        for n, level in enumerate(state.levels):
            assert 1 <= level.s <= level.parent_z
            assert validate_pattern(level.parent_pattern, level.parent_orientation)
            assert len(level.parent_weights) == level.parent_z
            if n + 1 < len(state.levels):
                assert level.parent_orientation is state.levels[n + 1].orientation


def test_depth_grows_logarithmically(brownian):
    state = initialize(brownian, 7)
    worst = 0.0
    for k in range(2, 20_001):
        step(state)
        worst = max(worst, state.depth - (2 * math.log(k) / math.log(4.0) + 16))
    assert worst <= 0


def test_brownian_offspring_mean(brownian):
    z = []
    state = initialize(brownian, 8)
    state.on_family = lambda parent, pattern, weights: z.append(pattern.z)
    collect(state, 20_000)
    assert len(z) > 1000
    assert within_3se(z, 4.0)


def test_brownian_orientations_are_fair_coins(brownian):
    points = collect(initialize(brownian, 9), 20_000)
    assert within_3se([p.orientation is UP for p in points], 0.5)


def test_run_zero_leaves_state_alone(figure4):
    state = initialize(figure4, 10)
    collect(state, 17)
    before = snapshot(state)
    assert collect(state, 0) == []
    assert snapshot(state) == before


def test_run_is_resumable(figure4):
    whole = collect(initialize(figure4, 12), 500)
    state = initialize(figure4, 12)
    parts = collect(state, 123) + collect(state, 377)
    assert parts == whole


@pytest.mark.parametrize("split", [1, 2, 250, 999])
def test_snapshot_round_trip(figure4, tmp_path, split):
    whole = collect(initialize(figure4, 13), 1000)
    state = initialize(figure4, 13)
    head = collect(state, split)
    path = tmp_path / "state.json"
    save_state(state, path)
    tail = collect(load_state(path, figure4), 1000 - split)
    assert head + tail == whole


def test_snapshot_rejects_other_model(figure4, brownian):
    data = snapshot(initialize(figure4, 1))
    with pytest.raises(SnapshotError):
        restore(data, brownian)
    with pytest.raises(SnapshotError):
        restore({**data, "version": 99}, figure4)


def _manual_state(model, levels):
    state = SimulatorState(model, spectral_summary(model), make_rng(0))
    for kappa, s, text, parent in levels:
        pattern = OffspringPattern.parse(text)
        state.push(CrossingLevelState(kappa, s, pattern, np.full(pattern.z, 0.25), parent), 0.25)
    return state


def test_increment_within_family(brownian):
    state = _manual_state(brownian, [(1, 1, "+-++", UP), (1, 1, "+-++", UP)])
    increment(state, 0)
    assert (state.levels[0].kappa, state.levels[0].s) == (2, 2)
    assert (state.levels[1].kappa, state.levels[1].s) == (1, 1)


def test_increment_redraws_exhausted_family(brownian):
    state = _manual_state(brownian, [(4, 4, "+-++", UP), (2, 2, "-+--", DOWN)])
    drawn = []
    state.on_family = lambda parent, pattern, weights: drawn.append(parent)
    increment(state, 0)
    level0, level1 = state.levels
    assert (level1.kappa, level1.s) == (3, 3)
    assert (level0.kappa, level0.s) == (5, 1)
    # the new family belongs to the third child of "-+--"
    assert drawn == [DOWN]
    assert level0.parent_orientation is DOWN
    assert validate_pattern(level0.parent_pattern, DOWN)


def test_full_cascade_after_expand(brownian):
    state = _manual_state(brownian, [(2, 2, "++", UP), (4, 4, "-+++", UP)])
    expand(state)
    assert state.depth == 2
    top = state.levels[2]
    assert (top.kappa, top.s) == (1, 1)
    assert top.parent_pattern.orientation(1) is UP
    increment(state, 0)
    assert [(lv.kappa, lv.s) for lv in state.levels] == [(3, 1), (5, 1), (2, 2)]


def test_expand_leaves_unexhausted_top(brownian):
    state = _manual_state(brownian, [(1, 1, "+-++", UP)])
    expand(state)
    assert state.depth == 0


def test_underflow_is_reported(brownian):
    state = SimulatorState(brownian, spectral_summary(brownian), make_rng(0))
    pattern = OffspringPattern.parse("+-++")
    state.push(CrossingLevelState(1, 1, pattern, np.full(4, 1e-10), UP), 1e300)
    with pytest.raises(NumericUnderflow):
        step(state)


@pytest.mark.slow
def test_snapshot_round_trip_long(brownian_gamma, tmp_path):
    whole = collect(initialize(brownian_gamma, 21), 10_000)
    rng = np.random.default_rng(0)
    for split in sorted(rng.choice(np.arange(1, 10_000), size=5, replace=False)):
        state = initialize(brownian_gamma, 21)
        head = collect(state, int(split))
        save_state(state, tmp_path / "s.json")
        tail = collect(load_state(tmp_path / "s.json", brownian_gamma), 10_000 - int(split))
        assert head + tail == whole


@pytest.mark.slow
def test_million_steps_stay_shallow(brownian):
    state = initialize(brownian, 22)
    for k in range(2, 1_000_001):
        step(state)
        assert state.depth <= 2 * math.log(k) / math.log(4.0) + 16


@pytest.mark.slow
def test_cost_per_step_stays_flat(figure4):
    timings = {}
    for n in (250_000, 500_000, 1_000_000):
        state = initialize(figure4, 23)
        start = time.perf_counter()
        run(state, n, lambda point: None)
        timings[n] = time.perf_counter() - start
    assert timings[500_000] / timings[250_000] <= 2.5
    assert timings[1_000_000] / timings[500_000] <= 2.5
    assert timings[1_000_000] <= 60.0
