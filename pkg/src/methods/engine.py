"""On-line simulation of the level-0 crossings of an MEBP.

The state keeps one family per level along the current line of descent, so a
step costs O(N(k)) and N(k) grows like log k / log mu. Crossing durations use
the mean approximation W = v^i for the cascade limit below level 0.
"""

import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from methods.sizebias import expand_spine, random_start_initialize, spine_chains, tilt
from methods.spectral import check_assumptions, spectral_summary
from models.errors import AssumptionViolation, NumericUnderflow, SnapshotError
from models.model import ModelSpec, SpectralSummary, Status, sample_family, sample_family_given_first
from models.pattern import DOWN, UP, OffspringPattern, Orientation
from models.state import CrossingLevelState, Mode, SamplePoint, SimulatorState, make_rng

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "ebpsim-state"
SNAPSHOT_VERSION = 1

Sink = Callable[[SamplePoint], Any]


def _checked_summary(model: ModelSpec, summary: Optional[SpectralSummary], check: bool, allow_violations: bool) -> SpectralSummary:
    if summary is None:
        summary = spectral_summary(model)
    if check:
        report = check_assumptions(model)
        if not report.passed:
            failed = ", ".join(name for name in report.checks if report.status(name) is Status.FAIL)
            if not allow_violations:
                raise AssumptionViolation(f"model {model.name} violates assumptions: {failed}")
            logger.warning("simulating %s although assumptions fail: %s", model.name, failed)
    return summary


def initialize(
    model: ModelSpec,
    seed: int,
    *,
    summary: Optional[SpectralSummary] = None,
    check: bool = True,
    allow_violations: bool = False,
) -> SimulatorState:
    """State after the first level-0 crossing, which starts at time 0 from level 0."""
    summary = _checked_summary(model, summary, check, allow_violations)
    rng = make_rng(seed)
    state = SimulatorState(model, summary, rng, seed=seed)

    parent = UP if rng.random() < summary.fixed_point_a else DOWN
    pattern, weights = sample_family(model, parent, rng)
    state.push(CrossingLevelState(1, 1, pattern, weights, parent), float(weights[0]))

    first = state.levels[0].orientation
    state.k = 1
    state.t = summary.v(first)
    state.y = first.value
    state.pending = SamplePoint(1, state.t, state.y, first, state.t)
    return state


def initialize_random_start(
    model: ModelSpec,
    seed: int,
    *,
    summary: Optional[SpectralSummary] = None,
    check: bool = True,
    allow_violations: bool = False,
) -> SimulatorState:
    summary = _checked_summary(model, summary, check, allow_violations)
    tilted = tilt(model, summary)
    chains = spine_chains(summary, np.array(summary.m1))
    return random_start_initialize(model, tilted, chains, seed)


def expand(state: SimulatorState) -> None:
    if state.mode is Mode.RANDOM_START:
        expand_spine(state)
        return
    top = state.top
    if not top.exhausted:
        return

    child = top.parent_orientation
    summary = state.summary
    p_up = summary.first_up_given_up if child is UP else summary.first_up_given_down
    parent = UP if state.rng.random() < p_up else DOWN
    pattern, weights = sample_family_given_first(state.model, parent, child, state.rng)
    state.push(CrossingLevelState(1, 1, pattern, weights, parent), float(weights[0]))
    logger.debug("k = %d: line of descent extended to depth %d", state.k, state.depth)


def increment(state: SimulatorState, n: int = 0) -> None:
    """Move the level-n crossing to its successor, redrawing every family that runs out."""
    levels = state.levels
    top = n
    while levels[top].exhausted:
        top += 1
        if top > state.depth:
            raise RuntimeError("increment reached an exhausted top level; expand must run first")

    levels[top].kappa += 1
    levels[top].s += 1
    for q in range(top - 1, n - 1, -1):
        level = levels[q]
        level.kappa += 1
        level.s = 1
        parent = levels[q + 1].orientation
        pattern, weights = sample_family(state.model, parent, state.rng)
        level.redraw(pattern, weights, parent)
        if state.on_family is not None:
            state.on_family(parent, pattern, weights)


def log_duration(state: SimulatorState) -> float:
    """log of v^i ∏_j R^{j+1}(S^j) / (spine weight j) for the current level-0 crossing."""
    total = math.log(state.summary.v(state.levels[0].orientation))
    for level, log_spine in zip(state.levels, state.log_spine):
        total += float(level.log_weights[level.s - 1]) - log_spine
    return total


def step(state: SimulatorState) -> SamplePoint:
    expand(state)
    increment(state, 0)
    orientation = state.levels[0].orientation
    duration = math.exp(log_duration(state))
    if not duration >= sys.float_info.min:
        raise NumericUnderflow(f"crossing {state.k + 1} has duration {duration!r}; weight law is pathological")
    state.k += 1
    state.t += duration
    state.y += orientation.value
    return SamplePoint(state.k, state.t, state.y, orientation, duration)


def run(state: SimulatorState, n_steps: int, sink: Sink) -> None:
    if n_steps < 0:
        raise ValueError(f"n_steps must be >= 0, got {n_steps}")
    remaining = n_steps
    if remaining and state.pending is not None:
        sink(state.pending)
        state.pending = None
        remaining -= 1
    for _ in range(remaining):
        sink(step(state))


def _encode(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return {"__ndarray__": value.tolist(), "dtype": str(value.dtype)}
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, np.integer):
        return int(value)
    return value


def _decode(value: Any) -> Any:
    if isinstance(value, dict):
        if "__ndarray__" in value:
            return np.array(value["__ndarray__"], dtype=value["dtype"])
        return {k: _decode(v) for k, v in value.items()}
    return value


def _point_dict(point: Optional[SamplePoint]) -> Optional[dict[str, Any]]:
    if point is None:
        return None
    return {"k": point.k, "t": point.t, "y": point.y, "o": point.orientation.symbol, "d": point.duration}


def snapshot(state: SimulatorState) -> dict[str, Any]:
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "model": state.model.fingerprint(),
        "mode": state.mode.value,
        "seed": state.seed,
        "k": state.k,
        "t": state.t,
        "y": state.y,
        "pending": _point_dict(state.pending),
        "levels": [
            {
                "kappa": level.kappa,
                "s": level.s,
                "pattern": str(level.parent_pattern),
                "weights": level.parent_weights.tolist(),
                "parent": level.parent_orientation.symbol,
            }
            for level in state.levels
        ],
        "spine_weights": list(state.spine_weights),
        "rng": _encode(state.rng.bit_generator.state),
    }


def restore(data: dict[str, Any], model: ModelSpec) -> SimulatorState:
    if data.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError("not a simulator snapshot")
    if data.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {data.get('version')}")
    if data["model"] != model.fingerprint():
        raise SnapshotError("snapshot was taken with a different model")

    mode = Mode(data["mode"])
    summary = spectral_summary(model)
    tilted = None
    if mode is Mode.RANDOM_START:
        tilted = (tilt(model, summary), spine_chains(summary, np.array(summary.m1)))

    rng = make_rng(0)
    rng.bit_generator.state = _decode(data["rng"])
    state = SimulatorState(model, summary, rng, mode=mode, tilted=tilted, seed=data.get("seed"))
    for level, spine in zip(data["levels"], data["spine_weights"]):
        pattern = OffspringPattern.parse(level["pattern"])
        weights = np.array(level["weights"], dtype=float)
        parent = Orientation.from_symbol(level["parent"])
        state.push(CrossingLevelState(level["kappa"], level["s"], pattern, weights, parent), float(spine))
    state.k, state.t, state.y = data["k"], data["t"], data["y"]
    pending = data.get("pending")
    if pending is not None:
        state.pending = SamplePoint(pending["k"], pending["t"], pending["y"], Orientation.from_symbol(pending["o"]), pending["d"])
    return state


def save_state(state: SimulatorState, path: Path) -> None:
    path.write_text(json.dumps(snapshot(state)), encoding="utf-8")


def load_state(path: Path, model: ModelSpec) -> SimulatorState:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SnapshotError(f"{path}: {e}") from e
    return restore(data, model)
