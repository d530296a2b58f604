"""Size-biased laws along a spine, used to start the process at a typical time."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.errors import InfiniteMoment, RejectionLimitExceeded
from models.laws import MAX_REJECTIONS, PatternLaw, PatternTable, WeightMode
from models.model import AssumptionCheck, ModelSpec, SpectralSummary, Status
from models.pattern import DOWN, UP, OffspringPattern, Orientation
from models.state import CrossingLevelState, Mode, SimulatorState, make_rng

logger = logging.getLogger(__name__)

MC_DRAWS: int = 100_000

SpinalFamily = tuple[OffspringPattern, np.ndarray, int]


def spine_child_selector(pattern: OffspringPattern, weights: np.ndarray, v: tuple[float, float]) -> np.ndarray:
    """P(spine continues through child j) ∝ v^{a(j)} r(j)."""
    signs = np.asarray(pattern.signs)
    scores = np.where(signs > 0, v[0], v[1]) * weights
    return scores / scores.sum()


@dataclass(frozen=True)
class TiltedLaws:
    model: ModelSpec
    summary: SpectralSummary
    up: PatternLaw
    down: PatternLaw

    def pattern_law(self, parent: Orientation) -> PatternLaw:
        return self.up if parent is UP else self.down

    def selector(self, pattern: OffspringPattern, weights: np.ndarray) -> np.ndarray:
        return spine_child_selector(pattern, weights, self.summary.right_v)

    def sample(self, parent: Orientation, rng: np.random.Generator) -> SpinalFamily:
        """Draw (A, R, j) for a spinal crossing: pattern, then spinal slot, then weights."""
        pattern = self.pattern_law(parent).sample(rng)
        law = self.model.weight_law
        if law.mode is WeightMode.TABLE:
            weights = np.array(law.weights_for(parent, pattern), dtype=float)
            j = int(rng.choice(pattern.z, p=self.selector(pattern, weights)))
            return pattern, weights, j + 1

        # iid weights: the slot is picked ∝ v^{a(j)}, then its weight is size-biased
        signs = np.asarray(pattern.signs)
        v = np.where(signs > 0, self.summary.right_v[0], self.summary.right_v[1])
        j = int(rng.choice(pattern.z, p=v / v.sum()))
        family = law.family(parent)
        weights = family.sample(rng, pattern.z)
        weights[j] = family.sample_size_biased(rng)
        return pattern, weights, j + 1

    def sample_given(self, parent: Orientation, child: Orientation, rng: np.random.Generator) -> SpinalFamily:
        """`sample` conditioned on the spinal child having orientation `child`."""
        for _ in range(MAX_REJECTIONS):
            pattern, weights, j = self.sample(parent, rng)
            if pattern.signs[j - 1] == child.value:
                return pattern, weights, j
        raise RejectionLimitExceeded(f"no spinal family with parent {parent.symbol} and spinal child {child.symbol}")

    def spinal_log_weight(self, parent: Orientation) -> float:
        """E log R(j) for the spinal slot j of a parent-oriented spinal family."""
        law = self.model.weight_law
        if law.mode is WeightMode.TABLE:
            total = 0.0
            for pattern, p in self.pattern_law(parent).support() or []:
                weights = np.asarray(law.weights_for(parent, pattern))
                total += p * float(self.selector(pattern, weights) @ np.log(weights))
            return total
        return law.family(parent).size_biased_log_mean()


def tilt(model: ModelSpec, spectral: SpectralSummary) -> TiltedLaws:
    v_up, v_down = spectral.right_v
    if v_up <= 0 or v_down <= 0:
        raise ValueError(f"size-biasing needs v > 0, got {spectral.right_v}")
    law = model.weight_law
    laws: dict[Orientation, PatternLaw] = {}
    for parent in (UP, DOWN):
        base = model.orientation_law.law(parent)
        if law.mode is WeightMode.TABLE:
            assert isinstance(base, PatternTable)
            factors = []
            for pattern, _ in base.entries:
                weights = np.asarray(law.weights_for(parent, pattern))
                signs = np.asarray(pattern.signs)
                factors.append(float(np.where(signs > 0, v_up, v_down) @ weights))
            laws[parent] = base.reweighted(factors)
        else:
            if not math.isfinite(law.family(parent).mean):
                raise InfiniteMoment("size-biasing needs a finite first weight moment")
            laws[parent] = base.tilted(v_up, v_down)
    return TiltedLaws(model, spectral, laws[UP], laws[DOWN])


@dataclass(frozen=True)
class SpineChains:
    down_matrix: np.ndarray
    up_matrix: np.ndarray
    stationary: np.ndarray

    def parent_of(self, child: Orientation, rng: np.random.Generator) -> Orientation:
        """Orientation of the next spinal crossing up, given the current one."""
        row = 0 if child is UP else 1
        return UP if rng.random() < self.up_matrix[row, 0] else DOWN


def spine_chains(spectral: SpectralSummary, m1: np.ndarray) -> SpineChains:
    u = np.asarray(spectral.left_u)
    v = np.asarray(spectral.right_v)
    lam = spectral.mu1
    down = (m1 * v[None, :]) / (v[:, None] * lam)
    up = (m1.T * u[None, :]) / (u[:, None] * lam)
    stationary = u * v
    return SpineChains(down, up, stationary / stationary.sum())


def spinal_log_weight_mc(tilted: TiltedLaws, parent: Orientation, rng: np.random.Generator, n: int = MC_DRAWS) -> tuple[float, float]:
    """Monte Carlo E log R at the spinal slot, with its standard error."""
    logs = np.empty(n)
    for i in range(n):
        _, weights, j = tilted.sample(parent, rng)
        logs[i] = math.log(weights[j - 1])
    return float(logs.mean()), float(logs.std(ddof=1) / math.sqrt(n))


def check_assumption4(
    model: ModelSpec,
    tilted: TiltedLaws,
    chains: SpineChains,
    rng: Optional[np.random.Generator] = None,
) -> AssumptionCheck:
    closed_form = model.weight_law.exact or model.weight_law.mode is WeightMode.TABLE
    if closed_form:
        logs = [tilted.spinal_log_weight(UP), tilted.spinal_log_weight(DOWN)]
        se = 0.0
    else:
        rng = rng or make_rng(0)
        (lu, su), (ld, sd) = (spinal_log_weight_mc(tilted, o, rng) for o in (UP, DOWN))
        logs = [lu, ld]
        se = math.hypot(chains.stationary[0] * su, chains.stationary[1] * sd)
    value = float(chains.stationary[0] * logs[0] + chains.stationary[1] * logs[1])
    if se > 0 and abs(value) <= 3.0 * se:
        status = Status.UNVERIFIABLE
    else:
        status = Status.PASS if value < 0 else Status.FAIL
    detail = "closed form" if closed_form else f"Monte Carlo, {MC_DRAWS} draws, standard error {se:.3g}"
    return AssumptionCheck("spinal functional", status, value, 3.0 * se, detail)


def random_start_initialize(model: ModelSpec, tilted: TiltedLaws, chains: SpineChains, seed: int) -> SimulatorState:
    rng = make_rng(seed)
    state = SimulatorState(model, tilted.summary, rng, mode=Mode.RANDOM_START, tilted=(tilted, chains), seed=seed)
    orientation = UP if rng.random() < chains.stationary[0] else DOWN
    pattern, weights, j = tilted.sample(orientation, rng)
    state.push(CrossingLevelState(0, j, pattern, weights, orientation), float(weights[j - 1]))
    state.k, state.t, state.y = 0, 0.0, 0
    logger.debug("random start: spine orientation %s, spinal slot %d of %d", orientation.symbol, j, pattern.z)
    return state


def expand_spine(state: SimulatorState) -> None:
    """Grow the spine upward until the top crossing has a right neighbour."""
    assert state.tilted is not None
    tilted, chains = state.tilted
    while state.top.exhausted:
        child = state.top.parent_orientation
        parent = chains.parent_of(child, state.rng)
        pattern, weights, j = tilted.sample_given(parent, child, state.rng)
        state.push(CrossingLevelState(0, j, pattern, weights, parent), float(weights[j - 1]))
        logger.debug("spine grown to depth %d", state.depth)
