from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from models.model import ModelSpec, SpectralSummary
from models.pattern import OffspringPattern, Orientation

if TYPE_CHECKING:
    from methods.sizebias import SpineChains, TiltedLaws


class Mode(Enum):
    FIXED_ORIGIN = "fixed-origin"
    RANDOM_START = "random-start"


@dataclass(slots=True)
class CrossingLevelState:
    """Level n of the line of descent: the current level-n crossing inside its parent family."""

    kappa: int
    s: int
    parent_pattern: OffspringPattern
    parent_weights: np.ndarray
    parent_orientation: Orientation
    log_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.log_weights = np.log(self.parent_weights)

    @property
    def parent_z(self) -> int:
        return self.parent_pattern.z

    @property
    def orientation(self) -> Orientation:
        return Orientation(self.parent_pattern.signs[self.s - 1])

    @property
    def exhausted(self) -> bool:
        return self.s == self.parent_pattern.z

    def redraw(self, pattern: OffspringPattern, weights: np.ndarray, parent: Orientation) -> None:
        self.parent_pattern = pattern
        self.parent_weights = weights
        self.parent_orientation = parent
        self.log_weights = np.log(weights)


@dataclass(frozen=True, slots=True)
class SamplePoint:
    k: int
    t: float
    y: int
    orientation: Orientation
    duration: float


FamilyObserver = Callable[[Orientation, OffspringPattern, np.ndarray], None]


@dataclass
class SimulatorState:
    model: ModelSpec
    summary: SpectralSummary
    rng: np.random.Generator
    mode: Mode = Mode.FIXED_ORIGIN
    levels: list[CrossingLevelState] = field(default_factory=list)
    # R^{n+1}_1(1) per level, or the spinal picks R^{n+1}_0(S^n_0) in random-start mode
    spine_weights: list[float] = field(default_factory=list)
    log_spine: list[float] = field(default_factory=list)
    k: int = 0
    t: float = 0.0
    y: int = 0
    # size-biased laws and spine chains, random-start mode only
    tilted: Optional[tuple["TiltedLaws", "SpineChains"]] = None
    seed: Optional[int] = None
    # first crossing, emitted by the first run() after a fixed-origin start
    pending: Optional[SamplePoint] = None
    # called with every family drawn by increment (not serialised)
    on_family: Optional[FamilyObserver] = field(default=None, repr=False, compare=False)

    @property
    def depth(self) -> int:
        """N(k)."""
        return len(self.levels) - 1

    @property
    def top(self) -> CrossingLevelState:
        return self.levels[-1]

    def push(self, level: CrossingLevelState, spine_weight: float) -> None:
        self.levels.append(level)
        self.spine_weights.append(spine_weight)
        self.log_spine.append(float(np.log(spine_weight)))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; its full state is plain integers, so snapshots are exact."""
    return np.random.Generator(np.random.Philox(seed))
