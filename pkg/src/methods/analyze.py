"""Crossing-tree extraction from sampled level-0 paths, and estimators over the extracted tree."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from methods.sizebias import check_assumption4, spine_chains, tilt
from methods.spectral import spectral_summary
from models.errors import InsufficientData, MalformedPath
from models.laws import WeightMode
from models.model import ModelSpec, Status
from models.pattern import Orientation

logger = logging.getLogger(__name__)

MIN_CROSSINGS: int = 1000


@dataclass(frozen=True)
class CrossingLevel:
    """Complete crossings of one level.

    hits[c] and hits[c + 1] are the sample indices where crossing c starts and
    ends; children[c]:children[c + 1] is its range of subcrossings one level down.
    """

    hits: np.ndarray
    orientations: np.ndarray
    children: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.orientations)

    @property
    def z(self) -> np.ndarray:
        if self.children is None:
            raise ValueError("level 0 crossings have no subcrossings")
        return np.diff(self.children)


@dataclass
class ExtractedTree:
    levels: list[CrossingLevel]
    times: Optional[np.ndarray] = None
    # crossings at each level that end after the last complete crossing one level up
    truncated: list[int] = field(default_factory=list)

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    def count(self, n: int) -> int:
        return len(self.levels[n])

    def durations(self, n: int) -> np.ndarray:
        if self.times is None:
            raise ValueError("tree was extracted without times")
        hits = self.levels[n].hits
        return self.times[hits[1:]] - self.times[hits[:-1]]


def extract_crossing_tree(
    levels_y: np.ndarray,
    max_level: int,
    times: Optional[np.ndarray] = None,
) -> ExtractedTree:
    """Crossing tree of a unit-step path y_0 = 0, y_1, ... up to level `max_level`."""
    y = np.asarray(levels_y)
    if y.ndim != 1 or len(y) < 1:
        raise MalformedPath("path must be a non-empty sequence of levels")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.rint(y)):
            raise MalformedPath("path levels must be integers")
        y = np.rint(y).astype(np.int64)
    if y[0] != 0:
        raise MalformedPath(f"path must start at level 0, starts at {y[0]}")
    steps = np.diff(y)
    bad = np.flatnonzero(np.abs(steps) != 1)
    if len(bad):
        raise MalformedPath(f"increment {steps[bad[0]]} at sample {bad[0] + 1}; level-0 crossings need steps of +-1")
    if times is not None:
        times = np.asarray(times, dtype=float)
        if len(times) != len(y):
            raise MalformedPath(f"{len(times)} times for {len(y)} levels")
        if np.any(np.diff(times) <= 0):
            raise MalformedPath("times must increase strictly")

    hits = np.arange(len(y))
    levels = [CrossingLevel(hits, steps.astype(np.int8))]
    truncated: list[int] = []
    for n in range(max_level):
        lattice = 2 ** (n + 1)
        candidates = hits[y[hits] % lattice == 0]
        values = y[candidates]
        keep = np.concatenate([[True], values[1:] != values[:-1]])
        upper = candidates[keep]
        children = np.searchsorted(hits, upper)
        truncated.append(len(hits) - 1 - int(children[-1]))
        if len(upper) < 2:
            break
        orientations = np.sign(np.diff(y[upper])).astype(np.int8)
        levels.append(CrossingLevel(upper, orientations, children))
        hits = upper
    while len(truncated) < len(levels):
        truncated.append(0)

    logger.debug("extracted %d levels from %d samples", len(levels), len(y))
    return ExtractedTree(levels, times, truncated)


@dataclass(frozen=True)
class LevelEstimate:
    level: int
    count: int
    mu_hat: float
    mu_se: float
    mu_up: float
    mu_down: float


@dataclass(frozen=True)
class DurationMoments:
    level: int
    orientation: Orientation
    count: int
    mean: float
    se: float
    variance: float


@dataclass
class EstimateReport:
    levels: list[LevelEstimate]
    mu_hat: float
    mu_se: float
    hurst_hat: float
    durations: list[DurationMoments] = field(default_factory=list)
    # largest crossing duration at each level, as a share of the path's span
    max_duration_share: list[float] = field(default_factory=list)
    truncated: list[int] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"mu_hat = {self.mu_hat:.6g} ± {self.mu_se:.2g}", f"hurst_hat = {self.hurst_hat:.6g}"]
        for e in self.levels:
            out.append(
                f"  level {e.level}: {e.count} crossings, mu_hat {e.mu_hat:.6g} ± {e.mu_se:.2g} "
                f"(up {e.mu_up:.6g}, down {e.mu_down:.6g})"
            )
        for d in self.durations:
            out.append(f"  level {d.level} {d.orientation.symbol}: {d.count} durations, mean {d.mean:.6g} ± {d.se:.2g}")
        for n, share in enumerate(self.max_duration_share):
            out.append(f"  level {n}: max duration share {share:.4g}")
        if any(self.truncated):
            out.append(f"  incomplete final crossings excluded per level: {self.truncated}")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "mu_hat": self.mu_hat,
            "mu_se": self.mu_se,
            "hurst_hat": self.hurst_hat,
            "levels": [e.__dict__ for e in self.levels],
            "durations": [
                {"level": d.level, "o": d.orientation.symbol, "count": d.count, "mean": d.mean, "se": d.se, "variance": d.variance}
                for d in self.durations
            ],
            "max_duration_share": self.max_duration_share,
            "truncated": self.truncated,
        }


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if len(x) == 0:
        return math.nan, math.nan
    if len(x) == 1:
        return float(x[0]), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def _child_orientation_mean(tree: ExtractedTree, n: int, sign: int) -> float:
    level = tree.levels[n]
    z = level.z[level.orientations == sign]
    return float(z.mean()) if len(z) else math.nan


def estimate(tree: ExtractedTree, with_durations: bool = True) -> EstimateReport:
    """Offspring means per level and pooled, the Hurst index and duration moments."""
    if tree.max_level < 1:
        raise InsufficientData("no complete crossing above level 0")

    per_level = []
    pooled = []
    for n in range(1, tree.max_level + 1):
        z = tree.levels[n].z.astype(float)
        mean, se = _mean_se(z)
        per_level.append(
            LevelEstimate(n, len(z), mean, se, _child_orientation_mean(tree, n, 1), _child_orientation_mean(tree, n, -1))
        )
        pooled.append(z)
    all_z = np.concatenate(pooled)
    mu_hat, mu_se = _mean_se(all_z)
    hurst_hat = math.log(2.0) / math.log(mu_hat)

    report = EstimateReport(per_level, mu_hat, mu_se, hurst_hat, truncated=list(tree.truncated))
    if with_durations and tree.times is not None:
        span = float(tree.times[-1] - tree.times[0])
        for n, level in enumerate(tree.levels):
            d = tree.durations(n)
            report.max_duration_share.append(float(d.max()) / span)
            for o in Orientation:
                sel = d[level.orientations == o.value]
                if len(sel) == 0:
                    continue
                mean, se = _mean_se(sel)
                var = float(sel.var(ddof=1)) if len(sel) > 1 else math.nan
                report.durations.append(DurationMoments(n, o, len(sel), mean, se, var))
    return report


@dataclass
class ScaleReport:
    n1: int
    n2: int
    ratio: float
    ratio_se: float
    expected_ratio: float
    status: Status
    # informational: mean log-duration shift per level, measured and predicted
    log_shift: float
    predicted_log_shift: float
    max_duration_share: list[float]
    atom_monotone: bool
    cebp: bool

    @property
    def passed(self) -> bool:
        return self.status is not Status.FAIL

    def lines(self) -> list[str]:
        kind = "check" if self.cebp else "informational"
        return [
            f"levels {self.n1} -> {self.n2}: mean duration ratio {self.ratio:.6g} ± {self.ratio_se:.2g}, "
            f"expected {self.expected_ratio:.6g} ({kind}) -> {self.status.value}",
            f"log-duration shift per level {self.log_shift:.6g}, predicted {self.predicted_log_shift:.6g} (informational)",
            f"max duration share by level: {' '.join(f'{s:.4g}' for s in self.max_duration_share)}"
            f" ({'monotone' if self.atom_monotone else 'not monotone'})",
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n1": self.n1,
            "n2": self.n2,
            "ratio": self.ratio,
            "ratio_se": self.ratio_se,
            "expected_ratio": self.expected_ratio,
            "status": self.status.value,
            "log_shift": self.log_shift,
            "predicted_log_shift": self.predicted_log_shift,
            "max_duration_share": self.max_duration_share,
            "atom_monotone": self.atom_monotone,
            "cebp": self.cebp,
        }


def scale_invariance_check(
    tree: ExtractedTree,
    n1: int,
    n2: int,
    model: Optional[ModelSpec] = None,
    min_crossings: int = MIN_CROSSINGS,
) -> ScaleReport:
    """Compare mean crossing durations at levels n1 < n2.

    With constant weights the ratio must be mu^(n2 - n1) within 3 standard
    errors. Otherwise the ratio is reported and the mean log-duration shift
    per level is set against the spine's -E log R.
    """
    if not 0 <= n1 < n2:
        raise ValueError(f"need 0 <= n1 < n2, got {n1}, {n2}")
    if tree.times is None:
        raise ValueError("scale check needs crossing times")
    if n2 > tree.max_level:
        raise InsufficientData(f"path has no complete crossings at level {n2}")
    d1, d2 = tree.durations(n1), tree.durations(n2)
    for n, d in ((n1, d1), (n2, d2)):
        if len(d) < min_crossings:
            raise InsufficientData(f"level {n} has {len(d)} crossings, need {min_crossings}")

    m1, s1 = _mean_se(d1)
    m2, s2 = _mean_se(d2)
    ratio = m2 / m1
    ratio_se = ratio * math.hypot(s1 / m1, s2 / m2)

    cebp = model is None or model.weight_law.mode is WeightMode.CONSTANT
    if model is not None:
        summary = spectral_summary(model)
        mu = summary.mu
    else:
        all_z = np.concatenate([tree.levels[n].z for n in range(1, tree.max_level + 1)])
        mu = float(all_z.mean())
    expected = mu ** (n2 - n1)

    if cebp:
        tol = 3.0 * ratio_se if ratio_se > 0 else 1e-9 * expected
        status = Status.PASS if abs(ratio - expected) <= tol else Status.FAIL
    else:
        status = Status.UNVERIFIABLE

    log_shift = (float(np.log(d2).mean()) - float(np.log(d1).mean())) / (n2 - n1)
    predicted = math.log(mu)
    if model is not None and not cebp:
        tilted = tilt(model, summary)
        chains = spine_chains(summary, np.array(summary.m1))
        predicted = -check_assumption4(model, tilted, chains).value

    shares = []
    span = float(tree.times[-1] - tree.times[0])
    for n in range(tree.max_level + 1):
        if len(tree.levels[n]):
            shares.append(float(tree.durations(n).max()) / span)
    atom_monotone = bool(np.all(np.diff(shares) >= 0))

    logger.info("scale check %d -> %d: ratio %.6g, expected %.6g", n1, n2, ratio, expected)
    return ScaleReport(n1, n2, ratio, ratio_se, expected, status, log_shift, predicted, shares, atom_monotone, cebp)
