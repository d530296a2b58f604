"""Explicit crossing trees built to a fixed depth, used as ground truth for the engine."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Literal, NamedTuple, Optional

import numpy as np

from methods.engine import initialize, run
from methods.spectral import spectral_summary
from models.errors import CapExceeded
from models.model import ModelSpec, SpectralSummary, Status, sample_family
from models.pattern import DOWN, UP, OffspringPattern, Orientation
from models.state import make_rng

logger = logging.getLogger(__name__)

NODE_CAP: int = 10**7
WalkMode = Literal["cebp", "mebp"]


@dataclass(eq=False)
class CrossingNode:
    orientation: Orientation
    pattern: Optional[OffspringPattern] = None
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    children: list["CrossingNode"] = field(default_factory=list)
    w_estimate: float = math.nan

    @property
    def z(self) -> int:
        return len(self.children)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class OracleTree:
    root: CrossingNode
    depth: int
    model: ModelSpec
    seed: int
    summary: SpectralSummary
    size: int = 1

    def generation(self, n: int) -> Iterator[tuple[CrossingNode, float]]:
        """Nodes of generation n from left to right, with their weight products rho."""
        if not 0 <= n <= self.depth:
            raise ValueError(f"generation {n} outside 0..{self.depth}")
        stack: list[tuple[CrossingNode, float, int]] = [(self.root, 1.0, 0)]
        while stack:
            node, rho, g = stack.pop()
            if g == n:
                yield node, rho
                continue
            for child, r in zip(reversed(node.children), reversed(node.weights)):
                stack.append((child, rho * float(r), g + 1))

    def nodes(self) -> Iterator[CrossingNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def crossing_counts(self, n: int) -> tuple[int, int]:
        """(S+, S-): number of Up and Down crossings in generation n."""
        up = sum(1 for node, _ in self.generation(n) if node.orientation is UP)
        total = sum(1 for _ in self.generation(n))
        return up, total - up


def expected_size(mu: float, depth: int) -> float:
    if mu == 1.0:
        return depth + 1.0
    return (mu ** (depth + 1) - 1.0) / (mu - 1.0)


def build_tree(
    model: ModelSpec,
    depth: int,
    seed: int,
    cap: int = NODE_CAP,
    root_orientation: Optional[Orientation] = None,
    summary: Optional[SpectralSummary] = None,
) -> OracleTree:
    """Complete depth-`depth` tree; without `root_orientation` the root is Up with probability a."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    summary = summary or spectral_summary(model)
    expected = expected_size(summary.mu, depth)
    if expected > cap:
        raise CapExceeded(f"depth {depth} tree has about {expected:.3g} nodes, above the cap of {cap}")

    rng = make_rng(seed)
    if root_orientation is None:
        root_orientation = UP if rng.random() < summary.fixed_point_a else DOWN
    root = CrossingNode(root_orientation)
    tree = OracleTree(root, depth, model, seed, summary)

    # depth-first, left to right
    stack: list[tuple[CrossingNode, int]] = [(root, 0)]
    while stack:
        node, g = stack.pop()
        if g == depth:
            continue
        pattern, weights = sample_family(model, node.orientation, rng)
        node.pattern = pattern
        node.weights = weights
        node.children = [CrossingNode(o) for o in pattern.orientations]
        tree.size += pattern.z
        if tree.size > cap:
            raise CapExceeded(f"tree grew past the cap of {cap} nodes at generation {g + 1}")
        stack.extend((child, g + 1) for child in reversed(node.children))

    logger.debug("oracle tree: depth %d, %d nodes, root %s", depth, tree.size, root_orientation.symbol)
    return tree


def refine_w(tree: OracleTree) -> None:
    """W = v^i at the leaves, then W_i = sum_j R_i(j) W_ij upward."""
    order = list(tree.nodes())
    for node in reversed(order):
        if node.is_leaf:
            node.w_estimate = tree.summary.v(node.orientation)
        else:
            child_w = np.array([c.w_estimate for c in node.children])
            node.w_estimate = float(node.weights @ child_w)


class WalkPath(NamedTuple):
    times: np.ndarray
    values: np.ndarray
    step: float


def walk_from_tree(tree: OracleTree, n: int, mode: WalkMode = "cebp") -> WalkPath:
    """Breakpoints of the walk through the generation-n crossings.

    Steps have size 2^-n. In "cebp" mode each lasts mu^-n; in "mebp" mode a
    crossing lasts rho * W, which needs `refine_w` first.
    """
    if mode not in ("cebp", "mebp"):
        raise ValueError(f"unknown walk mode: {mode}")
    if mode == "mebp" and math.isnan(tree.root.w_estimate):
        refine_w(tree)

    step = 2.0**-n
    unit_duration = tree.summary.mu**-n
    signs: list[int] = []
    durations: list[float] = []
    for node, rho in tree.generation(n):
        signs.append(node.orientation.value)
        durations.append(unit_duration if mode == "cebp" else rho * node.w_estimate)

    times = np.concatenate([[0.0], np.cumsum(durations)])
    values = np.concatenate([[0.0], np.cumsum(np.array(signs, dtype=float) * step)])
    return WalkPath(times, values, step)


def dump_tree(tree: OracleTree, max_depth: Optional[int] = None) -> str:
    lines = [f"# depth {tree.depth}, seed {tree.seed}, {tree.size} nodes, model {tree.model.name}"]
    stack: list[tuple[CrossingNode, int]] = [(tree.root, 0)]
    while stack:
        node, g = stack.pop()
        w = "" if math.isnan(node.w_estimate) else f" w={node.w_estimate:.6g}"
        if node.is_leaf:
            lines.append(f"{'  ' * g}{node.orientation.symbol}{w}")
        else:
            weights = " ".join(f"{r:.6g}" for r in node.weights)
            lines.append(f"{'  ' * g}{node.orientation.symbol} Z={node.z} A={node.pattern} R=[{weights}]{w}")
        if max_depth is None or g < max_depth:
            stack.extend((child, g + 1) for child in reversed(node.children))
    return "\n".join(lines)


@dataclass(frozen=True)
class ComparisonCheck:
    name: str
    engine_mean: float
    engine_se: float
    oracle_mean: float
    oracle_se: float
    status: Status

    @property
    def z_score(self) -> float:
        se = math.hypot(self.engine_se, self.oracle_se)
        diff = self.engine_mean - self.oracle_mean
        return 0.0 if diff == 0 else (diff / se if se > 0 else math.inf)


@dataclass
class ComparisonReport:
    model: str
    engine_model: str
    n_crossings: int
    depth: int
    n_trees: int
    # level-0 crossings compared per engine run and per oracle tree
    window: int = 0
    n_runs: int = 0
    checks: list[ComparisonCheck] = field(default_factory=list)
    duration_mean: float = math.nan
    duration_var: float = math.nan
    oracle_duration_mean: float = math.nan
    oracle_duration_var: float = math.nan

    @property
    def passed(self) -> bool:
        return all(c.status is not Status.FAIL for c in self.checks)

    def lines(self) -> list[str]:
        out = [
            f"model {self.model} vs engine model {self.engine_model}",
            f"engine: {self.n_runs} runs of {self.window} crossings; oracle: {self.n_trees} trees at depth {self.depth}",
            f"level-0 durations: engine mean {self.duration_mean:.6g}, variance {self.duration_var:.6g}; "
            f"oracle mean {self.oracle_duration_mean:.6g}, variance {self.oracle_duration_var:.6g}",
        ]
        for c in self.checks:
            out.append(
                f"  {c.name}: engine {c.engine_mean:.6g} ± {c.engine_se:.2g}, "
                f"oracle {c.oracle_mean:.6g} ± {c.oracle_se:.2g}, z = {c.z_score:+.2f} -> {c.status.value}"
            )
        out.append("PASS" if self.passed else "FAIL")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "engine_model": self.engine_model,
            "n_crossings": self.n_crossings,
            "depth": self.depth,
            "n_trees": self.n_trees,
            "window": self.window,
            "n_runs": self.n_runs,
            "duration_mean": self.duration_mean,
            "duration_var": self.duration_var,
            "oracle_duration_mean": self.oracle_duration_mean,
            "oracle_duration_var": self.oracle_duration_var,
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "engine_mean": c.engine_mean,
                    "engine_se": c.engine_se,
                    "oracle_mean": c.oracle_mean,
                    "oracle_se": c.oracle_se,
                    "status": c.status.value,
                }
                for c in self.checks
            ],
        }


def _mean_se(values: list[float]) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    if len(x) < 2:
        return (float(x.mean()) if len(x) else math.nan), math.inf
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def _moments(values: list[float]) -> tuple[float, float]:
    if len(values) < 2:
        return math.nan, math.nan
    return float(np.mean(values)), float(np.var(values, ddof=1))


def _check(name: str, engine: list[float], oracle: list[float]) -> ComparisonCheck:
    em, es = _mean_se(engine)
    om, os_ = _mean_se(oracle)
    if math.isinf(es) or math.isinf(os_):
        status = Status.UNVERIFIABLE
    else:
        se = math.hypot(es, os_)
        tol = 3.0 * se if se > 0 else 1e-9 * max(1.0, abs(om))
        status = Status.PASS if abs(em - om) <= tol else Status.FAIL
    return ComparisonCheck(name, em, es, om, os_, status)


def leading_crossings(
    model: ModelSpec,
    depth: int,
    n: int,
    rng: np.random.Generator,
    summary: SpectralSummary,
    on_family: Optional[Callable[[Orientation, OffspringPattern], Any]] = None,
) -> list[tuple[Orientation, float]]:
    """The first `n` generation-`depth` crossings of a fresh tree, with their rho.

    Only the families left of the n-th crossing are drawn. The root is Up
    with probability a.
    """
    root = UP if rng.random() < summary.fixed_point_a else DOWN
    out: list[tuple[Orientation, float]] = []
    stack: list[tuple[Orientation, float, int]] = [(root, 1.0, 0)]
    while stack and len(out) < n:
        orientation, rho, g = stack.pop()
        if g == depth:
            out.append((orientation, rho))
            continue
        pattern, weights = sample_family(model, orientation, rng)
        if on_family is not None:
            on_family(orientation, pattern)
        for child, r in zip(reversed(pattern.orientations), reversed(weights)):
            stack.append((child, rho * float(r), g + 1))
    return out


def compare_with_engine(
    model: ModelSpec,
    n_crossings: int,
    depth: int,
    n_trees: int,
    seed: int = 0,
    engine_model: Optional[ModelSpec] = None,
) -> ComparisonReport:
    """Check the engine's level-0 durations against oracle trees of `model`.

    The first 2^depth level-0 crossings of an engine run lie inside its first
    level-`depth` crossing, so their durations v^i rho / rho(first) have the
    law of the first generation-`depth` MEBP crossings of an oracle tree whose
    root is Up with probability a, rescaled the same way. Engine runs (seeds
    seed, seed + 1, ...) and oracle trees give iid per-run means of the
    durations and of their logs, compared at 3 combined standard errors
    together with the offspring-count means by parent orientation.
    `engine_model` lets the engine run a different model as a negative control.
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if n_crossings < 1 or n_trees < 1:
        raise ValueError("n_crossings and n_trees must be positive")
    engine_model = engine_model or model
    summary = spectral_summary(model)
    window = min(2**depth, n_crossings)
    n_runs = max(n_crossings // window, 2)

    engine_z: dict[Orientation, list[float]] = {UP: [], DOWN: []}
    oracle_z: dict[Orientation, list[float]] = {UP: [], DOWN: []}
    engine_means: list[float] = []
    engine_log_means: list[float] = []
    engine_all: list[float] = []
    for r in range(n_runs):
        state = initialize(engine_model, seed + r, check=False)
        state.on_family = lambda parent, pattern, weights: engine_z[parent].append(float(pattern.z))
        durations: list[float] = []
        run(state, window, lambda point: durations.append(point.duration))
        engine_means.append(float(np.mean(durations)))
        engine_log_means.append(float(np.mean(np.log(durations))))
        engine_all.extend(durations)

    rng = make_rng(seed + n_runs)
    oracle_means: list[float] = []
    oracle_log_means: list[float] = []
    oracle_all: list[float] = []
    for _ in range(n_trees):
        leaves = leading_crossings(
            model, depth, window, rng, summary, lambda parent, pattern: oracle_z[parent].append(float(pattern.z))
        )
        rho_first = leaves[0][1]
        durations = [summary.v(o) * rho / rho_first for o, rho in leaves]
        oracle_means.append(float(np.mean(durations)))
        oracle_log_means.append(float(np.mean(np.log(durations))))
        oracle_all.extend(durations)

    report = ComparisonReport(model.name, engine_model.name, n_crossings, depth, n_trees, window, n_runs)
    report.duration_mean, report.duration_var = _moments(engine_all)
    report.oracle_duration_mean, report.oracle_duration_var = _moments(oracle_all)
    report.checks.append(_check("level-0 duration", engine_means, oracle_means))
    report.checks.append(_check("level-0 log duration", engine_log_means, oracle_log_means))
    for o in (UP, DOWN):
        report.checks.append(_check(f"offspring count given {o.symbol}", engine_z[o], oracle_z[o]))
    logger.info("engine vs oracle for %s: %s", model.name, "pass" if report.passed else "fail")
    return report
