import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np
from scipy.special import digamma, gammaln

from models.errors import ConfigError, InfiniteMoment, InvalidPattern, RejectionLimitExceeded
from models.pattern import DOWN, UP, OffspringPattern, Orientation, PairKind, validate_pattern

# rejection sampling gives up after this many proposals
MAX_REJECTIONS: int = 1_000_000


def _excursions(rng: np.random.Generator, count: int, excursion_up: float) -> tuple[PairKind, ...]:
    if count == 0:
        return ()
    ups = rng.random(count) < excursion_up
    return tuple(PairKind.UP_DOWN if up else PairKind.DOWN_UP for up in ups)


class PatternLaw(ABC):
    """Distribution of the offspring pattern of a crossing with a fixed orientation."""

    parent: Orientation

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> OffspringPattern: ...

    @abstractmethod
    def zero_prob(self) -> float:
        """P(no excursions), i.e. P(Z = 2)."""

    @abstractmethod
    def mean_excursions(self) -> float: ...

    @abstractmethod
    def first_excursion_up(self) -> float:
        """P(first excursion is Up-Down | at least one excursion)."""

    @abstractmethod
    def tilted(self, v_up: float, v_down: float) -> "PatternLaw":
        """Law reweighted by n_up(a)·v_up + n_down(a)·v_down."""

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...

    def support(self) -> Optional[list[tuple[OffspringPattern, float]]]:
        return None

    def mean_z(self) -> float:
        return 2.0 * self.mean_excursions() + 2.0

    def mean_counts(self) -> tuple[float, float]:
        """(E #Up subcrossings, E #Down subcrossings)."""
        e = self.mean_excursions()
        return (e + 2.0, e) if self.parent is UP else (e, e + 2.0)

    def first_up_prob(self) -> float:
        p0 = self.zero_prob()
        direct_up = 1.0 if self.parent is UP else 0.0
        return p0 * direct_up + (1.0 - p0) * self.first_excursion_up()


@dataclass(frozen=True)
class GeometricExcursions(PatternLaw):
    """Excursion count E with P(E = e) = p (1 - p)^e; each excursion Up-Down w.p. excursion_up."""

    parent: Orientation
    p: float
    excursion_up: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"geometric p must lie in (0, 1], got {self.p}")
        if not 0.0 <= self.excursion_up <= 1.0:
            raise ValueError(f"excursion_up must lie in [0, 1], got {self.excursion_up}")

    def sample(self, rng: np.random.Generator) -> OffspringPattern:
        count = int(rng.geometric(self.p)) - 1
        return OffspringPattern.build(self.parent, _excursions(rng, count, self.excursion_up))

    def zero_prob(self) -> float:
        return self.p

    def mean_excursions(self) -> float:
        return (1.0 - self.p) / self.p

    def first_excursion_up(self) -> float:
        return self.excursion_up

    def tilted(self, v_up: float, v_down: float) -> PatternLaw:
        v_parent, v_other = (v_up, v_down) if self.parent is UP else (v_down, v_up)
        return TiltedGeometric(self, v_up + v_down, v_parent - v_other)

    def to_dict(self) -> dict[str, Any]:
        return {"family": "geometric", "parent": self.parent.symbol, "p": self.p, "excursion_up": self.excursion_up}


@dataclass(frozen=True)
class TiltedGeometric(PatternLaw):
    """Geometric law reweighted by alpha (e + 1) + beta.

    Proposals come from the negative binomial (2, p), which is the geometric
    law reweighted by e + 1, and are thinned to the linear weight.
    """

    base: GeometricExcursions
    alpha: float
    beta: float
    parent: Orientation = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "parent", self.base.parent)

    def _weight(self, e: float) -> float:
        return self.alpha * (e + 1.0) + self.beta

    def _normalizer(self) -> float:
        return self.alpha * (self.base.mean_excursions() + 1.0) + self.beta

    def sample(self, rng: np.random.Generator) -> OffspringPattern:
        bound = self.alpha + max(self.beta, 0.0)
        for _ in range(MAX_REJECTIONS):
            count = int(rng.negative_binomial(2, self.base.p))
            if rng.random() * bound <= self.alpha + self.beta / (count + 1.0):
                return OffspringPattern.build(self.parent, _excursions(rng, count, self.base.excursion_up))
        raise RejectionLimitExceeded(f"tilted geometric sampler rejected {MAX_REJECTIONS} proposals")

    def zero_prob(self) -> float:
        return self.base.p * self._weight(0.0) / self._normalizer()

    def mean_excursions(self) -> float:
        p = self.base.p
        m = (1.0 - p) / p
        second = (1.0 - p) / p**2 + m * m
        return (self.alpha * (second + m) + self.beta * m) / self._normalizer()

    def first_excursion_up(self) -> float:
        return self.base.excursion_up

    def tilted(self, v_up: float, v_down: float) -> PatternLaw:
        raise ConfigError("a size-biased geometric law cannot be size-biased again")

    def to_dict(self) -> dict[str, Any]:
        return {"family": "tilted-geometric", "base": self.base.to_dict(), "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class ConstantExcursions(PatternLaw):
    parent: Orientation
    count: int
    excursion_up: float = 0.5

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError(f"excursion count must be >= 0, got {self.count}")

    def sample(self, rng: np.random.Generator) -> OffspringPattern:
        return OffspringPattern.build(self.parent, _excursions(rng, self.count, self.excursion_up))

    def zero_prob(self) -> float:
        return 1.0 if self.count == 0 else 0.0

    def mean_excursions(self) -> float:
        return float(self.count)

    def first_excursion_up(self) -> float:
        return self.excursion_up

    def tilted(self, v_up: float, v_down: float) -> PatternLaw:
        # every pattern has the same counts
        return self

    def to_dict(self) -> dict[str, Any]:
        return {"family": "constant", "parent": self.parent.symbol, "count": self.count, "excursion_up": self.excursion_up}


@dataclass(frozen=True)
class PatternTable(PatternLaw):
    parent: Orientation
    entries: tuple[tuple[OffspringPattern, float], ...]
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.entries:
            raise InvalidPattern(f"empty pattern table for parent {self.parent.symbol}")
        probs = np.array([p for _, p in self.entries], dtype=float)
        if np.any(probs < 0):
            raise InvalidPattern("pattern probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise InvalidPattern(f"pattern probabilities for parent {self.parent.symbol} sum to {probs.sum()}, not 1")
        for pattern, _ in self.entries:
            if not validate_pattern(pattern, self.parent):
                raise InvalidPattern(f"pattern {pattern} is not valid for parent {self.parent.symbol}")
        cumulative = np.cumsum(probs)
        cumulative[-1] = 1.0
        object.__setattr__(self, "_cumulative", cumulative)

    def sample(self, rng: np.random.Generator) -> OffspringPattern:
        index = int(np.searchsorted(self._cumulative, rng.random(), side="right"))
        return self.entries[min(index, len(self.entries) - 1)][0]

    def support(self) -> Optional[list[tuple[OffspringPattern, float]]]:
        return list(self.entries)

    def zero_prob(self) -> float:
        return sum(p for a, p in self.entries if a.z == 2)

    def mean_excursions(self) -> float:
        return sum(p * len(a.excursions) for a, p in self.entries)

    def first_excursion_up(self) -> float:
        with_excursion = sum(p for a, p in self.entries if a.excursions)
        if with_excursion == 0.0:
            return 0.0
        return sum(p for a, p in self.entries if a.excursions and a.excursions[0] is PairKind.UP_DOWN) / with_excursion

    def reweighted(self, factors: list[float]) -> "PatternTable":
        raw = [p * f for (_, p), f in zip(self.entries, factors)]
        total = sum(raw)
        return PatternTable(self.parent, tuple((a, w / total) for (a, _), w in zip(self.entries, raw)))

    def tilted(self, v_up: float, v_down: float) -> PatternLaw:
        return self.reweighted([a.count(UP) * v_up + a.count(DOWN) * v_down for a, _ in self.entries])

    def to_dict(self) -> dict[str, Any]:
        return {"family": "table", "parent": self.parent.symbol, "entries": [[str(a), p] for a, p in self.entries]}


@dataclass(frozen=True)
class OrientationLaw:
    up: PatternLaw
    down: PatternLaw

    def __post_init__(self) -> None:
        if self.up.parent is not UP or self.down.parent is not DOWN:
            raise InvalidPattern("orientation law slots must match their parent orientation")

    def law(self, parent: Orientation) -> PatternLaw:
        return self.up if parent is UP else self.down

    def to_dict(self) -> dict[str, Any]:
        return {"up": self.up.to_dict(), "down": self.down.to_dict()}


class WeightFamily(ABC):
    # population moments are known in closed form
    exact: bool = True

    @property
    @abstractmethod
    def mean(self) -> float: ...

    @abstractmethod
    def moment(self, theta: float) -> float:
        """E R^theta."""

    @abstractmethod
    def log_mean(self) -> float:
        """E log R."""

    @abstractmethod
    def r_log_r(self) -> float:
        """E R log R."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray: ...

    @abstractmethod
    def sample_size_biased(self, rng: np.random.Generator) -> float:
        """One draw from the law reweighted by r."""

    @abstractmethod
    def scaled(self, c: float) -> "WeightFamily": ...

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...

    def size_biased_log_mean(self) -> float:
        return self.r_log_r() / self.mean

    def moment_stderr(self, theta: float) -> float:
        return 0.0


@dataclass(frozen=True)
class Deterministic(WeightFamily):
    value: float

    def __post_init__(self) -> None:
        if not 0.0 < self.value < math.inf:
            raise ValueError(f"weights must be positive and finite, got {self.value}")

    @property
    def mean(self) -> float:
        return self.value

    def moment(self, theta: float) -> float:
        return self.value**theta

    def log_mean(self) -> float:
        return math.log(self.value)

    def r_log_r(self) -> float:
        return self.value * math.log(self.value)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.value)

    def sample_size_biased(self, rng: np.random.Generator) -> float:
        return self.value

    def scaled(self, c: float) -> "Deterministic":
        return Deterministic(self.value * c)

    def to_dict(self) -> dict[str, Any]:
        return {"family": "deterministic", "value": self.value}


@dataclass(frozen=True)
class Gamma(WeightFamily):
    shape: float
    scale: float

    def __post_init__(self) -> None:
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError(f"gamma shape and scale must be positive, got {self.shape}, {self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    def moment(self, theta: float) -> float:
        if theta <= -self.shape:
            raise InfiniteMoment(f"E R^{theta} diverges for gamma shape {self.shape}")
        return math.exp(theta * math.log(self.scale) + gammaln(self.shape + theta) - gammaln(self.shape))

    def log_mean(self) -> float:
        return float(digamma(self.shape)) + math.log(self.scale)

    def r_log_r(self) -> float:
        return self.mean * (float(digamma(self.shape + 1.0)) + math.log(self.scale))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.shape, self.scale, size)

    def sample_size_biased(self, rng: np.random.Generator) -> float:
        # size-biasing a gamma raises its shape by one
        return float(rng.gamma(self.shape + 1.0, self.scale))

    def scaled(self, c: float) -> "Gamma":
        return Gamma(self.shape, self.scale * c)

    def to_dict(self) -> dict[str, Any]:
        return {"family": "gamma", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class LogNormal(WeightFamily):
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError(f"lognormal sigma must be >= 0, got {self.sigma}")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def moment(self, theta: float) -> float:
        return math.exp(theta * self.mu + 0.5 * (theta * self.sigma) ** 2)

    def log_mean(self) -> float:
        return self.mu

    def r_log_r(self) -> float:
        return self.mean * (self.mu + self.sigma**2)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.lognormal(self.mu, self.sigma, size)

    def sample_size_biased(self, rng: np.random.Generator) -> float:
        return float(rng.lognormal(self.mu + self.sigma**2, self.sigma))

    def scaled(self, c: float) -> "LogNormal":
        return LogNormal(self.mu + math.log(c), self.sigma)

    def to_dict(self) -> dict[str, Any]:
        return {"family": "lognormal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Empirical(WeightFamily):
    """Weights resampled from user-supplied values."""

    values: tuple[float, ...]
    exact = False
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.values) < 2:
            raise ValueError("an empirical weight law needs at least two values")
        if any(not 0.0 < x < math.inf for x in self.values):
            raise ValueError("empirical weights must be positive and finite")
        object.__setattr__(self, "_array", np.asarray(self.values, dtype=float))

    @property
    def mean(self) -> float:
        return float(self._array.mean())

    def moment(self, theta: float) -> float:
        return float((self._array**theta).mean())

    def moment_stderr(self, theta: float) -> float:
        powered = self._array**theta
        return float(powered.std(ddof=1) / math.sqrt(len(powered)))

    def log_mean(self) -> float:
        return float(np.log(self._array).mean())

    def r_log_r(self) -> float:
        x = self._array
        return float((x * np.log(x)).mean())

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self._array, size=size)

    def sample_size_biased(self, rng: np.random.Generator) -> float:
        x = self._array
        return float(rng.choice(x, p=x / x.sum()))

    def scaled(self, c: float) -> "Empirical":
        return Empirical(tuple(x * c for x in self.values))

    def to_dict(self) -> dict[str, Any]:
        return {"family": "empirical", "values": list(self.values)}


class WeightMode(Enum):
    CONSTANT = "constant"
    IID = "iid"
    TABLE = "table"


WeightKey = tuple[Orientation, OffspringPattern]


@dataclass(frozen=True)
class WeightLaw:
    """Law of the branch weights R given the parent orientation (and, for tables, the pattern).

    CONSTANT is resolved to deterministic 1/mu per orientation once the model is built.
    """

    mode: WeightMode
    up: Optional[WeightFamily] = None
    down: Optional[WeightFamily] = None
    table: Optional[dict[WeightKey, tuple[float, ...]]] = None
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.mode is WeightMode.IID and self.up is None:
            raise ValueError("iid weight law needs a weight family")
        if self.mode is WeightMode.TABLE:
            if not self.table:
                raise ValueError("table weight law needs per-pattern weights")
            for (parent, pattern), weights in self.table.items():
                if len(weights) != pattern.z:
                    raise InvalidPattern(f"pattern {parent.symbol}/{pattern} has {pattern.z} slots but {len(weights)} weights")
                if any(not 0.0 < w < math.inf for w in weights):
                    raise ValueError(f"weights of {parent.symbol}/{pattern} must be positive and finite")

    def family(self, parent: Orientation) -> WeightFamily:
        if self.up is None:
            raise ValueError(f"{self.mode.value} weight law has no weight family")
        if parent is DOWN and self.down is not None:
            return self.down
        return self.up

    @property
    def orientation_dependent(self) -> bool:
        if self.mode is WeightMode.TABLE:
            return True
        return self.down is not None and self.down != self.up

    @property
    def exact(self) -> bool:
        if self.mode is WeightMode.TABLE:
            return True
        return self.up is None or (self.family(UP).exact and self.family(DOWN).exact)

    def weights_for(self, parent: Orientation, pattern: OffspringPattern) -> tuple[float, ...]:
        assert self.table is not None
        try:
            return self.table[(parent, pattern)]
        except KeyError:
            raise InvalidPattern(f"no weights given for pattern {parent.symbol}/{pattern}") from None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"mode": self.mode.value, "normalize": self.normalize}
        if self.up is not None:
            out["up"] = self.up.to_dict()
        if self.down is not None:
            out["down"] = self.down.to_dict()
        if self.table is not None:
            out["table"] = [[p.symbol, str(a), list(w)] for (p, a), w in self.table.items()]
        return out
