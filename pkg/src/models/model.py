import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

from models.errors import RejectionLimitExceeded
from models.laws import MAX_REJECTIONS, OrientationLaw, WeightLaw, WeightMode
from models.pattern import UP, OffspringPattern, Orientation


@dataclass(frozen=True)
class ModelSpec:
    """One embedded branching process: orientation law p±_A and weight law F±_{R|a}.

    Build it through `methods.spectral.build_model`, which validates the laws
    and resolves constant or normalised weights.
    """

    orientation_law: OrientationLaw
    weight_law: WeightLaw
    first_crossing_override: Optional[float] = None
    name: str = "custom"
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "orientation_law": self.orientation_law.to_dict(),
            "weight_law": self.weight_law.to_dict(),
            "first_crossing_override": self.first_crossing_override,
        }

    def fingerprint(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


Matrix = tuple[tuple[float, float], tuple[float, float]]
Vector = tuple[float, float]


@dataclass(frozen=True)
class SpectralSummary:
    mu_plus: float
    mu_minus: float
    mu: float
    M0: Matrix
    m0_left: Vector
    m0_right: Vector
    m1: Matrix
    mu1: float
    left_u: Vector
    right_v: Vector
    hurst_H: float
    first_up_given_up: float
    first_up_given_down: float
    fixed_point_a: float
    degenerate: bool = False

    def v(self, orientation: Orientation) -> float:
        return self.right_v[0] if orientation is UP else self.right_v[1]

    def u(self, orientation: Orientation) -> float:
        return self.left_u[0] if orientation is UP else self.left_u[1]


class Status(Enum):
    PASS = "pass"
    FAIL = "fail"
    UNVERIFIABLE = "unverifiable"


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    status: Status
    value: float
    tolerance: float = 0.0
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: dict[str, list[AssumptionCheck]] = field(default_factory=dict)

    def add(self, assumption: str, check: AssumptionCheck) -> None:
        self.checks.setdefault(assumption, []).append(check)

    def status(self, assumption: str) -> Status:
        statuses = [c.status for c in self.checks.get(assumption, [])]
        if Status.FAIL in statuses:
            return Status.FAIL
        if Status.UNVERIFIABLE in statuses or not statuses:
            return Status.UNVERIFIABLE
        return Status.PASS

    @property
    def passed(self) -> bool:
        return all(self.status(name) is not Status.FAIL for name in self.checks)

    def lines(self) -> list[str]:
        out = []
        for name, checks in self.checks.items():
            out.append(f"{name}: {self.status(name).value}")
            for c in checks:
                tol = f" (tol {c.tolerance:g})" if c.tolerance else ""
                detail = f"  {c.detail}" if c.detail else ""
                out.append(f"  {c.name} = {c.value:.12g} -> {c.status.value}{tol}{detail}")
        return out


Family = tuple[OffspringPattern, np.ndarray]


def sample_family(model: ModelSpec, parent: Orientation, rng: np.random.Generator) -> Family:
    """Draw (A, R) for a crossing of orientation `parent`: pattern first, then weights."""
    pattern = model.orientation_law.law(parent).sample(rng)
    law = model.weight_law
    if law.mode is WeightMode.TABLE:
        weights = np.array(law.weights_for(parent, pattern), dtype=float)
    else:
        weights = law.family(parent).sample(rng, pattern.z)
    return pattern, weights


def sample_family_given_first(
    model: ModelSpec,
    parent: Orientation,
    first: Orientation,
    rng: np.random.Generator,
    max_tries: int = MAX_REJECTIONS,
) -> Family:
    """`sample_family` conditioned on the first subcrossing having orientation `first`."""
    for _ in range(max_tries):
        pattern, weights = sample_family(model, parent, rng)
        if pattern.signs[0] == first.value:
            return pattern, weights
    raise RejectionLimitExceeded(f"no family with parent {parent.symbol} and first child {first.symbol} in {max_tries} draws")
