import logging
import math
from dataclasses import replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import digamma

from methods.sizebias import check_assumption4, spine_chains, tilt
from models.errors import DegenerateFirstCrossing, InfiniteMoment, InvalidPattern
from models.laws import (
    ConstantExcursions,
    Deterministic,
    Gamma,
    GeometricExcursions,
    OrientationLaw,
    PatternLaw,
    WeightLaw,
    WeightMode,
)
from models.model import AssumptionCheck, AssumptionReport, ModelSpec, SpectralSummary, Status, sample_family
from models.pattern import DOWN, UP, Orientation
from models.state import make_rng

logger = logging.getLogger(__name__)

EXACT_TOL: float = 1e-9
FD_STEP: float = 1e-4
DELTA_GRID: tuple[float, ...] = (1.1, 1.25, 1.5, 2.0)
MC_FAMILIES: int = 20_000
ORIENTATIONS: tuple[Orientation, Orientation] = (UP, DOWN)


class MTheta(NamedTuple):
    matrix: np.ndarray
    eigenvalue: float
    left: np.ndarray
    right: np.ndarray
    stderr: Optional[np.ndarray] = None


def perron_2x2(m: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Perron root of a nonnegative 2x2 matrix with left/right vectors, u·1 = 1 and u·v = 1."""
    a, b = float(m[0, 0]), float(m[0, 1])
    c, d = float(m[1, 0]), float(m[1, 1])
    tr = a + d
    disc = math.sqrt(max((a - d) ** 2 + 4.0 * b * c, 0.0))
    lam = 0.5 * (tr + disc)

    if b > 0:
        right = np.array([b, lam - a])
    elif c > 0:
        right = np.array([lam - d, c])
    else:
        right = np.array([1.0 if a >= d else 0.0, 1.0 if d >= a else 0.0])

    if c > 0:
        left = np.array([c, lam - a])
    elif b > 0:
        left = np.array([lam - d, b])
    else:
        left = np.array([1.0 if a >= d else 0.0, 1.0 if d >= a else 0.0])

    left = left / left.sum()
    right = right / float(left @ right)
    return lam, left, right


def mean_matrix(law: OrientationLaw) -> np.ndarray:
    return np.array([law.up.mean_counts(), law.down.mean_counts()], dtype=float)


def build_model(
    orientation_law: OrientationLaw,
    weight_law: WeightLaw,
    first_crossing_override: Optional[float] = None,
    name: str = "custom",
) -> ModelSpec:
    """Validate the laws and resolve the weight law into sampling form.

    Constant weights become 1/mu, and iid or table weights are rescaled so
    that mu(1) = 1 unless normalisation is switched off.
    """
    if first_crossing_override is not None and not 0.0 <= first_crossing_override <= 1.0:
        raise ValueError(f"first crossing probability must lie in [0, 1], got {first_crossing_override}")

    mu, _, _ = perron_2x2(mean_matrix(orientation_law))
    warnings: list[str] = []
    if orientation_law.up.zero_prob() == 1.0 and orientation_law.down.zero_prob() == 1.0:
        warnings.append("degenerate model: every crossing has exactly two subcrossings (straight-line CEBP)")

    if weight_law.mode is WeightMode.CONSTANT:
        weight_law = WeightLaw(WeightMode.CONSTANT, up=Deterministic(1.0 / mu), normalize=False)
    elif weight_law.mode is WeightMode.TABLE:
        weight_law = _resolve_table(orientation_law, weight_law)
    elif weight_law.normalize:
        weight_law = _normalize_iid(orientation_law, weight_law)

    model = ModelSpec(orientation_law, weight_law, first_crossing_override, name=name, warnings=tuple(warnings))
    for w in warnings:
        logger.warning("%s: %s", name, w)
    return model


def _normalize_iid(orientation_law: OrientationLaw, weight_law: WeightLaw) -> WeightLaw:
    m0 = mean_matrix(orientation_law)
    means = np.array([weight_law.family(UP).mean, weight_law.family(DOWN).mean])
    rho, _, _ = perron_2x2(means[:, None] * m0)
    c = 1.0 / rho
    logger.info("weight normalisation factor %.12g", c)
    down = weight_law.down.scaled(c) if weight_law.down is not None else None
    return replace(weight_law, up=weight_law.family(UP).scaled(c), down=down)


def _resolve_table(orientation_law: OrientationLaw, weight_law: WeightLaw) -> WeightLaw:
    assert weight_law.table is not None
    for parent in ORIENTATIONS:
        support = orientation_law.law(parent).support()
        if support is None:
            raise InvalidPattern("per-pattern weights need a finite pattern table")
        for pattern, _ in support:
            weight_law.weights_for(parent, pattern)
    if not weight_law.normalize:
        return weight_law
    rho, _, _ = perron_2x2(_table_m_theta(orientation_law, weight_law, 1.0))
    c = 1.0 / rho
    logger.info("weight normalisation factor %.12g", c)
    table = {key: tuple(w * c for w in weights) for key, weights in weight_law.table.items()}
    return replace(weight_law, table=table)


def _table_m_theta(orientation_law: OrientationLaw, weight_law: WeightLaw, theta: float, log_power: int = 0) -> np.ndarray:
    m = np.zeros((2, 2))
    for row, parent in enumerate(ORIENTATIONS):
        for pattern, p in orientation_law.law(parent).support() or []:
            weights = np.asarray(weight_law.weights_for(parent, pattern))
            terms = weights**theta * np.log(weights) ** log_power
            signs = np.asarray(pattern.signs)
            m[row, 0] += p * terms[signs > 0].sum()
            m[row, 1] += p * terms[signs < 0].sum()
    return m


def m_theta(model: ModelSpec, theta: float) -> MTheta:
    """M(theta) with entries E(sum over j-children of R^theta | parent i), and its Perron triple."""
    law = model.weight_law
    stderr = None
    if law.mode is WeightMode.TABLE:
        matrix = _table_m_theta(model.orientation_law, law, theta)
    else:
        m0 = mean_matrix(model.orientation_law)
        g = np.array([law.family(UP).moment(theta), law.family(DOWN).moment(theta)])
        if not np.all(np.isfinite(g)):
            raise InfiniteMoment(f"weight moment of order {theta} is not finite")
        matrix = g[:, None] * m0
        if not law.exact:
            se = np.array([law.family(UP).moment_stderr(theta), law.family(DOWN).moment_stderr(theta)])
            stderr = se[:, None] * m0
    lam, left, right = perron_2x2(matrix)
    return MTheta(matrix, lam, left, right, stderr)


def mu_prime_at_one(model: ModelSpec) -> float:
    """d mu(theta) / d theta at theta = 1."""
    law = model.weight_law
    if not law.exact:
        hi = m_theta(model, 1.0 + FD_STEP).eigenvalue
        lo = m_theta(model, 1.0 - FD_STEP).eigenvalue
        return (hi - lo) / (2.0 * FD_STEP)

    if law.mode is WeightMode.TABLE:
        derivative = _table_m_theta(model.orientation_law, law, 1.0, log_power=1)
    else:
        m0 = mean_matrix(model.orientation_law)
        g1 = np.array([law.family(UP).r_log_r(), law.family(DOWN).r_log_r()])
        derivative = g1[:, None] * m0
    _, left, right = m_theta(model, 1.0)[1:4]
    return float(left @ derivative @ right)


def monte_carlo_m_theta(model: ModelSpec, theta: float, n_families: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample estimate of M(theta) and its standard errors from `n_families` families per parent."""
    mean = np.zeros((2, 2))
    se = np.zeros((2, 2))
    for row, parent in enumerate(ORIENTATIONS):
        sums = np.zeros((n_families, 2))
        for i in range(n_families):
            pattern, weights = sample_family(model, parent, rng)
            powered = weights**theta
            signs = np.asarray(pattern.signs)
            sums[i, 0] = powered[signs > 0].sum()
            sums[i, 1] = powered[signs < 0].sum()
        mean[row] = sums.mean(axis=0)
        se[row] = sums.std(axis=0, ddof=1) / math.sqrt(n_families)
    return mean, se


def first_crossing_probs(model: ModelSpec) -> tuple[float, float]:
    """(u, v): probability the first subcrossing is Up given an Up / Down parent."""
    return model.orientation_law.up.first_up_prob(), model.orientation_law.down.first_up_prob()


def _is_degenerate_pair(u: float, v: float) -> bool:
    return u >= 1.0 - 1e-15 and v <= 1e-15


def _summary(model: ModelSpec, allow_degenerate: bool) -> SpectralSummary:
    law = model.orientation_law
    m0 = mean_matrix(law)
    mu, m0_left, m0_right = perron_2x2(m0)
    m1 = m_theta(model, 1.0)
    u, v = first_crossing_probs(model)

    if _is_degenerate_pair(u, v):
        if model.first_crossing_override is not None:
            a = model.first_crossing_override
            logger.warning("first crossing orientation is not determined by the law; using override a = %g", a)
        elif allow_degenerate:
            a = math.nan
        else:
            raise DegenerateFirstCrossing("(u, v) = (1, 0): any first-crossing probability is possible; supply an override")
    else:
        a = v / (1.0 - u + v)

    def pair(x: np.ndarray) -> tuple[float, float]:
        return float(x[0]), float(x[1])

    return SpectralSummary(
        mu_plus=law.up.mean_z(),
        mu_minus=law.down.mean_z(),
        mu=mu,
        M0=(pair(m0[0]), pair(m0[1])),
        m0_left=pair(m0_left),
        m0_right=pair(m0_right),
        m1=(pair(m1.matrix[0]), pair(m1.matrix[1])),
        mu1=m1.eigenvalue,
        left_u=pair(m1.left),
        right_v=pair(m1.right),
        hurst_H=math.log(2.0) / math.log(mu),
        first_up_given_up=u,
        first_up_given_down=v,
        fixed_point_a=a,
        degenerate=mu <= 2.0 + 1e-12,
    )


def spectral_summary(model: ModelSpec) -> SpectralSummary:
    return _summary(model, allow_degenerate=False)


def _z_distribution(law: PatternLaw) -> Optional[list[tuple[int, float]]]:
    """Law of Z as (z, probability) pairs, with a geometric tail cut below 1e-18."""
    support = law.support()
    if support is not None:
        return [(a.z, p) for a, p in support]
    if isinstance(law, ConstantExcursions):
        return [(2 * law.count + 2, 1.0)]
    if isinstance(law, GeometricExcursions):
        out, e, prob = [], 0, law.p
        while prob > 1e-18 or e < 10:
            out.append((2 * e + 2, prob))
            if law.p == 1.0:
                break
            e += 1
            prob *= 1.0 - law.p
        return out
    return None


def _mean_z_log_z(law: PatternLaw) -> float:
    zs = _z_distribution(law)
    if zs is None:
        return math.nan
    return sum(p * z * math.log(z) for z, p in zs)


def _sum_log_sum(model: ModelSpec, parent: Orientation, rng: np.random.Generator) -> tuple[float, float]:
    """E(S log S | parent) for S = sum_j R(j), with a standard error (0 when exact)."""
    law = model.weight_law
    pattern_law = model.orientation_law.law(parent)
    if law.mode is WeightMode.TABLE:
        total = 0.0
        for a, p in pattern_law.support() or []:
            s = float(sum(law.weights_for(parent, a)))
            total += p * s * math.log(s)
        return total, 0.0
    family = law.family(parent)
    zs = _z_distribution(pattern_law)
    if zs is not None and isinstance(family, Deterministic):
        c = family.value
        return sum(p * z * c * math.log(z * c) for z, p in zs), 0.0
    if zs is not None and isinstance(family, Gamma):
        # a sum of z iid gammas is gamma with shape z k
        k, theta = family.shape, family.scale
        return sum(p * z * k * theta * (float(digamma(z * k + 1.0)) + math.log(theta)) for z, p in zs), 0.0
    values = np.empty(MC_FAMILIES)
    for i in range(MC_FAMILIES):
        s = float(sample_family(model, parent, rng)[1].sum())
        values[i] = s * math.log(s)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(MC_FAMILIES))


def _log_first_weight(model: ModelSpec, parent: Orientation) -> float:
    """E(log R(1) | parent)."""
    law = model.weight_law
    if law.mode is WeightMode.TABLE:
        support = model.orientation_law.law(parent).support() or []
        return sum(p * math.log(law.weights_for(parent, a)[0]) for a, p in support)
    return law.family(parent).log_mean()


def check_assumptions(model: ModelSpec) -> AssumptionReport:
    report = AssumptionReport()
    law = model.weight_law
    exact = law.exact

    # Assumption 1: supercritical offspring means, Z log Z moments
    for parent in ORIENTATIONS:
        mean_z = model.orientation_law.law(parent).mean_z()
        status = Status.PASS if mean_z > 2.0 else Status.FAIL
        report.add("A1", AssumptionCheck(f"mu{parent.symbol}", status, mean_z, detail="must exceed 2"))
        zlogz = _mean_z_log_z(model.orientation_law.law(parent))
        status = Status.PASS if math.isfinite(zlogz) else Status.UNVERIFIABLE
        report.add("A1", AssumptionCheck(f"E(Z log Z | {parent.symbol})", status, zlogz))

    # Assumption 2: conservation, negative derivative, moment conditions
    m1 = m_theta(model, 1.0)
    if m1.stderr is not None:
        se = _eigen_stderr(m1)
        tol = 3.0 * se
        report.add("A2", AssumptionCheck("mu(1)", Status.PASS if abs(m1.eigenvalue - 1.0) <= tol else Status.FAIL, m1.eigenvalue, tol, f"standard error {se:.3g}"))
    else:
        ok = abs(m1.eigenvalue - 1.0) <= EXACT_TOL
        report.add("A2", AssumptionCheck("mu(1)", Status.PASS if ok else Status.FAIL, m1.eigenvalue, EXACT_TOL, f"conservation residual {m1.eigenvalue - 1.0:.3g}"))

    derivative = mu_prime_at_one(model)
    how = "closed form" if exact else f"central difference, step {FD_STEP:g}"
    report.add("A2", AssumptionCheck("mu'(1)", Status.PASS if derivative < 0 else Status.FAIL, derivative, detail=how))

    try:
        near = max(m_theta(model, 1.0 - 0.05).eigenvalue, m_theta(model, 1.0 + 0.05).eigenvalue)
        report.add("A2", AssumptionCheck("M(theta) finite near 1", Status.PASS, near))
    except InfiniteMoment as e:
        report.add("A2", AssumptionCheck("M(theta) finite near 1", Status.FAIL, math.inf, detail=str(e)))

    delta_check = _delta_check(model)
    report.add("A2", delta_check)
    moment_status = Status.PASS if exact else Status.UNVERIFIABLE
    if law.orientation_dependent:
        report.add("A2", AssumptionCheck("E((sum R)^delta) finite", moment_status, delta_check.value))
    else:
        rng = make_rng(0)
        for parent in ORIENTATIONS:
            value, se = _sum_log_sum(model, parent, rng)
            name = f"E(sum R log sum R | {parent.symbol}) finite"
            if se > 0:
                detail = f"Monte Carlo, {MC_FAMILIES} families, standard error {se:.3g}"
                report.add("A2", AssumptionCheck(name, moment_status, value, 3.0 * se, detail))
            else:
                status = Status.PASS if math.isfinite(value) else Status.UNVERIFIABLE
                report.add("A2", AssumptionCheck(name, status, value, detail="closed form"))

    # Assumption 3: the first-crossing spine weights shrink
    u, v = first_crossing_probs(model)
    log_up = _log_first_weight(model, UP)
    log_down = _log_first_weight(model, DOWN)
    if u >= 1.0 - 1e-15 or v <= 1e-15:
        if u >= 1.0 - 1e-15:
            _add_sign_check(report, "A3", "E(log R(1) | +)", log_up, exact)
        if v <= 1e-15:
            _add_sign_check(report, "A3", "E(log R(1) | -)", log_down, exact)
    else:
        _add_sign_check(report, "A3", "log-weight functional", log_up / (1.0 - u) + log_down / v, exact)

    # Assumption 4: the random-start spine weights shrink
    summary = _summary(model, allow_degenerate=True)
    if min(summary.right_v) <= 0 or min(summary.left_u) <= 0:
        report.add("A4", AssumptionCheck("spinal functional", Status.UNVERIFIABLE, math.nan, detail="eigenvectors not strictly positive"))
    else:
        tilted = tilt(model, summary)
        chains = spine_chains(summary, np.array(summary.m1))
        report.add("A4", check_assumption4(model, tilted, chains))

    for name in report.checks:
        logger.info("assumption %s: %s", name, report.status(name).value)
    return report


def _add_sign_check(report: AssumptionReport, assumption: str, name: str, value: float, exact: bool) -> None:
    if not exact:
        report.add(assumption, AssumptionCheck(name, Status.UNVERIFIABLE, value, detail="empirical weight law"))
        return
    report.add(assumption, AssumptionCheck(name, Status.PASS if value < 0 else Status.FAIL, value, detail="must be negative"))


def _delta_check(model: ModelSpec) -> AssumptionCheck:
    """Search the grid for delta > 1 with mu(delta) < 1."""
    best = math.inf
    for delta in DELTA_GRID:
        try:
            value = m_theta(model, delta).eigenvalue
        except InfiniteMoment:
            continue
        best = min(best, value)
        if value < 1.0:
            return AssumptionCheck("mu(delta) < 1", Status.PASS, value, detail=f"delta = {delta:g}")
    return AssumptionCheck("mu(delta) < 1", Status.UNVERIFIABLE, best, detail=f"no delta in {DELTA_GRID} found")


def _eigen_stderr(m: MTheta) -> float:
    """Delta-method standard error of the Perron root: d lambda / d m_ij = u_i v_j."""
    assert m.stderr is not None
    grad = np.outer(m.left, m.right)
    return float(math.sqrt(np.sum((grad * m.stderr) ** 2)))
