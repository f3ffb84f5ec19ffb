"""
Rates - source conditions, the a-priori error bounds they imply,
parameter choice rules and the empirical rate experiment

The experiment solves the Tikhonov problem across a geometric noise grid,
measures D_xi(u_alpha^delta, ubar) and fits its log-log slope against delta.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.errors import (
    BregmanError,
    DegenerateFit,
    HypothesisViolated,
    MembershipFailure,
    NotInvertible,
    NotSmooth,
)
from modules.grid_function import GridFunction
from modules.operators import GENERATOR_NAME, ForwardOperator, NonlinearityEstimate
from modules.penalty import Penalty, QuadraticPenalty
from modules.problems import add_noise
from modules.variational_solver import DEFAULT_MAX_ITER, TikhonovProblem, solve

logger = logging.getLogger(__name__)

BOUND_RTOL = 1e-6
DEFAULT_SLOPE_TOLERANCE = 0.15
RATE_TOL_FACTOR = 1e-10
MEMBERSHIP_TOL = 1e-8
MIN_DELTA_POINTS = 4


class SourceType(str, Enum):
    TYPE_I = 'TypeI'
    TYPE_II = 'TypeII'


class SlopeBand(str, Enum):
    """TWO_SIDED: |slope - p| <= tol.  AT_LEAST: slope >= p - tol, for bounds that only cap the error"""
    TWO_SIDED = 'two_sided'
    AT_LEAST = 'at_least'


class ParameterRule(str, Enum):
    LINEAR = 'LinearRule'
    TWO_THIRDS = 'TwoThirdsRule'
    FIXED = 'FixedRule'

    @classmethod
    def parse(cls, name: str) -> 'ParameterRule':
        aliases = {'linear': cls.LINEAR, 'two_thirds': cls.TWO_THIRDS, 'fixed': cls.FIXED}
        key = name.strip()
        if key.lower() in aliases:
            return aliases[key.lower()]
        return cls(key)


@dataclass(frozen=True)
class SourceSetup:
    type: SourceType
    omega: GridFunction
    ubar: GridFunction
    xi: GridFunction
    omega_norm: float
    F_omega_norm: float
    nonlinear: bool = False
    construction: str = 'inverse_subgradient'

    def to_dict(self) -> Dict:
        return {
            'type': self.type.value,
            'omega_norm': self.omega_norm,
            'F_omega_norm': self.F_omega_norm,
            'nonlinear': self.nonlinear,
            'construction': self.construction,
        }


@dataclass
class RateReport:
    deltas: List[float]
    alphas: List[float]
    bregman_errors: List[float]
    residuals: List[float]
    bounds: List[float]
    residual_bounds: List[float]
    fitted_slope: float
    expected_slope: float
    rule: str
    hypothesis_flags: List[str] = field(default_factory=list)
    row_flags: List[str] = field(default_factory=list)
    s_values: List[float] = field(default_factory=list)
    s_bounds: List[float] = field(default_factory=list)
    converged: List[bool] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    source: Dict = field(default_factory=dict)
    c_estimate: Optional[float] = None
    eta_estimate: Optional[float] = None
    seed: int = 0
    generator: str = GENERATOR_NAME
    slope_tolerance: float = DEFAULT_SLOPE_TOLERANCE
    slope_band: SlopeBand = SlopeBand.TWO_SIDED
    optimal_alphas: List[float] = field(default_factory=list)

    def violations(self) -> List[int]:
        """Rows where a measured quantity exceeds its bound by more than the relative tolerance"""
        rows = []
        for i in range(len(self.deltas)):
            pairs = [(self.bregman_errors[i], self.bounds[i]), (self.residuals[i], self.residual_bounds[i])]
            if self.s_bounds:
                pairs.append((self.s_values[i], self.s_bounds[i]))
            if any(_exceeds(value, bound) for value, bound in pairs):
                rows.append(i)
        return rows

    def slope_ok(self) -> bool:
        if not math.isfinite(self.fitted_slope):
            return False
        if SlopeBand(self.slope_band) is SlopeBand.AT_LEAST:
            return self.fitted_slope >= self.expected_slope - self.slope_tolerance
        return abs(self.fitted_slope - self.expected_slope) <= self.slope_tolerance

    def passed(self) -> bool:
        """Slope inside the band, and no bound violations unless a hypothesis is flagged"""
        if not self.slope_ok():
            return False
        return bool(self.hypothesis_flags) or not self.violations()

    def rows(self) -> List[Dict]:
        return [
            {
                'delta': self.deltas[i],
                'alpha': self.alphas[i],
                'bregman_error': self.bregman_errors[i],
                'residual': self.residuals[i],
                'bound': self.bounds[i],
                'residual_bound': self.residual_bounds[i],
                'flag': self.row_flags[i] if self.row_flags else '',
            }
            for i in range(len(self.deltas))
        ]

    def to_dict(self) -> Dict:
        return {
            'rule': self.rule,
            'fitted_slope': self.fitted_slope,
            'expected_slope': self.expected_slope,
            'slope_tolerance': self.slope_tolerance,
            'slope_band': SlopeBand(self.slope_band).value,
            'slope_ok': self.slope_ok(),
            'passed': self.passed(),
            'violations': self.violations(),
            'hypothesis_flags': list(self.hypothesis_flags),
            'notes': list(self.notes),
            'source': dict(self.source),
            'c_estimate': self.c_estimate,
            'eta_estimate': self.eta_estimate,
            'seed': self.seed,
            'generator': self.generator,
            'rows': self.rows(),
            's_values': list(self.s_values),
            's_bounds': list(self.s_bounds),
            'converged': list(self.converged),
            'iterations': list(self.iterations),
            'optimal_alphas': list(self.optimal_alphas),
        }


def _exceeds(value: float, bound: float) -> bool:
    if not (math.isfinite(value) and math.isfinite(bound)):
        return False
    return value > bound * (1.0 + BOUND_RTOL) + 1e-15


def construct_source(op: ForwardOperator, penalty: Penalty, source_type: SourceType,
                     omega: Optional[GridFunction] = None, ubar: Optional[GridFunction] = None) -> SourceSetup:
    """
    Build (omega, ubar, xi) with xi = F*omega (type I) or F*F omega (type II) and xi in dh(ubar).

    Linear F: xi from omega, then ubar = (dh)^-1(xi) or the supplied ubar is verified.
    Nonlinear F with ubar: omega from least squares on F'(ubar)* (type I) or F'(ubar)*F'(ubar) (type II).
    Nonlinear F, quadratic h, omega only: the fixed point ubar = F'(ubar)* omega; for type II
    omega is then replaced by the least-squares solution of F'(ubar)*F'(ubar) omega = ubar.
    """
    source_type = SourceType(source_type)
    if op.is_linear:
        if omega is None:
            raise ValueError("linear source construction needs omega")
        xi = op.adjoint_apply(omega, omega if source_type is SourceType.TYPE_I else op.apply(omega))
        if ubar is None:
            ubar = penalty.invert_subgradient(xi)
            construction = 'inverse_subgradient'
        else:
            _verify_membership(penalty, ubar, xi)
            construction = 'supplied_ubar'
        return _setup(op, source_type, omega, ubar, xi, construction)

    if ubar is not None:
        omega, xi = _omega_from_ubar(op, penalty, source_type, ubar)
        _verify_membership(penalty, ubar, xi)
        return _setup(op, source_type, omega, ubar, xi, 'least_squares_omega')

    if omega is None:
        raise ValueError("source construction needs omega or ubar")
    if not isinstance(penalty, QuadraticPenalty):
        raise NotInvertible(f"{op.kind}: without an explicit ubar only a quadratic penalty is supported")
    omega, ubar = _fixed_point_source(op, omega)
    if source_type is SourceType.TYPE_II:
        omega, xi = _omega_from_ubar(op, penalty, source_type, ubar)
        _verify_membership(penalty, ubar, xi)
        return _setup(op, source_type, omega, ubar, xi, 'fixed_point_least_squares')
    xi = op.adjoint_apply(ubar, omega)
    _verify_membership(penalty, ubar, xi)
    return _setup(op, source_type, omega, ubar, xi, 'fixed_point')


def _setup(op, source_type, omega, ubar, xi, construction) -> SourceSetup:
    f_omega = op.derivative_apply(ubar, omega).norm()
    logger.info(f"🎯 source {source_type.value} ({construction}): ||omega||={omega.norm():.4g}, "
                f"||F omega||={f_omega:.4g}")
    return SourceSetup(source_type, omega, ubar, xi, omega.norm(), f_omega, not op.is_linear, construction)


def _verify_membership(penalty: Penalty, ubar: GridFunction, xi: GridFunction) -> None:
    if not penalty.contains_subgradient(ubar, xi, tol=MEMBERSHIP_TOL):
        raise MembershipFailure(f"xi is not in the {penalty.kind} subdifferential at the supplied ubar")


def _omega_from_ubar(op: ForwardOperator, penalty: Penalty, source_type: SourceType,
                     ubar: GridFunction) -> Tuple[GridFunction, GridFunction]:
    target = penalty.subgradient(ubar)
    jacobian = op.derivative_matrix(ubar)
    system = jacobian.T if source_type is SourceType.TYPE_I else jacobian.T @ jacobian
    omega_values, *_ = np.linalg.lstsq(system, target.values, rcond=None)
    xi = ubar.like(system @ omega_values)
    gap = (xi - target).norm()
    if gap > MEMBERSHIP_TOL * (1.0 + target.norm()):
        raise MembershipFailure(f"subgradient at ubar is not in the range of the source map (gap {gap:.3g})")
    return ubar.like(omega_values), xi


def _fixed_point_source(op: ForwardOperator, omega: GridFunction) -> Tuple[GridFunction, GridFunction]:
    n, h = op.domain_dim, op.spacing
    eye = np.eye(n)
    matrix = np.column_stack([op._adjoint(eye[k], omega.values) for k in range(n)])
    trial = np.linspace(0.5, 1.5, n)
    if not np.allclose(op._adjoint(trial, omega.values), matrix @ trial, rtol=1e-10, atol=1e-12):
        raise NotInvertible(f"{op.kind}: u -> F'(u)* omega is not linear, no fixed-point source")
    eigenvalues, eigenvectors = np.linalg.eig(matrix)
    scale = float(np.max(np.abs(eigenvalues))) or 1.0
    real = np.abs(eigenvalues.imag) <= 1e-10 * scale
    candidates = np.where(real & (eigenvalues.real > 1e-12 * scale))[0]
    if candidates.size == 0:
        raise NotInvertible("u -> F'(u)* omega has no positive real eigenvalue")
    best = candidates[np.argmax(eigenvalues.real[candidates])]
    lam = float(eigenvalues.real[best])
    vector = eigenvectors[:, best].real
    if vector.sum() < 0:
        vector = -vector
    ubar = GridFunction(vector, h)
    ubar = ubar / ubar.norm()
    logger.debug(f"fixed-point source: dominant eigenvalue {lam:.6g}")
    return omega / lam, ubar


def bound_type1_noisy(alpha: float, delta: float, omega_norm: float) -> float:
    """(alpha ||omega|| + delta)^2 / (2 alpha)"""
    _require_alpha(alpha)
    return (alpha * omega_norm + delta) ** 2 / (2.0 * alpha)


def residual_bound_type1(alpha: float, delta: float, omega_norm: float) -> float:
    """delta + alpha ||omega||, bounds ||F u_alpha^delta - F ubar|| for linear F"""
    _require_alpha(alpha)
    return delta + alpha * omega_norm


def bound_type2_noisy(alpha: float, delta: float, s: float, F_omega_norm: float) -> Tuple[float, float]:
    """(Bregman bound, residual bound) under the type II source condition"""
    _require_alpha(alpha)
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    root = math.sqrt(delta ** 2 + 2.0 * alpha * s)
    bregman = s + delta ** 2 / alpha + (delta / alpha) * root
    residual = alpha * F_omega_norm + delta + root
    return bregman, residual


def bound_nl_type1(alpha: float, delta: float, omega_dual_norm: float, c: float) -> Tuple[float, float]:
    """(residual bound, Bregman bound) for nonlinear F under c*||omega|| < 1"""
    _require_alpha(alpha)
    w = omega_dual_norm
    if c * w >= 1:
        raise HypothesisViolated(f"c*||omega|| = {c * w:.4g} >= 1")
    root = math.sqrt(alpha ** 2 * w ** 2 + delta ** 2)
    residual = 2.0 * alpha * w + 2.0 * root
    bregman = (2.0 / (1.0 - c * w)) * (delta ** 2 / (2.0 * alpha) + alpha * w ** 2 + w * root)
    return residual, bregman


def bound_nl_type2(alpha: float, delta: float, s: float, F_prime_omega_norm: float, c: float) -> Tuple[float, float]:
    """(residual bound, Bregman bound) for nonlinear F under c*||F'(ubar) omega|| < 1"""
    _require_alpha(alpha)
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    fw = F_prime_omega_norm
    if c * fw >= 1:
        raise HypothesisViolated(f"c*||F'(ubar) omega|| = {c * fw:.4g} >= 1")
    cs = c * s
    g = delta + math.sqrt((delta + cs) ** 2 + 2.0 * alpha * s * (1.0 + c * fw))
    residual = alpha * fw + g
    bregman = (alpha * s + cs ** 2 / 2.0 + delta * g + cs * (delta + alpha * fw)) / (alpha * (1.0 - c * fw))
    return residual, bregman


def _require_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")


def choose_alpha(rule: ParameterRule, delta: float, constant: float = 1.0) -> float:
    rule = ParameterRule(rule)
    if not constant > 0:
        raise ValueError(f"rule constant must be positive, got {constant}")
    if rule is ParameterRule.FIXED:
        return float(constant)
    if not delta > 0:
        raise ValueError(f"{rule.value} needs delta > 0, got {delta}")
    if rule is ParameterRule.LINEAR:
        return constant * delta
    return constant * delta ** (2.0 / 3.0)


def expected_slope(source_type: SourceType, rule: ParameterRule) -> float:
    """Predicted exponent p in D = O(delta^p)"""
    source_type, rule = SourceType(source_type), ParameterRule(rule)
    if rule is ParameterRule.FIXED:
        return 0.0
    if source_type is SourceType.TYPE_I:
        return 1.0 if rule is ParameterRule.LINEAR else 2.0 / 3.0
    return 1.0 if rule is ParameterRule.LINEAR else 4.0 / 3.0


def optimal_alpha_type1(delta: float, omega_norm: float) -> float:
    """Unique minimizer in alpha of (alpha ||omega|| + delta)^2 / (2 alpha)"""
    if not omega_norm > 0:
        raise ValueError("omega must be nonzero")
    return delta / omega_norm


def fit_loglog_slope(points: Sequence[Tuple[float, float]]) -> float:
    """Least-squares slope of log y against log x"""
    xs = np.array([p[0] for p in points], dtype=float)
    ys = np.array([p[1] for p in points], dtype=float)
    if np.unique(xs).size < 2:
        raise DegenerateFit(f"need at least two distinct x values, got {np.unique(xs).size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DegenerateFit("log-log fit needs positive values")
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def corollary_s_bound(penalty: Penalty, alpha: float, omega: GridFunction, M: Optional[float] = None,
                      points: Sequence[GridFunction] = ()) -> float:
    """alpha^2 (M/2) ||omega||^2, M from the penalty's Hessian bound on points unless given"""
    if not penalty.is_smooth:
        raise NotSmooth(f"{penalty.kind} is not twice differentiable")
    if M is None:
        M = penalty.hessian_bound(*points)
    return alpha ** 2 * (M / 2.0) * omega.norm() ** 2


@dataclass(frozen=True)
class _PointResult:
    delta: float
    alpha: float
    bregman_error: float
    residual: float
    bound: float
    residual_bound: float
    s_value: float
    s_bound: float
    converged: bool
    iterations: int
    flags: Tuple[str, ...]


def _s_terms(penalty: Penalty, source: SourceSetup, alpha: float) -> Tuple[float, float, bool]:
    """s = D_xi(ubar - alpha omega, ubar) and its Hessian bound; the last item marks a domain exit"""
    shifted = source.ubar - alpha * source.omega
    if not penalty.in_domain(shifted):
        return math.nan, math.nan, True
    s = penalty.bregman_distance(source.xi, shifted, source.ubar).distance
    try:
        s_bound = corollary_s_bound(penalty, alpha, source.omega, points=(source.ubar, shifted))
    except NotSmooth:
        s_bound = math.nan
    return max(s, 0.0), s_bound, False


def _theory(source: SourceSetup, penalty: Penalty, alpha: float, delta: float,
            c: float) -> Tuple[float, float, float, float, List[str]]:
    flags: List[str] = []
    s, s_bound = math.nan, math.nan
    if source.type is SourceType.TYPE_II:
        s, s_bound, clipped = _s_terms(penalty, source, alpha)
        if clipped:
            flags.append('domain_clipped')
            return math.nan, math.nan, s, s_bound, flags
    try:
        if source.type is SourceType.TYPE_I:
            if source.nonlinear:
                residual_bound, bound = bound_nl_type1(alpha, delta, source.omega_norm, c)
            else:
                bound = bound_type1_noisy(alpha, delta, source.omega_norm)
                residual_bound = residual_bound_type1(alpha, delta, source.omega_norm)
        elif source.nonlinear:
            residual_bound, bound = bound_nl_type2(alpha, delta, s, source.F_omega_norm, c)
        else:
            bound, residual_bound = bound_type2_noisy(alpha, delta, s, source.F_omega_norm)
    except HypothesisViolated:
        flags.append('hypothesis_violated')
        return math.nan, math.nan, s, s_bound, flags
    return bound, residual_bound, s, s_bound, flags


def _evaluate_point(op: ForwardOperator, penalty: Penalty, source: SourceSetup, y: GridFunction, delta: float,
                    alpha: float, noise_seed: int, c: float, tol_factor: float, max_iter: int) -> _PointResult:
    ydelta = add_noise(y, delta, noise_seed)
    prob = TikhonovProblem(op, penalty, ydelta, alpha)
    init = source.ubar if source.nonlinear else None
    base = init if init is not None else source.ubar
    tol = tol_factor * (1.0 + op.adjoint_apply(base, ydelta).norm())
    result = solve(prob, init=init, tol=tol, max_iter=max_iter)
    u = result.minimizer
    bregman_error = penalty.bregman_distance(source.xi, u, source.ubar).distance
    residual = (op.apply(u) - y).norm()
    bound, residual_bound, s, s_bound, flags = _theory(source, penalty, alpha, delta, c)
    if not result.converged:
        flags.append('not_converged')
    logger.debug(f"delta={delta:.3g} alpha={alpha:.3g} D={bregman_error:.4e} bound={bound:.4e}")
    return _PointResult(delta, alpha, bregman_error, residual, bound, residual_bound, s, s_bound,
                        result.converged, result.iterations, tuple(flags))


def _failed_point(delta: float, alpha: float, error: Exception) -> _PointResult:
    message = f'error: {type(error).__name__}'
    return _PointResult(delta, alpha, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, False, 0,
                        (message,))


def _run_points(jobs: int, tasks: List[Tuple[float, float]], evaluate) -> List[_PointResult]:
    def guarded(task):
        delta, alpha = task
        try:
            return evaluate(delta, alpha)
        except BregmanError as e:
            logger.warning(f"⚠️ point delta={delta:.3g} alpha={alpha:.3g} failed: {e}")
            return _failed_point(delta, alpha, e)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(guarded, tasks))
    else:
        results = [guarded(task) for task in tasks]
    if all(r.flags and r.flags[0].startswith('error') for r in results):
        raise BregmanError(f"every one of the {len(tasks)} solves failed")
    return results


def _hypothesis_flags(source: SourceSetup, c: float, results: List[_PointResult]) -> List[str]:
    flags = []
    if source.nonlinear:
        product = c * (source.omega_norm if source.type is SourceType.TYPE_I else source.F_omega_norm)
        if product >= 1:
            flags.append(f"c*||omega|| = {product:.4g} >= 1")
    failed = [r.delta for r in results if not r.converged]
    if failed:
        flags.append(f"inner solver did not converge for delta in {sorted(failed)}")
    clipped = [r.delta for r in results if 'domain_clipped' in r.flags]
    if clipped:
        flags.append(f"ubar - alpha*omega leaves dom(h) for delta in {sorted(clipped)}")
    return flags


def _assemble(results: List[_PointResult], xs: List[float], expected: float, rule: str, source: SourceSetup,
              c: float, nonlinearity: Optional[NonlinearityEstimate], noise_seed: int,
              slope_tolerance: float, slope_band: Optional[SlopeBand]) -> RateReport:
    usable = [(x, r.bregman_error) for x, r in zip(xs, results)
              if math.isfinite(r.bregman_error) and r.bregman_error > 0 and 'domain_clipped' not in r.flags]
    if len(usable) < 2:
        raise DegenerateFit(f"only {len(usable)} usable points for the slope fit")
    slope = fit_loglog_slope(usable)

    hypothesis_flags = _hypothesis_flags(source, c, results)
    notes = []
    if source.nonlinear:
        notes.append("nonlinear F: each solve returns a stationary point; bounds are checked against it")
        notes.append("c and eta are sampled maxima; sampling can falsify the nonlinearity condition but not verify it")
    notes.append("minimizers are numerical; solver tolerance is absorbed by the relative bound tolerance")
    if slope_band is None:
        slope_band = SlopeBand.AT_LEAST if source.nonlinear else SlopeBand.TWO_SIDED
    slope_band = SlopeBand(slope_band)
    if slope_band is SlopeBand.AT_LEAST:
        notes.append("the bounds cap the error; a slope steeper than predicted passes")
    optimal_alphas = []
    if source.type is SourceType.TYPE_I and source.omega_norm > 0 and rule != 'ExactData':
        optimal_alphas = [optimal_alpha_type1(r.delta, source.omega_norm) for r in results]
    for flag in hypothesis_flags:
        logger.warning(f"⚠️ {flag}")

    report = RateReport(
        deltas=[r.delta for r in results],
        alphas=[r.alpha for r in results],
        bregman_errors=[r.bregman_error for r in results],
        residuals=[r.residual for r in results],
        bounds=[r.bound for r in results],
        residual_bounds=[r.residual_bound for r in results],
        fitted_slope=slope,
        expected_slope=expected,
        rule=rule,
        hypothesis_flags=hypothesis_flags,
        row_flags=[';'.join(r.flags) for r in results],
        s_values=[r.s_value for r in results],
        s_bounds=[r.s_bound for r in results],
        converged=[r.converged for r in results],
        iterations=[r.iterations for r in results],
        notes=notes,
        source=source.to_dict(),
        c_estimate=c if source.nonlinear else 0.0,
        eta_estimate=nonlinearity.eta_estimate if nonlinearity is not None else None,
        seed=noise_seed,
        slope_tolerance=slope_tolerance,
        slope_band=slope_band,
        optimal_alphas=optimal_alphas,
    )
    logger.info(f"📊 rate experiment {source.type.value}/{rule}: slope {slope:.4f} (expected {expected:.4f}), "
                f"{len(report.violations())} violations, {len(hypothesis_flags)} flags")
    return report


def run_rate_experiment(op: ForwardOperator, penalty: Penalty, source: SourceSetup, rule: ParameterRule,
                        delta_grid: Sequence[float], noise_seed: int = 0, constant: float = 1.0,
                        nonlinearity: Optional[NonlinearityEstimate] = None, tol_factor: float = RATE_TOL_FACTOR,
                        max_iter: int = DEFAULT_MAX_ITER, jobs: int = 1,
                        slope_tolerance: float = DEFAULT_SLOPE_TOLERANCE,
                        slope_band: Optional[SlopeBand] = None) -> RateReport:
    """
    One Tikhonov solve per delta, noise drawn with the same seed for every delta.
    Failed solves become flagged rows; the run fails only when every solve fails.
    slope_band defaults to AT_LEAST for nonlinear F and TWO_SIDED otherwise.
    """
    rule = ParameterRule(rule)
    deltas = [float(d) for d in delta_grid]
    if len(deltas) < 2:
        raise DegenerateFit(f"a slope needs at least two noise levels, got {len(deltas)}")
    if len(deltas) < MIN_DELTA_POINTS:
        logger.warning(f"⚠️ only {len(deltas)} noise levels; at least {MIN_DELTA_POINTS} give a stable slope")
    if source.nonlinear and nonlinearity is None:
        raise ValueError("nonlinear rate experiments need a nonlinearity estimate")
    c = nonlinearity.c_estimate if source.nonlinear else 0.0

    y = op.apply(source.ubar)
    tasks = [(delta, choose_alpha(rule, delta, constant)) for delta in deltas]

    def evaluate(delta, alpha):
        return _evaluate_point(op, penalty, source, y, delta, alpha, noise_seed, c, tol_factor, max_iter)

    results = _run_points(jobs, tasks, evaluate)
    return _assemble(results, deltas, expected_slope(source.type, rule), rule.value, source, c, nonlinearity,
                     noise_seed, slope_tolerance, slope_band)


def run_exact_data_sweep(op: ForwardOperator, penalty: Penalty, source: SourceSetup, alphas: Sequence[float],
                         nonlinearity: Optional[NonlinearityEstimate] = None, tol_factor: float = RATE_TOL_FACTOR,
                         max_iter: int = DEFAULT_MAX_ITER, jobs: int = 1,
                         slope_tolerance: float = DEFAULT_SLOPE_TOLERANCE,
                         slope_band: Optional[SlopeBand] = None) -> RateReport:
    """delta = 0 over an alpha grid; the slope is fitted against alpha"""
    alphas = [float(a) for a in alphas]
    if len(alphas) < 2:
        raise DegenerateFit(f"a slope needs at least two alphas, got {len(alphas)}")
    if source.nonlinear and nonlinearity is None:
        raise ValueError("nonlinear sweeps need a nonlinearity estimate")
    c = nonlinearity.c_estimate if source.nonlinear else 0.0
    y = op.apply(source.ubar)
    tasks = [(0.0, alpha) for alpha in alphas]

    def evaluate(delta, alpha):
        return _evaluate_point(op, penalty, source, y, delta, alpha, 0, c, tol_factor, max_iter)

    results = _run_points(jobs, tasks, evaluate)
    expected = 1.0 if source.type is SourceType.TYPE_I else 2.0
    return _assemble(results, alphas, expected, 'ExactData', source, c, nonlinearity, 0, slope_tolerance,
                     slope_band)
