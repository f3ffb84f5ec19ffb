"""
Bregman Iteration - iterated Tikhonov with a Bregman-distance penalty

    u_{k+1}  = argmin 1/2 ||F(u) - y||^2 + alpha_k D_{xi_k}(u, u_k)
    xi_{k+1} = xi_k - (1/alpha_k) F'(u_{k+1})* (F(u_{k+1}) - y)

stopped by the discrepancy principle ||F(u_k) - y|| <= tau * delta,
plus the diagnostics that the convergence analysis predicts for its iterates.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from modules.errors import ConfigError, InnerFailure
from modules.grid_function import GridFunction
from modules.operators import ForwardOperator, make_rng
from modules.penalty import Penalty
from modules.variational_solver import DEFAULT_MAX_ITER, BregmanShift, SolveResult, TikhonovProblem, solve

logger = logging.getLogger(__name__)

DEFAULT_TAU = 2.0
DEFAULT_MAX_OUTER = 100
EXACT_RESIDUAL_FLOOR = 1e-12
MONOTONE_SLACK = 1e-9
THREE_POINT_SLACK = 1e-9
GEOMETRIC_LOWER_FACTOR = 1e-3


class StopReason(str, Enum):
    DISCREPANCY = 'Discrepancy'
    MAX_OUTER = 'MaxOuter'
    INNER_FAILURE = 'InnerFailure'


@dataclass(frozen=True)
class AlphaSchedule:
    """alpha_k = alpha0 * q**k clipped to [lower, upper]"""
    alpha0: float
    q: float = 1.0
    lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ConfigError(f"alpha0 must be positive, got {self.alpha0}")
        if not 0 < self.q <= 1:
            raise ConfigError(f"schedule ratio q must lie in (0, 1], got {self.q}")
        if self.upper is None:
            object.__setattr__(self, 'upper', self.alpha0)
        if self.lower is None:
            lower = self.alpha0 if self.q == 1 else self.alpha0 * GEOMETRIC_LOWER_FACTOR
            object.__setattr__(self, 'lower', min(lower, self.upper))
        if not 0 < self.lower <= self.upper:
            raise ConfigError(f"need 0 < alpha_lower <= alpha_upper, got [{self.lower}, {self.upper}]")

    @classmethod
    def constant(cls, alpha: float) -> 'AlphaSchedule':
        return cls(alpha0=alpha)

    @classmethod
    def geometric(cls, alpha0: float, q: float, lower: Optional[float] = None) -> 'AlphaSchedule':
        return cls(alpha0=alpha0, q=q, lower=lower)

    def __call__(self, k: int) -> float:
        return float(min(max(self.alpha0 * self.q ** k, self.lower), self.upper))

    def to_dict(self) -> Dict:
        return {'alpha0': self.alpha0, 'q': self.q, 'lower': self.lower, 'upper': self.upper}


@dataclass(frozen=True)
class IterationConfig:
    alpha_schedule: AlphaSchedule
    tau: float = DEFAULT_TAU
    delta: float = 0.0
    max_outer: int = DEFAULT_MAX_OUTER
    inner_tol: Optional[float] = None
    inner_max_iter: int = DEFAULT_MAX_ITER
    eta: Optional[float] = None
    gamma: Optional[float] = None
    rho: Optional[float] = None

    def __post_init__(self):
        if not self.tau > 1:
            raise ConfigError(f"tau must exceed 1, got {self.tau}")
        if self.delta < 0:
            raise ConfigError(f"delta must be nonnegative, got {self.delta}")
        if self.max_outer < 0:
            raise ConfigError(f"max_outer must be nonnegative, got {self.max_outer}")
        threshold = self.tau_threshold()
        if threshold is not None and self.tau <= threshold:
            logger.warning(f"⚠️ tau={self.tau:g} does not exceed (1 + eta*gamma)/(1 - eta*gamma) = {threshold:g}")

    def tau_threshold(self) -> Optional[float]:
        """(1 + eta*gamma)/(1 - eta*gamma), inf when eta*gamma >= 1, None without eta and gamma"""
        if self.eta is None or self.gamma is None:
            return None
        product = self.eta * self.gamma
        if product >= 1:
            return math.inf
        return (1.0 + product) / (1.0 - product)

    def to_dict(self) -> Dict:
        return {
            'alpha_schedule': self.alpha_schedule.to_dict(),
            'tau': self.tau,
            'delta': self.delta,
            'max_outer': self.max_outer,
            'inner_tol': self.inner_tol,
            'eta': self.eta,
            'gamma': self.gamma,
            'rho': self.rho,
        }


@dataclass(frozen=True)
class IterationRecord:
    """u_k and xi_k, the alpha_k used to leave them, and ||F(u_k) - y||"""
    u: GridFunction
    xi: GridFunction
    alpha: float
    residual: float
    inner_converged: bool = True
    inner_iterations: int = 0


@dataclass
class IterationTrace:
    iterates: List[IterationRecord]
    ydelta: GridFunction
    delta: float
    tau: float
    stop_index: Optional[int] = None
    stop_reason: StopReason = StopReason.MAX_OUTER
    notes: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.iterates)

    @property
    def residuals(self) -> List[float]:
        return [r.residual for r in self.iterates]

    @property
    def alphas(self) -> List[float]:
        return [r.alpha for r in self.iterates]

    @property
    def final(self) -> IterationRecord:
        return self.iterates[-1]

    def stopped_record(self) -> IterationRecord:
        return self.iterates[self.stop_index] if self.stop_index is not None else self.final

    def bregman_to_truth(self, penalty: Penalty, ubar: GridFunction) -> List[float]:
        """D_{xi_k}(ubar, u_k) for every iterate"""
        return [penalty.bregman_distance(r.xi, ubar, r.u).distance for r in self.iterates]

    def to_dict(self, elide_above: int = 256, bregman: Optional[List[float]] = None) -> Dict:
        keep_vectors = self.ydelta.size <= elide_above
        rows = []
        for k, record in enumerate(self.iterates):
            row = {
                'k': k,
                'alpha': record.alpha,
                'residual': record.residual,
                'inner_converged': record.inner_converged,
                'inner_iterations': record.inner_iterations,
            }
            if bregman is not None:
                row['bregman_to_truth'] = bregman[k]
            if keep_vectors:
                row['u'] = record.u.to_list()
                row['xi'] = record.xi.to_list()
            rows.append(row)
        return {
            'delta': self.delta,
            'tau': self.tau,
            'stop_index': self.stop_index,
            'stop_reason': self.stop_reason.value,
            'iterations': len(self.iterates) - 1,
            'vectors_elided': not keep_vectors,
            'notes': list(self.notes),
            'iterates': rows,
        }


def _step(op: ForwardOperator, penalty: Penalty, ydelta: GridFunction, u_k: GridFunction, xi_k: GridFunction,
          alpha_k: float, inner_tol: Optional[float], max_iter: int) -> Tuple[GridFunction, GridFunction, SolveResult]:
    prob = TikhonovProblem(op, penalty, ydelta, alpha_k, BregmanShift(xi_k, u_k))
    result = solve(prob, init=u_k, tol=inner_tol, max_iter=max_iter)
    u_next = result.minimizer
    xi_next = xi_k - op.adjoint_apply(u_next, op.apply(u_next) - ydelta) / alpha_k
    if not result.converged:
        raise InnerFailure(f"inner solve at alpha={alpha_k:g} stopped with kkt={result.kkt_residual:.3g}",
                           result=result, xi=xi_next)
    return u_next, xi_next, result


def step(op: ForwardOperator, penalty: Penalty, ydelta: GridFunction, u_k: GridFunction, xi_k: GridFunction,
         alpha_k: float, inner_tol: Optional[float] = None,
         max_iter: int = DEFAULT_MAX_ITER) -> Tuple[GridFunction, GridFunction]:
    """One outer step; raises InnerFailure carrying the unconverged solve"""
    u_next, xi_next, _ = _step(op, penalty, ydelta, u_k, xi_k, alpha_k, inner_tol, max_iter)
    return u_next, xi_next


def default_start(op: ForwardOperator, penalty: Penalty) -> GridFunction:
    zero = GridFunction.zeros(op.domain_dim, op.spacing)
    if penalty.in_domain(zero):
        return zero
    return GridFunction.constant(op.domain_dim, 1.0, op.spacing)


def run(op: ForwardOperator, penalty: Penalty, ydelta: GridFunction, config: IterationConfig,
        u_0: Optional[GridFunction] = None, xi_0: Optional[GridFunction] = None,
        delta: Optional[float] = None) -> IterationTrace:
    """
    Iterate until ||F(u_k) - y|| <= tau * delta (delta > 0), the residual
    reaches the exact-data floor (delta = 0), or max_outer steps were taken.
    An inner failure ends the run; the unconverged iterate is kept.
    """
    delta = config.delta if delta is None else float(delta)
    if delta < 0:
        raise ConfigError(f"delta must be nonnegative, got {delta}")
    u = u_0 if u_0 is not None else default_start(op, penalty)
    xi = xi_0 if xi_0 is not None else penalty.subgradient(u)
    if not penalty.contains_subgradient(u, xi, tol=1e-8):
        logger.warning("⚠️ xi_0 does not look like an element of dh(u_0)")

    residual = (op.apply(u) - ydelta).norm()
    iterates = [IterationRecord(u, xi, config.alpha_schedule(0), residual)]
    trace = IterationTrace(iterates, ydelta, delta, config.tau)
    threshold = config.tau * delta if delta > 0 else EXACT_RESIDUAL_FLOOR

    k = 0
    while True:
        if iterates[-1].residual <= threshold:
            trace.stop_index = k
            trace.stop_reason = StopReason.DISCREPANCY
            break
        if k >= config.max_outer:
            trace.stop_reason = StopReason.MAX_OUTER
            break
        alpha = config.alpha_schedule(k)
        try:
            u, xi, result = _step(op, penalty, ydelta, u, xi, alpha, config.inner_tol, config.inner_max_iter)
            converged = True
        except InnerFailure as e:
            u, xi, result = e.result.minimizer, e.xi, e.result
            converged = False
        residual = (op.apply(u) - ydelta).norm()
        k += 1
        iterates.append(IterationRecord(u, xi, config.alpha_schedule(k), residual, converged, result.iterations))
        logger.debug(f"outer step {k}: alpha={alpha:.3g} residual={residual:.6e}")
        if not converged:
            trace.stop_reason = StopReason.INNER_FAILURE
            logger.warning(f"⚠️ inner solve failed at outer step {k}; returning partial trace")
            break

    logger.info(f"🏁 Bregman iteration stopped: {trace.stop_reason.value} after {k} steps "
                f"(residual {iterates[-1].residual:.3e}, delta {delta:.3g})")
    return trace


def closed_form_subgradient(trace: IterationTrace, xi_0: GridFunction, op: ForwardOperator,
                            k: Optional[int] = None) -> GridFunction:
    """xi_k = xi_0 - sum_{j<k} (1/alpha_j) F'(u_{j+1})* (F(u_{j+1}) - y), default k = last"""
    k = len(trace.iterates) - 1 if k is None else k
    xi = xi_0
    for j in range(k):
        u_next = trace.iterates[j + 1].u
        xi = xi - op.adjoint_apply(u_next, op.apply(u_next) - trace.ydelta) / trace.iterates[j].alpha
    return xi


def monotonicity_violations(trace: IterationTrace, slack: float = MONOTONE_SLACK) -> List[int]:
    """Indices k with residual_{k+1} > residual_k + slack"""
    residuals = trace.residuals
    return [k for k in range(len(residuals) - 1) if residuals[k + 1] > residuals[k] + slack]


def _three_point_terms(trace: IterationTrace, penalty: Penalty, ubar: GridFunction, k: int) -> Tuple[float, float, float]:
    current, following = trace.iterates[k], trace.iterates[k + 1]
    d_next = penalty.bregman_distance(following.xi, ubar, following.u).distance
    d_now = penalty.bregman_distance(current.xi, ubar, current.u).distance
    d_step = penalty.bregman_distance(current.xi, following.u, current.u).distance
    return d_next, d_now, d_step


def three_point_check(trace: IterationTrace, penalty: Penalty, ubar: GridFunction, c: float,
                      op: Optional[ForwardOperator] = None) -> List[bool]:
    """
    Per step: D(ubar, u_{k+1}) - D(ubar, u_k) + D(u_{k+1}, u_k) <= -((1 - c)/alpha_k) ||y - F(u_{k+1})||^2.
    The residual of u_{k+1} is taken from the trace unless op is given.
    """
    if not 0 <= c < 1:
        raise ValueError(f"c must lie in [0, 1), got {c}")
    checks = []
    for k in range(len(trace.iterates) - 1):
        d_next, d_now, d_step = _three_point_terms(trace, penalty, ubar, k)
        following = trace.iterates[k + 1]
        residual = following.residual if op is None else (op.apply(following.u) - trace.ydelta).norm()
        bound = -((1.0 - c) / trace.iterates[k].alpha) * residual ** 2
        checks.append(d_next - d_now + d_step <= bound + THREE_POINT_SLACK)
    return checks


def three_point_identity_gaps(trace: IterationTrace, penalty: Penalty, ubar: GridFunction) -> List[float]:
    """Relative gaps of D(ubar,u_{k+1}) - D(ubar,u_k) + D(u_{k+1},u_k) = <xi_{k+1} - xi_k, u_{k+1} - ubar>"""
    gaps = []
    for k in range(len(trace.iterates) - 1):
        d_next, d_now, d_step = _three_point_terms(trace, penalty, ubar, k)
        current, following = trace.iterates[k], trace.iterates[k + 1]
        rhs = (following.xi - current.xi).inner(following.u - ubar)
        scale = max(1.0, abs(d_next), abs(d_now), abs(d_step), abs(rhs), abs(penalty.evaluate(ubar)),
                    abs(penalty.evaluate(current.u)), abs(penalty.evaluate(following.u)))
        gaps.append(abs(d_next - d_now + d_step - rhs) / scale)
    return gaps


def summability_check(trace: IterationTrace) -> float:
    """sum over i < k* - 1 of (1/alpha_i) ||y - F(u_{i+1})||^2; all steps when the run did not stop"""
    last = trace.stop_index - 1 if trace.stop_index is not None else len(trace.iterates) - 1
    return float(sum(trace.iterates[i + 1].residual ** 2 / trace.iterates[i].alpha for i in range(max(last, 0))))


def summability_bound(gamma: float, c: float) -> float:
    """gamma^2 / (8 (1 - c))"""
    if not c < 1:
        return math.inf
    return gamma ** 2 / (8.0 * (1.0 - c))


def stability_constant(tau: float, eta: float, gamma: float) -> float:
    """c = (1 + eta*gamma)/tau + eta*gamma"""
    return (1.0 + eta * gamma) / tau + eta * gamma


def stop_index_bound(gamma: float, tau: float, delta: float, alpha_upper: float, c: float) -> float:
    """(gamma/(tau*delta))^2 * alpha_upper / (8 (1 - c)) + 1"""
    if delta <= 0 or not c < 1:
        return math.inf
    return (gamma / (tau * delta)) ** 2 * alpha_upper / (8.0 * (1.0 - c)) + 1.0


def check_hypotheses(config: IterationConfig, penalty: Penalty, ubar: Optional[GridFunction] = None,
                     u0: Optional[GridFunction] = None, xi0: Optional[GridFunction] = None) -> List[str]:
    """Flags for every stability hypothesis that is known to fail"""
    flags = []
    eta, gamma, rho = config.eta, config.gamma, config.rho
    if gamma is not None and eta is not None and rho is not None:
        limit = min(1.0 / eta if eta > 0 else math.inf, rho / 2.0)
        if gamma >= limit:
            flags.append(f"gamma={gamma:g} >= min(1/eta, rho/2)={limit:g}")
    if gamma is not None and ubar is not None and u0 is not None and xi0 is not None:
        distance = penalty.bregman_distance(xi0, ubar, u0).distance
        if distance >= gamma ** 2 / 8.0:
            flags.append(f"D_xi0(ubar, u0)={distance:.4g} >= gamma^2/8={gamma ** 2 / 8.0:.4g}")
    threshold = config.tau_threshold()
    if threshold is not None and config.tau <= threshold:
        flags.append(f"tau={config.tau:g} <= (1 + eta*gamma)/(1 - eta*gamma)={threshold:g}")
    if gamma is not None and config.delta > 0:
        delta_bar = math.sqrt(0.75 * gamma ** 2 * config.alpha_schedule.lower)
        if config.delta >= delta_bar:
            flags.append(f"delta={config.delta:g} >= sqrt(3/4 gamma^2 alpha_lower)={delta_bar:.4g}")
    for flag in flags:
        logger.warning(f"⚠️ hypothesis flag: {flag}")
    return flags


def exact_residual_bound_holds(trace: IterationTrace, op: ForwardOperator, y: GridFunction) -> bool:
    """||F(u_{k*}) - y|| <= (1 + tau) * delta against exact data y"""
    record = trace.stopped_record()
    return (op.apply(record.u) - y).norm() <= (1.0 + trace.tau) * trace.delta + MONOTONE_SLACK


def subgradient_membership(trace: IterationTrace, penalty: Penalty, samples: int = 50, seed: int = 0,
                           rtol: float = 1e-8) -> List[bool]:
    """Per iterate: h(v) >= h(u_k) + <xi_k, v - u_k> for random v in dom(h)"""
    rng = make_rng(seed)
    verdicts = []
    for record in trace.iterates:
        u, xi = record.u, record.xi
        h_u = penalty.evaluate(u)
        spread = 1.0 + float(np.max(np.abs(u.values)))
        ok = True
        for _ in range(samples):
            scale = spread * 10.0 ** rng.uniform(-3.0, 0.0)
            v = u.like(u.values + scale * rng.standard_normal(u.size))
            if not penalty.in_domain(v):
                continue
            h_v = penalty.evaluate(v)
            if h_v < h_u + xi.inner(v - u) - rtol * (1.0 + abs(h_v) + abs(h_u)):
                ok = False
                break
        verdicts.append(ok)
    return verdicts
