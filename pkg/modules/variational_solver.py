"""
Variational Solver - minimizes J(u) = 1/2 ||F(u) - y||^2 + alpha * h(u),
optionally with h replaced by the Bregman distance D_xi(u, u_k)

Linear F: accelerated proximal gradient with backtracking and restart.
Nonlinear F: Gauss-Newton, each linearized subproblem solved by the linear path.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from modules.errors import SingularSystem
from modules.grid_function import GridFunction, weighted_norm
from modules.operators import ForwardOperator, LinearizedOperator
from modules.penalty import Penalty

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 20000
DEFAULT_TOL_FACTOR = 1e-9
GN_MAX_OUTER = 100
GN_MAX_HALVINGS = 60
LIPSCHITZ_FLOOR = 1e-6
TOL_FLOOR_FACTOR = 1e-14
OBJECTIVE_NOISE = 1e-13


@dataclass(frozen=True)
class BregmanShift:
    """Replaces h(u) by D_xi(u, u_k) = h(u) - h(u_k) - <xi, u - u_k>"""
    xi: GridFunction
    u: GridFunction


@dataclass(frozen=True)
class TikhonovProblem:
    op: ForwardOperator
    penalty: Penalty
    ydelta: GridFunction
    alpha: float
    shift: Optional[BregmanShift] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        self.op._check(self.ydelta, self.op.range_dim)
        if self.shift is not None:
            self.op._check(self.shift.xi, self.op.domain_dim)
            self.op._check(self.shift.u, self.op.domain_dim)

    def shift_values(self) -> np.ndarray:
        if self.shift is None:
            return np.zeros(self.op.domain_dim)
        return self.shift.xi.values


@dataclass(frozen=True)
class SolveResult:
    minimizer: GridFunction
    objective_value: float
    iterations: int
    kkt_residual: float
    converged: bool
    subgradient: Optional[GridFunction] = None
    history: Tuple[float, ...] = field(default_factory=tuple)
    outer_iterations: int = 0

    def to_dict(self) -> Dict:
        return {
            'objective_value': self.objective_value,
            'iterations': self.iterations,
            'outer_iterations': self.outer_iterations,
            'kkt_residual': self.kkt_residual,
            'converged': self.converged,
        }


def objective(prob: TikhonovProblem, u: GridFunction) -> float:
    misfit = 0.5 * (prob.op.apply(u) - prob.ydelta).norm() ** 2
    if prob.shift is None:
        return misfit + prob.alpha * prob.penalty.evaluate(u)
    record = prob.penalty.bregman_distance(prob.shift.xi, u, prob.shift.u)
    return misfit + prob.alpha * record.distance


def default_tolerance(prob: TikhonovProblem, init: Optional[GridFunction] = None) -> float:
    """
    1e-9 * min(1, alpha) * (1 + ||F'(init)* y|| + alpha ||xi_shift||), floored at 1e-14 of the same scale.
    For strongly convex penalties the error is at most tol / alpha.
    """
    base = init if init is not None else _default_init(prob)
    scale = 1.0 + prob.op.adjoint_apply(base, prob.ydelta).norm()
    if prob.shift is not None:
        scale += prob.alpha * prob.shift.xi.norm()
    return max(DEFAULT_TOL_FACTOR * min(1.0, prob.alpha), TOL_FLOOR_FACTOR) * scale


def _default_init(prob: TikhonovProblem) -> GridFunction:
    if prob.shift is not None:
        return prob.shift.u
    zero = GridFunction.zeros(prob.op.domain_dim, prob.op.spacing)
    if prob.penalty.in_domain(zero):
        return zero
    return GridFunction.constant(prob.op.domain_dim, 1.0, prob.op.spacing)


def solve(prob: TikhonovProblem, init: Optional[GridFunction] = None, tol: Optional[float] = None,
          max_iter: int = DEFAULT_MAX_ITER) -> SolveResult:
    """
    Minimize the (possibly shifted) Tikhonov functional from init.
    A run that hits max_iter returns its best iterate with converged=False.
    """
    init = init if init is not None else _default_init(prob)
    prob.op._check(init, prob.op.domain_dim)
    prob.penalty.check_domain(init)
    tol = tol if tol is not None else default_tolerance(prob, init)
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")

    if prob.op.is_linear:
        result = _solve_linear(prob, init, tol, max_iter)
    else:
        result = _solve_gauss_newton(prob, init, tol, max_iter)

    if result.converged:
        logger.debug(f"✅ solve converged: alpha={prob.alpha:.3g}, {result.iterations} iterations, "
                     f"kkt={result.kkt_residual:.2e}")
    else:
        logger.warning(f"⚠️ solve did not converge: alpha={prob.alpha:.3g}, {result.iterations} iterations, "
                       f"kkt={result.kkt_residual:.2e} > tol={tol:.2e}")
    return result


def _solve_linear(prob: TikhonovProblem, init: GridFunction, tol: float, max_iter: int) -> SolveResult:
    op, penalty, alpha = prob.op, prob.penalty, prob.alpha
    h = op.spacing
    y = prob.ydelta.values
    xi_shift = prob.shift_values()
    base = init.values

    def gradient(u):
        return op._adjoint(base, op._apply(u) - y) - alpha * xi_shift

    def composite(u):
        r = op._apply(u) - y
        return 0.5 * h * float(np.dot(r, r)) - alpha * h * float(np.dot(xi_shift, u)) + alpha * penalty._evaluate(u, h)

    lipschitz = max(op.norm_estimate(init) ** 2, LIPSCHITZ_FLOOR)
    x = init.values.copy()
    z = x.copy()
    t = 1.0
    f_x = composite(x)
    history: List[float] = [f_x]
    kkt = math.inf
    xi_hat = None
    restarted = False
    converged = False
    iteration = 0

    for iteration in range(1, max_iter + 1):
        g = gradient(z)
        while True:
            x_new = penalty._prox(alpha / lipschitz, z - g / lipschitz, h)
            d = x_new - z
            fd = op._apply(d)
            if float(np.dot(fd, fd)) <= lipschitz * float(np.dot(d, d)) * (1.0 + 1e-10):
                break
            lipschitz *= 2.0

        f_new = composite(x_new)
        if f_new > f_x + OBJECTIVE_NOISE * (1.0 + abs(f_x)) and not restarted:
            # objective went up beyond rounding: drop momentum and retake the step from x
            t = 1.0
            z = x.copy()
            restarted = True
            logger.debug(f"🔄 restart at iteration {iteration} (objective {f_new:.6e} > {f_x:.6e})")
            continue
        restarted = False

        implied = lipschitz * (z - x_new) - g
        kkt = weighted_norm(gradient(x_new) + implied, h)
        xi_hat = implied / alpha

        if float(np.dot(z - x_new, x_new - x)) > 0.0:
            # momentum points uphill
            t = 1.0
            z = x_new.copy()
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x, f_x = x_new, f_new
        history.append(f_x)
        if kkt <= tol:
            converged = True
            break

    minimizer = init.like(x)
    subgradient = init.like(xi_hat) if xi_hat is not None else penalty.subgradient(minimizer)
    return SolveResult(
        minimizer=minimizer,
        objective_value=objective(prob, minimizer),
        iterations=iteration,
        kkt_residual=float(kkt),
        converged=converged,
        subgradient=subgradient,
        history=tuple(history),
        outer_iterations=1,
    )


def _solve_gauss_newton(prob: TikhonovProblem, init: GridFunction, tol: float, max_iter: int) -> SolveResult:
    op, penalty, alpha = prob.op, prob.penalty, prob.alpha
    u = init
    current = objective(prob, u)
    history = [current]
    total_iterations = 0
    kkt = math.inf
    xi_hat = penalty.subgradient(u)
    converged = False
    outer = 0

    for outer in range(1, GN_MAX_OUTER + 1):
        linearized = LinearizedOperator(op, u)
        data = prob.ydelta - op.apply(u) + linearized.apply(u)
        sub = TikhonovProblem(linearized, penalty, data, alpha, prob.shift)
        sub_result = _solve_linear(sub, u, 0.5 * tol, max_iter)
        total_iterations += sub_result.iterations

        step = 1.0
        accepted = None
        for _ in range(GN_MAX_HALVINGS + 1):
            trial = u + step * (sub_result.minimizer - u)
            if penalty.in_domain(trial):
                value = objective(prob, trial)
                if value <= current + 1e-15 * (1.0 + abs(current)):
                    accepted = (trial, value)
                    break
            step *= 0.5
        if accepted is None:
            logger.warning(f"⚠️ Gauss-Newton: no descent after {GN_MAX_HALVINGS} halvings at outer step {outer}")
            break

        u, current = accepted
        history.append(current)
        xi_hat = sub_result.subgradient if step == 1.0 else penalty.subgradient(u)
        gradient = op.adjoint_apply(u, op.apply(u) - prob.ydelta)
        kkt = (gradient + alpha * (xi_hat - u.like(prob.shift_values()))).norm()
        logger.debug(f"Gauss-Newton step {outer}: step={step:g} objective={current:.10e} kkt={kkt:.2e}")
        if kkt <= tol:
            converged = True
            break

    return SolveResult(
        minimizer=u,
        objective_value=current,
        iterations=total_iterations,
        kkt_residual=float(kkt),
        converged=converged,
        subgradient=xi_hat,
        history=tuple(history),
        outer_iterations=outer,
    )


def solve_closed_form(op: ForwardOperator, alpha: float, ydelta: GridFunction) -> GridFunction:
    """Quadratic-penalty minimizer from the normal equations (F*F + alpha I) u = F* y"""
    if not op.is_linear:
        raise ValueError(f"closed form needs a linear operator, got {op.kind}")
    assert alpha > 0, "normal equations are positive definite only for alpha > 0"
    op._check(ydelta, op.range_dim)
    matrix = op.derivative_matrix()
    lhs = matrix.T @ matrix + alpha * np.eye(op.domain_dim)
    rhs = matrix.T @ ydelta.values
    try:
        factor = cho_factor(lhs)
    except LinAlgError as e:
        raise SingularSystem(f"normal equations not positive definite at alpha={alpha:g}: {e}") from e
    return ydelta.like(cho_solve(factor, rhs))
