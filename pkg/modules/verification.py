"""
Verification - structural check suites for penalties, operators and problems
Each check reports the measured quantity next to its threshold.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from modules.grid_function import GridFunction
from modules.operators import (
    AutoconvolutionOperator,
    ForwardOperator,
    adjoint_test,
    linearity_defect,
    make_rng,
    reflection_defect,
    taylor_test,
)
from modules.penalty import L1Penalty, NegativeEntropyPenalty, Penalty, QuadraticPenalty, QuadraticTVPenalty
from modules.problems import ProblemSpec
from modules.variational_solver import TikhonovProblem, solve, solve_closed_form

logger = logging.getLogger(__name__)

BREGMAN_ATOL = 1e-12
ADJOINT_TOL = 1e-10
LINEARITY_TOL = 1e-12
REFLECTION_TOL = 1e-12
TAYLOR_BAND = (1.9, 2.1)
ORACLE_RTOL = 1e-7
PROX_SAMPLES = 100


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ''

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'passed': self.passed,
            'measured': self.measured,
            'threshold': self.threshold,
            'detail': self.detail,
        }


def random_point(penalty: Penalty, rng: np.random.Generator, n: int, spacing: float) -> GridFunction:
    """Random element of dom(h), with kinks for the nonsmooth kinds"""
    if isinstance(penalty, NegativeEntropyPenalty):
        return GridFunction(np.exp(rng.standard_normal(n)), spacing)
    values = 2.0 * rng.standard_normal(n)
    if isinstance(penalty, L1Penalty):
        values[rng.uniform(size=n) < 0.2] = 0.0
    elif isinstance(penalty, QuadraticTVPenalty):
        values = np.round(values * 2.0) / 2.0
    return GridFunction(values, spacing)


def penalty_suite(penalty: Penalty, n: int = 16, spacing: float = 1.0 / 16, cases: int = 1000,
                  seed: int = 0) -> List[CheckResult]:
    rng = make_rng(seed)
    worst_negative = 0.0
    worst_self = 0.0
    worst_quadratic = 0.0
    worst_lower = -math.inf
    for _ in range(cases):
        u = random_point(penalty, rng, n, spacing)
        v = random_point(penalty, rng, n, spacing)
        xi = penalty.subgradient(u)
        distance = penalty.bregman_distance(xi, v, u).distance
        half_gap = 0.5 * (v - u).norm() ** 2
        worst_negative = min(worst_negative, distance)
        worst_self = max(worst_self, abs(penalty.bregman_distance(xi, u, u).distance))
        worst_quadratic = max(worst_quadratic, abs(distance - half_gap) / max(1.0, half_gap))
        worst_lower = max(worst_lower, half_gap - distance)

    checks = [
        CheckResult('bregman_nonnegative', worst_negative >= -BREGMAN_ATOL, worst_negative, -BREGMAN_ATOL),
        CheckResult('bregman_vanishes_on_diagonal', worst_self <= BREGMAN_ATOL, worst_self, BREGMAN_ATOL),
    ]
    if isinstance(penalty, QuadraticPenalty):
        checks.append(CheckResult('quadratic_identity', worst_quadratic <= BREGMAN_ATOL, worst_quadratic,
                                  BREGMAN_ATOL))
    if isinstance(penalty, (QuadraticPenalty, QuadraticTVPenalty)):
        checks.append(CheckResult('quadratic_lower_bound', worst_lower <= BREGMAN_ATOL, worst_lower, BREGMAN_ATOL))
    checks.append(_prox_check(penalty, rng, n, spacing))
    return checks


def _prox_check(penalty: Penalty, rng: np.random.Generator, n: int, spacing: float) -> CheckResult:
    """(z - prox(z))/t must be a subgradient at prox(z)"""
    worst = 0.0
    members = True
    for _ in range(20):
        z = random_point(penalty, rng, n, spacing)
        t = float(rng.uniform(0.1, 2.0))
        x = penalty.prox(t, z)
        xi = (z - x) / t
        members = members and penalty.contains_subgradient(x, xi, tol=1e-8)
        h_x = penalty.evaluate(x)
        for _ in range(PROX_SAMPLES // 20):
            v = random_point(penalty, rng, n, spacing)
            worst = min(worst, penalty.evaluate(v) - h_x - xi.inner(v - x))
    passed = members and worst >= -1e-10
    return CheckResult('prox_optimality', passed, worst, -1e-10, '' if members else 'membership test failed')


def operator_suite(op: ForwardOperator, base: GridFunction, trials: int = 100, seed: int = 0) -> List[CheckResult]:
    gap = adjoint_test(op, base, trials, seed)
    checks = [CheckResult('adjoint_test', gap <= ADJOINT_TOL, gap, ADJOINT_TOL)]

    rng = make_rng(seed + 1)
    du = base.like(rng.standard_normal(op.domain_dim))
    du = du / du.norm()
    slope = taylor_test(op, base, du)
    if op.is_linear:
        checks.append(CheckResult('taylor_exactly_linear', math.isinf(slope), slope, math.inf))
        defect = linearity_defect(op, trials=20, seed=seed)
        checks.append(CheckResult('linearity', defect <= LINEARITY_TOL, defect, LINEARITY_TOL))
    else:
        low, high = TAYLOR_BAND
        checks.append(CheckResult('taylor_slope', low <= slope <= high, slope, 2.0, f'band [{low}, {high}]'))
    if isinstance(op, AutoconvolutionOperator):
        defect = reflection_defect(op, base, trials, seed)
        checks.append(CheckResult('reflection_symmetry', defect <= REFLECTION_TOL, defect, REFLECTION_TOL))
    return checks


def solver_oracle_check(op: ForwardOperator, ydelta: GridFunction, alpha: float = 1e-2) -> CheckResult:
    prob = TikhonovProblem(op, QuadraticPenalty(), ydelta, alpha)
    result = solve(prob, tol=1e-13 * (1.0 + op.adjoint_apply(ydelta, ydelta).norm()))
    oracle = solve_closed_form(op, alpha, ydelta)
    error = (result.minimizer - oracle).norm() / max(oracle.norm(), 1e-300)
    return CheckResult('solver_matches_normal_equations', error <= ORACLE_RTOL, error, ORACLE_RTOL,
                       f'alpha={alpha:g}')


def run_verification(problem: ProblemSpec, seed: int = 0, cases: int = 1000, trials: int = 100) -> Dict:
    """All checks for a configured problem; 'passed' is true iff every check passed"""
    consistency = problem.consistency_gap()
    checks = [CheckResult('problem_consistency', consistency <= 1e-12, consistency, 1e-12)]
    checks += penalty_suite(problem.penalty, problem.grid_n, problem.spacing, cases, seed)
    checks += operator_suite(problem.op, problem.ubar_true, trials, seed)
    if problem.op.is_linear and isinstance(problem.penalty, QuadraticPenalty):
        checks.append(solver_oracle_check(problem.op, problem.y_exact))

    for check in checks:
        if check.passed:
            logger.info(f"✅ {check.name}: {check.measured:.3e}")
        else:
            logger.warning(f"❌ {check.name}: {check.measured:.3e} (threshold {check.threshold:.3e}) "
                           f"{check.detail}")
    return {
        'problem': problem.to_dict(),
        'checks': [c.to_dict() for c in checks],
        'passed': all(c.passed for c in checks),
    }
