import numpy as np
import pytest

from modules.errors import DimensionMismatch
from modules.grid_function import GridFunction
from modules.operators import (
    AutoconvolutionOperator,
    ConvolutionOperator,
    DiagonalOperator,
    IdentityOperator,
    gaussian_kernel,
    make_rng,
)
from modules.penalty import L1Penalty, NegativeEntropyPenalty, QuadraticPenalty, QuadraticTVPenalty
from modules.problems import add_noise, make_deconvolution, make_diagonal, make_identity, make_tv_denoising
from modules.rates import SourceType, construct_source
from modules.variational_solver import (
    BregmanShift,
    TikhonovProblem,
    default_tolerance,
    objective,
    solve,
    solve_closed_form,
)


def grid(*values, spacing=1.0):
    return GridFunction(np.array(values, dtype=float), spacing)


def test_objective_hand_values():
    op = IdentityOperator(1)
    assert objective(TikhonovProblem(op, QuadraticPenalty(), grid(0.0), 1.0), grid(0.0)) == 0.0
    assert objective(TikhonovProblem(op, QuadraticPenalty(), grid(2.0), 1.0), grid(1.0)) == pytest.approx(1.0)


def test_objective_with_shift_at_base_point_is_misfit():
    op = DiagonalOperator([1.0, 0.5])
    u_k = grid(0.3, -1.2)
    prob = TikhonovProblem(op, QuadraticPenalty(), grid(1.0, 1.0), 0.5, BregmanShift(u_k, u_k))
    expected = 0.5 * (op.apply(u_k) - grid(1.0, 1.0)).norm() ** 2
    assert objective(prob, u_k) == pytest.approx(expected, rel=1e-15)


def test_problem_validation():
    op = IdentityOperator(2)
    with pytest.raises(ValueError):
        TikhonovProblem(op, QuadraticPenalty(), grid(1.0, 0.0), 0.0)
    with pytest.raises(DimensionMismatch):
        TikhonovProblem(op, QuadraticPenalty(), grid(1.0), 1.0)


def test_identity_quadratic_solve():
    prob = TikhonovProblem(IdentityOperator(2), QuadraticPenalty(), grid(1.0, 0.0), 1.0)
    result = solve(prob)
    assert result.converged
    np.testing.assert_allclose(result.minimizer.values, [0.5, 0.0], atol=1e-9)


def test_identity_l1_solve_is_soft_thresholding():
    prob = TikhonovProblem(IdentityOperator(2), L1Penalty(), grid(3.0, -0.5), 1.0)
    result = solve(prob)
    assert result.converged
    np.testing.assert_allclose(result.minimizer.values, [2.0, 0.0], atol=1e-9)


def test_diagonal_matches_closed_form():
    op = DiagonalOperator([1.0, 0.5, 0.25])
    y = op.apply(grid(1.0, 1.0, 1.0))
    prob = TikhonovProblem(op, QuadraticPenalty(), y, 0.1)
    result = solve(prob, tol=1e-12)
    oracle = solve_closed_form(op, 0.1, y)
    np.testing.assert_allclose(result.minimizer.values, oracle.values, rtol=1e-8)


@pytest.mark.parametrize('alpha', [1.0, 1e-2, 1e-4])
@pytest.mark.parametrize('builder', ['diagonal', 'deconvolution'])
def test_solver_matches_normal_equations(alpha, builder):
    if builder == 'diagonal':
        problem = make_diagonal(16, 0.7)
    else:
        problem = make_deconvolution(16, 0.05, penalty_kind='quadratic')
    op, y = problem.op, problem.y_exact
    prob = TikhonovProblem(op, QuadraticPenalty(), y, alpha)
    result = solve(prob, tol=1e-13 * (1.0 + op.adjoint_apply(y, y).norm()))
    oracle = solve_closed_form(op, alpha, y)
    assert result.converged
    assert (result.minimizer - oracle).norm() / oracle.norm() <= 1e-7


@pytest.mark.parametrize('alpha', [1e-2, 1e-4])
def test_default_tolerance_is_accurate_at_small_alpha(alpha):
    problem = make_diagonal(16, 0.7)
    op, y = problem.op, problem.y_exact
    prob = TikhonovProblem(op, QuadraticPenalty(), y, alpha)
    assert default_tolerance(prob) <= 1e-9 * alpha * (1.0 + op.adjoint_apply(y, y).norm()) * (1.0 + 1e-12)
    result = solve(prob)
    oracle = solve_closed_form(op, alpha, y)
    assert result.converged
    assert (result.minimizer - oracle).norm() / oracle.norm() <= 1e-7


def test_default_tolerance_has_a_floor():
    problem = make_diagonal(4, 0.7)
    prob = TikhonovProblem(problem.op, QuadraticPenalty(), problem.y_exact, 1e-12)
    scale = 1.0 + problem.op.adjoint_apply(problem.y_exact, problem.y_exact).norm()
    assert default_tolerance(prob) == pytest.approx(1e-14 * scale)


def test_rounding_level_rises_do_not_stall_momentum():
    problem = make_diagonal(16, 0.7)
    op, y = problem.op, problem.y_exact
    prob = TikhonovProblem(op, QuadraticPenalty(), y, 1e-4)
    result = solve(prob, tol=1e-13 * (1.0 + op.adjoint_apply(y, y).norm()))
    assert result.converged
    assert result.iterations < 20000
    history = np.array(result.history)
    assert np.all(np.diff(history) <= 1e-12 * (1.0 + np.abs(history[:-1])))


CONVEX_PROBLEMS = [
    lambda: make_identity([1.0, -0.5, 0.25, 2.0], spacing=0.25),
    lambda: make_diagonal(16, 0.7),
    lambda: make_deconvolution(16, 0.05),
    lambda: make_tv_denoising(16, tv_weight=0.5),
]


@pytest.mark.parametrize('build', CONVEX_PROBLEMS)
def test_minimizer_beats_random_perturbations(build):
    problem = build()
    ydelta = add_noise(problem.y_exact, 1e-2, seed=2)
    prob = TikhonovProblem(problem.op, problem.penalty, ydelta, 0.05)
    result = solve(prob)
    assert result.converged
    u = result.minimizer
    j_u = objective(prob, u)
    rng = make_rng(5)
    for _ in range(100):
        v = u.like(rng.standard_normal(u.size))
        v = (rng.uniform(0.0, 0.1) / v.norm()) * v
        j_v = objective(prob, u + v)
        assert j_u <= j_v + 1e-9 * (1.0 + abs(j_v))


@pytest.mark.parametrize('build', [CONVEX_PROBLEMS[1], CONVEX_PROBLEMS[3]])
def test_penalty_value_does_not_grow_with_alpha(build):
    problem = build()
    ydelta = add_noise(problem.y_exact, 1e-2, seed=4)
    values = [problem.penalty.evaluate(solve(TikhonovProblem(problem.op, problem.penalty, ydelta, alpha)).minimizer)
              for alpha in np.geomspace(1e-3, 1.0, 8)]
    for smaller, larger in zip(values, values[1:]):
        assert larger <= smaller + 1e-8 * (1.0 + abs(smaller))


def test_penalty_value_does_not_grow_with_alpha_closed_form():
    problem = make_diagonal(16, 0.7)
    ydelta = add_noise(problem.y_exact, 1e-2, seed=4)
    values = [QuadraticPenalty().evaluate(solve_closed_form(problem.op, alpha, ydelta))
              for alpha in np.geomspace(1e-4, 10.0, 12)]
    assert all(larger <= smaller * (1.0 + 1e-12) for smaller, larger in zip(values, values[1:]))
    assert values[-1] < values[0]


def test_closed_form_identity():
    np.testing.assert_allclose(solve_closed_form(IdentityOperator(1), 1.0, grid(2.0)).values, [1.0])


def test_closed_form_convolution_dense_oracle():
    n, h = 16, 1.0 / 16
    op = ConvolutionOperator(gaussian_kernel(0.08, h, n), n, h)
    y = GridFunction(make_rng(0).standard_normal(n), h)
    matrix = op.derivative_matrix()
    dense = np.linalg.solve(matrix.T @ matrix + 0.01 * np.eye(n), matrix.T @ y.values)
    np.testing.assert_allclose(solve_closed_form(op, 0.01, y).values, dense, rtol=1e-10, atol=1e-12)


def test_closed_form_needs_linear_operator():
    with pytest.raises(ValueError):
        solve_closed_form(AutoconvolutionOperator(4), 1.0, grid(1.0, 1.0, 1.0, 1.0))


def test_non_convergence_is_reported_not_raised():
    problem = make_diagonal(16, 0.7)
    prob = TikhonovProblem(problem.op, QuadraticPenalty(), problem.y_exact, 1e-6)
    result = solve(prob, tol=1e-15, max_iter=3)
    assert not result.converged
    assert result.iterations == 3


def test_kkt_residual_small_at_convergence():
    problem = make_deconvolution(32, 0.04)
    noisy = problem.y_exact
    prob = TikhonovProblem(problem.op, problem.penalty, noisy, 1e-3)
    result = solve(prob)
    assert result.converged
    assert result.kkt_residual <= 1e-9 * (1.0 + problem.op.adjoint_apply(noisy, noisy).norm())
    assert problem.penalty.contains_subgradient(result.minimizer, result.subgradient, tol=1e-6)


def test_objective_history_is_not_increasing_after_restarts():
    problem = make_deconvolution(32, 0.04)
    prob = TikhonovProblem(problem.op, QuadraticTVPenalty(0.02), problem.y_exact, 1e-2)
    result = solve(prob)
    history = np.array(result.history)
    assert np.all(np.diff(history) <= 1e-12 * (1.0 + np.abs(history[:-1])))


def test_entropy_solve_stays_positive():
    n, h = 16, 1.0 / 16
    op = DiagonalOperator(0.8 ** np.arange(n), h)
    ubar = GridFunction(1.0 + 0.5 * np.cos(np.pi * (np.arange(n) + 0.5) * h), h)
    prob = TikhonovProblem(op, NegativeEntropyPenalty(), op.apply(ubar), 1e-2)
    result = solve(prob)
    assert result.converged
    assert result.minimizer.values.min() > 0


def test_gauss_newton_on_autoconvolution():
    n, h = 16, 1.0 / 16
    op = AutoconvolutionOperator(n, h)
    source = construct_source(op, QuadraticPenalty(), SourceType.TYPE_I, omega=GridFunction(np.ones(n), h))
    ubar = source.ubar
    y = op.apply(ubar)
    prob = TikhonovProblem(op, QuadraticPenalty(), y, 1e-3)
    result = solve(prob, init=ubar)
    assert result.converged
    assert result.outer_iterations >= 1
    gradient = op.adjoint_apply(result.minimizer, op.apply(result.minimizer) - y) + 1e-3 * result.minimizer
    assert gradient.norm() <= 1e-8
