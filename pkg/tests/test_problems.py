import numpy as np
import pytest

from modules.errors import ConfigError, DimensionMismatch
from modules.grid_function import GridFunction
from modules.operators import ConvolutionOperator, IdentityOperator
from modules.penalty import QuadraticTVPenalty
from modules.problems import (
    add_noise,
    build_problem,
    grid_points,
    make_autoconvolution,
    make_deconvolution,
    make_diagonal,
    make_identity,
    make_tv_denoising,
    profile_values,
)


def test_diagonal_singular_values():
    problem = make_diagonal(3, 0.5)
    np.testing.assert_array_equal(problem.op.sigma, [1.0, 0.5, 0.25])
    assert problem.spacing == pytest.approx(1.0 / 3)


def test_grid_points_are_cell_centres():
    np.testing.assert_allclose(grid_points(4), [0.125, 0.375, 0.625, 0.875])


def test_tv_denoising_data_is_the_signal():
    problem = make_tv_denoising(8, tv_weight=0.3)
    assert isinstance(problem.op, IdentityOperator)
    assert isinstance(problem.penalty, QuadraticTVPenalty)
    np.testing.assert_array_equal(problem.y_exact.values, problem.ubar_true.values)
    np.testing.assert_array_equal(problem.ubar_true.values, [1, 1, 1, 1, 0, 0, 0, 0])


def test_deconvolution_defaults():
    problem = make_deconvolution(32, 0.04)
    assert isinstance(problem.op, ConvolutionOperator)
    assert isinstance(problem.penalty, QuadraticTVPenalty)
    assert problem.ubar_true.total_variation() > 1.0


@pytest.mark.parametrize('problem', [
    make_identity([1.0, 2.0]),
    make_diagonal(16, 0.7),
    make_deconvolution(16, 0.05),
    make_autoconvolution(16),
    make_tv_denoising(16),
], ids=lambda p: p.name)
def test_problems_are_consistent(problem):
    assert problem.consistency_gap() <= 1e-12
    assert problem.to_dict()['name'] == problem.name


@pytest.mark.parametrize('delta', [1e-1, 1e-3, 2.5])
def test_add_noise_hits_level_exactly(delta):
    y = make_diagonal(16, 0.7).y_exact
    noisy = add_noise(y, delta, seed=4)
    assert (noisy - y).norm() == pytest.approx(delta, rel=1e-12)


def test_add_noise_zero_level_returns_data():
    y = GridFunction(np.arange(4.0), 0.25)
    assert add_noise(y, 0.0, seed=1) is y


def test_add_noise_is_deterministic():
    y = GridFunction(np.ones(8), 0.125)
    first = add_noise(y, 0.1, seed=12)
    np.testing.assert_array_equal(first.values, add_noise(y, 0.1, seed=12).values)
    assert not np.array_equal(first.values, add_noise(y, 0.1, seed=13).values)


def test_add_noise_rejects_negative_level():
    with pytest.raises(ValueError):
        add_noise(GridFunction(np.ones(2)), -0.1, seed=0)


def test_profiles():
    np.testing.assert_array_equal(profile_values('decaying', 3), [8.0, 4.0, 2.0])
    np.testing.assert_array_equal(profile_values([1, 2], 2), [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        profile_values([1.0, 2.0, 3.0], 2)
    with pytest.raises(ConfigError):
        profile_values('zigzag', 4)


def test_build_problem():
    problem = build_problem('diagonal', {'n': 8, 'decay_rate': 0.9})
    assert problem.grid_n == 8
    with pytest.raises(ConfigError):
        build_problem('heat_equation')
    with pytest.raises(ConfigError):
        build_problem('diagonal', {'n': 8, 'decay': 0.9})
    with pytest.raises(ConfigError):
        build_problem('diagonal', {'n': 8, 'decay_rate': 1.5})
