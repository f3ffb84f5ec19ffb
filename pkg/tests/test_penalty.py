import math

import numpy as np
import pytest

from modules.errors import ConfigError, DomainViolation, NotInvertible, NotSmooth
from modules.grid_function import GridFunction
from modules.operators import make_rng
from modules.penalty import (
    L1Penalty,
    NegativeEntropyPenalty,
    QuadraticPenalty,
    QuadraticTVPenalty,
    make_penalty,
    tv_certificate_holds,
    tv_denoise,
)
from modules.verification import penalty_suite

ALL_PENALTIES = [QuadraticPenalty(), L1Penalty(), NegativeEntropyPenalty(), QuadraticTVPenalty(tv_weight=0.7)]


def grid(*values, spacing=1.0):
    return GridFunction(np.array(values, dtype=float), spacing)


@pytest.mark.parametrize('penalty, values, expected', [
    (QuadraticPenalty(), (0.0, 0.0, 0.0), 0.0),
    (QuadraticPenalty(), (2.0,), 2.0),
    (QuadraticTVPenalty(), (1.0, 3.0), 7.0),
    (L1Penalty(), (2.0, -1.0), 3.0),
    (NegativeEntropyPenalty(), (1.0, math.e), math.e),
])
def test_evaluate_hand_values(penalty, values, expected):
    assert penalty.evaluate(grid(*values)) == pytest.approx(expected, rel=1e-14)


def test_evaluate_is_spacing_weighted():
    assert QuadraticPenalty().evaluate(grid(2.0, 2.0, spacing=0.25)) == pytest.approx(1.0)


def test_entropy_outside_domain_raises():
    with pytest.raises(DomainViolation):
        NegativeEntropyPenalty().evaluate(grid(0.5, -1.0))


@pytest.mark.parametrize('penalty, values, expected', [
    (QuadraticPenalty(), (1.0, -2.0), (1.0, -2.0)),
    (L1Penalty(), (2.0, 0.0, -3.0), (1.0, 0.0, -1.0)),
    (NegativeEntropyPenalty(), (1.0, math.e), (1.0, 2.0)),
])
def test_subgradient_selection(penalty, values, expected):
    xi = penalty.subgradient(grid(*values))
    np.testing.assert_allclose(xi.values, expected, rtol=1e-14)


def test_tv_subgradient_is_member():
    penalty = QuadraticTVPenalty(tv_weight=2.0)
    u = grid(0.0, 1.0, 1.0, -0.5, 3.0, spacing=0.2)
    assert penalty.contains_subgradient(u, penalty.subgradient(u))


@pytest.mark.parametrize('penalty, xi, v, u, expected', [
    (QuadraticPenalty(), (1.0,), (3.0,), (1.0,), 2.0),
    (L1Penalty(), (1.0, -1.0), (1.0, 1.0), (2.0, -1.0), 2.0),
])
def test_bregman_distance_hand_values(penalty, xi, v, u, expected):
    record = penalty.bregman_distance(grid(*xi), grid(*v), grid(*u))
    assert record.distance == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize('penalty', ALL_PENALTIES, ids=lambda p: p.kind)
def test_bregman_distance_vanishes_on_diagonal(penalty):
    u = grid(0.5, 1.5, 2.0, 0.25, spacing=0.25)
    assert penalty.bregman_distance(penalty.subgradient(u), u, u).distance == 0.0


@pytest.mark.parametrize('penalty', ALL_PENALTIES, ids=lambda p: p.kind)
def test_bregman_property_suite(penalty):
    """1000 randomized cases per penalty kind at tolerance 1e-12"""
    checks = penalty_suite(penalty, n=16, spacing=1.0 / 16, cases=1000, seed=0)
    failed = [c for c in checks if not c.passed]
    assert not failed, failed


def test_quadratic_tv_bregman_dominates_half_squared_gap():
    penalty = QuadraticTVPenalty(tv_weight=1.0)
    rng = make_rng(5)
    for _ in range(200):
        u = GridFunction(np.round(2.0 * rng.standard_normal(12)), 1.0 / 12)
        v = GridFunction(rng.standard_normal(12), 1.0 / 12)
        distance = penalty.bregman_distance(penalty.subgradient(u), v, u).distance
        assert 0.5 * (v - u).norm() ** 2 <= distance + 1e-12


@pytest.mark.parametrize('penalty, t, z, expected', [
    (QuadraticPenalty(), 1.0, (2.0,), (1.0,)),
    (L1Penalty(), 1.0, (3.0, -0.5), (2.0, 0.0)),
    (QuadraticTVPenalty(), 0.5, (4.0, 4.0, 4.0), (8.0 / 3, 8.0 / 3, 8.0 / 3)),
])
def test_prox_hand_values(penalty, t, z, expected):
    np.testing.assert_allclose(penalty.prox(t, grid(*z)).values, expected, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize('t', [0.0, -1.0])
def test_prox_rejects_nonpositive_step(t):
    with pytest.raises(ValueError):
        QuadraticPenalty().prox(t, grid(1.0))


def test_entropy_prox_solves_optimality_condition():
    penalty = NegativeEntropyPenalty()
    z = grid(0.5, 2.0, 5.0, 40.0, spacing=0.5)
    t = 0.7
    x = penalty.prox(t, z)
    np.testing.assert_allclose(x.values + t * (1.0 + np.log(x.values)), z.values, rtol=1e-12)


def test_entropy_prox_respects_floor():
    penalty = NegativeEntropyPenalty(floor=1e-6)
    x = penalty.prox(0.1, grid(-50.0, 1.0))
    assert x.values.min() >= 1e-6


def test_quadratic_tv_prox_flattens_small_jumps():
    penalty = QuadraticTVPenalty(tv_weight=1.0)
    z = grid(1.0, 1.1, 0.9, 1.0)
    x = penalty.prox(1.0, z)
    assert x.total_variation() < 1e-12
    assert x.values[0] == pytest.approx(z.values.mean() / 2.0)


def test_tv_denoise_satisfies_certificate():
    rng = make_rng(11)
    y = np.concatenate([np.zeros(20), np.ones(20), 0.3 * np.ones(20)]) + 0.1 * rng.standard_normal(60)
    x = tv_denoise(y, 0.4)
    assert tv_certificate_holds(y, x, 0.4)
    assert np.sum(np.abs(np.diff(x))) <= np.sum(np.abs(np.diff(y)))


def test_tv_denoise_zero_weight_is_identity():
    y = np.array([3.0, -1.0, 2.0])
    np.testing.assert_array_equal(tv_denoise(y, 0.0), y)


def test_invert_subgradient():
    xi = grid(1.0, 2.0)
    np.testing.assert_allclose(QuadraticPenalty().invert_subgradient(xi).values, xi.values)
    np.testing.assert_allclose(NegativeEntropyPenalty().invert_subgradient(xi).values, [1.0, math.e])
    with pytest.raises(NotInvertible):
        L1Penalty().invert_subgradient(xi)


def test_hessian_bound():
    assert QuadraticPenalty().hessian_bound() == 1.0
    assert NegativeEntropyPenalty().hessian_bound(grid(0.5, 2.0), grid(0.25, 1.0)) == pytest.approx(4.0)
    with pytest.raises(NotSmooth):
        QuadraticTVPenalty().hessian_bound()


def test_l1_membership():
    penalty = L1Penalty()
    u = grid(2.0, 0.0, -1.0)
    assert penalty.contains_subgradient(u, grid(1.0, 0.3, -1.0))
    assert not penalty.contains_subgradient(u, grid(1.0, 1.5, -1.0))
    assert not penalty.contains_subgradient(u, grid(0.5, 0.0, -1.0))


@pytest.mark.parametrize('kind, expected', [
    ('Quadratic', QuadraticPenalty),
    ('l1', L1Penalty),
    ('NegativeEntropy', NegativeEntropyPenalty),
    ('entropy', NegativeEntropyPenalty),
    ('QuadraticPlusTV', QuadraticTVPenalty),
    ('quadratic_tv', QuadraticTVPenalty),
])
def test_make_penalty(kind, expected):
    assert isinstance(make_penalty(kind), expected)


def test_make_penalty_errors():
    with pytest.raises(ConfigError):
        make_penalty('huber')
    with pytest.raises(ConfigError):
        make_penalty('quadratic_tv', {'weight': 1.0})
    with pytest.raises(ConfigError):
        make_penalty('quadratic_tv', {'tv_weight': -1.0})
