"""
Operators - forward maps F with derivative and adjoint actions,
plus the numerical checks run against them (adjoint, Taylor, nonlinearity)
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from modules.errors import BregmanError, DegenerateFit, DimensionMismatch, EmptySample
from modules.grid_function import GridFunction, weighted_norm
from modules.penalty import Penalty

logger = logging.getLogger(__name__)

ORACLE_MAX_N = 64
TAYLOR_STEPS = (1e-1, 1e-2, 1e-3, 1e-4)
MACHINE_ZERO = 1e-14


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every seeded draw in the package"""
    return np.random.Generator(np.random.Philox(int(seed)))


GENERATOR_NAME = 'numpy.random.Philox'


@dataclass(frozen=True)
class NonlinearityEstimate:
    c_estimate: float
    eta_estimate: float
    samples: int

    def to_dict(self) -> Dict:
        return {'c_estimate': self.c_estimate, 'eta_estimate': self.eta_estimate, 'samples': self.samples}


class ForwardOperator(ABC):
    """F: R^n -> R^n on a fixed grid; array methods work on raw values"""

    kind = 'ForwardOperator'
    is_linear = False

    def __init__(self, n: int, spacing: float = 1.0):
        if n < 1:
            raise DimensionMismatch(f"operator dimension must be positive, got {n}")
        if not spacing > 0:
            raise DimensionMismatch(f"operator spacing must be positive, got {spacing}")
        self.domain_dim = int(n)
        self.range_dim = int(n)
        self.spacing = float(spacing)

    def apply(self, u: GridFunction) -> GridFunction:
        self._check(u, self.domain_dim)
        return u.like(self._apply(u.values))

    def derivative_apply(self, u: GridFunction, du: GridFunction) -> GridFunction:
        self._check(u, self.domain_dim)
        self._check(du, self.domain_dim)
        return du.like(self._derivative(u.values, du.values))

    def adjoint_apply(self, u: GridFunction, w: GridFunction) -> GridFunction:
        self._check(u, self.domain_dim)
        self._check(w, self.range_dim)
        return w.like(self._adjoint(u.values, w.values))

    def derivative_matrix(self, u: Optional[GridFunction] = None) -> np.ndarray:
        """Dense F'(u), assembled column by column"""
        base = self._base_values(u)
        eye = np.eye(self.domain_dim)
        return np.column_stack([self._derivative(base, eye[j]) for j in range(self.domain_dim)])

    def adjoint_matrix(self, u: Optional[GridFunction] = None) -> np.ndarray:
        base = self._base_values(u)
        eye = np.eye(self.range_dim)
        return np.column_stack([self._adjoint(base, eye[j]) for j in range(self.range_dim)])

    def norm_estimate(self, u: Optional[GridFunction] = None, iterations: int = 100, seed: int = 0) -> float:
        """||F'(u)|| by power iteration on F'(u)* F'(u)"""
        base = self._base_values(u)
        x = make_rng(seed).standard_normal(self.domain_dim)
        x /= np.linalg.norm(x)
        estimate = 0.0
        for _ in range(iterations):
            y = self._adjoint(base, self._derivative(base, x))
            size = float(np.linalg.norm(y))
            if size == 0.0:
                return 0.0
            x = y / size
            if abs(size - estimate) <= 1e-13 * size:
                estimate = size
                break
            estimate = size
        return math.sqrt(estimate)

    def to_dict(self) -> Dict:
        return {'kind': self.kind, 'n': self.domain_dim, 'spacing': self.spacing}

    def __repr__(self) -> str:
        return f'{self.kind}(n={self.domain_dim}, spacing={self.spacing:g})'

    def _check(self, g: GridFunction, dim: int) -> None:
        if g.size != dim:
            raise DimensionMismatch(f"{self.kind} expects {dim} values, got {g.size}")
        if g.spacing != self.spacing:
            raise DimensionMismatch(f"{self.kind} lives on spacing {self.spacing:g}, got {g.spacing:g}")

    def _base_values(self, u: Optional[GridFunction]) -> np.ndarray:
        if u is None:
            if not self.is_linear:
                raise ValueError(f"{self.kind} needs a base point for its derivative")
            return np.zeros(self.domain_dim)
        self._check(u, self.domain_dim)
        return u.values

    @abstractmethod
    def _apply(self, u: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _derivative(self, u: np.ndarray, du: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _adjoint(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        ...


class LinearOperator(ForwardOperator):
    """Linear F; the derivative is F itself at every base point"""

    is_linear = True

    def _derivative(self, u, du):
        return self._apply(du)

    def _adjoint(self, u, w):
        return self._transpose(w)

    @abstractmethod
    def _transpose(self, w: np.ndarray) -> np.ndarray:
        ...

    def _validate_adjoint(self) -> None:
        if self.domain_dim > ORACLE_MAX_N:
            return
        forward = self.derivative_matrix()
        adjoint = self.adjoint_matrix()
        gap = float(np.max(np.abs(adjoint - forward.T)))
        scale = 1.0 + float(np.max(np.abs(forward)))
        if gap > 1e-12 * scale:
            raise BregmanError(f"{self.kind}: closed-form adjoint disagrees with dense transpose (gap {gap:.3g})")
        logger.debug(f"{self.kind} adjoint matches dense transpose (gap {gap:.2e})")


class IdentityOperator(LinearOperator):
    kind = 'IdentityLinear'

    def __init__(self, n: int, spacing: float = 1.0):
        super().__init__(n, spacing)
        self._validate_adjoint()

    def _apply(self, u):
        return u.copy()

    def _transpose(self, w):
        return w.copy()

    def norm_estimate(self, u=None, iterations=100, seed=0):
        return 1.0


class DiagonalOperator(LinearOperator):
    """F u = sigma * u componentwise"""

    kind = 'DiagonalLinear'

    def __init__(self, sigma, spacing: float = 1.0):
        sigma = np.array(sigma, dtype=float)
        if sigma.ndim != 1 or sigma.size == 0:
            raise DimensionMismatch("diagonal operator needs a non-empty 1D sigma")
        super().__init__(sigma.size, spacing)
        sigma.setflags(write=False)
        self.sigma = sigma
        self._validate_adjoint()

    def _apply(self, u):
        return self.sigma * u

    def _transpose(self, w):
        return self.sigma * w

    def norm_estimate(self, u=None, iterations=100, seed=0):
        return float(np.max(np.abs(self.sigma)))

    def to_dict(self):
        out = super().to_dict()
        out['sigma'] = [float(v) for v in self.sigma]
        return out


class ConvolutionOperator(LinearOperator):
    """
    Zero-padded convolution with a centred odd-length kernel,
    spacing-weighted and truncated to the n central outputs
    """

    kind = 'ConvolutionLinear'

    def __init__(self, kernel, n: int, spacing: float = 1.0):
        kernel = np.array(kernel, dtype=float)
        if kernel.ndim != 1 or kernel.size % 2 == 0:
            raise DimensionMismatch(f"convolution kernel must be 1D with odd length, got {kernel.shape}")
        if kernel.size > 2 * n - 1:
            raise DimensionMismatch(f"kernel of length {kernel.size} is wider than the grid allows (n={n})")
        super().__init__(n, spacing)
        kernel.setflags(write=False)
        self.kernel = kernel
        self._centre = (kernel.size - 1) // 2
        self._validate_adjoint()

    def _apply(self, u):
        full = np.convolve(u, self.kernel, mode='full')
        return self.spacing * full[self._centre:self._centre + self.domain_dim]

    def _transpose(self, w):
        full = np.convolve(w, self.kernel[::-1], mode='full')
        start = self.kernel.size - 1 - self._centre
        return self.spacing * full[start:start + self.domain_dim]

    def to_dict(self):
        out = super().to_dict()
        out['kernel_length'] = int(self.kernel.size)
        return out


class AutoconvolutionOperator(ForwardOperator):
    """F(u)_i = spacing * sum_{j<=i} u_j u_{i-j}, the truncated u * u on [0, 1]"""

    kind = 'Autoconvolution'

    def _apply(self, u):
        return self.spacing * np.convolve(u, u, mode='full')[:self.domain_dim]

    def _derivative(self, u, du):
        return 2.0 * self.spacing * np.convolve(u, du, mode='full')[:self.domain_dim]

    def _adjoint(self, u, w):
        n = self.domain_dim
        return 2.0 * self.spacing * np.convolve(w, u[::-1], mode='full')[n - 1:2 * n - 1]


class LinearizedOperator(LinearOperator):
    """du -> F'(base) du for a fixed base point"""

    kind = 'Linearized'

    def __init__(self, op: ForwardOperator, base: GridFunction):
        super().__init__(op.domain_dim, op.spacing)
        op._check(base, op.domain_dim)
        self.op = op
        self.base = base

    def _apply(self, du):
        return self.op._derivative(self.base.values, du)

    def _transpose(self, w):
        return self.op._adjoint(self.base.values, w)

    def to_dict(self):
        return {'kind': self.kind, 'of': self.op.to_dict()}


def gaussian_kernel(width: float, spacing: float, n: int) -> np.ndarray:
    """Sampled Gaussian with spacing * sum(kernel) = 1, half-width capped at n - 1"""
    if not width > 0:
        raise ValueError(f"kernel width must be positive, got {width}")
    half = min(n - 1, int(math.ceil(4.0 * width / spacing)))
    x = spacing * np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (x / width) ** 2)
    return kernel / (spacing * kernel.sum())


def adjoint_test(op: ForwardOperator, u: GridFunction, trials: int = 100, seed: int = 0) -> float:
    """Worst relative gap of <F'(u)du, w> = <du, F'(u)*w> over random pairs"""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = make_rng(seed)
    scale = op.norm_estimate(u) or 1.0
    worst = 0.0
    for _ in range(trials):
        du = u.like(rng.standard_normal(op.domain_dim))
        w = u.like(rng.standard_normal(op.range_dim))
        lhs = op.derivative_apply(u, du).inner(w)
        rhs = du.inner(op.adjoint_apply(u, w))
        worst = max(worst, abs(lhs - rhs) / (du.norm() * w.norm() * scale))
    return worst


def reflection_defect(op: AutoconvolutionOperator, u: GridFunction, trials: int = 100, seed: int = 0) -> float:
    """
    Worst relative failure of the two reflection identities of the truncated autoconvolution:
    F(Ru)_{n-1} = F(u)_{n-1}, and F'(u)* w = R F'(u) R w since F'(u) is lower-triangular Toeplitz.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = make_rng(seed)
    last = op.domain_dim - 1
    scale = op.norm_estimate(u) or 1.0
    worst = 0.0
    for _ in range(trials):
        v = u.like(rng.standard_normal(op.domain_dim))
        direct = op.apply(v).values[last]
        mirrored = op.apply(v.reflected()).values[last]
        worst = max(worst, abs(direct - mirrored) / (op.spacing * float(np.dot(v.values, v.values)) or 1.0))
        w = u.like(rng.standard_normal(op.range_dim))
        adjoint = op.adjoint_apply(u, w)
        flipped = op.derivative_apply(u, w.reflected()).reflected()
        worst = max(worst, (adjoint - flipped).norm() / (w.norm() * scale))
    return worst


def taylor_test(op: ForwardOperator, u: GridFunction, du: GridFunction) -> float:
    """
    Slope of log ||F(u + t du) - F(u) - t F'(u) du|| against log t.
    Returns math.inf when every remainder is at machine zero (F exactly linear along du).
    """
    base = op.apply(u)
    first_order = op.derivative_apply(u, du)
    floor = MACHINE_ZERO * (1.0 + base.norm() + first_order.norm())
    steps, remainders = [], []
    for t in TAYLOR_STEPS:
        remainder = (op.apply(u + t * du) - base - t * first_order).norm()
        if remainder > floor:
            steps.append(t)
            remainders.append(remainder)
    if not steps:
        return math.inf
    if len(steps) < 2:
        raise DegenerateFit(f"only {len(steps)} Taylor remainder above machine zero")
    slope, _ = np.polyfit(np.log(steps), np.log(remainders), 1)
    return float(slope)


def linearity_defect(op: ForwardOperator, trials: int = 20, seed: int = 0) -> float:
    """max ||F(a u + b v) - a F(u) - b F(v)|| / ((|a| ||u|| + |b| ||v||) ||F||)"""
    rng = make_rng(seed)
    n, h = op.domain_dim, op.spacing
    ones = GridFunction(np.ones(n), h)
    scale = op.norm_estimate(ones) or 1.0
    worst = 0.0
    for _ in range(trials):
        u = GridFunction(rng.standard_normal(n), h)
        v = GridFunction(rng.standard_normal(n), h)
        a, b = rng.uniform(-2.0, 2.0, size=2)
        gap = (op.apply(a * u + b * v) - a * op.apply(u) - b * op.apply(v)).norm()
        worst = max(worst, gap / ((abs(a) * u.norm() + abs(b) * v.norm()) * scale))
    return worst


def _ball_point(rng: np.random.Generator, centre: GridFunction, radius: float) -> GridFunction:
    direction = rng.standard_normal(centre.size)
    direction /= weighted_norm(direction, centre.spacing)
    r = radius * rng.uniform() ** (1.0 / centre.size)
    return centre.like(centre.values + r * direction)


def estimate_nonlinearity(op: ForwardOperator, penalty: Penalty, ubar: GridFunction, xi: GridFunction,
                          radius: float, samples: int, seed: int = 0) -> NonlinearityEstimate:
    """
    Empirical constants of the two nonlinearity conditions near ubar:
    c   = max ||F(u) - F(ubar) - F'(ubar)(u - ubar)|| / D_xi(u, ubar)
    eta = max ||F(v) - F(u) - F'(u)(v - u)|| / (||u - v|| ||F(u) - F(v)||)
    Sampling can only falsify these conditions.
    """
    if samples < 1:
        raise EmptySample(f"need at least one sample, got {samples}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if op.is_linear:
        return NonlinearityEstimate(0.0, 0.0, int(samples))

    rng = make_rng(seed)
    f_bar = op.apply(ubar)
    c_estimate = eta_estimate = 0.0
    used = 0
    for _ in range(samples):
        u = _ball_point(rng, ubar, radius)
        v = _ball_point(rng, ubar, radius)
        if not penalty.in_domain(u):
            continue
        used += 1
        distance = penalty.bregman_distance(xi, u, ubar).distance
        f_u = op.apply(u)
        if distance >= MACHINE_ZERO:
            remainder = (f_u - f_bar - op.derivative_apply(ubar, u - ubar)).norm()
            c_estimate = max(c_estimate, remainder / distance)
        if penalty.in_domain(v):
            f_v = op.apply(v)
            denominator = (u - v).norm() * (f_u - f_v).norm()
            if denominator >= MACHINE_ZERO:
                remainder = (f_v - f_u - op.derivative_apply(u, v - u)).norm()
                eta_estimate = max(eta_estimate, remainder / denominator)

    if used == 0:
        raise EmptySample(f"none of {samples} samples within radius {radius:g} lies in dom(h)")
    logger.debug(f"📐 nonlinearity estimate: c={c_estimate:.4g} eta={eta_estimate:.4g} from {used} samples")
    return NonlinearityEstimate(c_estimate, eta_estimate, used)
