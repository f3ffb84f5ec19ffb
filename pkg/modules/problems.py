"""
Problems - desk-scale test problems on [0, 1] with known exact solutions,
and noise generation hitting a prescribed level exactly
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from modules.errors import ConfigError, DegenerateNoise, DimensionMismatch
from modules.grid_function import GridFunction, weighted_norm
from modules.operators import (
    AutoconvolutionOperator,
    ConvolutionOperator,
    DiagonalOperator,
    ForwardOperator,
    IdentityOperator,
    gaussian_kernel,
    make_rng,
)
from modules.penalty import Penalty, make_penalty

logger = logging.getLogger(__name__)

DEFAULT_RATE_N = 64
DEFAULT_TEST_N = 16
MAX_NOISE_RETRIES = 8

Profile = Union[str, Sequence[float]]


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    op: ForwardOperator
    penalty: Penalty
    ubar_true: GridFunction
    y_exact: GridFunction
    grid_n: int
    spacing: float
    params: Dict = field(default_factory=dict)

    def grid(self) -> np.ndarray:
        return grid_points(self.grid_n, self.spacing)

    def consistency_gap(self) -> float:
        return (self.op.apply(self.ubar_true) - self.y_exact).norm()

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'params': dict(self.params),
            'operator': self.op.kind,
            'penalty': self.penalty.to_dict(),
            'grid_n': self.grid_n,
            'spacing': self.spacing,
        }


def grid_points(n: int, spacing: Optional[float] = None) -> np.ndarray:
    """Cell centres (i + 1/2) * spacing"""
    spacing = 1.0 / n if spacing is None else spacing
    return (np.arange(n) + 0.5) * spacing


def _box_ramp(x):
    box = ((x >= 0.2) & (x < 0.45)).astype(float)
    ramp = np.where((x >= 0.55) & (x < 0.9), (x - 0.55) / 0.35, 0.0)
    return box + ramp


PROFILES: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    'smooth': lambda x, i: 1.0 + 0.5 * np.cos(np.pi * x),
    'step': lambda x, i: (x < 0.5).astype(float),
    'box_ramp': lambda x, i: _box_ramp(x),
    'bump': lambda x, i: 0.5 + np.exp(-((x - 0.5) / 0.2) ** 2),
    'ramp': lambda x, i: x + 0.05,
    'ones': lambda x, i: np.ones_like(x),
    'decaying': lambda x, i: 8.0 * 0.5 ** i,
}


def profile_values(profile: Profile, n: int, spacing: Optional[float] = None) -> np.ndarray:
    """Named profile sampled at cell centres, or explicit values of length n"""
    if isinstance(profile, str):
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile '{profile}' (known: {sorted(PROFILES)})")
        return np.asarray(PROFILES[profile](grid_points(n, spacing), np.arange(n)), dtype=float)
    values = np.asarray(profile, dtype=float)
    if values.shape != (n,):
        raise DimensionMismatch(f"profile has {values.size} values, grid has {n}")
    return values


def _spec(name: str, op: ForwardOperator, penalty: Penalty, ubar: GridFunction, params: Dict) -> ProblemSpec:
    penalty.check_domain(ubar)
    spec = ProblemSpec(
        name=name,
        op=op,
        penalty=penalty,
        ubar_true=ubar,
        y_exact=op.apply(ubar),
        grid_n=ubar.size,
        spacing=ubar.spacing,
        params=params,
    )
    logger.debug(f"built problem {name}: {op}, {penalty!r}")
    return spec


def make_identity(signal: Sequence[float], spacing: float = 1.0, penalty_kind: str = 'quadratic',
                  penalty_params: Optional[Dict] = None) -> ProblemSpec:
    ubar = GridFunction(np.asarray(signal, dtype=float), spacing)
    params = {'signal': ubar.to_list(), 'spacing': spacing, 'penalty_kind': penalty_kind}
    return _spec('identity', IdentityOperator(ubar.size, spacing), make_penalty(penalty_kind, penalty_params), ubar, params)


def make_diagonal(n: int, decay_rate: float, penalty_kind: str = 'quadratic', spacing: Optional[float] = None,
                  profile: Profile = 'smooth', penalty_params: Optional[Dict] = None) -> ProblemSpec:
    """sigma_i = decay_rate**i; the condition number is decay_rate**-(n-1)"""
    if n < 2:
        raise ConfigError(f"diagonal problem needs n >= 2, got {n}")
    if not 0 < decay_rate <= 1:
        raise ConfigError(f"decay_rate must lie in (0, 1], got {decay_rate}")
    spacing = 1.0 / n if spacing is None else float(spacing)
    op = DiagonalOperator(decay_rate ** np.arange(n), spacing)
    ubar = GridFunction(profile_values(profile, n, spacing), spacing)
    params = {'n': n, 'decay_rate': decay_rate, 'penalty_kind': penalty_kind, 'spacing': spacing,
              'profile': profile if isinstance(profile, str) else list(profile)}
    return _spec('diagonal', op, make_penalty(penalty_kind, penalty_params), ubar, params)


def make_deconvolution(n: int, kernel_width: float, penalty_kind: str = 'quadratic_tv',
                       profile: Profile = 'box_ramp', penalty_params: Optional[Dict] = None) -> ProblemSpec:
    """Gaussian blur on [0, 1]; the default solution has a jump"""
    if n < 8:
        raise ConfigError(f"deconvolution needs n >= 8, got {n}")
    if not kernel_width > 0:
        raise ConfigError(f"kernel_width must be positive, got {kernel_width}")
    spacing = 1.0 / n
    op = ConvolutionOperator(gaussian_kernel(kernel_width, spacing, n), n, spacing)
    ubar = GridFunction(profile_values(profile, n, spacing), spacing)
    params = {'n': n, 'kernel_width': kernel_width, 'penalty_kind': penalty_kind,
              'profile': profile if isinstance(profile, str) else list(profile)}
    return _spec('deconvolution', op, make_penalty(penalty_kind, penalty_params), ubar, params)


def make_autoconvolution(n: int, profile: Profile = 'bump', penalty_kind: str = 'quadratic',
                         spacing: Optional[float] = None, penalty_params: Optional[Dict] = None) -> ProblemSpec:
    if n < 8:
        raise ConfigError(f"autoconvolution needs n >= 8, got {n}")
    spacing = 1.0 / n if spacing is None else float(spacing)
    ubar = GridFunction(profile_values(profile, n, spacing), spacing)
    params = {'n': n, 'profile': profile if isinstance(profile, str) else list(profile),
              'penalty_kind': penalty_kind, 'spacing': spacing}
    return _spec('autoconvolution', AutoconvolutionOperator(n, spacing), make_penalty(penalty_kind, penalty_params),
                 ubar, params)


def make_tv_denoising(n: int, noise_free_signal: Profile = 'step', tv_weight: float = 1.0,
                      spacing: Optional[float] = None) -> ProblemSpec:
    """Identity forward map with the quadratic-plus-TV penalty"""
    if n < 4:
        raise ConfigError(f"TV denoising needs n >= 4, got {n}")
    spacing = 1.0 / n if spacing is None else float(spacing)
    ubar = GridFunction(profile_values(noise_free_signal, n, spacing), spacing)
    params = {'n': n, 'tv_weight': tv_weight, 'spacing': spacing,
              'noise_free_signal': noise_free_signal if isinstance(noise_free_signal, str) else list(noise_free_signal)}
    return _spec('tv_denoising', IdentityOperator(n, spacing), make_penalty('quadratic_tv', {'tv_weight': tv_weight}),
                 ubar, params)


def add_noise(y: GridFunction, delta: float, seed: int) -> GridFunction:
    """y + delta * e / ||e|| with e standard normal; ||y - y_delta|| = delta exactly"""
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    if delta == 0:
        return y
    for attempt in range(MAX_NOISE_RETRIES + 1):
        draw = make_rng(seed + attempt).standard_normal(y.size)
        size = weighted_norm(draw, y.spacing)
        if size > 0:
            if attempt:
                logger.warning(f"⚠️ zero noise draw for seed {seed}, used seed {seed + attempt}")
            return y.like(y.values + (delta / size) * draw)
    raise DegenerateNoise(f"noise draws for seeds {seed}..{seed + MAX_NOISE_RETRIES} were all zero")


PROBLEM_BUILDERS: Dict[str, Callable[..., ProblemSpec]] = {
    'identity': make_identity,
    'diagonal': make_diagonal,
    'deconvolution': make_deconvolution,
    'autoconvolution': make_autoconvolution,
    'tv_denoising': make_tv_denoising,
}


def build_problem(name: str, params: Optional[Dict] = None) -> ProblemSpec:
    if name not in PROBLEM_BUILDERS:
        raise ConfigError(f"unknown problem '{name}' (known: {sorted(PROBLEM_BUILDERS)})")
    try:
        return PROBLEM_BUILDERS[name](**(params or {}))
    except TypeError as e:
        raise ConfigError(f"bad parameters for problem '{name}': {e}") from e
