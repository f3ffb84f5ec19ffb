"""
Config - JSON experiment configuration parsed into frozen dataclasses
Everything is validated before any computation; unknown keys are errors.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from modules.errors import ConfigError
from modules.variational_solver import DEFAULT_MAX_ITER

logger = logging.getLogger(__name__)

COMMANDS = ('verify', 'solve', 'iterate', 'rates')
REQUIRED = object()

ProfileSpec = Union[str, List[float]]


@dataclass(frozen=True)
class ProblemConfig:
    name: str
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class PenaltyConfig:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class VerifyConfig:
    cases: int = 1000
    trials: int = 100


@dataclass(frozen=True)
class SolveConfig:
    alpha: float
    delta: float = 0.0
    tol: Optional[float] = None
    max_iter: int = DEFAULT_MAX_ITER
    init: Optional[ProfileSpec] = None


@dataclass(frozen=True)
class AlphaConfig:
    alpha0: float
    q: float = 1.0
    lower: Optional[float] = None
    upper: Optional[float] = None


@dataclass(frozen=True)
class NonlinearityConfig:
    radius: float = 0.1
    samples: int = 200


@dataclass(frozen=True)
class IterateConfig:
    alpha: AlphaConfig
    delta: float = 0.0
    tau: float = 2.0
    max_outer: int = 100
    inner_tol: Optional[float] = None
    inner_max_iter: int = DEFAULT_MAX_ITER
    eta: Optional[float] = None
    gamma: Optional[float] = None
    rho: Optional[float] = None
    init: Optional[ProfileSpec] = None
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)


@dataclass(frozen=True)
class SourceConfig:
    type: str
    omega: Optional[ProfileSpec] = None
    ubar: Optional[ProfileSpec] = None


@dataclass(frozen=True)
class RuleConfig:
    name: str
    constant: float = 1.0


@dataclass(frozen=True)
class RatesConfig:
    source: SourceConfig
    rule: RuleConfig
    delta_grid: List[float]
    slope_tolerance: float = 0.15
    tol_factor: float = 1e-10
    max_iter: int = DEFAULT_MAX_ITER
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)
    exact_alphas: Optional[List[float]] = None
    slope_band: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    problem: ProblemConfig
    seed: int = 0
    penalty: Optional[PenaltyConfig] = None
    verify: Optional[VerifyConfig] = None
    solve: Optional[SolveConfig] = None
    iterate: Optional[IterateConfig] = None
    rates: Optional[RatesConfig] = None
    raw: Dict[str, Any] = field(default_factory=dict)

    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON form"""
    canonical = json.dumps(raw, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _check_keys(section: Any, path: str, allowed: Sequence[str]) -> Dict[str, Any]:
    if not isinstance(section, dict):
        raise ConfigError(f"'{path}' must be an object")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        where = f"{path}." if path else ''
        raise ConfigError(f"unknown key '{where}{unknown[0]}' (allowed: {', '.join(sorted(allowed))})")
    return section


def _get(section: Dict, key: str, path: str, default: Any = REQUIRED) -> Any:
    if key in section:
        return section[key]
    if default is REQUIRED:
        raise ConfigError(f"missing required key '{path}.{key}'")
    return default


def _number(section: Dict, key: str, path: str, default: Any = REQUIRED, positive: bool = False,
            nonnegative: bool = False) -> Optional[float]:
    value = _get(section, key, path, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ConfigError(f"'{path}.{key}' must be a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"'{path}.{key}' must be positive, got {value}")
    if nonnegative and value < 0:
        raise ConfigError(f"'{path}.{key}' must be nonnegative, got {value}")
    return float(value)


def _integer(section: Dict, key: str, path: str, default: Any = REQUIRED, minimum: int = 0) -> int:
    value = _get(section, key, path, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{path}.{key}' must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"'{path}.{key}' must be >= {minimum}, got {value}")
    return value


def _string(section: Dict, key: str, path: str, default: Any = REQUIRED) -> Optional[str]:
    value = _get(section, key, path, default)
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"'{path}.{key}' must be a string, got {value!r}")
    return value


def _params(section: Dict, key: str, path: str) -> Dict[str, Any]:
    value = _get(section, key, path, {})
    if not isinstance(value, dict):
        raise ConfigError(f"'{path}.{key}' must be an object")
    return dict(value)


def _profile(section: Dict, key: str, path: str) -> Optional[ProfileSpec]:
    value = _get(section, key, path, None)
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, list) and value and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                 for v in value):
        return [float(v) for v in value]
    raise ConfigError(f"'{path}.{key}' must be a profile name or a non-empty list of numbers")


def _delta_grid(value: Any, path: str) -> List[float]:
    if isinstance(value, list):
        grid = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"'{path}' entries must be positive numbers, got {v!r}")
            grid.append(float(v))
        return grid
    spec = _check_keys(value, path, ('start', 'stop', 'num'))
    start = _number(spec, 'start', path, positive=True)
    stop = _number(spec, 'stop', path, positive=True)
    num = _integer(spec, 'num', path, minimum=1)
    return [float(v) for v in np.geomspace(start, stop, num)]


def _parse_verify(section: Dict) -> VerifyConfig:
    section = _check_keys(section, 'verify', ('cases', 'trials'))
    return VerifyConfig(cases=_integer(section, 'cases', 'verify', 1000, minimum=1),
                        trials=_integer(section, 'trials', 'verify', 100, minimum=1))


def _parse_solve(section: Dict) -> SolveConfig:
    path = 'solve'
    section = _check_keys(section, path, ('alpha', 'delta', 'tol', 'max_iter', 'init'))
    return SolveConfig(
        alpha=_number(section, 'alpha', path, positive=True),
        delta=_number(section, 'delta', path, 0.0, nonnegative=True),
        tol=_number(section, 'tol', path, None, positive=True),
        max_iter=_integer(section, 'max_iter', path, DEFAULT_MAX_ITER, minimum=1),
        init=_profile(section, 'init', path),
    )


def _parse_nonlinearity(section: Dict, parent: str) -> NonlinearityConfig:
    path = f'{parent}.nonlinearity'
    nonlinearity = _check_keys(_get(section, 'nonlinearity', parent, {}), path, ('radius', 'samples'))
    return NonlinearityConfig(
        radius=_number(nonlinearity, 'radius', path, 0.1, positive=True),
        samples=_integer(nonlinearity, 'samples', path, 200, minimum=1),
    )


def _parse_iterate(section: Dict) -> IterateConfig:
    path = 'iterate'
    section = _check_keys(section, path, ('alpha', 'delta', 'tau', 'max_outer', 'inner_tol', 'inner_max_iter',
                                          'eta', 'gamma', 'rho', 'init', 'nonlinearity'))
    alpha_section = _check_keys(_get(section, 'alpha', path), 'iterate.alpha', ('alpha0', 'q', 'lower', 'upper'))
    alpha_path = 'iterate.alpha'
    alpha = AlphaConfig(
        alpha0=_number(alpha_section, 'alpha0', alpha_path, positive=True),
        q=_number(alpha_section, 'q', alpha_path, 1.0, positive=True),
        lower=_number(alpha_section, 'lower', alpha_path, None, positive=True),
        upper=_number(alpha_section, 'upper', alpha_path, None, positive=True),
    )
    tau = _number(section, 'tau', path, 2.0)
    if not tau > 1:
        raise ConfigError(f"'iterate.tau' must exceed 1, got {tau}")
    return IterateConfig(
        alpha=alpha,
        delta=_number(section, 'delta', path, 0.0, nonnegative=True),
        tau=tau,
        max_outer=_integer(section, 'max_outer', path, 100),
        inner_tol=_number(section, 'inner_tol', path, None, positive=True),
        inner_max_iter=_integer(section, 'inner_max_iter', path, DEFAULT_MAX_ITER, minimum=1),
        eta=_number(section, 'eta', path, None, nonnegative=True),
        gamma=_number(section, 'gamma', path, None, positive=True),
        rho=_number(section, 'rho', path, None, positive=True),
        init=_profile(section, 'init', path),
        nonlinearity=_parse_nonlinearity(section, path),
    )


def _parse_rates(section: Dict) -> RatesConfig:
    path = 'rates'
    section = _check_keys(section, path, ('source', 'rule', 'delta_grid', 'slope_tolerance', 'tol_factor',
                                          'max_iter', 'nonlinearity', 'exact_alphas', 'slope_band'))
    source_section = _check_keys(_get(section, 'source', path), 'rates.source', ('type', 'omega', 'ubar'))
    source_type = _string(source_section, 'type', 'rates.source')
    if source_type not in ('TypeI', 'TypeII'):
        raise ConfigError(f"'rates.source.type' must be TypeI or TypeII, got {source_type!r}")
    source = SourceConfig(type=source_type, omega=_profile(source_section, 'omega', 'rates.source'),
                          ubar=_profile(source_section, 'ubar', 'rates.source'))
    if source.omega is None and source.ubar is None:
        raise ConfigError("'rates.source' needs omega, ubar or both")

    rule_section = _check_keys(_get(section, 'rule', path), 'rates.rule', ('name', 'constant'))
    rule_name = _string(rule_section, 'name', 'rates.rule')
    if rule_name not in ('LinearRule', 'TwoThirdsRule', 'FixedRule', 'linear', 'two_thirds', 'fixed'):
        raise ConfigError(f"'rates.rule.name' is not a known rule: {rule_name!r}")
    rule = RuleConfig(name=rule_name, constant=_number(rule_section, 'constant', 'rates.rule', 1.0, positive=True))

    nonlinearity = _parse_nonlinearity(section, path)
    exact = _get(section, 'exact_alphas', path, None)
    slope_band = _string(section, 'slope_band', path, None)
    if slope_band not in (None, 'two_sided', 'at_least'):
        raise ConfigError(f"'rates.slope_band' must be two_sided or at_least, got {slope_band!r}")
    return RatesConfig(
        source=source,
        rule=rule,
        delta_grid=_delta_grid(_get(section, 'delta_grid', path), 'rates.delta_grid'),
        slope_tolerance=_number(section, 'slope_tolerance', path, 0.15, positive=True),
        tol_factor=_number(section, 'tol_factor', path, 1e-10, positive=True),
        max_iter=_integer(section, 'max_iter', path, DEFAULT_MAX_ITER, minimum=1),
        nonlinearity=nonlinearity,
        exact_alphas=None if exact is None else _delta_grid(exact, 'rates.exact_alphas'),
        slope_band=slope_band,
    )


_SECTION_PARSERS = {
    'verify': _parse_verify,
    'solve': _parse_solve,
    'iterate': _parse_iterate,
    'rates': _parse_rates,
}


def parse_config(raw: Any, command: str, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Validate a decoded JSON document for one command"""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command '{command}'")
    raw = _check_keys(raw, '', ('command', 'problem', 'penalty', 'seed', command))
    declared = _string(raw, 'command', 'config', None)
    if declared is not None and declared != command:
        raise ConfigError(f"config is for command '{declared}', not '{command}'")

    problem_section = _check_keys(_get(raw, 'problem', 'config'), 'problem', ('name', 'params'))
    problem = ProblemConfig(name=_string(problem_section, 'name', 'problem'),
                            params=_params(problem_section, 'params', 'problem'))

    penalty = None
    if 'penalty' in raw:
        penalty_section = _check_keys(raw['penalty'], 'penalty', ('kind', 'params'))
        penalty = PenaltyConfig(kind=_string(penalty_section, 'kind', 'penalty'),
                                params=_params(penalty_section, 'params', 'penalty'))

    seed = _integer(raw, 'seed', 'config', 0)
    effective = dict(raw)
    if seed_override is not None:
        seed = int(seed_override)
        effective['seed'] = seed

    sections = {command: _SECTION_PARSERS[command](raw.get(command, {}))}
    return ExperimentConfig(command=command, problem=problem, seed=seed, penalty=penalty, raw=effective,
                            **sections)


def load_config(path: Union[str, Path], command: str, seed_override: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    config = parse_config(raw, command, seed_override)
    logger.info(f"📋 Loaded {command} config from {path} (sha256 {config.config_hash()[:12]})")
    return config
