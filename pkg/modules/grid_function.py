"""
GridFunction - real values on a uniform 1D grid
Elements of U, H and their duals all live here, paired by
<a, b> = spacing * sum(a_i * b_i)
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Union

import numpy as np

from modules.errors import DimensionMismatch, DomainViolation

logger = logging.getLogger(__name__)

Number = Union[int, float]


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatch(f"GridFunction needs a non-empty 1D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainViolation("GridFunction values must be finite")
        spacing = float(self.spacing)
        if not np.isfinite(spacing) or spacing <= 0:
            raise DomainViolation(f"spacing must be positive, got {self.spacing}")
        arr.setflags(write=False)
        object.__setattr__(self, 'values', arr)
        object.__setattr__(self, 'spacing', spacing)

    @classmethod
    def zeros(cls, n: int, spacing: float = 1.0) -> 'GridFunction':
        return cls(np.zeros(n), spacing)

    @classmethod
    def constant(cls, n: int, value: float, spacing: float = 1.0) -> 'GridFunction':
        return cls(np.full(n, float(value)), spacing)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.size

    def like(self, values: Iterable[float]) -> 'GridFunction':
        """New GridFunction on the same grid"""
        return GridFunction(np.asarray(values, dtype=float), self.spacing)

    def check_compatible(self, other: 'GridFunction') -> None:
        if self.size != other.size or self.spacing != other.spacing:
            raise DimensionMismatch(
                f"incompatible grids: n={self.size}, h={self.spacing} vs n={other.size}, h={other.spacing}"
            )

    def inner(self, other: 'GridFunction') -> float:
        self.check_compatible(other)
        return self.spacing * float(np.dot(self.values, other.values))

    def norm(self) -> float:
        return float(np.sqrt(self.spacing) * np.linalg.norm(self.values))

    def total_variation(self) -> float:
        return float(np.sum(np.abs(np.diff(self.values))))

    def reflected(self) -> 'GridFunction':
        return self.like(self.values[::-1])

    def to_list(self) -> List[float]:
        return [float(v) for v in self.values]

    def __add__(self, other: 'GridFunction') -> 'GridFunction':
        self.check_compatible(other)
        return self.like(self.values + other.values)

    def __sub__(self, other: 'GridFunction') -> 'GridFunction':
        self.check_compatible(other)
        return self.like(self.values - other.values)

    def __mul__(self, scalar: Number) -> 'GridFunction':
        return self.like(self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: Number) -> 'GridFunction':
        return self.like(self.values / float(scalar))

    def __neg__(self) -> 'GridFunction':
        return self.like(-self.values)

    def __repr__(self) -> str:
        head = ', '.join(f'{v:.4g}' for v in self.values[:4])
        tail = ', ...' if self.size > 4 else ''
        return f'GridFunction([{head}{tail}], n={self.size}, spacing={self.spacing:g})'


def weighted_norm(values: np.ndarray, spacing: float) -> float:
    """Norm of a raw array under the spacing-weighted pairing"""
    return float(np.sqrt(spacing) * np.linalg.norm(values))
