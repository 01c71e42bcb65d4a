from dataclasses import dataclass
from functools import cached_property

import numpy as np

from fiberuq.exceptions import InvalidParameter

GAUSS_ABSCISSA = 1.0 / np.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class PointSet:
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64, copy=True).reshape(-1, 2)
        if coords.shape[0] < 1:
            raise InvalidParameter('A point set needs at least one coordinate')
        if not np.all(np.isfinite(coords)):
            raise InvalidParameter('Point coordinates must be finite')
        coords.setflags(write=False)
        object.__setattr__(self, 'coords', coords)

    @property
    def count(self):
        return self.coords.shape[0]


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor-product grid; values on it are stored as ``(len(axis1), len(axis2))`` matrices."""

    axis1: np.ndarray
    axis2: np.ndarray

    def __post_init__(self):
        for name in ('axis1', 'axis2'):
            axis = np.array(getattr(self, name), dtype=np.float64, copy=True).ravel()
            if axis.size < 1 or not np.all(np.isfinite(axis)):
                raise InvalidParameter(f'{name} must hold at least one finite coordinate')
            if axis.size > 1 and np.any(np.diff(axis) <= 0):
                raise InvalidParameter(f'{name} must be strictly increasing')
            axis.setflags(write=False)
            object.__setattr__(self, name, axis)

    @property
    def shape(self):
        return self.axis1.size, self.axis2.size

    @cached_property
    def points(self):
        x1, x2 = np.meshgrid(self.axis1, self.axis2, indexing='ij')
        return PointSet(np.column_stack([x1.ravel(), x2.ravel()]))

    def spacing(self):
        return (
            float(self.axis1[1] - self.axis1[0]) if self.axis1.size > 1 else 1.0,
            float(self.axis2[1] - self.axis2[0]) if self.axis2.size > 1 else 1.0,
        )

    def is_equidistant(self, rtol=1e-9):
        for axis in (self.axis1, self.axis2):
            if axis.size > 2:
                steps = np.diff(axis)
                if not np.allclose(steps, steps[0], rtol=rtol, atol=0.0):
                    return False
        return True

    def same_as(self, other):
        return (
            np.array_equal(self.axis1, other.axis1)
            and np.array_equal(self.axis2, other.axis2)
        )


def pixel_grid(n, length=1.0):
    """Pixel centres of an ``n``×``n`` image covering ``[0, length]²``."""
    axis = (np.arange(n, dtype=np.float64) + 0.5) * (length / n)
    return Grid(axis, axis)


def gauss_axis(n_elements=10, length=1.0):
    """Two-point Gauss abscissae of ``n_elements`` equal elements along ``[0, length]``."""
    h = length / n_elements
    centres = (np.arange(n_elements, dtype=np.float64) + 0.5) * h
    offsets = np.array([-GAUSS_ABSCISSA, GAUSS_ABSCISSA]) * (0.5 * h)
    return (centres[:, None] + offsets[None, :]).ravel()


def gauss_grid(n_elements=10, length=1.0):
    axis = gauss_axis(n_elements, length)
    return Grid(axis, axis.copy())
