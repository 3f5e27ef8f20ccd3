"""Uniform symmetric 1D grids and sampled fields.

Every solver in the package works on a uniform grid symmetric about the
origin with an odd number of nodes, so that y = 0 is a node and -y_i is a
node whenever y_i is.  A :class:`Field` is a set of samples on such a grid;
it may optionally carry the callable it was sampled from, which lets the
quadrature routines switch to exact Gauss-Hermite evaluation for smooth
analytic inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class GridError(ValueError):
    """A grid cannot support the requested operation."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on [-half_width, half_width] with n nodes (n odd)."""

    half_width: float
    n: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise GridError("grid half-width must be positive")
        if self.n < 3 or self.n % 2 == 0:
            raise GridError("grid needs an odd node count >= 3 (origin must be a node)")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    @property
    def center_index(self) -> int:
        return (self.n - 1) // 2

    def mirror_index(self, i):
        """Index of -y_i (exact by symmetry)."""
        return self.n - 1 - np.asarray(i)

    def same_as(self, other: "Grid1D") -> bool:
        return self.n == other.n and self.half_width == other.half_width

    def require_match(self, other: "Grid1D") -> None:
        if not self.same_as(other):
            raise GridError(
                f"grid mismatch: ({self.half_width}, {self.n}) vs "
                f"({other.half_width}, {other.n})"
            )

    def refine(self) -> "Grid1D":
        """Grid with halved spacing (same extent)."""
        return Grid1D(self.half_width, 2 * self.n - 1)


@dataclass
class Field:
    """Real-valued samples on a :class:`Grid1D`.

    ``func``, when present, is the analytic function the samples came from;
    exact quadrature paths use it instead of the samples.
    """

    grid: Grid1D
    values: np.ndarray
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise GridError(
                f"field has {self.values.shape} values for a {self.grid.n}-node grid"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.func)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def field_from(grid: Grid1D, func: Callable[[np.ndarray], np.ndarray]) -> Field:
    """Sample a callable on the grid, keeping the callable for exact quadrature."""
    vals = np.asarray(func(grid.y), dtype=float)
    if vals.shape != grid.y.shape:
        vals = np.broadcast_to(vals, grid.y.shape).astype(float)
    return Field(grid, vals, func)


def zero_field(grid: Grid1D) -> Field:
    return Field(grid, np.zeros(grid.n), lambda y: np.zeros_like(np.asarray(y, dtype=float)))


def central_gradient(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    """Second-order centered differences, one-sided (second order) at the edges."""
    v = np.asarray(values, dtype=float)
    h = grid.h
    g = np.empty_like(v)
    g[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    g[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    g[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return g


def cumulative_ball_integral(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    """For each node i, the trapezoid value of the integral over [-|y_i|, |y_i|].

    Relies on the grid symmetry: -y_i is the node with mirrored index.
    """
    v = np.asarray(values, dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * grid.h)))
    idx = np.arange(grid.n)
    right = np.maximum(idx, grid.n - 1 - idx)
    left = grid.n - 1 - right
    return cum[right] - cum[left]
