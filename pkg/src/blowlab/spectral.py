"""Hermite eigenbasis of the drift-diffusion operator and mode decomposition.

The linear operator L = d^2/dy^2 - (y/2) d/dy + 1 is self-adjoint in the
Gaussian-weighted space with density rho(y) = exp(-y^2/4) / sqrt(4 pi).  Its
eigenvalues are 1 - m/2 with polynomial eigenfunctions h_m normalized so
that h_0 = 1, h_1 = y, h_2 = y^2 - 2 and <h_n, h_m>_rho = 2^n n! delta_nm.

Two quadrature rules back the weighted inner product:

* a fixed Gauss-Hermite rule rescaled to the weight exp(-y^2/4), exact for
  polynomial integrands and used whenever a field carries its generating
  callable;
* composite Simpson on the solver grid for fields only known by samples,
  with the mode projections Gram-corrected so that the subtracted remainder
  is orthogonal to span{h_0..h_m} in the discrete inner product.

The two rules cross-validate each other (``cross_validate_quadrature``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import simpson
from scipy.special import roots_hermite

from .grid import Field, Grid1D, GridError
from .params import ModelParams

DEFAULT_MAX_DEGREE = 12
DEFAULT_QUAD_NODES = 256
MIN_GRID_HALF_WIDTH = 16.0   # Gaussian mass beyond |y|=16 is ~1e-29 < 1e-14


def rho(y) -> np.ndarray:
    """Gaussian weight exp(-y^2/4) / sqrt(4 pi); integrates to one."""
    y = np.asarray(y, dtype=float)
    return np.exp(-0.25 * y * y) / np.sqrt(4.0 * np.pi)


# ---------------------------------------------------------------------------
# Hermite basis
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def hermite_coefficients(max_degree: int = DEFAULT_MAX_DEGREE) -> tuple:
    """Ascending-power coefficient tables of h_0 .. h_max_degree.

    Built from the recurrence h_{m+1} = y h_m - 2 m h_{m-1}; coefficients are
    exact integers well inside float range for the degrees used here.
    """
    coeffs = [np.array([1.0]), np.array([0.0, 1.0])]
    for m in range(1, max_degree):
        shifted = np.concatenate(([0.0], coeffs[m]))          # y * h_m
        prev = np.pad(coeffs[m - 1], (0, 2))
        coeffs.append(shifted - 2.0 * m * prev)
    return tuple(c for c in coeffs[: max_degree + 1])


def hermite_value(m: int, y) -> np.ndarray:
    """h_m evaluated pointwise."""
    table = hermite_coefficients(max(m, DEFAULT_MAX_DEGREE))
    return npoly.polyval(np.asarray(y, dtype=float), table[m])


def hermite_norm_sq(m: int) -> float:
    """<h_m, h_m>_rho = 2^m m!."""
    import math

    return float(2.0 ** m) * math.factorial(m)


@dataclass(frozen=True)
class HermiteBasis:
    """Coefficient tables plus normalizers for degrees <= max_degree."""

    max_degree: int = DEFAULT_MAX_DEGREE

    @property
    def coefficients(self) -> tuple:
        return hermite_coefficients(self.max_degree)

    def value(self, m: int, y) -> np.ndarray:
        if m > self.max_degree:
            raise ValueError(f"degree {m} exceeds max_degree {self.max_degree}")
        return npoly.polyval(np.asarray(y, dtype=float), self.coefficients[m])

    def norm_sq(self, m: int) -> float:
        return hermite_norm_sq(m)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def gauss_nodes(n: int = DEFAULT_QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for integrals against rho: sum w_i g(y_i) = int g rho dy.

    Standard Gauss-Hermite abscissas x for weight exp(-x^2), mapped through
    y = 2x; the 1/sqrt(pi) factor absorbs the normalization of rho.
    """
    x, w = roots_hermite(n)
    return 2.0 * x, w / np.sqrt(np.pi)


def inner_rho_callable(f, g, n: int = DEFAULT_QUAD_NODES) -> float:
    """<f, g>_rho by the rescaled Gauss-Hermite rule (exact on polynomials)."""
    y, w = gauss_nodes(n)
    return float(np.sum(w * np.asarray(f(y), dtype=float) * np.asarray(g(y), dtype=float)))


def inner_rho_grid(fvals: np.ndarray, gvals: np.ndarray, grid: Grid1D) -> float:
    """<f, g>_rho by composite Simpson on the solver grid."""
    if grid.half_width < MIN_GRID_HALF_WIDTH:
        raise GridError(
            f"grid half-width {grid.half_width} too narrow: Gaussian tail beyond it "
            f"exceeds 1e-14 (need >= {MIN_GRID_HALF_WIDTH})"
        )
    y = grid.y
    return float(simpson(fvals * gvals * rho(y), x=y))


def quadrature_inner(f: Field, g: Field) -> float:
    """Weighted inner product of two fields on the same grid.

    Uses the exact Gauss-Hermite path when both fields carry callables,
    composite Simpson on the shared grid otherwise.
    """
    f.grid.require_match(g.grid)
    if f.func is not None and g.func is not None:
        return inner_rho_callable(f.func, g.func)
    return inner_rho_grid(f.values, g.values, f.grid)


def norm_rho(f: Field) -> float:
    return float(np.sqrt(max(quadrature_inner(f, f), 0.0)))


def cross_validate_quadrature(grid: Grid1D | None = None, tol: float = 1e-8) -> float:
    """Largest discrepancy between the two rules on low Hermite products.

    Returns the worst deviation; raises GridError above ``tol``.  Run once at
    CLI startup and inside the test suite.
    """
    grid = grid or Grid1D(40.0, 1601)
    worst = 0.0
    one = lambda y: np.ones_like(np.asarray(y, dtype=float))
    worst = max(worst, abs(inner_rho_callable(one, one) - 1.0))
    worst = max(worst, abs(inner_rho_grid(np.ones(grid.n), np.ones(grid.n), grid) - 1.0))
    for n in range(4):
        for m in range(4):
            want = hermite_norm_sq(n) if n == m else 0.0
            got_gh = inner_rho_callable(lambda y, n=n: hermite_value(n, y),
                                        lambda y, m=m: hermite_value(m, y))
            got_sim = inner_rho_grid(hermite_value(n, grid.y), hermite_value(m, grid.y), grid)
            worst = max(worst, abs(got_gh - want), abs(got_sim - want))
    if worst > tol:
        raise GridError(f"quadrature cross-validation failed: worst deviation {worst:g}")
    return worst


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------

@dataclass
class ModeDecomposition:
    """Five components of a field at similarity time s.

    v0, v1, v2 are the projections of the cut-off inner part onto h_0..h_2;
    v_minus is the remaining inner part (orthogonal to them); v_e is the
    outer part, identically zero inside |y| <= K0 sqrt(s).
    """

    v0: float
    v1: float
    v2: float
    v_minus: Field
    v_e: Field
    s: float
    K0: float

    @property
    def modes(self) -> np.ndarray:
        return np.array([self.v0, self.v1, self.v2])


def _grid_gram(grid: Grid1D, up_to: int) -> np.ndarray:
    key = (grid.half_width, grid.n, up_to)
    gram = _GRAM_CACHE.get(key)
    if gram is None:
        vals = [hermite_value(m, grid.y) for m in range(up_to + 1)]
        gram = np.array(
            [[inner_rho_grid(vals[a], vals[b], grid) for b in range(up_to + 1)]
             for a in range(up_to + 1)]
        )
        _GRAM_CACHE[key] = gram
    return gram


_GRAM_CACHE: dict = {}


def project_modes(vb: Field, up_to: int = 2) -> np.ndarray:
    """Projections of a (cut-off) field onto h_0..h_up_to.

    Exact Gauss-Hermite projections for callable-backed fields; for sampled
    fields the Gram system of the discrete inner product is solved so the
    subtracted remainder is discretely orthogonal to the retained modes.
    """
    if vb.func is not None:
        return np.array([
            inner_rho_callable(vb.func, lambda y, m=m: hermite_value(m, y))
            / hermite_norm_sq(m)
            for m in range(up_to + 1)
        ])
    rhs = np.array([
        inner_rho_grid(vb.values, hermite_value(m, vb.grid.y), vb.grid)
        for m in range(up_to + 1)
    ])
    return np.linalg.solve(_grid_gram(vb.grid, up_to), rhs)


def decompose(v: Field, s: float, params: ModelParams) -> ModeDecomposition:
    """Split a field into the modes / inner remainder / outer part at time s.

    The inner cut-off is chi(y, s) = chi0(|y| / (K0 sqrt(s))); the grid must
    contain the full transition region |y| <= 2 K0 sqrt(s).
    """
    from . import profiles  # local import: profiles depends on spectral-free modules

    if s < 1.0:
        raise ValueError("decompose requires s >= 1")
    inner_edge = 2.0 * params.K0 * np.sqrt(s)
    if v.grid.half_width < inner_edge:
        raise GridError(
            f"grid half-width {v.grid.half_width} < 2 K0 sqrt(s) = {inner_edge:.2f}: "
            "inner region does not fit"
        )
    y = v.grid.y
    chi_vals = profiles.chi(y, s, params)
    vb_vals = v.values * chi_vals
    if v.func is not None:
        vfun = v.func
        vb_func = lambda yy: np.asarray(vfun(yy), dtype=float) * profiles.chi(yy, s, params)
        vb = Field(v.grid, vb_vals, vb_func)
    else:
        vb = Field(v.grid, vb_vals)
    modes = project_modes(vb, up_to=2)
    recon = sum(modes[m] * hermite_value(m, y) for m in range(3))
    v_minus = Field(v.grid, vb_vals - recon)
    ve_vals = v.values * (1.0 - chi_vals)
    v_e = Field(v.grid, ve_vals)
    return ModeDecomposition(
        v0=float(modes[0]), v1=float(modes[1]), v2=float(modes[2]),
        v_minus=v_minus, v_e=v_e, s=s, K0=params.K0,
    )


def reconstruct_inner(dec: ModeDecomposition) -> np.ndarray:
    """v_b rebuilt from the stored components (reconstruction invariant)."""
    y = dec.v_minus.grid.y
    out = dec.v_minus.values.copy()
    for m, vm in enumerate((dec.v0, dec.v1, dec.v2)):
        out += vm * hermite_value(m, y)
    return out


def semigroup_eigen_check(m: int, theta: float, quad_nodes: int = DEFAULT_QUAD_NODES) -> float:
    """Weighted-norm deviation of exp(theta L) h_m from its eigenvalue action.

    Evaluates the kernel image of h_m through the kernel module's exact
    Gauss-Hermite path and returns || e^{theta L} h_m - e^{(1-m/2) theta} h_m ||_rho.
    """
    from . import kernels

    if theta <= 0:
        raise ValueError("theta must be positive")
    if m > DEFAULT_MAX_DEGREE:
        raise ValueError(f"degree {m} exceeds max_degree {DEFAULT_MAX_DEGREE}")
    image = kernels.mehler_apply_callable(theta, lambda y: hermite_value(m, y))
    lam = np.exp((1.0 - 0.5 * m) * theta)
    y, w = gauss_nodes(quad_nodes)
    diff = image(y) - lam * hermite_value(m, y)
    return float(np.sqrt(max(np.sum(w * diff * diff), 0.0)))
