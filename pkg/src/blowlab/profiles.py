"""Closed-form objects of the construction.

Everything here is analytic: the decaying profile f and its derivatives, the
modified profile phi (f plus a cut-off localized 1/s correction that keeps
phi in we weighted space), the linearization potential V, the smooth plateau
bump chi0 and the time-dependent cut-off chi, the residual R of the profile
(in its exact three-part split), the quadratic remainder B of the reaction
term, and the nonlocal gradient term N with its prefix-sum ball integral.

Derivatives are hand-derived closed forms; finite differences appear only in
the test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid1D, central_gradient, cumulative_ball_integral
from .params import ModelParams, derive


# ---------------------------------------------------------------------------
# Smooth plateau bump chi0: 1 on [-1, 1], 0 outside (-2, 2)
# ---------------------------------------------------------------------------
#
# Built from the standard exp(-1/t) ramp.  With sigma(t) = exp(-1/t) for
# t > 0 (else 0) and step(t) = sigma(t) / (sigma(t) + sigma(1-t)), the bump
# is chi0(z) = 1 - step(|z| - 1) on the transition annulus.  The first two
# derivatives of the ramp are closed forms in sigma; both vanish to all
# orders at the junctions, so chi0 is C-infinity.

def _sigma(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 1e-12
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def _ramp_parts(u: np.ndarray):
    s1 = _sigma(u)
    s2 = _sigma(1.0 - u)
    return s1, s2, s1 + s2


def _step(u: np.ndarray) -> np.ndarray:
    s1, _, d = _ramp_parts(u)
    return s1 / d


def _step_prime(u: np.ndarray) -> np.ndarray:
    s1, s2, d = _ramp_parts(u)
    inside = (u > 1e-9) & (u < 1.0 - 1e-9)
    out = np.zeros_like(u)
    ui = u[inside]
    w = 1.0 / ui**2 + 1.0 / (1.0 - ui) ** 2
    out[inside] = s1[inside] * s2[inside] * w / d[inside] ** 2
    return out


def _step_second(u: np.ndarray) -> np.ndarray:
    s1, s2, d = _ramp_parts(u)
    inside = (u > 1e-9) & (u < 1.0 - 1e-9)
    out = np.zeros_like(u)
    ui = u[inside]
    a = 1.0 / ui**2
    bb = 1.0 / (1.0 - ui) ** 2
    w = a + bb
    wp = -2.0 / ui**3 + 2.0 / (1.0 - ui) ** 3
    g = s1[inside] * s2[inside]
    gp = g * (a - bb)
    dp = s1[inside] * a - s2[inside] * bb
    di = d[inside]
    out[inside] = (gp * w + g * wp) / di**2 - 2.0 * g * w * dp / di**3
    return out


def chi0(z) -> np.ndarray:
    z = np.abs(np.asarray(z, dtype=float))
    out = np.ones_like(z)
    out[z >= 2.0] = 0.0
    ramp = (z > 1.0) & (z < 2.0)
    out[ramp] = 1.0 - _step(z[ramp] - 1.0)
    return out


def chi0_prime(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    out = np.zeros_like(a)
    ramp = (a > 1.0) & (a < 2.0)
    out[ramp] = -_step_prime(a[ramp] - 1.0)
    return out * np.sign(z)


def chi0_second(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    out = np.zeros_like(a)
    ramp = (a > 1.0) & (a < 2.0)
    out[ramp] = -_step_second(a[ramp] - 1.0)
    return out


# ---------------------------------------------------------------------------
# Profile f and modified profile phi
# ---------------------------------------------------------------------------

def f_profile(z, params: ModelParams) -> np.ndarray:
    """f(z) = (p - 1 + b z^2)^(-1/(p-1)); even, positive, f(0) = kappa."""
    dc = derive(params)
    z = np.asarray(z, dtype=float)
    return (params.p - 1.0 + dc.b * z * z) ** (-1.0 / (params.p - 1.0))


def f_prime(z, params: ModelParams) -> np.ndarray:
    dc = derive(params)
    z = np.asarray(z, dtype=float)
    f = f_profile(z, params)
    return -(2.0 * dc.b / (params.p - 1.0)) * z * f**params.p


def f_second(z, params: ModelParams) -> np.ndarray:
    dc = derive(params)
    p = params.p
    z = np.asarray(z, dtype=float)
    f = f_profile(z, params)
    c = 2.0 * dc.b / (p - 1.0)
    return -c * f**p + c * c * p * z * z * f ** (2.0 * p - 1.0)


def g_eps(s, params: ModelParams) -> np.ndarray:
    """Cut-off radius s^(1/2 + eps) of the 1/s profile correction."""
    return np.asarray(s, dtype=float) ** (0.5 + params.eps)


def phi(y, s: float, params: ModelParams) -> np.ndarray:
    """Modified profile f(y/sqrt(s)) + (kappa N / (2 p s)) chi0(y / g_eps(s))."""
    dc = derive(params)
    y = np.asarray(y, dtype=float)
    z = y / np.sqrt(s)
    corr = dc.kappa * params.N / (2.0 * params.p * s)
    return f_profile(z, params) + corr * chi0(y / g_eps(s, params))


def phi_grad(y, s: float, params: ModelParams) -> np.ndarray:
    dc = derive(params)
    y = np.asarray(y, dtype=float)
    ge = g_eps(s, params)
    corr = dc.kappa * params.N / (2.0 * params.p * s)
    return f_prime(y / np.sqrt(s), params) / np.sqrt(s) + corr * chi0_prime(y / ge) / ge


def phi_lap(y, s: float, params: ModelParams) -> np.ndarray:
    dc = derive(params)
    y = np.asarray(y, dtype=float)
    ge = g_eps(s, params)
    corr = dc.kappa * params.N / (2.0 * params.p * s)
    return f_second(y / np.sqrt(s), params) / s + corr * chi0_second(y / ge) / ge**2


def phi_s(y, s: float, params: ModelParams) -> np.ndarray:
    """Exact time derivative of phi (both the f argument and the correction move)."""
    dc = derive(params)
    y = np.asarray(y, dtype=float)
    z = y / np.sqrt(s)
    ge = g_eps(s, params)
    Z = y / ge
    corr = dc.kappa * params.N / (2.0 * params.p * s)
    d_f = -0.5 * z / s * f_prime(z, params)
    d_corr = -corr / s * chi0(Z) - corr * (0.5 + params.eps) / s * Z * chi0_prime(Z)
    return d_f + d_corr


def potential(y, s: float, params: ModelParams) -> np.ndarray:
    """V(y, s) = p phi^(p-1) - p/(p-1); vanishes at the origin as s grows."""
    p = params.p
    return p * phi(y, s, params) ** (p - 1.0) - p / (p - 1.0)


def chi(y, s: float, params: ModelParams) -> np.ndarray:
    """Inner/outer cut-off chi0(|y| / (K0 sqrt(s)))."""
    return chi0(np.abs(np.asarray(y, dtype=float)) / (params.K0 * np.sqrt(s)))


# ---------------------------------------------------------------------------
# Source terms of the linearized equation
# ---------------------------------------------------------------------------

def rest_term_parts(y, s: float, params: ModelParams):
    """The three exact pieces of the profile residual R.

    R_i collects the f-terms left over after the profile ODE cancels,
    R_ii the reaction mismatch (f + correction)^p - f^p, and R_iii all terms
    generated by the cut-off correction itself.
    """
    dc = derive(params)
    p = params.p
    y = np.asarray(y, dtype=float)
    z = y / np.sqrt(s)
    ge = g_eps(s, params)
    Z = y / ge
    c = dc.kappa * params.N / (2.0 * p * s)

    r_i = f_second(z, params) / s + 0.5 * z * f_prime(z, params) / s
    f_vals = f_profile(z, params)
    r_ii = (f_vals + c * chi0(Z)) ** p - f_vals**p
    ge_ratio = (0.5 + params.eps) / s     # g_eps'(s) / g_eps(s)
    r_iii = c * (
        chi0_second(Z) / ge**2
        - (0.5 - ge_ratio) * Z * chi0_prime(Z)
        + (1.0 / s - 1.0 / (p - 1.0)) * chi0(Z)
    )
    return r_i, r_ii, r_iii


def rest_term(y, s: float, params: ModelParams) -> np.ndarray:
    """Profile residual R = Lap(phi) - y/2 grad(phi) - phi/(p-1) + phi^p - phi_s."""
    r_i, r_ii, r_iii = rest_term_parts(y, s, params)
    return r_i + r_ii + r_iii


def rest_term_defining(y, s: float, params: ModelParams) -> np.ndarray:
    """R evaluated straight from its definition (closed-form derivatives).

    Equal to :func:`rest_term` up to roundoff; kept as an internal
    consistency hook (the split cancels the profile ODE analytically).
    """
    y = np.asarray(y, dtype=float)
    p = params.p
    return (
        phi_lap(y, s, params)
        - 0.5 * y * phi_grad(y, s, params)
        - phi(y, s, params) / (p - 1.0)
        + phi(y, s, params) ** p
        - phi_s(y, s, params)
    )


def nonlinear_term(v: Field, s: float, params: ModelParams) -> Field:
    """Quadratic remainder B(v) = |v+phi|^(p-1)(v+phi) - phi^p - p phi^(p-1) v."""
    p = params.p
    ph = phi(v.grid.y, s, params)
    w = v.values + ph
    vals = np.abs(w) ** (p - 1.0) * w - ph**p - p * ph ** (p - 1.0) * v.values
    return Field(v.grid, vals)


@dataclass
class PrefixTable:
    """Cumulative ball integrals of |v + phi|^(q-1) frozen at one time step.

    ``ball`` holds, for every node i, the trapezoid integral of the tabled
    quantity over the symmetric interval [-|y_i|, |y_i|].  Rebuild whenever s
    (or the field) advances; evaluation at a stale s raises.
    """

    s: float
    grid: Grid1D
    ball: np.ndarray

    def check_current(self, s: float) -> None:
        if s != self.s:
            raise ValueError(f"prefix table built at s={self.s} is stale for s={s}")


def build_prefix_table(v: Field, s: float, params: ModelParams) -> PrefixTable:
    w = v.values + phi(v.grid.y, s, params)
    integrand = np.abs(w) ** (params.q - 1.0)
    return PrefixTable(s=s, grid=v.grid, ball=cumulative_ball_integral(v.grid, integrand))


def new_term_field(v: Field, grad_v: Field, s: float, params: ModelParams,
                   table: PrefixTable) -> np.ndarray:
    """Nonlocal term N(y, s) = mu e^(-gamma s) |grad(v+phi)| * ball integral.

    Vectorized over the whole grid; the 1-D ball B(0, |y|) is the symmetric
    interval handled by the prefix table.
    """
    table.check_current(s)
    v.grid.require_match(table.grid)
    if params.mu == 0.0:
        return np.zeros(v.grid.n)
    dc = derive(params)
    total_grad = grad_v.values + phi_grad(v.grid.y, s, params)
    return params.mu * np.exp(-dc.gamma * s) * np.abs(total_grad) * table.ball


def new_term(v: Field, grad_v: Field, y_index: int, s: float, params: ModelParams,
             table: PrefixTable) -> float:
    """Pointwise nonlocal term at one grid node."""
    table.check_current(s)
    if params.mu == 0.0:
        return 0.0
    dc = derive(params)
    y = v.grid.y[y_index]
    g = grad_v.values[y_index] + float(phi_grad(y, s, params))
    return float(params.mu * np.exp(-dc.gamma * s) * abs(g) * table.ball[y_index])


def w_equation_reaction(w: np.ndarray, params: ModelParams) -> np.ndarray:
    """Pointwise reaction |w|^(p-1) w of the similarity-variable equation."""
    return np.abs(w) ** (params.p - 1.0) * w


def w_equation_nonlocal(wvals: np.ndarray, grad_w: np.ndarray, s: float,
                        params: ModelParams, grid: Grid1D) -> np.ndarray:
    """Nonlocal term of the w-equation: mu e^(-gamma s)|grad w| * ball(|w|^(q-1))."""
    if params.mu == 0.0:
        return np.zeros_like(wvals)
    dc = derive(params)
    ball = cumulative_ball_integral(grid, np.abs(wvals) ** (params.q - 1.0))
    return params.mu * np.exp(-dc.gamma * s) * np.abs(grad_w) * ball
