"""Quantitative checks of the main convergence statements on recorded runs.

Works on trajectories produced by the similarity solver: the weighted
distance to the universal profile must decay like s^(-(1-beta)/2) (checked
through the stability of fitted constants, since the analysis leaves its
constants unquantified), the central value must settle monotonically onto
the flat stationary level kappa, and in the far region the solution must sit
under the |x|^(-beta)-weighted envelope.  Every statement is verified both
in similarity variables and, through the change of variables, in physical
variables; the two must agree by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import profiles
from .grid import Grid1D, central_gradient
from .params import ModelParams, derive
from .solver import Trajectory
from .util import split_halves


class TrajectoryExited(RuntimeError):
    """Bounds are meaningless on a trajectory that left the shrinking set."""


@dataclass
class ProfileErrorSeries:
    """Weighted profile-error series E(s) and its gradient analogue."""

    s: np.ndarray
    error: np.ndarray            # E(s) = sup (1+|y|^beta) |w - f(./sqrt(s))|
    grad_error: np.ndarray
    normalized: np.ndarray       # E(s) * s^((1-beta)/2)
    grad_normalized: np.ndarray
    fitted_constant: float
    fitted_grad_constant: float
    half_ratio: float            # first-half over second-half fitted constants
    grad_half_ratio: float
    physical_consistent: bool

    def to_dict(self) -> dict:
        return {
            "s": self.s.tolist(),
            "normalized": self.normalized.tolist(),
            "grad_normalized": self.grad_normalized.tolist(),
            "fitted_constant": self.fitted_constant,
            "fitted_grad_constant": self.fitted_grad_constant,
            "half_ratio": self.half_ratio,
            "grad_half_ratio": self.grad_half_ratio,
            "physical_consistent": self.physical_consistent,
        }


def _require_snapshots(traj: Trajectory):
    if traj.exited:
        raise TrajectoryExited("bound meaningless after exit from the shrinking set")
    if not traj.snapshots:
        raise ValueError("trajectory carries no snapshots (set snapshot_every)")


def theorem_bound(traj: Trajectory, params: ModelParams) -> ProfileErrorSeries:
    """Weighted profile-error series of a surviving trajectory.

    The physical-variable form of the same bound divides by
    (T-t)^(1/(p-1)) and multiplies the weight by |log(T-t)|^((1-beta)/2);
    through s = -log(T-t) it is the identical number, so the similarity and
    physical evaluations must flag identically.
    """
    _require_snapshots(traj)
    grid = traj.final.w.grid
    y = grid.y
    beta = params.beta
    weight = 1.0 + np.abs(y) ** beta
    ss, errs, gerrs = [], [], []
    for s, wvals in traj.snapshots:
        z = y / math.sqrt(s)
        f = profiles.f_profile(z, params)
        fgrad = profiles.f_prime(z, params) / math.sqrt(s)
        errs.append(float(np.max(weight * np.abs(wvals - f))))
        gerrs.append(float(np.max(weight * np.abs(central_gradient(grid, wvals) - fgrad))))
        ss.append(s)
    ss = np.array(ss)
    errs = np.array(errs)
    gerrs = np.array(gerrs)
    expo = (1.0 - beta) / 2.0
    norm = errs * ss**expo
    gnorm = gerrs * ss**expo
    (s_a, n_a), (s_b, n_b) = split_halves(ss, norm)
    (_, g_a), (_, g_b) = split_halves(ss, gnorm)
    half_ratio = float(n_a.max() / n_b.max())
    grad_half_ratio = float(g_a.max() / g_b.max())

    # Physical-variable restatement: map w to u = (T-t)^(-1/(p-1)) w, evaluate
    # the physical bound sup weight |u - (T-t)^(-1/(p-1)) f| times
    # (T-t)^(1/(p-1)) |log(T-t)|^((1-beta)/2), and compare with the similarity
    # number (same statement through the change of variables).
    physical = []
    inv = -1.0 / (params.p - 1.0)
    for s, wvals in traj.snapshots:
        tau = math.exp(-s)       # T - t
        u = tau**inv * wvals
        f = profiles.f_profile(y / math.sqrt(s), params)
        e_phys = float(np.max(weight * np.abs(u - tau**inv * f)))
        physical.append(e_phys * tau ** (-inv) * s**expo)
    physical_consistent = bool(np.allclose(physical, norm, rtol=1e-10, atol=0.0))

    return ProfileErrorSeries(
        s=ss, error=errs, grad_error=gerrs, normalized=norm, grad_normalized=gnorm,
        fitted_constant=float(norm.max()), fitted_grad_constant=float(gnorm.max()),
        half_ratio=half_ratio, grad_half_ratio=grad_half_ratio,
        physical_consistent=physical_consistent,
    )


def central_value(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """The w(0, s) series of a run (converges to kappa on survivors)."""
    return traj.s, traj.w_center


@dataclass
class CentralValueReport:
    kappa: float
    monotone_after: float
    violations: int
    worst_violation: float
    envelope_constant: float     # max |w0 - kappa| sqrt(s) / A^2

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa, "monotone_after": self.monotone_after,
            "violations": self.violations, "worst_violation": self.worst_violation,
            "envelope_constant": self.envelope_constant,
        }


def central_value_report(traj: Trajectory, params: ModelParams,
                         transient_fraction: float = 0.25,
                         tol: float = 1e-12) -> CentralValueReport:
    """Monotone settling of w(0, s) onto kappa, past a fixed initial transient."""
    if traj.exited:
        raise TrajectoryExited("bound meaningless after exit from the shrinking set")
    kappa = derive(params).kappa
    s, w0 = traj.s, traj.w_center
    cut = s[0] + transient_fraction * (s[-1] - s[0])
    mask = s >= cut
    diffs = np.diff(w0[mask])
    viol = diffs[diffs > tol]
    env = float(np.max(np.abs(w0 - kappa) * np.sqrt(s)) / params.A**2)
    return CentralValueReport(
        kappa=kappa, monotone_after=float(cut), violations=int(viol.size),
        worst_violation=float(viol.max()) if viol.size else 0.0,
        envelope_constant=env,
    )


# ---------------------------------------------------------------------------
# Far-region (outer) bound
# ---------------------------------------------------------------------------

def outer_region_edge(s: float, params: ModelParams) -> float:
    """Inner edge |y| = s^g of the far region, g = (1 + 1/(2/(p-1) - beta))/2."""
    g = 0.5 * (1.0 + 1.0 / (2.0 / (params.p - 1.0) - params.beta))
    return s**g


@dataclass
class OuterBoundReport:
    s_values: list
    fitted_constants: list       # sup |w| |y|^beta s^((1-beta)/2) per s
    grad_constants: list
    stable_ratio: float

    def to_dict(self) -> dict:
        return {"s_values": self.s_values, "fitted_constants": self.fitted_constants,
                "grad_constants": self.grad_constants, "stable_ratio": self.stable_ratio}


def corollary_outer_bound(w_of_ys: Callable[[np.ndarray, float], np.ndarray],
                          s_values, params: ModelParams,
                          grad_of_ys: Optional[Callable] = None,
                          span: float = 100.0, samples: int = 4001) -> OuterBoundReport:
    """Far-region envelope constants for an analytically evaluable w(y, s).

    Samples log-spaced |y| in [edge, span * edge] and fits
    sup |w| |y|^beta s^((1-beta)/2); the report's stability ratio compares the
    first and second halves of the s list.
    """
    beta = params.beta
    expo = (1.0 - beta) / 2.0
    consts, gconsts = [], []
    svals = list(np.atleast_1d(np.asarray(s_values, dtype=float)))
    for s in svals:
        edge = outer_region_edge(s, params)
        ys = np.geomspace(edge, span * edge, samples)
        consts.append(float(np.max(np.abs(w_of_ys(ys, s)) * ys**beta) * s**expo))
        if grad_of_ys is not None:
            gconsts.append(float(np.max(np.abs(grad_of_ys(ys, s)) * ys**beta) * s**expo))
    half = max(1, len(consts) // 2)
    c_a = max(consts[:half])
    c_b = max(consts[half:]) if consts[half:] else c_a
    return OuterBoundReport(
        s_values=svals, fitted_constants=consts, grad_constants=gconsts,
        stable_ratio=float(max(c_a, c_b) / min(c_a, c_b)),
    )


def corollary_outer_bound_grid(traj: Trajectory, params: ModelParams) -> OuterBoundReport:
    """Grid-based variant; raises when the far region lies beyond the grid."""
    _require_snapshots(traj)
    grid = traj.final.w.grid
    svals, consts = [], []
    beta = params.beta
    expo = (1.0 - beta) / 2.0
    for s, wvals in traj.snapshots:
        edge = outer_region_edge(s, params)
        mask = np.abs(grid.y) >= edge
        if not np.any(mask):
            raise ValueError(
                f"outer region |y| >= {edge:.3e} is empty on the grid "
                f"(half-width {grid.half_width})"
            )
        ys = np.abs(grid.y[mask])
        consts.append(float(np.max(np.abs(wvals[mask]) * ys**beta) * s**expo))
        svals.append(s)
    half = max(1, len(consts) // 2)
    c_a, c_b = max(consts[:half]), max(consts[half:]) if consts[half:] else max(consts)
    return OuterBoundReport(s_values=svals, fitted_constants=consts, grad_constants=[],
                            stable_ratio=float(max(c_a, c_b) / min(c_a, c_b)))
