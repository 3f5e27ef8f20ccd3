"""IMEX time integrator for the similarity-variable equation.

The equation for w(y, s) couples stiff linear transport (diffusion, the
outward drift y/2, and the 1/(p-1) damping) with a smooth reaction and the
exponentially damped nonlocal gradient term.  The stiffness sits entirely in
the linear part, so each step treats it with backward Euler (one tridiagonal
solve) and the reaction/nonlocal terms with forward Euler.

Space is discretized with second-order central differences; the advection
stencil falls back to first-order upwinding wherever the cell Peclet number
|y| h / 2 exceeds 2 (switchable).  The far field is a Dirichlet condition,
by default tracking the decaying profile f(y/sqrt(s)); a reaction-ODE
boundary mode is available for spatially constant states, whose exact
boundary value follows the same one-point IMEX update as the interior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from . import profiles, shrinking, spectral
from .grid import Field, Grid1D, central_gradient
from .params import ModelParams, derive

OVERFLOW_THRESHOLD = 1.0e12
PECLET_LIMIT = 2.0


class BlowupOnGrid(RuntimeError):
    """Pointwise overflow: the discrete solution blew up on the grid."""

    def __init__(self, s: float, y: float, value: float):
        self.s, self.y, self.value = s, y, value
        super().__init__(f"pointwise blow-up on grid at y={y:.3f}, s={s:.4f} (|w|={value:.3e})")


class StepSizeUnderflow(RuntimeError):
    pass


@dataclass
class SolverOptions:
    ds: float = 1e-3
    bc: str = "profile"              # "profile" | "ode"
    upwind: str = "auto"             # "auto" | "never" | "always"
    overflow: float = OVERFLOW_THRESHOLD
    adaptive: bool = False
    local_tol: float = 1e-6          # step-doubling target when adaptive
    monitor_every: int = 10
    snapshot_every: int = 0          # snapshots every k monitors; 0 disables
    stop_on_exit: bool = True


@dataclass
class SolverState:
    s: float
    w: Field
    last_ds: float = 0.0
    steps: int = 0

    def copy(self) -> "SolverState":
        return SolverState(self.s, self.w.copy(), self.last_ds, self.steps)


def init_from_data(psi: Field, params: ModelParams) -> SolverState:
    """State at s0 with w = phi(., s0) + psi (psi is the v-initial data)."""
    w = Field(psi.grid, profiles.phi(psi.grid.y, params.s0, params) + psi.values)
    return SolverState(s=params.s0, w=w)


def gradient(state: SolverState) -> Field:
    """Centered second-order spatial gradient of w (one-sided at the edges)."""
    return Field(state.w.grid, central_gradient(state.w.grid, state.w.values))


# ---------------------------------------------------------------------------
# One IMEX step
# ---------------------------------------------------------------------------

def _upwind_mask(grid: Grid1D, mode: str) -> np.ndarray:
    y = grid.y
    if mode == "never":
        return np.zeros(grid.n, dtype=bool)
    if mode == "always":
        return np.ones(grid.n, dtype=bool)
    if mode != "auto":
        raise ValueError(f"unknown upwind mode {mode!r}")
    return np.abs(y) * grid.h / 2.0 > PECLET_LIMIT


def _linear_diagonals(grid: Grid1D, params: ModelParams, upwind: str):
    """Tridiagonal of L0 w = w'' - (y/2) w' - w/(p-1) (interior rows)."""
    y = grid.y
    h = grid.h
    n = grid.n
    lower = np.full(n, 1.0 / h**2)
    diag = np.full(n, -2.0 / h**2 - 1.0 / (params.p - 1.0))
    upper = np.full(n, 1.0 / h**2)
    central = ~_upwind_mask(grid, upwind)
    lower += np.where(central, y / (4.0 * h), 0.0)
    upper -= np.where(central, y / (4.0 * h), 0.0)
    up = ~central
    pos = up & (y > 0)
    neg = up & (y < 0)
    # -(y/2) w': backward difference where the drift carries rightward, forward
    # where it carries leftward (drift velocity is +y/2).
    diag += np.where(pos, -y / (2.0 * h), 0.0)
    lower += np.where(pos, y / (2.0 * h), 0.0)
    diag += np.where(neg, y / (2.0 * h), 0.0)
    upper += np.where(neg, -y / (2.0 * h), 0.0)
    return lower, diag, upper


def _banded_matrix(grid: Grid1D, params: ModelParams, ds: float, upwind: str) -> np.ndarray:
    lower, diag, upper = _linear_diagonals(grid, params, upwind)
    n = grid.n
    ab = np.zeros((3, n))
    ab[0, 1:] = -ds * upper[:-1]
    ab[1, :] = 1.0 - ds * diag
    ab[2, :-1] = -ds * lower[1:]
    # Dirichlet rows at both ends
    ab[1, 0] = 1.0
    ab[0, 1] = 0.0
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0
    return ab


def _reaction(w: np.ndarray, p: float) -> np.ndarray:
    if p == int(p) and int(p) % 2 == 1:
        return w ** int(p)
    return np.abs(w) ** (p - 1.0) * w


def _boundary_values(state: SolverState, s_new: float, ds: float,
                     params: ModelParams, bc: str) -> tuple[float, float]:
    grid = state.w.grid
    if bc == "profile":
        val = float(profiles.f_profile(grid.half_width / np.sqrt(s_new), params))
        return val, val
    if bc == "ode":
        p = params.p
        out = []
        for b in (state.w.values[0], state.w.values[-1]):
            out.append((b + ds * float(_reaction(np.array([b]), p)[0])) / (1.0 + ds / (p - 1.0)))
        return out[0], out[1]
    raise ValueError(f"unknown boundary mode {bc!r}")


def explicit_terms(state: SolverState, params: ModelParams) -> np.ndarray:
    """Forward-Euler part: reaction plus the nonlocal gradient term."""
    w = state.w.values
    out = _reaction(w, params.p)
    if params.mu != 0.0:
        grad = central_gradient(state.w.grid, w)
        out = out + profiles.w_equation_nonlocal(w, grad, state.s, params, state.w.grid)
    return out


def step(state: SolverState, ds: float, params: ModelParams,
         opts: SolverOptions | None = None, _ab_cache: dict | None = None) -> SolverState:
    """Advance one IMEX step of size ds.

    Implicit backward Euler on the linear transport, explicit on reaction and
    nonlocal term, Dirichlet boundary rows refreshed at the new time level.
    """
    opts = opts or SolverOptions()
    if ds <= 0:
        raise ValueError("ds must be positive")
    grid = state.w.grid
    if _ab_cache is not None and ds in _ab_cache:
        ab = _ab_cache[ds]
    else:
        ab = _banded_matrix(grid, params, ds, opts.upwind)
        if _ab_cache is not None:
            _ab_cache[ds] = ab
    s_new = state.s + ds
    rhs = state.w.values + ds * explicit_terms(state, params)
    left, right = _boundary_values(state, s_new, ds, params, opts.bc)
    rhs[0] = left
    rhs[-1] = right
    w_new = solve_banded((1, 1), ab, rhs)
    if not np.all(np.isfinite(w_new)):
        bad = int(np.argmax(~np.isfinite(w_new)))
        raise BlowupOnGrid(s_new, grid.y[bad], float("inf"))
    amax = int(np.argmax(np.abs(w_new)))
    if abs(w_new[amax]) > opts.overflow:
        raise BlowupOnGrid(s_new, grid.y[amax], abs(w_new[amax]))
    return SolverState(s=s_new, w=Field(grid, w_new), last_ds=ds, steps=state.steps + 1)


def step_explicit(state: SolverState, ds: float, params: ModelParams) -> SolverState:
    """Pure forward-Euler step (test hook for residual comparisons)."""
    grid = state.w.grid
    lower, diag, upper = _linear_diagonals(grid, params, "never")
    w = state.w.values
    lin = diag * w
    lin[:-1] += upper[:-1] * w[1:]
    lin[1:] += lower[1:] * w[:-1]
    w_new = w + ds * (lin + explicit_terms(state, params))
    w_new[0] = w[0]
    w_new[-1] = w[-1]
    return SolverState(s=state.s + ds, w=Field(grid, w_new), last_ds=ds,
                       steps=state.steps + 1)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Mode/norm series sampled at the monitor cadence, plus run metadata."""

    s: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    norm_vminus_weighted: np.ndarray
    norm_ve_inf: np.ndarray
    norm_ve_beta: np.ndarray
    norm_gradv_inf: np.ndarray
    norm_gradv_beta: np.ndarray
    norm_new_term_inf: np.ndarray
    w_center: np.ndarray
    in_set: np.ndarray
    exit: Optional[shrinking.ExitReport]
    blowup: Optional[dict]
    snapshots: list          # list of (s, w values copy)
    final: SolverState
    params: ModelParams

    @property
    def exited(self) -> bool:
        return self.exit is not None and not self.exit.inside

    def csv_columns(self) -> tuple[list[str], list[np.ndarray]]:
        header = ["s", "v0", "v1", "v2", "norm_vminus_weighted", "norm_ve_inf",
                  "norm_ve_beta", "norm_gradv_beta", "in_set"]
        cols = [self.s, self.v0, self.v1, self.v2, self.norm_vminus_weighted,
                self.norm_ve_inf, self.norm_ve_beta, self.norm_gradv_beta,
                self.in_set.astype(float)]
        return header, cols


def _observe(state: SolverState, params: ModelParams):
    """Decompose v = w - phi and evaluate every monitored norm."""
    grid = state.w.grid
    v = Field(grid, state.w.values - profiles.phi(grid.y, state.s, params))
    dec = spectral.decompose(v, state.s, params)
    grad_v = Field(grid, central_gradient(grid, v.values))
    report = shrinking.check_membership(dec, grad_v, state.s, params)
    if params.mu != 0.0:
        grad_w = central_gradient(grid, state.w.values)
        n_inf = float(np.max(np.abs(profiles.w_equation_nonlocal(
            state.w.values, grad_w, state.s, params, grid))))
    else:
        n_inf = 0.0
    return dec, report, n_inf


def run(state: SolverState, s_end: float, params: ModelParams,
        opts: SolverOptions | None = None,
        monitor: Optional[Callable] = None) -> Trajectory:
    """Integrate to s_end, monitoring shrinking-set membership.

    The monitor (default: membership check) fires every ``monitor_every``
    accepted steps.  On a detected exit the run re-integrates the last
    monitored interval step by step to pin the exit time to one step, then
    stops if ``stop_on_exit``.  Pointwise overflow stops the run and is
    reported in ``blowup``.
    """
    opts = opts or SolverOptions()
    if s_end < state.s:
        raise ValueError("s_end must not precede the state time")
    cache: dict = {}
    rows = {k: [] for k in ("s", "v0", "v1", "v2", "vminus", "ve_inf", "ve_beta",
                            "grad_inf", "grad_beta", "n_inf", "w0", "in_set")}
    snapshots: list = []
    exit_report: Optional[shrinking.ExitReport] = None
    blowup: Optional[dict] = None
    monitor_count = 0

    def observe(st: SolverState) -> shrinking.ExitReport:
        nonlocal monitor_count
        dec, report, n_inf = _observe(st, params)
        if monitor is not None:
            custom = monitor(st, dec)
            if custom is not None:
                report = custom
        rows["s"].append(st.s)
        rows["v0"].append(dec.v0)
        rows["v1"].append(dec.v1)
        rows["v2"].append(dec.v2)
        rows["vminus"].append(shrinking.cubic_ratio_sup(dec.v_minus))
        rows["ve_inf"].append(dec.v_e.sup())
        rows["ve_beta"].append(shrinking.weighted_sup(dec.v_e, params.beta))
        rows["grad_inf"].append(report.grad_diagnostics.get("grad_inf", 0.0))
        rows["grad_beta"].append(report.grad_diagnostics.get("grad_beta", 0.0))
        rows["n_inf"].append(n_inf)
        rows["w0"].append(st.w.values[st.w.grid.center_index])
        rows["in_set"].append(report.inside)
        monitor_count += 1
        if opts.snapshot_every and (monitor_count - 1) % opts.snapshot_every == 0:
            snapshots.append((st.s, st.w.values.copy()))
        return report

    report = observe(state)
    last_inside = state.copy() if report.inside else None
    if not report.inside and opts.stop_on_exit:
        exit_report = report
        state_final = state
    else:
        state_final = state
        ds = opts.ds
        try:
            while state_final.s < s_end - 1e-12:
                ds_step = min(ds, s_end - state_final.s)
                if opts.adaptive:
                    state_new, ds = _adaptive_step(state_final, ds_step, ds, params, opts, cache)
                else:
                    state_new = step(state_final, ds_step, params, opts, cache)
                state_final = state_new
                if state_final.steps % opts.monitor_every == 0 or state_final.s >= s_end - 1e-12:
                    report = observe(state_final)
                    if not report.inside:
                        if opts.stop_on_exit:
                            exit_report = _refine_exit(last_inside, state_final, report,
                                                       params, opts, cache)
                            break
                    else:
                        last_inside = state_final.copy()
        except BlowupOnGrid as exc:
            blowup = {"s": exc.s, "y": exc.y, "value": exc.value}

    if exit_report is None and rows["in_set"] and not rows["in_set"][-1]:
        _, exit_report, _ = _observe(state_final, params)

    tail_snapshot = (opts.snapshot_every and
                     (not snapshots or snapshots[-1][0] < state_final.s))
    if tail_snapshot:
        snapshots.append((state_final.s, state_final.w.values.copy()))

    return Trajectory(
        s=np.array(rows["s"]),
        v0=np.array(rows["v0"]), v1=np.array(rows["v1"]), v2=np.array(rows["v2"]),
        norm_vminus_weighted=np.array(rows["vminus"]),
        norm_ve_inf=np.array(rows["ve_inf"]),
        norm_ve_beta=np.array(rows["ve_beta"]),
        norm_gradv_inf=np.array(rows["grad_inf"]),
        norm_gradv_beta=np.array(rows["grad_beta"]),
        norm_new_term_inf=np.array(rows["n_inf"]),
        w_center=np.array(rows["w0"]),
        in_set=np.array(rows["in_set"], dtype=bool),
        exit=exit_report,
        blowup=blowup,
        snapshots=snapshots,
        final=state_final,
        params=params,
    )


def _adaptive_step(state: SolverState, ds_step: float, ds_next: float,
                   params: ModelParams, opts: SolverOptions, cache: dict):
    """Step-doubling error control: compare one ds step with two ds/2 steps."""
    if ds_step < 1e-12:
        raise StepSizeUnderflow(f"step size underflow at s={state.s}")
    full = step(state, ds_step, params, opts, cache)
    half = step(step(state, ds_step / 2.0, params, opts, cache),
                ds_step / 2.0, params, opts, cache)
    err = float(np.max(np.abs(full.w.values - half.w.values)))
    if err > opts.local_tol:
        return _adaptive_step(state, ds_step / 2.0, ds_step / 2.0, params, opts, cache)
    grow = 2.0 if err < 0.25 * opts.local_tol else 1.0
    return half, min(ds_next * grow, opts.ds * 10.0)


def _refine_exit(last_inside: Optional[SolverState], exited_state: SolverState,
                 report: shrinking.ExitReport, params: ModelParams,
                 opts: SolverOptions, cache: dict) -> shrinking.ExitReport:
    """Pin the exit to single-step resolution between the last two monitors."""
    if last_inside is None:
        return report
    st = last_inside.copy()
    while st.s < exited_state.s - 1e-12:
        st = step(st, min(opts.ds, exited_state.s - st.s), params, opts, cache)
        _, rep, _ = _observe(st, params)
        if not rep.inside:
            return rep
    return report
