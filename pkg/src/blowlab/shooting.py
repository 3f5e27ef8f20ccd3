"""Two-parameter shooting: the topological existence argument, done numerically.

The initial data psi_{s0,d0,d1} seeds the two expanding directions (modes 0
and 1) with amplitudes proportional to (d0, d1).  Trajectories leave the
shrinking set through those modes with a definite sign, so the map from
(d0, d1) to the exit sign pair has degree one on the boundary of the search
rectangle; a quadtree subdivision that keeps the degree-one sub-rectangle
closes in on the data whose trajectory never leaves.

Because the two modes grow like e^s and e^(s/2), pushing the survival
horizon out by one similarity-time unit costs roughly one e-folding of
precision in (d0, d1): the subdivision therefore continues below the
requested rectangle diameter until a sampled point actually survives the
horizon.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import profiles, solver, spectral
from .grid import Field, Grid1D, GridError
from .params import ModelParams

SUBRECT_ORDER = ("sw", "se", "nw", "ne")


def initial_data(d0: float, d1: float, s0: float, params: ModelParams,
                 grid: Grid1D) -> Field:
    """psi(y) = (A/s0^2)(d0 h0 + d1 h1) chi(2y, s0).

    The doubled cut-off argument halves the support to |y| < K0 sqrt(s0),
    so the outer component of the data vanishes identically.
    """
    if s0 < 1.0:
        raise ValueError("s0 must be at least 1")
    support = params.K0 * np.sqrt(s0)
    if grid.half_width < support:
        raise GridError(
            f"grid half-width {grid.half_width} cannot resolve the data support "
            f"|y| < {support:.1f}"
        )
    amp = params.A / s0**2
    y = grid.y
    vals = amp * (d0 * spectral.hermite_value(0, y)
                  + d1 * spectral.hermite_value(1, y)) * profiles.chi(2.0 * y, s0, params)
    return Field(grid, vals)


@dataclass
class ClassifyOutcome:
    """Summary of one trajectory: how and when it left the set (if it did)."""

    d0: float
    d1: float
    survived: bool
    s_star: float
    component: str                    # exit component, "overflow", or "none"
    exit_vector: tuple[float, float]  # (v0, v1) at the exit (or final) time
    omega: Optional[int] = None       # sign of the crossing mode
    m_exit: Optional[int] = None      # 0 or 1 when the exit is transverse-checked
    transverse: Optional[float] = None  # omega * v_m'(s*), expected positive
    trajectory: Optional[solver.Trajectory] = field(default=None, repr=False)


@dataclass
class ShootResult:
    d0: float
    d1: float
    survived_to: float
    diameter: float
    levels: int
    classify_calls: int
    boundary_map: list               # (d0, d1, component, v0, v1) samples
    degree: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "d0": self.d0, "d1": self.d1, "survived_to": self.survived_to,
            "diameter": self.diameter, "levels": self.levels,
            "classify_calls": self.classify_calls, "degree": self.degree,
            "boundary_map": [list(row) for row in self.boundary_map],
        }


def default_shooting_grid(params: ModelParams, horizon_s: float,
                          h: float = 0.1) -> Grid1D:
    """Grid wide enough for the inner region over the whole run, plus margin."""
    half = 2.0 * params.K0 * math.sqrt(horizon_s) + 4.0
    n = int(round(2.0 * half / h)) + 1
    if n % 2 == 0:
        n += 1
    return Grid1D(half, n)


def classify(d0: float, d1: float, horizon_s: float, params: ModelParams,
             grid: Grid1D | None = None,
             opts: solver.SolverOptions | None = None,
             keep_trajectory: bool = False) -> ClassifyOutcome:
    """Run the similarity solver from psi_{s0,d0,d1} and classify the exit.

    For exits through modes 0/1 the run is continued two monitor intervals
    past the exit so the crossing derivative can be measured from the
    recorded series.
    """
    opts = opts or solver.SolverOptions(ds=5e-3)
    grid = grid or default_shooting_grid(params, horizon_s)
    psi = initial_data(d0, d1, params.s0, params, grid)
    state = solver.init_from_data(psi, params)
    traj = solver.run(state, horizon_s, params, opts)

    if traj.blowup is not None:
        vec = (traj.v0[-1] if len(traj.v0) else 0.0,
               traj.v1[-1] if len(traj.v1) else 0.0)
        return ClassifyOutcome(d0, d1, False, traj.blowup["s"], "overflow", vec,
                               trajectory=traj if keep_trajectory else None)

    exited = traj.exit is not None and not traj.exit.inside
    if not exited:
        return ClassifyOutcome(d0, d1, True, traj.s[-1], "none",
                               (traj.v0[-1], traj.v1[-1]),
                               trajectory=traj if keep_trajectory else None)

    comp = traj.exit.component
    s_star = traj.exit.s
    vec = (traj.v0[-1], traj.v1[-1])
    omega = m_exit = transverse = None
    if comp in ("v0", "v1"):
        m_exit = 0 if comp == "v0" else 1
        series = traj.v0 if m_exit == 0 else traj.v1
        omega = int(np.sign(series[-1])) or 1
        cont = solver.run(traj.final, traj.final.s + 2 * opts.monitor_every * opts.ds,
                          params, _no_stop(opts))
        s_all = np.concatenate([traj.s, cont.s[1:]])
        v_all = np.concatenate([series, (cont.v0 if m_exit == 0 else cont.v1)[1:]])
        if len(s_all) >= 2:
            transverse = omega * float((v_all[-1] - v_all[-2]) / (s_all[-1] - s_all[-2]))
    return ClassifyOutcome(d0, d1, False, s_star, comp, vec, omega, m_exit,
                           transverse, trajectory=traj if keep_trajectory else None)


def _no_stop(opts: solver.SolverOptions) -> solver.SolverOptions:
    import dataclasses

    return dataclasses.replace(opts, stop_on_exit=False)


# ---------------------------------------------------------------------------
# Degree bookkeeping
# ---------------------------------------------------------------------------

def boundary_lattice(rect: tuple[float, float, float, float], per_edge: int):
    """Cyclically ordered boundary points of a rectangle.

    ``per_edge`` points per edge, each corner counted once.  A 16-per-edge
    lattice on a square is the boundary of a 16x16 grid (60 points).
    """
    x0, x1, y0, y1 = rect
    xs = np.linspace(x0, x1, per_edge)
    ys = np.linspace(y0, y1, per_edge)
    pts = []
    pts += [(x, y0) for x in xs[:-1]]
    pts += [(x1, y) for y in ys[:-1]]
    pts += [(x, y1) for x in xs[::-1][:-1]]
    pts += [(x0, y) for y in ys[::-1][:-1]]
    return pts


def winding_number(vectors) -> int:
    """Winding of a cyclic sequence of plane vectors around the origin."""
    vecs = [v for v in vectors if v[0] != 0.0 or v[1] != 0.0]
    if len(vecs) < 3:
        raise ValueError("need at least three nonzero vectors for a winding number")
    angles = np.array([math.atan2(v[1], v[0]) for v in vecs])
    d = np.diff(np.concatenate([angles, angles[:1]]))
    d = (d + np.pi) % (2.0 * np.pi) - np.pi
    return int(round(float(np.sum(d)) / (2.0 * np.pi)))


def quadrant_coverage(vectors) -> set:
    """Which closed sign quadrants the exit vectors touch (sign 0 counts +)."""
    quads = set()
    for v0, v1 in vectors:
        quads.add((1 if v0 >= 0 else -1, 1 if v1 >= 0 else -1))
    return quads


def scan_boundary(params: ModelParams, horizon_s: float, n: int = 16,
                  rect: tuple = (-2.0, 2.0, -2.0, 2.0),
                  grid: Grid1D | None = None,
                  opts: solver.SolverOptions | None = None,
                  workers: int = 1) -> list[ClassifyOutcome]:
    """Classify the boundary lattice of an n x n grid on the rectangle."""
    pts = boundary_lattice(rect, n)
    grid = grid or default_shooting_grid(params, horizon_s)

    def job(pt):
        return classify(pt[0], pt[1], horizon_s, params, grid, opts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, pts))
    return [job(pt) for pt in pts]


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

class DegreeLostError(RuntimeError):
    """No sub-rectangle kept the degree-one exit pattern (tuning failure)."""


def _subrects(rect):
    x0, x1, y0, y1 = rect
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    return {
        "sw": (x0, xm, y0, ym),
        "se": (xm, x1, y0, ym),
        "nw": (x0, xm, ym, y1),
        "ne": (xm, x1, ym, y1),
    }


def _diameter(rect) -> float:
    return math.hypot(rect[1] - rect[0], rect[3] - rect[2])


def search(params: ModelParams, horizon_s: float, tol: float = 1e-3,
           rect: tuple = (-2.0, 2.0, -2.0, 2.0),
           classify_fn: Optional[Callable[[float, float], ClassifyOutcome]] = None,
           per_edge: int = 3, max_levels: int = 60,
           require_survivor: bool = True,
           grid: Grid1D | None = None,
           opts: solver.SolverOptions | None = None,
           workers: int = 1,
           progress: Optional[Callable[[dict], None]] = None) -> ShootResult:
    """Quadtree subdivision of the search rectangle driven by exit signs.

    Each level splits the current rectangle into four at its center and keeps,
    in order of preference: a sub-rectangle with a surviving boundary sample,
    else the one whose boundary exit vectors wind once around the origin, else
    the one holding the sample closest to a crossing.  Stops when the diameter
    is below ``tol`` and (when ``require_survivor``) a sampled point survives
    ``horizon_s``; a synthetic ``classify_fn`` may disable the survivor
    requirement to exercise pure subdivision.
    """
    if classify_fn is None:
        grid = grid or default_shooting_grid(params, horizon_s)
        sim_opts = opts or solver.SolverOptions(ds=5e-3)
        cache: dict = {}

        def classify_fn(d0: float, d1: float) -> ClassifyOutcome:
            key = (d0, d1)
            if key not in cache:
                cache[key] = classify(d0, d1, horizon_s, params, grid, sim_opts)
            return cache[key]

    calls = 0

    def run_boundary(r):
        nonlocal calls
        pts = boundary_lattice(r, per_edge)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outs = list(pool.map(lambda pt: classify_fn(*pt), pts))
        else:
            outs = [classify_fn(*pt) for pt in pts]
        calls += len(pts)
        return pts, outs

    # Degree of the exit map on the initial rectangle boundary.
    pts0, outs0 = run_boundary(rect)
    boundary_map = [(o.d0, o.d1, o.component, o.exit_vector[0], o.exit_vector[1])
                    for o in outs0]
    try:
        degree0 = winding_number([o.exit_vector for o in outs0])
    except ValueError:
        degree0 = None

    current = rect
    for level in range(max_levels):
        diam = _diameter(current)
        cx, cy = 0.5 * (current[0] + current[1]), 0.5 * (current[2] + current[3])
        if diam <= tol:
            # Diameter demand met: done as soon as a sampled point survives
            # (immediately, for synthetic classifiers without survival).
            center_out = classify_fn(cx, cy)
            calls += 1
            if center_out.survived or not require_survivor:
                return ShootResult(cx, cy, center_out.s_star, diam, level, calls,
                                   boundary_map, degree0)

        chosen = None
        chosen_name = None
        fallback = None
        fallback_score = math.inf
        for name in SUBRECT_ORDER:
            sub = _subrects(current)[name]
            pts, outs = run_boundary(sub)
            vectors = [o.exit_vector for o in outs]
            survivors = [o for o in outs if o.survived]
            if survivors and (_diameter(sub) <= tol or not require_survivor):
                best = survivors[0]
                return ShootResult(best.d0, best.d1, best.s_star, _diameter(sub),
                                   level + 1, calls, boundary_map, degree0)
            if survivors and chosen is None:
                chosen, chosen_name = sub, name
                continue
            try:
                w = winding_number(vectors)
            except ValueError:
                w = 0
            if w == 1 and chosen is None:
                chosen, chosen_name = sub, name
            score = min(abs(v[0]) + abs(v[1]) for v in vectors)
            if score < fallback_score:
                fallback_score, fallback = score, (sub, name)
        if chosen is None:
            if fallback is None:
                raise DegreeLostError(
                    f"degree lost at level {level}: no sub-rectangle of {current} "
                    "retains the four-quadrant exit pattern"
                )
            chosen, chosen_name = fallback
        if progress is not None:
            progress({"level": level, "rect": list(chosen), "pick": chosen_name,
                      "diameter": _diameter(chosen), "calls": calls})
        current = chosen

    raise DegreeLostError(
        f"no surviving pair found within {max_levels} subdivision levels "
        f"(last rectangle {current}, diameter {_diameter(current):.2e})"
    )


def stream_progress(fh) -> Callable[[dict], None]:
    """Line-oriented JSON progress writer for search()."""

    def emit(record: dict) -> None:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()

    return emit
