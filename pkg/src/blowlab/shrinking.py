"""Shrinking-set membership: the time-dependent box that forces decay.

A decomposed field belongs to the set at time s when the three retained
modes, the weighted inner remainder, and the outer part (in plain and
weighted sup norms) all sit below thresholds that shrink polynomially in s.
Membership is closed (zero margin counts as inside); the first strictly
negative margin, in the fixed order v0, v1, v2, v_minus, ve_inf, ve_beta,
names the exit component.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Field
from .params import ModelParams
from .spectral import ModeDecomposition

COMPONENT_ORDER = ("v0", "v1", "v2", "v_minus", "ve_inf", "ve_beta")


@dataclass(frozen=True)
class SetBounds:
    """Component thresholds at a fixed time s."""

    modes01: float     # |v0|, |v1|  <= A / s^2
    mode2: float       # |v2|        <= A^2 log(s) / s^2
    v_minus: float     # sup |v_-| / (1+|y|^3) <= A / s^2
    ve_inf: float      # sup |v_e|   <= A^2 / sqrt(s)
    ve_beta: float     # sup (1+|y|^beta)|v_e| <= A^2 / s^((1-beta)/2)

    @classmethod
    def at(cls, s: float, params: ModelParams) -> "SetBounds":
        if s < 1.0:
            raise ValueError("shrinking set is defined for s >= 1")
        A = params.A
        return cls(
            modes01=A / s**2,
            mode2=A**2 * np.log(s) / s**2,
            v_minus=A / s**2,
            ve_inf=A**2 / np.sqrt(s),
            ve_beta=A**2 / s ** ((1.0 - params.beta) / 2.0),
        )

    def as_dict(self) -> dict:
        return {
            "v0": self.modes01, "v1": self.modes01, "v2": self.mode2,
            "v_minus": self.v_minus, "ve_inf": self.ve_inf, "ve_beta": self.ve_beta,
        }


def weighted_sup(g: Field, m: float) -> float:
    """max over nodes of (1 + |y|^m) |g(y)|."""
    y = g.grid.y
    return float(np.max((1.0 + np.abs(y) ** m) * np.abs(g.values)))


def cubic_ratio_sup(g: Field) -> float:
    """max over nodes of |g(y)| / (1 + |y|^3) (the inner-remainder norm)."""
    y = g.grid.y
    return float(np.max(np.abs(g.values) / (1.0 + np.abs(y) ** 3)))


@dataclass
class ExitReport:
    """Margins (threshold minus observed) per component at time s.

    ``component`` is "none" while every margin is nonnegative, else the first
    strictly negative one in COMPONENT_ORDER.  Gradient norms ride along as
    advisory diagnostics; they never trigger an exit.
    """

    s: float
    component: str
    margins: dict
    observed: dict
    grad_diagnostics: dict = field(default_factory=dict)

    @property
    def inside(self) -> bool:
        return self.component == "none"

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "component": self.component,
            "inside": self.inside,
            "margins": dict(self.margins),
            "observed": dict(self.observed),
            "grad_diagnostics": dict(self.grad_diagnostics),
        }


def check_membership(dec: ModeDecomposition, grad_v: Optional[Field], s: float,
                     params: ModelParams) -> ExitReport:
    """Classify a decomposition against the shrinking set at time s."""
    bounds = SetBounds.at(s, params)
    observed = {
        "v0": abs(dec.v0),
        "v1": abs(dec.v1),
        "v2": abs(dec.v2),
        "v_minus": cubic_ratio_sup(dec.v_minus),
        "ve_inf": dec.v_e.sup(),
        "ve_beta": weighted_sup(dec.v_e, params.beta),
    }
    thresholds = bounds.as_dict()
    margins = {k: thresholds[k] - observed[k] for k in COMPONENT_ORDER}
    component = "none"
    for k in COMPONENT_ORDER:
        if margins[k] < 0.0:
            component = k
            break
    grad_diag = {}
    if grad_v is not None:
        # Advisory parabolic-regularity norms: expected O(A^2/sqrt(s)) and
        # O(A^2 / s^((1-beta)/2)) on shrinking-set trajectories.
        grad_diag = {
            "grad_inf": grad_v.sup(),
            "grad_beta": weighted_sup(grad_v, params.beta),
            "grad_inf_scale": params.A**2 / np.sqrt(s),
            "grad_beta_scale": params.A**2 / s ** ((1.0 - params.beta) / 2.0),
        }
    return ExitReport(s=s, component=component, margins=margins,
                      observed=observed, grad_diagnostics=grad_diag)


def global_bounds_check(v: Field, s: float, params: ModelParams) -> tuple[float, float]:
    """Normalized whole-field smallness ratios implied by membership.

    Returns (sup (1+|y|^beta)|v| * s^((1-beta)/2) / A^2,
             sup |v| * sqrt(s) / A^2); both stay O(1) along trajectories
    that remain in the set.
    """
    A2 = params.A**2
    r1 = weighted_sup(v, params.beta) * s ** ((1.0 - params.beta) / 2.0) / A2
    r2 = v.sup() * np.sqrt(s) / A2
    return r1, r2
