"""Model parameters, their admissibility window, and derived constants.

The construction only makes sense inside a window of exponents: a
superlinear reaction power p > 3, a nonlocal power q in an interval around
(p-1)/2-scaled values, and a spatial weight exponent beta strictly between
the nonlocal-convergence threshold and the profile-tail exponent 2/(p-1).
``validate`` is the one place those inequalities are enforced; everything
downstream may assume they hold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Mapping

import math

P_SANITY_CAP = 1.0e6


class ParamError(ValueError):
    """A named violation of one parameter inequality."""

    def __init__(self, name: str, message: str):
        self.name = name
        super().__init__(message)


@dataclass(frozen=True)
class ModelParams:
    """Validated model constants.  Immutable; build through :func:`validate`."""

    p: float
    q: float
    mu: float
    beta: float
    eps: float
    N: int
    K0: float
    A: float
    s0: float
    T: float


@dataclass(frozen=True)
class DerivedConstants:
    b: float       # profile curvature (p-1)^2 / (4p)
    kappa: float   # flat stationary value (p-1)^(-1/(p-1))
    gamma: float   # nonlocal-coefficient decay rate (p-q)/(p-1) + (N-1)/2


# Reference configuration: p > 3 with p, q integers mid-window, beta
# mid-window; K0/A/s0 are "large enough" knobs exposed in the config.
DEFAULTS: dict = {
    "p": 5.0,
    "q": 4.0,
    "mu": 1.0,
    "beta": 0.4,
    "eps": None,   # None -> eps = 0.5 * min(1, (p-1)/4)
    "N": 1,
    "K0": 5.0,
    "A": 20.0,
    "s0": 50.0,
    "T": 1.0,
}


def default_eps(p: float) -> float:
    return 0.5 * min(1.0, (p - 1.0) / 4.0)


def q_window(p: float, N: int) -> tuple[float, float]:
    lo = N * (p - 1.0) / 2.0 + 1.0
    hi = N * (p - 1.0) / 2.0 + (p + 1.0) / 2.0
    return lo, hi


def beta_window(p: float, q: float, mu: float, N: int) -> tuple[float, float]:
    hi = 2.0 / (p - 1.0)
    lo = N / (q - 1.0) if mu != 0.0 else 0.0
    return lo, hi


def validate(raw: Mapping | ModelParams) -> ModelParams:
    """Check every admissibility inequality; raise a named ParamError otherwise.

    Accepts a mapping with the ModelParams field names (missing entries fall
    back to the reference defaults) or an existing ModelParams to re-check.
    """
    if isinstance(raw, ModelParams):
        values = {k: getattr(raw, k) for k in ModelParams.__dataclass_fields__}
    else:
        values = dict(DEFAULTS)
        unknown = set(raw) - set(values)
        if unknown:
            raise ParamError("unknown_field", f"unknown parameter(s): {sorted(unknown)}")
        values.update(raw)

    if values["eps"] is None:
        values["eps"] = default_eps(float(values["p"]))

    for key, val in values.items():
        if key == "N":
            continue
        values[key] = float(val)
        if not math.isfinite(values[key]):
            raise ParamError("non_finite", f"{key} must be finite, got {val}")
    values["N"] = int(values["N"])

    p, q, mu, beta = values["p"], values["q"], values["mu"], values["beta"]
    eps, N = values["eps"], values["N"]
    K0, A, s0, T = values["K0"], values["A"], values["s0"], values["T"]

    if N != 1:
        raise ParamError("N_fixed", "N must equal 1 (only the 1-D construction is built)")
    if p <= 3.0:
        raise ParamError("p_low", "p must exceed 3")
    if p > P_SANITY_CAP:
        raise ParamError("p_cap", f"p beyond the sanity cap {P_SANITY_CAP:g}")
    qlo, qhi = q_window(p, N)
    if not qlo < q:
        raise ParamError("q_low", f"q must exceed N(p-1)/2 + 1 = {qlo:g}")
    if not q < qhi:
        raise ParamError("q_high", f"q must be below N(p-1)/2 + (p+1)/2 = {qhi:g}")
    blo, bhi = beta_window(p, q, mu, N)
    if mu != 0.0 and not blo < beta:
        raise ParamError("beta_low", f"beta must exceed N/(q-1) = {blo:g} when mu != 0")
    if mu == 0.0 and not beta > 0.0:
        raise ParamError("beta_low", "beta must be positive")
    if not beta < bhi:
        raise ParamError("beta_high", f"beta must be below 2/(p-1) = {bhi:g}")
    if not 0.0 < eps < min(1.0, (p - 1.0) / 4.0):
        raise ParamError("eps_range", "eps must lie in (0, min(1, (p-1)/4))")
    if K0 < 1.0:
        raise ParamError("K0_low", "K0 must be at least 1")
    if A < 1.0:
        raise ParamError("A_low", "A must be at least 1")
    if s0 < 1.0:
        raise ParamError("s0_low", "s0 must be at least 1")
    if T <= 0.0:
        raise ParamError("T_low", "T must be positive")

    # Consistency facts implied by the window; asserted, never silently trusted.
    if mu != 0.0:
        if not blo < bhi:
            raise ParamError("beta_window_empty", "window N/(q-1) < 2/(p-1) is empty")
        if not beta * (q - 1.0) > N:
            raise ParamError("beta_nonlocal", "beta(q-1) must exceed N for the nonlocal integral")
    if not beta < 1.0:
        raise ParamError("beta_one", "beta must be below 1")

    return ModelParams(**values)


@lru_cache(maxsize=None)
def derive(params: ModelParams) -> DerivedConstants:
    """Derived constants b, kappa, gamma for a validated parameter set."""
    p, q, N = params.p, params.q, params.N
    b = (p - 1.0) ** 2 / (4.0 * p)
    kappa = (p - 1.0) ** (-1.0 / (p - 1.0))
    gamma = (p - q) / (p - 1.0) + (N - 1) / 2.0
    if gamma <= 0.0:
        raise ParamError("gamma", "derived gamma must be positive")  # pragma: no cover
    return DerivedConstants(b=b, kappa=kappa, gamma=gamma)


def default_params(**overrides) -> ModelParams:
    """Reference configuration with optional field overrides."""
    values = dict(DEFAULTS)
    values.update(overrides)
    return validate(values)


def with_fields(params: ModelParams, **overrides) -> ModelParams:
    """Re-validated copy of ``params`` with the given fields replaced."""
    return validate(replace(params, **overrides))
