"""Cloaking scenarios, report records and the source library."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..coeffs import CoefficientField, identity_field, isotropic_field
from ..xform import DiffeoMap

SOLVERS = ("spectral", "fem", "decoupled")


@dataclass
class Scenario:
    """Background medium on the reference disk B_2, cloak parameters and interior content.

    ``background_source`` lives in reference coordinates and must vanish
    near the blow-up point; ``interior_source`` lives on the unit disk
    before the map ``G`` is applied.
    """

    omega: float = 1.0
    background: CoefficientField = field(default_factory=identity_field)
    background_source: Optional[Callable] = None
    epsilon: float = 0.1
    G: Optional[DiffeoMap] = None
    interior: CoefficientField = field(default_factory=lambda: isotropic_field(1.0, 1.0))
    interior_source: Optional[Callable] = None
    solver: str = "spectral"
    n_max: int = 8
    h: float = 0.05
    h_interface: Optional[float] = None

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.omega < 0:
            raise ValueError("omega must be non-negative")
        if self.epsilon < 0 or self.epsilon >= 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.epsilon == 0 and self.solver != "decoupled":
            raise ValueError("the ideal cloak (epsilon = 0) is only available through the decoupled solver")
        if self.background.m != self.interior.m:
            raise ValueError("background and interior must share m")

    @property
    def m(self) -> int:
        return self.background.m

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)


@dataclass
class CloakReport:
    epsilon: float
    dtn_background: object
    dtn_cloaked: object
    error: float
    relative_error: float
    mode_errors: Optional[dict] = None
    hidden_bc: Optional[dict] = None
    jump_value: Optional[np.ndarray] = None
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.error >= 0 and self.relative_error >= 0):
            raise ValueError("errors must be nonnegative")


# ---------------------------------------------------------------------- sources


def gaussian_source(x0, y0, sigma, amplitude=1.0, m=1, support=None):
    """Gaussian bump; ``support`` (a region with ``contains``) restricts it."""

    def f(points):
        p = np.atleast_2d(points)
        v = amplitude * np.exp(-((p[:, 0] - x0) ** 2 + (p[:, 1] - y0) ** 2) / (2 * sigma**2))
        if support is not None:
            v = np.where(support.contains(p), v, 0.0)
        return np.repeat(v[:, None], m, axis=1).astype(complex)

    return f


def smooth_bump(r):
    """C-infinity bump on |r| < 1, equal to 1 at 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def angular_mode_source(n, amplitude=1.0, r0=1.0, width=0.5, m=1):
    """``amplitude * bump((r - r0)/width) * exp(i n theta)``."""

    def f(points):
        p = np.atleast_2d(points)
        r = np.hypot(p[:, 0], p[:, 1])
        t = np.arctan2(p[:, 1], p[:, 0])
        v = amplitude * smooth_bump((r - r0) / width) * np.exp(1j * n * t)
        return np.repeat(v[:, None], m, axis=1)

    return f


def annular_bump_source(center=(1.2, 0.3), radius=0.35, amplitude=1.0, m=1):
    """Compactly supported bump centred at ``center``."""
    c = np.asarray(center, dtype=float)

    def f(points):
        p = np.atleast_2d(points)
        v = amplitude * smooth_bump(np.linalg.norm(p - c, axis=1) / radius)
        return np.repeat(v[:, None], m, axis=1).astype(complex)

    return f


def combine_sources(inner: Optional[Callable], outer: Optional[Callable], locate_outer: Callable, m: int):
    """``inner`` where ``locate_outer`` is false, ``outer`` where it is true."""
    if inner is None and outer is None:
        return None

    def f(points):
        p = np.atleast_2d(points)
        out = np.zeros((len(p), m), dtype=complex)
        sel = locate_outer(p)
        if inner is not None and np.any(~sel):
            out[~sel] = np.asarray(inner(p[~sel]), dtype=complex).reshape(-1, m)
        if outer is not None and np.any(sel):
            out[sel] = np.asarray(outer(p[sel]), dtype=complex).reshape(-1, m)
        return out

    return f
