"""Diffeomorphisms of planar regions and push-forward of media and sources.

All maps act on ``(N, 2)`` point arrays (a single point of shape ``(2,)`` is
also accepted and returned with the same shape).  Jacobians are analytic;
``jacobian(x)`` is the derivative of the *forward* map at reference points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coeffs import (
    Annulus,
    BlockCoefficient,
    CoefficientField,
    CompositeField,
    Disk,
    MappedRegion,
    block_to_matrix,
    frame_blocks,
    from_frame_blocks,
    matrix_to_block,
    radial_frame,
)
from .errors import DomainMismatchError, SingularPointError


def _as_points(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _restore(y, single):
    return y[0] if single else y


class DiffeoMap:
    """Orientation-preserving map with analytic inverse and Jacobian."""

    def __init__(self, forward, inverse, jacobian, domain=None, codomain=None, name="map", fixes_boundary=False):
        self._forward = forward
        self._inverse = inverse
        self._jacobian = jacobian
        self.domain = domain
        self.codomain = codomain
        self.name = name
        self.fixes_boundary = fixes_boundary

    def forward(self, x):
        pts, single = _as_points(x)
        return _restore(self._forward(pts), single)

    def inverse(self, y):
        pts, single = _as_points(y)
        return _restore(self._inverse(pts), single)

    def jacobian(self, x):
        pts, single = _as_points(x)
        return _restore(self._jacobian(pts), single)

    def inverse_jacobian(self, y):
        """Derivative of the inverse map at image points ``y``."""
        return np.linalg.inv(self.jacobian(self.inverse(y)))

    __call__ = forward

    def __repr__(self):
        return f"DiffeoMap({self.name})"


def identity_map(radius=2.0):
    disk = Disk(radius)
    return DiffeoMap(
        lambda x: x.copy(),
        lambda y: y.copy(),
        lambda x: np.broadcast_to(np.eye(2), (len(x), 2, 2)).copy(),
        domain=disk,
        codomain=disk,
        name="identity",
        fixes_boundary=True,
    )


def affine_map(matrix, shift=(0.0, 0.0), domain=None, name="affine"):
    M = np.asarray(matrix, dtype=float)
    t = np.asarray(shift, dtype=float)
    if np.linalg.det(M) <= 0:
        raise ValueError("affine map must be orientation preserving (det > 0)")
    Minv = np.linalg.inv(M)
    domain = Disk(2.0) if domain is None else domain
    G = DiffeoMap(
        lambda x: x @ M.T + t,
        lambda y: (y - t) @ Minv.T,
        lambda x: np.broadcast_to(M, (len(x), 2, 2)).copy(),
        domain=domain,
        name=name,
    )
    G.codomain = MappedRegion(domain, G)
    G.matrix, G.shift = M, t
    return G


def scaling_map(factor, domain=None):
    return affine_map(np.eye(2) * float(factor), domain=domain, name=f"scale({factor})")


def ellipse_map(a=2.0, b=1.0, domain=None):
    """``(x1, x2) -> (a x1, b x2)``; the default maps the disk of radius 2 to an ellipse."""
    return affine_map(np.diag([a, b]), domain=domain, name=f"ellipse({a},{b})")


# --------------------------------------------------------------------------
# radial maps


class RadialMap(DiffeoMap):
    """``x -> g(|x|) x/|x|`` with a monotone radial profile ``g``.

    ``dg`` is g' and ``ginv`` the inverse profile.  When ``puncture`` is set
    the origin is excluded from the domain (g(0+) > 0).
    """

    def __init__(self, g, dg, ginv, radius=2.0, puncture=False, name="radial"):
        self.g, self.dg, self.ginv = g, dg, ginv
        self.puncture = puncture
        self.radius = radius
        super().__init__(self._fwd, self._inv, self._jac, domain=Disk(radius), codomain=Disk(radius), name=name, fixes_boundary=True)

    def _check(self, r):
        if self.puncture and np.any(r == 0):
            raise SingularPointError(f"{self.name}: evaluation at the puncture x = 0")

    def _fwd(self, x):
        r = np.hypot(x[:, 0], x[:, 1])
        self._check(r)
        out = np.zeros_like(x)
        nz = r > 0
        out[nz] = x[nz] * (self.g(r[nz]) / r[nz])[:, None]
        return out

    def _inv(self, y):
        rho = np.hypot(y[:, 0], y[:, 1])
        out = np.zeros_like(y)
        nz = rho > 0
        out[nz] = y[nz] * (self.ginv(rho[nz]) / rho[nz])[:, None]
        return out

    def _jac(self, x):
        r = np.hypot(x[:, 0], x[:, 1])
        self._check(r)
        n = len(x)
        J = np.empty((n, 2, 2))
        nz = r > 0
        if np.any(~nz):
            J[~nz] = np.eye(2) * self.dg(np.zeros(1))[0]
        if np.any(nz):
            rr = r[nz]
            e = x[nz] / rr[:, None]
            P = np.einsum("na,nb->nab", e, e)
            gp = self.dg(rr)
            go = self.g(rr) / rr
            J[nz] = gp[:, None, None] * P + go[:, None, None] * (np.eye(2) - P)
        return J


def blowup_map():
    """The singular map blowing the origin up to the unit disk, fixing |x| = 2."""
    return RadialMap(
        g=lambda r: 1.0 + r / 2.0,
        dg=lambda r: np.full_like(r, 0.5, dtype=float),
        ginv=lambda rho: 2.0 * (rho - 1.0),
        puncture=True,
        name="blowup",
    )


def regularized_blowup(eps: float):
    """Two-piece linear radial map blowing up the disk of radius ``eps`` to the unit disk."""
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {eps}")
    a = (2.0 - 2.0 * eps) / (2.0 - eps)
    b = 1.0 / (2.0 - eps)

    def g(r):
        return np.where(r <= eps, r / eps, a + b * r)

    def dg(r):
        return np.where(r <= eps, 1.0 / eps, b)

    def ginv(rho):
        return np.where(rho <= 1.0, eps * rho, (rho - a) / b)

    F = RadialMap(g, dg, ginv, puncture=False, name=f"blowup_eps({eps:g})")
    F.eps, F.a, F.b = eps, a, b
    return F


def conjugated_map(G: DiffeoMap, inner: DiffeoMap) -> DiffeoMap:
    """``K = G o inner o G^-1`` acting on ``G(domain of inner)``."""
    inner_dom = getattr(inner, "domain", None)
    g_dom = getattr(G, "domain", None)
    if inner_dom is not None and g_dom is not None and inner_dom != g_dom:
        raise DomainMismatchError(f"G is defined on {g_dom} but the inner map acts on {inner_dom}")

    def fwd(y):
        return G.forward(inner.forward(G.inverse(y)))

    def inv(z):
        return G.forward(inner.inverse(G.inverse(z)))

    def jac(y):
        x = G.inverse(y)
        xi = inner.forward(x)
        DGinv = np.linalg.inv(G.jacobian(x))
        return G.jacobian(xi) @ inner.jacobian(x) @ DGinv

    codomain = G.codomain if G.codomain is not None else None
    return DiffeoMap(fwd, inv, jac, domain=codomain, codomain=codomain, name=f"{G.name}*{inner.name}*{G.name}^-1", fixes_boundary=inner.fixes_boundary)


def composed_map(outer: DiffeoMap, inner: DiffeoMap) -> DiffeoMap:
    """``outer o inner``."""
    return DiffeoMap(
        lambda x: outer.forward(inner.forward(x)),
        lambda y: inner.inverse(outer.inverse(y)),
        lambda x: outer.jacobian(inner.forward(x)) @ inner.jacobian(x),
        domain=inner.domain,
        codomain=outer.codomain,
        name=f"{outer.name}o{inner.name}",
    )


# --------------------------------------------------------------------------
# push-forward


def pushforward_blocks(DF, A, B):
    """Transform stacked blocks with Jacobians ``DF`` (N, 2, 2).

    ``A~[p, q] = sum_{a,b} DF[p, a] A[a, b] DF[q, b] / det DF`` and
    ``B~ = B / det DF``.
    """
    J = np.linalg.det(DF)
    if np.any(J <= 0):
        raise SingularPointError("push-forward through a map with non-positive Jacobian")
    At = np.einsum("npa,nabij,nqb->npqij", DF, A, DF) / J[:, None, None, None, None]
    Bt = B / J[:, None, None]
    return At, Bt


def pushforward_coefficients(F: DiffeoMap, field: CoefficientField) -> CoefficientField:
    """The medium ``F_* field`` on the image region, evaluated lazily."""

    def evaluator(y):
        x = F.inverse(y)
        A, B = field.evaluate(x)
        return pushforward_blocks(F.jacobian(x), A, B)

    radial = field.is_radial and isinstance(F, RadialMap)
    codomain = F.codomain
    if field.domain is not None and not isinstance(F, RadialMap):
        codomain = MappedRegion(field.domain, F)
    return CoefficientField(codomain, evaluator, m=field.m, is_radial=radial, name=f"{F.name}_*({field.name})")


def pushforward_source(F: DiffeoMap, f: Callable) -> Callable:
    """``f_c(y) = f(x) / det DF(x)`` at ``x = F^-1(y)``; preserves the L2 duality pairing."""

    def source(y):
        y = np.atleast_2d(y)
        x = F.inverse(y)
        J = np.linalg.det(F.jacobian(x))
        return np.asarray(f(x)).reshape(len(x), -1) / J[:, None]

    return source


def closed_form_radial_cloak(background: CoefficientField) -> CoefficientField:
    """Ideal cloak on 1 < |y| < 2 assembled from radial/tangential projections."""
    F = blowup_map()
    m = background.m

    def evaluator(y):
        rho = np.hypot(y[:, 0], y[:, 1])
        if np.any((rho <= 1.0) | (rho >= 2.0)):
            raise SingularPointError("closed-form cloak is defined only for 1 < |y| < 2")
        Ab, Bb = background.evaluate(F.inverse(y))
        e = y / rho[:, None]
        Pi = np.einsum("na,nb->nab", e, e)
        eye_m = np.eye(m)
        P = np.einsum("nab,ij->naibj", Pi, eye_m).reshape(-1, 2 * m, 2 * m)
        Q = np.eye(2 * m) - P
        M = block_to_matrix(Ab)
        s = ((rho - 1.0) / rho)[:, None, None]
        Ac = s * (P @ M @ P) + P @ M @ Q + (Q @ M @ Q) / s + Q @ M @ P
        Bc = 4.0 * s * Bb
        return matrix_to_block(Ac), Bc

    return CoefficientField(
        Annulus(1.0, 2.0),
        evaluator,
        m=m,
        is_radial=background.is_radial,
        name=f"ideal_cloak({background.name})",
    )


def near_cloak_medium(background: CoefficientField, eps: float, filling: CoefficientField, G: DiffeoMap | None = None):
    """Regularised cloak ``F_eps*`` background in the shell, ``filling`` in the cloaked disk.

    With ``G`` given the whole configuration is transported by ``G``: the
    background is ``G_* background``, the shell is ``(G o F_eps)_* background``
    and the filling is ``G_* filling`` on ``G(B_1)``.  Region ids: 0 = cloaked
    region, 1 = cloaking shell.
    """
    F = regularized_blowup(eps)
    shell = pushforward_coefficients(F, background)
    if G is None:
        pieces = [filling, shell]

        def locate(y):
            return (np.hypot(y[:, 0], y[:, 1]) > 1.0).astype(int)

        domain = Disk(2.0)
    else:
        pieces = [pushforward_coefficients(G, filling), pushforward_coefficients(composed_map(G, F), background)]

        def locate(y):
            x = G.inverse(y)
            return (np.hypot(x[:, 0], x[:, 1]) > 1.0).astype(int)

        domain = MappedRegion(Disk(2.0), G)
    radial = G is None and filling.is_radial and background.is_radial
    return CompositeField(pieces, locate, domain=domain, is_radial=radial, breakpoints=(1.0,), name=f"near_cloak({eps:g})")


# --------------------------------------------------------------------------
# radial profiles


@dataclass
class RadialProfile:
    """Frame-diagonal radial medium: ``a_r``, ``a_t``, ``b`` map radii to (N, m, m).

    ``side`` selects the one-sided limit at a breakpoint ("left" or "right").
    """

    a_r: Callable
    a_t: Callable
    b: Callable
    breakpoints: Sequence[float] = ()
    m: int = 1
    outer_radius: float = 2.0

    def evaluate(self, r, side="right"):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return self.a_r(r, side), self.a_t(r, side), self.b(r, side)


_NUDGE = 1e-13


def radial_profile_of(field: CoefficientField, outer_radius=2.0) -> RadialProfile:
    """Sample a radial field along the positive x-axis in its (radial, tangential) frame."""
    if not field.is_radial:
        raise ValueError("radial_profile_of requires a radial field")
    bps = tuple(sorted(field.breakpoints))

    def nudge(r, side):
        r = np.array(r, dtype=float)
        for bp in bps:
            on = np.abs(r - bp) <= _NUDGE * max(bp, 1.0)
            r[on] = bp * (1 + _NUDGE) if side == "right" else bp * (1 - _NUDGE)
        return r

    cache = {}

    def blocks(r, side):
        key = (side, r.tobytes())
        if key not in cache:
            rr = nudge(r, side)
            pts = np.stack([rr, np.zeros_like(rr)], axis=1)
            A, B = field.evaluate(pts)
            e_r, e_t = radial_frame(pts)
            Fb = frame_blocks(A, e_r, e_t)
            cache.clear()
            cache[key] = (Fb[:, 0, 0], Fb[:, 1, 1], B)
        return cache[key]

    return RadialProfile(
        a_r=lambda r, side="right": blocks(r, side)[0],
        a_t=lambda r, side="right": blocks(r, side)[1],
        b=lambda r, side="right": blocks(r, side)[2],
        breakpoints=bps,
        m=field.m,
        outer_radius=outer_radius,
    )


def near_cloak_profile(eps, filling_a=1.0, filling_b=1.0, background_a=1.0, background_b=1.0):
    """Closed-form radial profile of the regularised cloak over an isotropic background.

    Shell radii ``rho`` in (1, 2) pull back to ``r = (rho - a)/b``; the
    filling occupies ``rho < 1``.  Used to cross-check ``radial_profile_of``.
    """
    F = regularized_blowup(eps)
    a, b = F.a, F.b

    def piece(inner, shell):
        def f(r, side="right"):
            r = np.atleast_1d(np.asarray(r, dtype=float))
            inside = (r < 1.0) | ((r == 1.0) & (side == "left"))
            out = np.where(inside, inner(r), shell(r))
            return out[:, None, None].astype(complex)

        return f

    def pull(rho):
        return (rho - a) / b

    return RadialProfile(
        a_r=piece(lambda r: np.full_like(r, filling_a), lambda rho: background_a * b * pull(rho) / rho),
        a_t=piece(lambda r: np.full_like(r, filling_a), lambda rho: background_a * rho / (b * pull(rho))),
        b=piece(lambda r: np.full_like(r, filling_b), lambda rho: background_b * pull(rho) / (b * rho)),
        breakpoints=(1.0,),
    )


def constant_profile(a=1.0, b=1.0, m=1, outer_radius=2.0):
    a = np.asarray(a, dtype=complex) * np.eye(m) if np.ndim(a) == 0 else np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex) * np.eye(m) if np.ndim(b) == 0 else np.asarray(b, dtype=complex)

    def const(M):
        return lambda r, side="right": np.broadcast_to(M, (len(np.atleast_1d(r)), m, m))

    return RadialProfile(const(a), const(a), const(b), (), m=m, outer_radius=outer_radius)


def radial_field(profile: RadialProfile, domain=None, name="radial") -> CoefficientField:
    """Cartesian coefficient field of a frame-diagonal radial profile."""

    def evaluator(y):
        rho = np.hypot(y[:, 0], y[:, 1])
        # any frame works at the origin, where the profile must be isotropic
        e_r, e_t = radial_frame(np.where(rho[:, None] > 0, y, [1.0, 0.0]))
        a_r, a_t, b = profile.evaluate(rho)
        return from_frame_blocks(a_r, a_t, e_r, e_t), b

    return CoefficientField(domain or Disk(profile.outer_radius), evaluator, m=profile.m, is_radial=True, breakpoints=profile.breakpoints, name=name)


def pointwise(field: CoefficientField, y) -> BlockCoefficient:
    return field(np.asarray(y, dtype=float))
