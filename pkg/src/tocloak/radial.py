"""Fourier-radial solver for radially symmetric media.

Writing ``u(r, t) = (2 pi)^-1/2 sum_n u_n(r) exp(i n t)`` reduces the system
``-div(A grad u) - w^2 B u = f`` with frame-diagonal A to the mode equations

    -(1/r) (r a_r u_n')' + (n^2 / r^2) a_t u_n - w^2 b u_n = f_n

on ``(0, R)``.  They are integrated as a first-order system in the value
``u_n`` and the flux ``q_n = r a_r u_n'``, which is continuous across
material interfaces.  For m > 1 the state is an m x m fundamental matrix.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import ResonanceError, SolverError
from .xform import RadialProfile

R0 = 1e-6
RTOL = 1e-10
ATOL = 1e-12
MODE_BLOCK = 17  # one sweep covers the default |n| <= 16
RESONANCE_RATIO = 1e-8


# --------------------------------------------------------------------------
# Fourier decomposition on the boundary circle


def fourier_decompose(h, n_max: int) -> dict:
    """Coefficients ``u^(n)`` of equispaced samples ``h`` for ``|n| <= n_max``.

    ``h`` has shape (N,) or (N, m) with samples at ``2 pi j / N``.
    """
    h = np.asarray(h, dtype=complex)
    N = h.shape[0]
    if N < 4 * n_max or N == 0:
        raise ValueError(f"need at least 4*n_max = {4 * n_max} samples, got {N}")
    c = np.fft.fft(h, axis=0) * (np.sqrt(2 * np.pi) / N)
    return {n: c[n % N] for n in range(-n_max, n_max + 1)}


def fourier_reconstruct(coeffs: dict, N: int):
    theta = 2 * np.pi * np.arange(N) / N
    out = 0
    for n, c in coeffs.items():
        out = out + np.multiply.outer(np.exp(1j * n * theta), np.asarray(c)) / np.sqrt(2 * np.pi)
    return out


def source_modes(f: Callable, n_max: int, n_theta: int = 64, m: int = 1) -> Callable:
    """Radial mode functions ``r -> {n: f_n(r)}`` of a Cartesian source ``f``."""
    n_theta = max(n_theta, 4 * n_max)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta

    def modes(r):
        pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        vals = np.asarray(f(pts), dtype=complex).reshape(n_theta, m)
        return fourier_decompose(vals, n_max)

    return modes


# --------------------------------------------------------------------------
# single-mode solver
#
# The integration variable is t = ln r and homogeneous columns are stored
# as u = r^k V, q = r^k P with k = |n|, which keeps the state O(1) from the
# start radius to R.  The particular column (last one) is left unscaled.


class _Sweep:
    """Dense fundamental systems of several modes on [R0, R], integrated jointly.

    All modes share one pass so the medium is evaluated once per stage.
    ``source_mode(r)`` returns an array (len(ns), m) of source modes.
    """

    def __init__(self, profile: RadialProfile, ns, omega, source_mode=None, rtol=RTOL, atol=ATOL):
        self.profile = profile
        self.m = m = profile.m
        self.ns = np.atleast_1d(np.asarray(ns, dtype=int))
        K = len(self.ns)
        self.k = np.abs(self.ns)
        R = profile.outer_radius
        nsq = (self.ns.astype(float) ** 2)[:, None, None]
        kk = self.k.astype(float)[:, None, None] * np.concatenate([np.ones(m), [0.0]])
        w2 = float(omega) ** 2
        self.size = size = K * m * (m + 1)
        shape = (K, m, m + 1)

        def rhs(t, y):
            r = np.exp(t)
            V = y[:size].reshape(shape)
            P = y[size:].reshape(shape)
            a_r, a_t, b = profile.evaluate(np.array([r]))
            if m == 1:
                dV = P / a_r[0, 0, 0] - kk * V
                dP = (nsq * a_t[0, 0, 0] - w2 * r * r * b[0, 0, 0]) * V - kk * P
            else:
                dV = np.linalg.solve(a_r[0], P) - kk * V
                dP = nsq * (a_t[0] @ V) - w2 * r * r * (b[0] @ V) - kk * P
            if source_mode is not None:
                dP[:, :, m] -= r * r * np.asarray(source_mode(r), dtype=complex).reshape(K, m)
            return np.concatenate([dV.ravel(), dP.ravel()])

        knots = [R0] + [bp for bp in profile.breakpoints if R0 < bp < R] + [R]
        y = self._initial(omega)
        self.segments = []
        for lo, hi in zip(knots[:-1], knots[1:]):
            sol = solve_ivp(rhs, (np.log(lo), np.log(hi)), y, method="DOP853",
                            rtol=rtol, atol=atol, dense_output=True)
            if not sol.success:
                raise SolverError(f"modes {self.ns.tolist()}: integration failed on [{lo}, {hi}]: {sol.message}")
            self.segments.append((lo, hi, sol))
            y = sol.y[:, -1]
        self.r = np.concatenate([np.exp(s.t) for _, _, s in self.segments])

    def _initial(self, omega):
        m = self.m
        a_r = self.profile.a_r(np.array([R0]))[0]
        b = self.profile.b(np.array([R0]))[0]
        Vs, Ps = [], []
        for k in self.k:
            # two-term regular expansion u = r^k (I - c r^2)
            c = omega**2 * np.linalg.solve(a_r, b) / (4 * (k + 1))
            V = np.eye(m) - R0**2 * c
            P = a_r @ (k * np.eye(m) - (k + 2) * R0**2 * c)
            Vs.append(np.hstack([V, np.zeros((m, 1))]))
            Ps.append(np.hstack([P, np.zeros((m, 1))]))
        return np.concatenate([np.ravel(Vs), np.ravel(Ps)]).astype(complex)

    def scaled(self, r):
        """(V, P) at radii r, shapes (N, K, m, m+1)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        shape = (len(r), len(self.ns), self.m, self.m + 1)
        out = np.empty((len(r), 2 * self.size), dtype=complex)
        done = np.zeros(len(r), dtype=bool)
        for lo, hi, sol in self.segments:
            sel = (~done) & (r >= lo * (1 - 1e-14)) & (r <= hi * (1 + 1e-14))
            if sel.any():
                out[sel] = sol.sol(np.log(np.clip(r[sel], lo, hi))).T
                done |= sel
        if not done.all():
            raise ValueError("radius outside the solved interval")
        return out[:, : self.size].reshape(shape), out[:, self.size:].reshape(shape)

    def state(self, r):
        """Physical (U, Q) at radii r; homogeneous columns rescaled by r^k."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        V, P = self.scaled(r)
        s = np.ones(V.shape[:2] + (1, self.m + 1))
        s[:, :, 0, : self.m] = (r[:, None] ** self.k[None, :])[:, :, None]
        return V * s, P * s

    def end(self):
        """(V, P) at the outer radius (K, m, m+1), plus max ||V|| per mode."""
        V, P = self.scaled(np.array([self.profile.outer_radius]))
        m = self.m
        Vs = np.concatenate([s.y[: self.size].T for _, _, s in self.segments])
        Vs = Vs.reshape(-1, len(self.ns), m, m + 1)[..., :m]
        scale = np.max(np.linalg.norm(Vs, axis=(2, 3)), axis=0)
        return V[0], P[0], scale


def _check_resonance(VR, scale, n, omega):
    smin = np.linalg.svd(VR, compute_uv=False).min()
    if smin < RESONANCE_RATIO * scale:
        raise ResonanceError(
            f"mode {n} is resonant at omega={omega}: |u(R)| = {smin:.3e} vs max {scale:.3e}",
            mode=n,
            omega=omega,
        )


@dataclass
class ModeSolution:
    """Solution of one mode problem; ``flux = r a_r du/dr``."""

    n: int
    omega: float
    r: np.ndarray
    value: np.ndarray
    flux: np.ndarray
    profile: RadialProfile = field(repr=False)
    sweep: _Sweep = field(repr=False, default=None)
    coef: np.ndarray = field(repr=False, default=None)
    outer_radius: float = 2.0

    @property
    def dtn(self):
        """Conormal derivative ``a_r u'`` at the outer radius."""
        return self.flux[-1] / self.outer_radius

    def __call__(self, r):
        """Value and flux at radii ``r`` (arrays of shape (len(r), m))."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        k = abs(self.n)
        rc = np.maximum(r, R0)
        U, Q = self.sweep.state(rc)
        val = U[:, 0] @ self.coef
        flx = Q[:, 0] @ self.coef
        small = r < R0
        if small.any():
            # regular behaviour below the start radius
            t = (r[small] / R0)[:, None]
            val[small] *= t**k
            flx[small] *= t ** max(k, 2)
        return val, flx

    def derivative(self, r):
        """``du/dr`` at radii ``r``."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        rc = np.maximum(r, R0)
        _, flx = self(rc)
        a_r = self.profile.a_r(rc)
        out = np.linalg.solve(rc[:, None, None] * a_r, flx[:, :, None])[:, :, 0]
        small = r < R0
        if small.any():
            k = abs(self.n)
            t = (r[small] / R0)[:, None]
            out[small] *= t ** (k - 1) if k >= 1 else t
        return out


def solve_radial_mode(
    profile: RadialProfile,
    n: int,
    omega: float,
    boundary_value=1.0,
    source_mode: Optional[Callable] = None,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> ModeSolution:
    """Solve mode ``n`` with ``u_n(R) = boundary_value`` and regularity at r = 0.

    ``source_mode(r)`` returns the m-vector ``f_n(r)``.  Raises
    :class:`ResonanceError` when the homogeneous problem is (nearly) singular.
    """
    if omega < 0:
        raise ValueError("omega must be non-negative")
    m = profile.m
    R = profile.outer_radius
    g = np.broadcast_to(np.asarray(boundary_value, dtype=complex), (m,))
    src = None if source_mode is None else (lambda r: np.asarray(source_mode(r)).reshape(1, m))
    sw = _Sweep(profile, [n], omega, src, rtol, atol)
    VR, _, scale = sw.end()
    _check_resonance(VR[0, :, :m], scale[0], n, omega)
    c = np.linalg.solve(VR[0, :, :m] * R ** abs(n), g - VR[0, :, m])
    coef = np.concatenate([c, [1.0]])
    U, Q = sw.state(sw.r)
    return ModeSolution(n=n, omega=omega, r=sw.r, value=U[:, 0] @ coef, flux=Q[:, 0] @ coef,
                        profile=profile, sweep=sw, coef=coef, outer_radius=R)


def mode_dtns(profile: RadialProfile, ns, omega: float, rtol=RTOL, atol=ATOL) -> list:
    """``lambda_n`` for each n in ``ns`` from one joint sweep."""
    m = profile.m
    sw = _Sweep(profile, ns, omega, None, rtol, atol)
    VR, PR, scale = sw.end()
    out = []
    for i, n in enumerate(sw.ns):
        _check_resonance(VR[i, :, :m], scale[i], int(n), omega)
        lam = PR[i, :, :m] @ np.linalg.inv(VR[i, :, :m]) / profile.outer_radius
        out.append(complex(lam[0, 0]) if m == 1 else lam)
    return out


def mode_dtn(profile: RadialProfile, n: int, omega: float, rtol=RTOL, atol=ATOL):
    """``lambda_n``: for m = 1 a complex number, otherwise the m x m matrix."""
    return mode_dtns(profile, [n], omega, rtol, atol)[0]


def _transposed(profile: RadialProfile) -> RadialProfile:
    def tr(f):
        return lambda r, side="right": np.swapaxes(f(r, side), -1, -2)

    return RadialProfile(tr(profile.a_r), tr(profile.a_t), tr(profile.b),
                         profile.breakpoints, profile.m, profile.outer_radius)


def source_fluxes(profile: RadialProfile, ns, omega: float, source: Callable, n_theta: int = 64) -> dict:
    """Flux ``a_r u_n'(R)`` of the zero-boundary solution driven by ``source``, per mode.

    Uses the reciprocity identity ``R (a_r v')(R) = -int_0^R phi^T f_n r dr``
    where ``phi`` is the regular solution of the transposed mode problem with
    ``phi(R) = I``.  This avoids forming a particular solution, whose growing
    homogeneous part would swamp the result for high modes.
    """
    from scipy.integrate import quad_vec

    m = profile.m
    R = profile.outer_radius
    ns = list(ns)
    ks = sorted({abs(n) for n in ns})
    sw = _Sweep(_transposed(profile) if m > 1 else profile, ks, omega)
    VR, _, scale = sw.end()
    for i, k in enumerate(ks):
        _check_resonance(VR[i, :, :m], scale[i], k, omega)
    inv_end = np.linalg.inv(VR[:, :, :m])  # (K, m, m)
    kidx = {k: i for i, k in enumerate(ks)}
    fm = source_modes(source, max(ks), n_theta=n_theta, m=m)

    def integrand(r):
        rc = max(r, R0)
        V, _ = sw.scaled(np.array([rc]))
        out = np.empty((len(ns), m), dtype=complex)
        modes = fm(r)
        for j, n in enumerate(ns):
            i = kidx[abs(n)]
            # phi(r) = (r/R)^k V(r) V(R)^-1
            phi = (rc / R) ** abs(n) * V[0, i, :, :m] @ inv_end[i]
            out[j] = phi.T @ np.asarray(modes[n]).reshape(m) * r
        return out.ravel()

    knots = [0.0] + [bp for bp in profile.breakpoints if 0 < bp < R] + [R]
    total = np.zeros(len(ns) * m, dtype=complex)
    for lo, hi in zip(knots[:-1], knots[1:]):
        val, err = quad_vec(integrand, lo, hi, epsabs=1e-13, epsrel=1e-10)
        total += val
    g = -total.reshape(len(ns), m) / R
    return {n: (complex(g[j, 0]) if m == 1 else g[j]) for j, n in enumerate(ns)}


def mode_source_flux(profile: RadialProfile, n: int, omega: float, source_mode: Callable):
    """Flux ``a_r u_n'(R)`` of the solution with zero boundary value and source ``f_n``."""
    sol = solve_radial_mode(profile, n, omega, 0.0, source_mode)
    g = sol.dtn
    return complex(g[0]) if profile.m == 1 else g


@dataclass
class ModeDiagonalDtN:
    """Mode-diagonal DtN map; ``source_flux`` holds the affine part for nonzero sources."""

    modes: dict
    n_max: int
    omega: float
    source_flux: dict = field(default_factory=dict)

    def __getitem__(self, n):
        return self.modes[n]

    def apply(self, h_modes: dict) -> dict:
        return {n: self.modes[n] * h_modes.get(n, 0) + self.source_flux.get(n, 0) for n in self.modes}


def dtn_spectrum(profile: RadialProfile, omega: float, n_max: int, workers: int = 1,
                 source: Optional[Callable] = None) -> ModeDiagonalDtN:
    """``lambda_n`` for ``|n| <= n_max``; modes are solved independently.

    The mode equations depend on n only through n^2, so negative modes reuse
    the positive ones.  With ``source`` (a Cartesian source callable) the
    affine part of the map is returned in ``source_flux``.
    """
    ks = list(range(0, n_max + 1))
    # fixed blocks share one adaptive sweep, so the result does not depend on workers
    blocks = [ks[i:i + MODE_BLOCK] for i in range(0, len(ks), MODE_BLOCK)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: mode_dtns(profile, c, omega), blocks))
    else:
        parts = [mode_dtns(profile, c, omega) for c in blocks]
    values = [v for p in parts for v in p]
    modes = {}
    for k, v in zip(ks, values):
        modes[k] = modes[-k] = v
    modes = {n: modes[n] for n in range(-n_max, n_max + 1)}
    flux = source_fluxes(profile, list(modes), omega, source) if source is not None else {}
    return ModeDiagonalDtN(modes, n_max, omega, flux)


# --------------------------------------------------------------------------
# resonance location


def boundary_response(profile: RadialProfile, n: int, omega: float, kind: str = "dirichlet"):
    """Normalised boundary value (``dirichlet``) or flux (``neumann``) of the regular mode solution."""
    sw = _Sweep(profile, [n], omega)
    VR, PR, scale = sw.end()
    x = VR[0, 0, 0] if kind == "dirichlet" else PR[0, 0, 0]
    return float(np.real(x) / scale[0])


def find_resonance(profile: RadialProfile, n: int, bracket, kind: str = "dirichlet", xtol: float = 1e-12) -> float:
    """Frequency in ``bracket`` where mode ``n`` loses unique solvability.

    ``kind="dirichlet"`` zeros the boundary value, ``"neumann"`` the boundary
    flux (the condition met by constant-trace interior problems for n = 0).
    """
    lo, hi = bracket
    return brentq(lambda w: boundary_response(profile, n, w, kind), lo, hi, xtol=xtol)


@dataclass
class RadialSolution:
    """Superposition of mode solutions; evaluates values and Cartesian gradients."""

    modes: dict

    def value(self, points):
        pts = np.atleast_2d(points)
        r = np.hypot(pts[:, 0], pts[:, 1])
        t = np.arctan2(pts[:, 1], pts[:, 0])
        m = next(iter(self.modes.values())).profile.m
        out = np.zeros((len(pts), m), dtype=complex)
        for n, sol in self.modes.items():
            v, _ = sol(r)
            out += v * (np.exp(1j * n * t) / np.sqrt(2 * np.pi))[:, None]
        return out

    def grad(self, points):
        """Cartesian gradient, shape (N, 2, m)."""
        pts = np.atleast_2d(points)
        r = np.hypot(pts[:, 0], pts[:, 1])
        t = np.arctan2(pts[:, 1], pts[:, 0])
        m = next(iter(self.modes.values())).profile.m
        dr = np.zeros((len(pts), m), dtype=complex)
        dt = np.zeros((len(pts), m), dtype=complex)  # (1/r) d/dtheta
        for n, sol in self.modes.items():
            v, _ = sol(r)
            d = sol.derivative(r)
            e = (np.exp(1j * n * t) / np.sqrt(2 * np.pi))[:, None]
            dr += d * e
            if n != 0:
                dt += 1j * n * v / np.where(r > 0, r, 1.0)[:, None] * e
        c, s = np.cos(t)[:, None], np.sin(t)[:, None]
        return np.stack([c * dr - s * dt, s * dr + c * dt], axis=1)
