"""Energy functional, tangential dichotomy, cutoff decay, shell integrals and form invariance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from ..coeffs import Annulus, CoefficientField, Disk, matrix_to_block
from ..xform import DiffeoMap, pushforward_coefficients
from .quadrature import adaptive_integral, disk_rule_factory

DIVERGENCE_GROWTH = 0.10
STABLE_RTOL = 1e-6
ANGULAR_TOL = 1e-8


# ---------------------------------------------------------------------- smooth fields


class SmoothField:
    """Sampler protocol: ``value(points) -> (N, m)`` and ``grad(points) -> (N, 2, m)``."""

    m = 1

    def value(self, points):
        raise NotImplementedError

    def grad(self, points):
        raise NotImplementedError


class PlaneWaveField(SmoothField):
    """``sum_j c_j exp(i k_j . x) + const`` with m-vector coefficients; analytic gradient."""

    def __init__(self, wavevectors, coeffs, constant=0.0):
        self.k = np.asarray(wavevectors, dtype=float).reshape(-1, 2)
        c = np.asarray(coeffs, dtype=complex)
        self.c = c.reshape(len(self.k), -1)
        self.m = self.c.shape[1]
        self.const = np.broadcast_to(np.asarray(constant, dtype=complex), (self.m,)).copy()

    @classmethod
    def random(cls, rng, terms=3, kmax=2.0, kmin=0.5, m=1):
        mag = rng.uniform(kmin, kmax, terms)
        ang = rng.uniform(0, 2 * np.pi, terms)
        k = np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=1)
        c = rng.normal(size=(terms, m)) + 1j * rng.normal(size=(terms, m))
        return cls(k, c / np.sqrt(terms), 0.5 * (rng.normal(size=m) + 1j * rng.normal(size=m)))

    def value(self, points):
        p = np.atleast_2d(points)
        return np.exp(1j * p @ self.k.T) @ self.c + self.const

    def grad(self, points):
        p = np.atleast_2d(points)
        e = np.exp(1j * p @ self.k.T)
        return 1j * np.einsum("nj,ja,jm->nam", e, self.k, self.c)


class InterfaceFlattened(SmoothField):
    """``q(|y|) + (|y| - 1) psi(y)``: angular derivative vanishes on |y| = 1."""

    def __init__(self, psi: SmoothField, radial_coeffs=(0.3, -0.2)):
        self.psi = psi
        self.m = psi.m
        self.q = np.asarray(radial_coeffs, dtype=complex)

    def _parts(self, p):
        r = np.hypot(p[:, 0], p[:, 1])
        er = p / np.where(r > 0, r, 1.0)[:, None]
        return r, er

    def value(self, points):
        p = np.atleast_2d(points)
        r, _ = self._parts(p)
        q = self.q[0] + self.q[1] * r**2
        return q[:, None] + (r - 1)[:, None] * self.psi.value(p)

    def grad(self, points):
        p = np.atleast_2d(points)
        r, er = self._parts(p)
        dq = (2 * self.q[1] * r)[:, None] * er
        g = dq[:, :, None] + er[:, :, None] * self.psi.value(p)[:, None, :]
        return g + (r - 1)[:, None, None] * self.psi.grad(p)


class PulledForward(SmoothField):
    """``u = v o F^-1`` with ``grad u = DF^-T grad v``."""

    def __init__(self, ref: SmoothField, F: DiffeoMap):
        self.ref, self.F = ref, F
        self.m = getattr(ref, "m", 1)

    def value(self, points):
        return self.ref.value(self.F.inverse(np.atleast_2d(points)))

    def grad(self, points):
        x = self.F.inverse(np.atleast_2d(points))
        DFinvT = np.linalg.inv(self.F.jacobian(x)).transpose(0, 2, 1)
        return np.einsum("nab,nbm->nam", DFinvT, self.ref.grad(x))


def angular_derivative(phi: SmoothField, radius=1.0, n_theta=512):
    """max over the circle of |d phi / d theta|."""
    t = 2 * np.pi * np.arange(n_theta) / n_theta
    p = radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    g = phi.grad(p)
    tang = np.stack([-p[:, 1], p[:, 0]], axis=1)
    return float(np.max(np.abs(np.einsum("na,nam->nm", tang, g))))


# ---------------------------------------------------------------------- energy


def _frame(field: CoefficientField, points, grads):
    """Coefficients and gradients in a frame where the medium is well conditioned.

    A radial medium is sampled on the positive x-axis at the same radius,
    where its Cartesian blocks are the (radial, tangential) blocks, and the
    gradients are rotated to match.  Near the interface of the ideal cloak
    the two eigenvalues differ by many orders of magnitude, and assembling
    the Cartesian tensor elsewhere would lose the small one to roundoff.
    """
    if not field.is_radial:
        A, B = field.evaluate(points)
        return A, B, grads
    r = np.hypot(points[:, 0], points[:, 1])
    A, B = field.evaluate(np.stack([r, np.zeros_like(r)], axis=1))
    safe = np.where(r > 0, r, 1.0)
    c, s = np.where(r > 0, points[:, 0] / safe, 1.0), np.where(r > 0, points[:, 1] / safe, 0.0)
    out = []
    for g in grads:
        gr = c[:, None] * g[:, 0] + s[:, None] * g[:, 1]
        gt = -s[:, None] * g[:, 0] + c[:, None] * g[:, 1]
        out.append(np.stack([gr, gt], axis=1))
    return A, B, out


def energy_density(phi: SmoothField, field: CoefficientField, points):
    """``sum (A d phi)^H d phi + (B phi)^H phi`` at points."""
    points = np.atleast_2d(points)
    A, B, (g,) = _frame(field, points, [phi.grad(points)])
    v = phi.value(points)
    Ag = np.einsum("nabpk,nbk->nap", A, g)
    Bv = np.einsum("npk,nk->np", B, v)
    return np.einsum("nap,nap->n", Ag.conj(), g) + np.einsum("np,np->n", Bv.conj(), v)


@dataclass
class EnergyResult:
    energy: float
    energy_sq: float
    error: float
    level: int


def energy_functional(phi: SmoothField, field: CoefficientField, region, floor: float = 0.0,
                      rtol: float = 1e-9, max_level: int = 4, graded: Optional[Sequence[float]] = None,
                      finest: Optional[float] = None, G: Optional[DiffeoMap] = None,
                      n_theta: int = 64, refine_theta: bool = False) -> EnergyResult:
    """``E = |int sum (A d phi)^H d phi + (B phi)^H phi|^(1/2)`` over ``region``.

    Annuli are graded toward their inner circle and truncated ``floor`` away
    from it (the weight of the ideal cloak is singular there).  Raises
    :class:`QuadratureError` if successive levels do not agree to ``rtol``.
    Only the radial order is refined by default; ``n_theta`` trapezoid
    points resolve band-limited fields to roundoff.
    """
    if isinstance(region, Annulus):
        breaks = [region.inner, region.outer]
        graded = [region.inner] if graded is None else graded
    elif isinstance(region, Disk):
        breaks = [0.0, region.radius]
        graded = [] if graded is None else graded
    else:
        raise TypeError("region must be a Disk or an Annulus")
    make = disk_rule_factory(breaks, graded, floor=floor, finest=finest, G=G, base_theta=n_theta,
                             refine_theta=refine_theta)
    val, err, level = adaptive_integral(make, lambda p: energy_density(phi, field, p), rtol=rtol, max_level=max_level)
    e2 = abs(complex(val))
    return EnergyResult(float(np.sqrt(e2)), float(e2), err, level)


@dataclass
class DichotomyResult:
    values: list
    floors: list
    verdict: str  # "stable", "divergent" or "undetermined"
    angular_derivative: float


def energy_refinement(phi: SmoothField, field: CoefficientField, levels: int = 5, inner: float = 1.0,
                      outer: float = 2.0) -> DichotomyResult:
    """Energy over ``inner + 10^-2L < |y| < outer`` for L = 1..levels, then classified.

    Divergent: growth of at least 10 % at each of the last three levels.
    Stable: the last change is below 1e-6 relative.
    """
    floors = [10.0 ** (-2 * L) for L in range(1, levels + 1)]
    vals = [energy_functional(phi, field, Annulus(inner, outer), floor=f).energy_sq for f in floors]
    growth = [vals[i + 1] / vals[i] - 1 if vals[i] > 0 else np.inf for i in range(len(vals) - 1)]
    if len(growth) >= 3 and all(g >= DIVERGENCE_GROWTH for g in growth[-3:]):
        verdict = "divergent"
    elif abs(vals[-1] - vals[-2]) <= STABLE_RTOL * max(abs(vals[-1]), 1e-300):
        verdict = "stable"
    else:
        verdict = "undetermined"
    return DichotomyResult(vals, floors, verdict, angular_derivative(phi, inner))


# ---------------------------------------------------------------------- cutoff sequence


def _psi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _dpsi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def cutoff(t):
    """Smooth step: 1 for t <= 1/2, 0 for t >= 1."""
    a, b = _psi(1.0 - t), _psi(np.asarray(t) - 0.5)
    return a / (a + b)


def cutoff_derivative(t):
    t = np.asarray(t, dtype=float)
    a, b = _psi(1.0 - t), _psi(t - 0.5)
    da, db = -_dpsi(1.0 - t), _dpsi(t - 0.5)
    s = a + b
    return (da * s - a * (da + db)) / s**2


class CutoffField(SmoothField):
    """``rho(ln eps / ln(|y| - 1))`` on the annulus, 1 inside the unit disk."""

    def __init__(self, eps, profile=cutoff, dprofile=cutoff_derivative):
        self.eps = float(eps)
        self.L = np.log(self.eps)
        self.rho, self.drho = profile, dprofile

    def _t(self, p):
        r = np.hypot(p[:, 0], p[:, 1])
        s = r - 1.0
        t = np.full_like(r, 0.0)
        out = s > 0
        ls = np.log(np.where(out & (s < 1), s, 0.5))
        t[out] = np.where(s[out] < 1, self.L / ls[out], np.inf)
        return r, s, t, out

    def value(self, points):
        p = np.atleast_2d(points)
        r, s, t, out = self._t(p)
        v = np.ones_like(r)
        v[out] = np.where(np.isfinite(t[out]), self.rho(np.minimum(t[out], 2.0)), 0.0)
        return v[:, None].astype(complex)

    def grad(self, points):
        p = np.atleast_2d(points)
        r, s, t, out = self._t(p)
        d = np.zeros_like(r)
        sel = out & (s < 1)
        ls = np.log(s[sel])
        # d/ds rho(L / ln s) = rho'(t) * (-L / (s ln^2 s))
        d[sel] = self.drho(t[sel]) * (-self.L / (s[sel] * ls**2))
        er = p / np.where(r > 0, r, 1.0)[:, None]
        return (d[:, None] * er)[:, :, None].astype(complex)


def cutoff_constant(dprofile=cutoff_derivative) -> float:
    """``C_rho = 2 pi int_1^2 rho'(1/u)^2 u^-4 du`` by adaptive 1D quadrature."""
    val, _ = quad(lambda u: float(dprofile(np.array([1.0 / u]))[0]) ** 2 / u**4, 1.0, 2.0,
                  epsabs=1e-14, epsrel=1e-12, limit=200)
    return 2 * np.pi * val


@dataclass
class CutoffRow:
    epsilon: float
    energy_sq: float
    energy_sq_times_log: float
    b_term: float
    error: float


def _b_only(field):
    class _B(CoefficientField):
        def __init__(self):
            super().__init__(field.domain, None, m=field.m)

        def evaluate(self, points, regions=None):
            A, B = field.evaluate(points)
            return np.zeros_like(A), B

    return _B()


def cutoff_decay_experiment(eps_list, field: CoefficientField, profile=cutoff, dprofile=cutoff_derivative,
                            rtol: float = 1e-7):
    """Cloak energy of ``phi_eps`` over the shell for each eps (graded down to eps^2 / 10)."""
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 or e >= 1 for e in eps_list):
        raise ValueError("eps must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be decreasing")
    rows = []
    for eps in eps_list:
        phi = CutoffField(eps, profile, dprofile)
        floor = eps**2 / 10
        res = energy_functional(phi, field, Annulus(1.0, 2.0), floor=floor, finest=floor, rtol=rtol, n_theta=8)
        bres = energy_functional(phi, _b_only(field), Annulus(1.0, 2.0), floor=floor, finest=floor, rtol=rtol,
                                n_theta=8)
        rows.append(CutoffRow(eps, res.energy_sq, res.energy_sq * abs(np.log(eps)), bres.energy_sq, res.error))
    return rows


# ---------------------------------------------------------------------- shell integrals


def flux_density(u: SmoothField, field: CoefficientField, points):
    """``|A grad u|`` (Frobenius over direction and component)."""
    points = np.atleast_2d(points)
    A, _, (g,) = _frame(field, points, [u.grad(points)])
    Ag = np.einsum("nabpk,nbk->nap", A, g)
    return np.sqrt(np.sum(np.abs(Ag) ** 2, axis=(1, 2)))


def interface_measure_check(u: SmoothField, field: CoefficientField, deltas, inner: float = 1.0, rtol=1e-8):
    """``int_{inner < |y| < inner + delta} |A grad u|`` for each delta."""
    out = []
    for d in deltas:
        make = disk_rule_factory([inner, inner + d], [inner], floor=0.0, finest=1e-6 * d)
        val, _, _ = adaptive_integral(make, lambda p: flux_density(u, field, p), rtol=rtol, max_level=4)
        out.append(float(np.real(val)))
    return out


# ---------------------------------------------------------------------- form invariance


def sesquilinear(u: SmoothField, v: SmoothField, field: CoefficientField, points, omega=1.0):
    """Pointwise ``sum (A du)^H dv - w^2 (B u)^H v``."""
    points = np.atleast_2d(points)
    A, B, (gu, gv) = _frame(field, points, [u.grad(points), v.grad(points)])
    Au = np.einsum("nabpk,nbk->nap", A, gu)
    Bu = np.einsum("npk,nk->np", B, u.value(points))
    return np.einsum("nap,nap->n", Au.conj(), gv) - omega**2 * np.einsum("np,np->n", Bu.conj(), v.value(points))


def random_smooth_medium(rng, m=1, domain=None) -> CoefficientField:
    """Hermitian, uniformly elliptic medium varying smoothly in space.

    ``A(x) = P (1 + 0.3 sin(k.x)) P^H + I`` per 2m x 2m matrix and
    ``B(x) = Q (1 + 0.3 cos(l.x)) Q^H + I`` with random P, Q, k, l.
    """
    P = (rng.normal(size=(2 * m, 2 * m)) + 1j * rng.normal(size=(2 * m, 2 * m))) / np.sqrt(4 * m)
    Q = (rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))) / np.sqrt(2 * m)
    k, l = rng.normal(size=2), rng.normal(size=2)
    PP = P @ P.conj().T
    QQ = Q @ Q.conj().T

    def evaluator(x):
        s = 1 + 0.3 * np.sin(x @ k)
        c = 1 + 0.3 * np.cos(x @ l)
        A = s[:, None, None] * PP + np.eye(2 * m)
        B = c[:, None, None] * QQ + np.eye(m)
        return matrix_to_block(A), B

    return CoefficientField(domain or Disk(2.0), evaluator, m=m, name="random_smooth")


@dataclass
class InvarianceResult:
    reference: complex
    transformed: complex
    difference: float
    errors: tuple = field(default=(0.0, 0.0))


def form_invariance_check(u: SmoothField, v: SmoothField, field: CoefficientField, F: DiffeoMap,
                          reference_rule, image_rule, omega: float = 1.0, rtol: float = 1e-9) -> InvarianceResult:
    """Compare ``Q[A,B](u, v)`` with ``Q[F*A,F*B](u o F^-1, v o F^-1)``.

    Each side is integrated in its own coordinates with a rule factory
    (level -> Rule) refined until two levels agree to ``rtol``.
    """
    Fq = pushforward_coefficients(F, field)
    uF, vF = PulledForward(u, F), PulledForward(v, F)
    q0, e0, _ = adaptive_integral(reference_rule, lambda p: sesquilinear(u, v, field, p, omega), rtol=rtol, max_level=5)
    q1, e1, _ = adaptive_integral(image_rule, lambda p: sesquilinear(uF, vF, Fq, p, omega), rtol=rtol, max_level=5)
    q0, q1 = complex(q0), complex(q1)
    return InvarianceResult(q0, q1, abs(q0 - q1), (e0, e1))


def invariance_rules(F_kind: str, eps: Optional[float] = None, G: Optional[DiffeoMap] = None):
    """Rule factories (reference, image) for the library maps.

    ``F_kind`` is ``"blowup_eps"`` (F_eps), ``"affine"`` (G) or
    ``"composed"`` (G o F_eps).  Both sides break at the kink of F_eps
    (|x| = eps, imaged to the unit circle).  The image rule uses its own
    Gauss order and angular count so the two sides never share nodes.
    """
    if F_kind == "affine":
        return disk_rule_factory([0.0, 2.0]), disk_rule_factory([0.0, 2.0], base_order=7, base_theta=80, G=G)
    if eps is None:
        raise ValueError("eps is required for maps involving F_eps")
    ref = disk_rule_factory([0.0, eps, 2.0])
    img = disk_rule_factory([0.0, 1.0, 2.0], base_order=7, base_theta=80, G=G if F_kind == "composed" else None)
    return ref, img
