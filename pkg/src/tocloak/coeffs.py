"""Block coefficients of second-order m-component systems in the plane.

A medium is described pointwise by a 2x2 array of m x m complex blocks
``A[alpha, beta]`` multiplying derivatives and an m x m block ``B`` for the
zeroth-order term.  Arrays are stored with shape ``(2, 2, m, m)`` and
``(m, m)``; vectorised evaluators return a leading point axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SingularPointError

HERMITIAN_TOL = 1e-12
INTERFACE_TOL = 1e-14


# --------------------------------------------------------------------------
# regions and curves


@dataclass(frozen=True)
class Disk:
    radius: float

    def contains(self, points):
        pts = np.atleast_2d(points)
        return np.hypot(pts[:, 0], pts[:, 1]) <= self.radius * (1 + 1e-12)


@dataclass(frozen=True)
class Annulus:
    inner: float
    outer: float

    def contains(self, points):
        pts = np.atleast_2d(points)
        r = np.hypot(pts[:, 0], pts[:, 1])
        return (r >= self.inner * (1 - 1e-12)) & (r <= self.outer * (1 + 1e-12))


@dataclass(frozen=True)
class MappedRegion:
    """Image ``map(base)`` of a region under a diffeomorphism."""

    base: object
    map: object

    def contains(self, points):
        return self.base.contains(self.map.inverse(np.atleast_2d(points)))


@dataclass(frozen=True)
class Circle:
    radius: float

    def offset(self, points):
        pts = np.atleast_2d(points)
        return np.hypot(pts[:, 0], pts[:, 1]) - self.radius


@dataclass(frozen=True)
class MappedCircle:
    circle: Circle
    map: object

    def offset(self, points):
        return self.circle.offset(self.map.inverse(np.atleast_2d(points)))


# --------------------------------------------------------------------------
# pointwise coefficients


@dataclass(frozen=True)
class BlockCoefficient:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        B = np.asarray(self.B, dtype=complex)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError(f"B must be square, got shape {B.shape}")
        m = B.shape[0]
        if m < 1 or A.shape != (2, 2, m, m):
            raise ValueError(f"A must have shape (2, 2, {m}, {m}), got {A.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @classmethod
    def identity(cls, m=1):
        eye = np.eye(m)
        A = np.zeros((2, 2, m, m), dtype=complex)
        A[0, 0] = A[1, 1] = eye
        return cls(A, eye)

    def as_matrix(self):
        """The 2m x 2m matrix whose (alpha, beta) block is ``A[alpha, beta]``."""
        return block_to_matrix(self.A)


def block_to_matrix(A):
    A = np.asarray(A)
    m = A.shape[-1]
    lead = A.shape[:-4]
    return np.swapaxes(A, -3, -2).reshape(*lead, 2 * m, 2 * m)


def matrix_to_block(M):
    M = np.asarray(M)
    m = M.shape[-1] // 2
    lead = M.shape[:-2]
    return np.swapaxes(M.reshape(*lead, 2, m, 2, m), -3, -2)


def hermitian_block_check(c: BlockCoefficient, tol=HERMITIAN_TOL) -> bool:
    """True iff ``A[a, b]^* == A[b, a]`` for all a, b within ``tol``."""
    A = c.A
    for a in range(2):
        for b in range(2):
            if np.max(np.abs(A[a, b].conj().T - A[b, a]), initial=0.0) > tol:
                return False
    return True


def eval_quadratic_form(c: BlockCoefficient, xi) -> complex:
    """Return ``sum_{a,b} (A[a,b] xi_b)^* xi_a`` for a pair of m-vectors."""
    xi = np.asarray(xi, dtype=complex)
    if xi.shape != (2, c.m):
        raise ValueError(f"xi must have shape (2, {c.m}), got {xi.shape}")
    total = 0j
    for a in range(2):
        for b in range(2):
            total += np.vdot(c.A[a, b] @ xi[b], xi[a])
    return complex(total)


def _batch_quadratic(A, xi):
    # A: (N, 2, 2, m, m), xi: (K, 2, m) -> (N, K)
    Axi = np.einsum("nabij,kbj->nkai", A, xi)
    return np.einsum("nkai,kai->nk", Axi.conj(), xi)


# --------------------------------------------------------------------------
# fields


class CoefficientField:
    """A medium on a region: a vectorised point -> (A, B) evaluator plus metadata.

    ``evaluator(points)`` receives an ``(N, 2)`` array and returns arrays of
    shape ``(N, 2, 2, m, m)`` and ``(N, m, m)``.
    """

    def __init__(
        self,
        domain,
        evaluator: Callable,
        m: int = 1,
        is_radial: bool = False,
        singular_interface=None,
        breakpoints: Sequence[float] = (),
        name: str = "",
    ):
        self.domain = domain
        self._evaluator = evaluator
        self.m = int(m)
        self.is_radial = bool(is_radial)
        self.singular_interface = singular_interface
        self.breakpoints = tuple(breakpoints)
        self.name = name

    def evaluate(self, points, regions=None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.singular_interface is not None:
            off = np.abs(self.singular_interface.offset(pts))
            if np.any(off <= INTERFACE_TOL):
                bad = pts[np.argmin(off)]
                raise SingularPointError(f"coefficient evaluated on the singular interface at {bad}")
        A, B = self._evaluator(pts)
        return np.asarray(A, dtype=complex), np.asarray(B, dtype=complex)

    def __call__(self, point) -> BlockCoefficient:
        A, B = self.evaluate(np.asarray(point, dtype=float).reshape(1, 2))
        return BlockCoefficient(A[0], B[0])


class CompositeField(CoefficientField):
    """Piecewise medium; piece ``k`` is used on region id ``k``.

    Region ids come from the mesh when available, otherwise from ``locate``.
    """

    def __init__(self, pieces, locate, domain=None, is_radial=False, breakpoints=(), name=""):
        pieces = list(pieces)
        m = pieces[0].m
        if any(p.m != m for p in pieces):
            raise ValueError("all pieces must share the component count m")
        super().__init__(domain, None, m=m, is_radial=is_radial, breakpoints=breakpoints, name=name)
        self.pieces = pieces
        self.locate = locate

    def evaluate(self, points, regions=None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ids = self.locate(pts) if regions is None else np.asarray(regions)
        n, m = len(pts), self.m
        A = np.empty((n, 2, 2, m, m), dtype=complex)
        B = np.empty((n, m, m), dtype=complex)
        for k, piece in enumerate(self.pieces):
            sel = ids == k
            if np.any(sel):
                A[sel], B[sel] = piece.evaluate(pts[sel])
        if np.any((ids < 0) | (ids >= len(self.pieces))):
            raise ValueError("points outside every piece of the composite field")
        return A, B


def constant_field(A, B, domain=None, name="constant"):
    """Spatially constant medium (trivially radial when A is frame-invariant)."""
    c = BlockCoefficient(A, B)
    m = c.m
    frame_invariant = (
        np.allclose(c.A[0, 0], c.A[1, 1]) and np.allclose(c.A[0, 1], 0) and np.allclose(c.A[1, 0], 0)
    )

    def evaluator(pts):
        n = len(pts)
        return np.broadcast_to(c.A, (n, 2, 2, m, m)), np.broadcast_to(c.B, (n, m, m))

    return CoefficientField(domain, evaluator, m=m, is_radial=frame_invariant, name=name)


def identity_field(m=1, domain=None):
    c = BlockCoefficient.identity(m)
    return constant_field(c.A, c.B, domain=domain, name="identity")


def isotropic_field(a, b, m=1, domain=None, name="isotropic"):
    """Constant medium ``A = a I``, ``B = b I`` with scalar or diagonal a, b."""
    a = np.broadcast_to(np.asarray(a, dtype=complex), (m,))
    b = np.broadcast_to(np.asarray(b, dtype=complex), (m,))
    A = np.zeros((2, 2, m, m), dtype=complex)
    A[0, 0] = A[1, 1] = np.diag(a)
    return constant_field(A, np.diag(b), domain=domain, name=name)


def radial_frame(points):
    """Unit radial and tangential vectors, shape (N, 2) each."""
    pts = np.atleast_2d(points)
    r = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(r == 0):
        raise SingularPointError("radial frame undefined at the origin")
    e_r = pts / r[:, None]
    e_t = np.stack([-e_r[:, 1], e_r[:, 0]], axis=1)
    return e_r, e_t


def frame_blocks(A, e_r, e_t):
    """Blocks of A in the (e_r, e_t) frame; ``A`` has shape (N, 2, 2, m, m)."""
    R = np.stack([e_r, e_t], axis=2)  # (N, 2 [cartesian], 2 [frame])
    return np.einsum("nai,nabpq,nbj->nijpq", R, A, R)


def from_frame_blocks(a_r, a_t, e_r, e_t):
    """Rebuild Cartesian blocks of a frame-diagonal medium."""
    P = np.einsum("na,nb->nab", e_r, e_r)
    Q = np.einsum("na,nb->nab", e_t, e_t)
    return np.einsum("nab,npq->nabpq", P, a_r) + np.einsum("nab,npq->nabpq", Q, a_t)


def radial_tangential_eigen(field: CoefficientField, y):
    """Blocks of A at ``y`` in the local (radial, tangential) frame."""
    if not field.is_radial:
        raise ValueError("radial_tangential_eigen requires a radial field")
    pts = np.asarray(y, dtype=float).reshape(1, 2)
    A, _ = field.evaluate(pts)
    e_r, e_t = radial_frame(pts)
    F = frame_blocks(A, e_r, e_t)[0]
    return F[0, 0], F[1, 1]


# --------------------------------------------------------------------------
# ellipticity


@dataclass
class EllipticityReport:
    c1_est: float
    c2_est: float
    violated: bool
    witness_point: Optional[np.ndarray] = None
    witness_direction: Optional[np.ndarray] = None
    details: dict = field(default_factory=dict)


_GOLDEN = (np.sqrt(5.0) - 1) / 2


def _direction_angles(count):
    # coordinate axes first, then a golden-ratio sequence on [0, pi)
    extra = np.pi * np.mod(_GOLDEN * np.arange(1, max(count - 2, 0) + 1), 1.0)
    return np.concatenate([[0.0, np.pi / 2], extra])[: max(count, 2)]


def _component_vectors(m):
    vecs = [np.eye(m)[k] for k in range(m)]
    if m > 1:
        vecs.append(np.ones(m) / np.sqrt(m))
    return np.array(vecs, dtype=complex)


def ellipticity_scan(field: CoefficientField, samples, directions: int = 16) -> EllipticityReport:
    """Sample the real parts of the A- and B-forms over unit directions.

    ``c1_est``/``c2_est`` are the min/max over samples and directions of both
    forms; a non-positive minimum marks the medium as violating ellipticity.
    """
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.size == 0:
        raise ValueError("ellipticity_scan needs at least one sample point")
    A, B = field.evaluate(pts)
    m = field.m
    theta = _direction_angles(directions)
    vecs = _component_vectors(m)
    xi = np.array([[np.cos(t) * v, np.sin(t) * v] for t in theta for v in vecs])  # (K, 2, m)
    qa = _batch_quadratic(A, xi).real  # (N, K)
    qb = np.einsum("nij,kj,ki->nk", B, vecs, vecs.conj()).real  # (N, len(vecs))
    lo_a, lo_b = qa.min(), qb.min()
    c1 = float(min(lo_a, lo_b))
    c2 = float(max(qa.max(), qb.max()))
    violated = c1 <= 0
    wp = wd = None
    if violated:
        if lo_a <= lo_b:
            n, k = np.unravel_index(np.argmin(qa), qa.shape)
            wp, wd = pts[n], xi[k]
        else:
            n, k = np.unravel_index(np.argmin(qb), qb.shape)
            wp, wd = pts[n], np.stack([vecs[k], np.zeros(m)])
    return EllipticityReport(c1, c2, violated, wp, wd, {"A": (float(lo_a), float(qa.max())), "B": (float(lo_b), float(qb.max()))})
