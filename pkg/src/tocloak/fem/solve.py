"""Dirichlet solves, variational DtN matrices and flux integrals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from matplotlib.tri import LinearTriInterpolator, Triangulation
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from ..coeffs import CoefficientField
from ..errors import MeshError, SolverError
from .assemble import AssembledSystem, assemble, boundary_mass, p1_gradients
from .mesh import Mesh

RESIDUAL_TOL = 1e-10
COND_LIMIT = 1e12


def l2_mass(mesh: Mesh, m: int = 1) -> sp.csr_matrix:
    """Consistent P1 mass matrix with unit weight, times I_m."""
    _, area = p1_gradients(mesh)
    w = (np.ones((3, 3)) + np.eye(3)) / 12.0
    loc = np.einsum("ij,t->tij", w, area)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    M = sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    return sp.kron(M, sp.identity(m), format="csr")


@dataclass
class FieldSolution:
    """Nodal P1 field with values of shape (n_nodes, m)."""

    mesh: Mesh
    values: np.ndarray
    system: Optional[AssembledSystem] = field(default=None, repr=False)
    _interp: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(self.mesh.n_nodes, -1)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def vector(self) -> np.ndarray:
        return self.values.ravel()

    def l2_norm(self) -> float:
        u = self.vector
        return float(np.sqrt(abs(np.vdot(u, l2_mass(self.mesh, self.m) @ u))))

    def l2_error(self, exact: Callable) -> float:
        """L2 distance to ``exact`` by the edge-midpoint rule on each triangle."""
        p = self.mesh.nodes[self.mesh.triangles]
        area = self.mesh.signed_areas()
        tri = self.mesh.triangles
        total = 0.0
        for a, b in ((0, 1), (1, 2), (2, 0)):
            mid = 0.5 * (p[:, a] + p[:, b])
            uh = 0.5 * (self.values[tri[:, a]] + self.values[tri[:, b]])
            ex = np.asarray(exact(mid), dtype=complex).reshape(len(mid), self.m)
            total += np.sum(area[:, None] / 3.0 * np.abs(uh - ex) ** 2)
        return float(np.sqrt(total))

    def __call__(self, points):
        """Linear interpolation at ``points`` (N, 2) -> (N, m).

        Points slightly outside the polygonal boundary (a circle is cut by its
        chords) take the value of the nearest point on the outer edges.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._interp is None:
            tri = Triangulation(self.mesh.nodes[:, 0], self.mesh.nodes[:, 1], self.mesh.triangles)
            self._interp = [
                (LinearTriInterpolator(tri, self.values[:, k].real), LinearTriInterpolator(tri, self.values[:, k].imag))
                for k in range(self.m)
            ]
        out = np.empty((len(pts), self.m), dtype=complex)
        miss = np.zeros(len(pts), dtype=bool)
        for k, (re, im) in enumerate(self._interp):
            vr = re(pts[:, 0], pts[:, 1])
            vi = im(pts[:, 0], pts[:, 1])
            miss |= np.ma.getmaskarray(vr)
            out[:, k] = np.ma.filled(vr, 0.0) + 1j * np.ma.filled(vi, 0.0)
        if miss.any():
            out[miss] = self._edge_values(pts[miss])
        return out

    def _edge_values(self, pts):
        e = self.mesh.edges("outer")
        a, b = self.mesh.nodes[e[:, 0]], self.mesh.nodes[e[:, 1]]
        d = b - a
        t = np.clip(np.einsum("pnk,nk->pn", pts[:, None, :] - a[None], d) / np.einsum("nk,nk->n", d, d), 0, 1)
        proj = a[None] + t[..., None] * d[None]
        j = np.argmin(np.linalg.norm(proj - pts[:, None, :], axis=2), axis=1)
        tj = t[np.arange(len(pts)), j][:, None]
        return (1 - tj) * self.values[e[j, 0]] + tj * self.values[e[j, 1]]


def _boundary_values(system: AssembledSystem, h, nodes):
    m = system.m
    if h is None:
        return np.zeros(len(nodes) * m, dtype=complex)
    if callable(h):
        vals = np.asarray(h(system.mesh.nodes[nodes]), dtype=complex)
    else:
        vals = np.asarray(h, dtype=complex)
    if vals.size != len(nodes) * m:
        raise ValueError(f"boundary data has {vals.size} entries, expected {len(nodes) * m}")
    return vals.reshape(len(nodes), m).ravel()


class DirichletProblem:
    """Factorised interior block of an assembled system; reusable across traces."""

    def __init__(self, system: AssembledSystem, check_condition: bool = True):
        self.system = system
        n = system.size
        self.bnodes = system.dirichlet_nodes
        self.bdofs = system.dofs(self.bnodes)
        mask = np.ones(n, dtype=bool)
        mask[self.bdofs] = False
        self.idofs = np.flatnonzero(mask)
        M = system.matrix.tocsr()
        self.M_II = M[self.idofs][:, self.idofs].tocsc()
        self.M_IB = M[self.idofs][:, self.bdofs].tocsc()
        self.M_BI = M[self.bdofs][:, self.idofs].tocsr()
        self.M_BB = M[self.bdofs][:, self.bdofs].toarray()
        try:
            self.lu = splu(self.M_II)
        except RuntimeError as err:
            raise SolverError(f"interior system is singular: {err}") from err
        self.condition = None
        if check_condition and len(self.idofs):
            self.condition = self._condition()
            if not np.isfinite(self.condition) or self.condition > COND_LIMIT:
                raise SolverError(
                    f"interior system is near-singular (1-norm condition estimate {self.condition:.3e}); "
                    "the frequency may be a Dirichlet eigenvalue"
                )

    def _condition(self):
        n = len(self.idofs)
        lu = self.lu
        inv = LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="H"), dtype=complex)
        return float(onenormest(self.M_II) * onenormest(inv))

    def interior_solve(self, rhs):
        x = self.lu.solve(rhs)
        r = self.M_II @ x - rhs
        scale = max(np.linalg.norm(rhs), 1e-300)
        if np.linalg.norm(r) > RESIDUAL_TOL * scale:
            x = x - self.lu.solve(r)
            r = self.M_II @ x - rhs
            if np.linalg.norm(r) > RESIDUAL_TOL * scale:
                raise SolverError(f"relative residual {np.linalg.norm(r) / scale:.2e} exceeds {RESIDUAL_TOL}")
        return x

    def solve(self, h=None) -> FieldSolution:
        s = self.system
        g = _boundary_values(s, h, self.bnodes)
        u = np.zeros(s.size, dtype=complex)
        u[self.bdofs] = g
        rhs = s.load[self.idofs] - self.M_IB @ g
        if np.any(rhs):
            u[self.idofs] = self.interior_solve(rhs)
        return FieldSolution(s.mesh, u.reshape(-1, s.m), s)


def solve_dirichlet(system: AssembledSystem, h_values=None) -> FieldSolution:
    """Solve with trace ``h_values`` on the outer boundary.

    ``h_values`` is a callable of points or an array ordered like
    ``mesh.boundary_nodes("outer")``; ``None`` means zero trace.
    """
    return DirichletProblem(system).solve(h_values)


@dataclass
class BoundaryDtN:
    """Discrete DtN map in pairing form.

    ``matrix @ t + offset`` is the vector of fluxes tested against the
    boundary hat functions, ``<Lambda t, phi_j>``; ``mass`` is the boundary
    P1 mass, so the flux density is ``mass^-1 (matrix t + offset)``.
    """

    matrix: np.ndarray
    mass: np.ndarray
    offset: np.ndarray
    omega: float
    nodes: np.ndarray
    points: np.ndarray
    m: int

    @property
    def angles(self):
        c = self.points.mean(axis=0)
        return np.arctan2(self.points[:, 1] - c[1], self.points[:, 0] - c[0])

    def apply(self, t):
        return np.linalg.solve(self.mass, self.matrix @ t + self.offset)

    def trace_vector(self, n: int, component: int = 0, angles=None):
        ang = self.angles if angles is None else angles
        t = np.zeros((len(self.nodes), self.m), dtype=complex)
        t[:, component] = np.exp(1j * n * ang)
        return t.ravel()

    def mode_value(self, n: int, component: int = 0, angles=None) -> complex:
        """Rayleigh quotient of the DtN on the Fourier trace ``exp(i n theta)``."""
        t = self.trace_vector(n, component, angles)
        return complex(np.vdot(t, self.matrix @ t) / np.vdot(t, self.mass @ t))

    def mode_basis(self, n_max: int, angles=None):
        """Mass-orthonormal basis of Fourier traces with |n| <= n_max."""
        cols = [self.trace_vector(n, p, angles) for n in range(-n_max, n_max + 1) for p in range(self.m)]
        T = np.stack(cols, axis=1)
        G = T.conj().T @ self.mass @ T
        L = np.linalg.cholesky(G)
        return np.linalg.solve(L.conj(), T.T).T

    def projected(self, n_max: int, angles=None) -> np.ndarray:
        """Matrix of the DtN on the low-mode trace subspace (orthonormal basis)."""
        Q = self.mode_basis(n_max, angles)
        return Q.conj().T @ self.matrix @ Q

    def projected_offset(self, n_max: int, angles=None) -> np.ndarray:
        Q = self.mode_basis(n_max, angles)
        return Q.conj().T @ self.offset


def dtn_matrix(mesh: Mesh, field: CoefficientField, omega: float, f: Optional[Callable] = None,
               chunk: int = 128) -> BoundaryDtN:
    """DtN map by static condensation onto the outer trace.

    Column j is the variational flux ``Q(u_j, phi) - <f, phi>`` of the
    solution with nodal trace e_j, tested with boundary hat functions.
    """
    system = assemble(mesh, field, omega, f)
    prob = DirichletProblem(system)
    nb = len(prob.bdofs)
    S = prob.M_BB.astype(complex).copy()
    M_IB = prob.M_IB
    for start in range(0, nb, chunk):
        cols = slice(start, min(nb, start + chunk))
        X = prob.lu.solve(M_IB[:, cols].toarray())
        S[:, cols] -= prob.M_BI @ X
    F_I = system.load[prob.idofs]
    offset = -system.load[prob.bdofs]
    if np.any(F_I):
        offset = offset + prob.M_BI @ prob.interior_solve(F_I)
    Mb = boundary_mass(mesh, prob.bnodes, system.m).toarray()
    return BoundaryDtN(S, Mb, offset, float(omega), prob.bnodes, mesh.nodes[prob.bnodes], system.m)


def flux_integral(w: FieldSolution, field: Optional[CoefficientField] = None, tag: str = "outer",
                  omega: Optional[float] = None, source: Optional[Callable] = None) -> np.ndarray:
    """Total conormal flux through the tagged curve, per component.

    Computed as the Green-identity residual ``Q(w, chi) - <f, chi>`` with
    ``chi`` the hat-function sum equal to 1 on the curve.  On an interior
    interface of a two-sided mesh this is the flux jump across it.
    ``field``, ``omega`` and ``source`` default to those of ``w.system``.
    """
    mesh = w.mesh
    try:
        nodes = mesh.boundary_nodes(tag)
    except MeshError:
        raise
    if field is None and w.system is None:
        raise ValueError("flux_integral needs a field or a solution carrying its system")
    s = w.system
    if field is not None or omega is not None or source is not None or s is None:
        fld = field if field is not None else s.field
        om = omega if omega is not None else (s.omega if s is not None else 0.0)
        src = source if source is not None else (s.source if s is not None else None)
        s = assemble(mesh, fld, om, src)
    r = s.matrix @ w.vector - s.load
    return r.reshape(-1, w.m)[nodes].sum(axis=0)
