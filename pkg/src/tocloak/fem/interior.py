"""Interior problem over fields with constant boundary trace, and its Fredholm analysis.

The trace unknowns of each component on the outer curve are condensed into
one shared unknown, ``x_full = P x``.  Testing with the same subspace makes
the zero-net-flux condition on the curve the natural boundary condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigs, eigsh, splu

from ..coeffs import CoefficientField
from ..errors import IncompatibleSourceError, SolverError
from .assemble import AssembledSystem, assemble
from .mesh import Mesh
from .solve import RESIDUAL_TOL, FieldSolution, l2_mass

NULL_REL_TOL = 5e-2
COMPAT_TOL = 1e-8
N_PROBE = 6


@dataclass
class CondensedSystem:
    system: AssembledSystem
    P: sp.csr_matrix
    tag: str

    @property
    def matrix(self):
        return (self.P.T @ self.system.matrix @ self.P).tocsc()

    @property
    def load(self):
        return self.P.T @ self.system.load

    @property
    def gram(self):
        """L2 Gram matrix of the constant-trace subspace."""
        return (self.P.T @ l2_mass(self.system.mesh, self.system.m) @ self.P).tocsc()

    def expand(self, x) -> FieldSolution:
        return FieldSolution(self.system.mesh, (self.P @ x).reshape(-1, self.system.m), self.system)


def condense(system: AssembledSystem, tag: str = "outer") -> CondensedSystem:
    mesh, m = system.mesh, system.m
    bnodes = mesh.boundary_nodes(tag)
    is_b = np.zeros(mesh.n_nodes, dtype=bool)
    is_b[bnodes] = True
    inner = np.flatnonzero(~is_b)
    ni = len(inner)
    node_col = np.empty(mesh.n_nodes, dtype=np.int64)
    node_col[inner] = np.arange(ni)
    rows = np.arange(mesh.n_nodes * m)
    nodes = rows // m
    comp = rows % m
    cols = np.where(is_b[nodes], ni * m + comp, node_col[nodes] * m + comp)
    P = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(mesh.n_nodes * m, (ni + 1) * m))
    return CondensedSystem(system, P, tag)


@dataclass
class FredholmReport:
    unique: bool
    null_dim: int
    null_basis: List[FieldSolution]
    adjoint_null_basis: List[FieldSolution]
    compatibility: List[bool]
    pencil_values: np.ndarray
    threshold: float
    details: dict = field(default_factory=dict)
    solution: Optional[tuple] = None

    def __post_init__(self):
        assert (self.null_dim == 0) == self.unique
        assert len(self.null_basis) == self.null_dim == len(self.adjoint_null_basis)


def _is_hermitian(A, tol=1e-12):
    d = A - A.conj().T
    return abs(d).max() <= tol * max(abs(A).max(), 1e-300)


def _pencil(Mc, G, k, hermitian):
    """Eigenpairs of ``Mc x = nu G x`` with nu nearest 0."""
    k = min(k, Mc.shape[0] - 2)
    if hermitian:
        vals, vecs = eigsh(Mc, k=k, M=G, sigma=0.0, which="LM")
    else:
        vals, vecs = eigs(Mc, k=k, M=G, sigma=0.0, which="LM")
    order = np.argsort(np.abs(vals))
    return vals[order], vecs[:, order]


def _scale(system: AssembledSystem):
    _, B = system.field.evaluate(system.mesh.eval_points)
    bmax = float(np.max(np.abs(B))) if B.size else 0.0
    return max(1.0, system.omega**2 * bmax)


def fredholm_diagnose(cond: CondensedSystem, load=None, rel_tol: float = NULL_REL_TOL,
                      compat_tol: float = COMPAT_TOL, probe: int = N_PROBE) -> FredholmReport:
    """Null space of the condensed operator and compatibility of ``load``.

    The discrete operator is never exactly singular at a continuous
    eigenfrequency; its distance to singularity is measured by the
    eigenvalues ``nu`` of ``Mc x = nu G x`` (G the L2 Gram matrix), which
    converge to the operator's own eigenvalue offsets under refinement.
    ``|nu| <= rel_tol * max(1, w^2 |B|)`` counts as a null direction.
    """
    Mc = cond.matrix
    G = cond.gram
    load = cond.load if load is None else np.asarray(load, dtype=complex)
    hermitian = _is_hermitian(Mc)
    vals, vecs = _pencil(Mc, G, probe, hermitian)
    thr = rel_tol * _scale(cond.system)
    null = np.abs(vals) <= thr
    V = vecs[:, null]
    if hermitian:
        W = V
    else:
        vals_h, vecs_h = _pencil(Mc.conj().T.tocsc(), G, probe, False)
        W = vecs_h[:, np.abs(vals_h) <= thr][:, : V.shape[1]]
    # compatibility: Euclidean pairing of adjoint null vectors with the load
    Fn = np.linalg.norm(load)
    compat = [bool(abs(np.vdot(w, load)) <= compat_tol * np.linalg.norm(w) * max(Fn, 1e-300)) for w in W.T]
    k = int(null.sum())
    return FredholmReport(
        unique=k == 0,
        null_dim=k,
        null_basis=[cond.expand(v) for v in V.T],
        adjoint_null_basis=[cond.expand(w) for w in W.T],
        compatibility=compat,
        pencil_values=vals,
        threshold=thr,
        details={"hermitian": hermitian, "condensed_vectors": V, "adjoint_condensed_vectors": W},
    )


def orthogonalize_load(report: FredholmReport, load) -> np.ndarray:
    """Remove the components of a condensed load along the adjoint null vectors."""
    W = report.details["adjoint_condensed_vectors"]
    F = np.asarray(load, dtype=complex).copy()
    if W.shape[1]:
        Q, _ = np.linalg.qr(W)
        F -= Q @ (Q.conj().T @ F)
    return F


def solve_constant_trace(mesh: Mesh, field: CoefficientField, omega: float, f: Optional[Callable] = None,
                         tag: str = "outer", rel_tol: float = NULL_REL_TOL):
    """Solve over fields with constant trace on ``tag``.

    Returns ``(w, c0)`` when the problem is uniquely solvable, otherwise the
    :class:`FredholmReport` of the condensed operator.  If the source passes
    every compatibility test the report also carries, in ``solution``, the
    particular ``(w, c0)`` that is L2-orthogonal to the null basis.
    """
    system = assemble(mesh, field, omega, f)
    cond = condense(system, tag)
    report = fredholm_diagnose(cond, rel_tol=rel_tol)
    if not report.unique:
        if all(report.compatibility):
            report.solution = solve_compatible(cond, report)
        return report
    Mc = cond.matrix
    Fc = cond.load
    try:
        lu = splu(Mc)
    except RuntimeError as err:
        raise SolverError(f"condensed system is singular: {err}") from err
    x = lu.solve(Fc)
    r = Mc @ x - Fc
    scale = max(np.linalg.norm(Fc), 1e-300)
    if np.linalg.norm(r) > RESIDUAL_TOL * scale:
        x = x - lu.solve(r)
    w = cond.expand(x)
    c0 = x[-system.m:].copy()
    return w, c0


def solve_compatible(cond: CondensedSystem, report: FredholmReport, load=None):
    """Particular solution of a singular condensed problem with a compatible load.

    Raises :class:`IncompatibleSourceError` when a compatibility test fails.
    The returned field is orthogonal (in L2) to the null basis.
    """
    F = cond.load if load is None else np.asarray(load, dtype=complex)
    W = report.details["adjoint_condensed_vectors"]
    compat = [abs(np.vdot(w, F)) <= COMPAT_TOL * np.linalg.norm(w) * max(np.linalg.norm(F), 1e-300) for w in W.T]
    if not all(compat):
        raise IncompatibleSourceError("source violates the compatibility conditions", report=report)
    V = report.details["condensed_vectors"]
    Mc, G = cond.matrix, cond.gram
    # bordered system enforcing G-orthogonality to the null basis
    GV = G @ V
    K = sp.bmat([[Mc, sp.csc_matrix(GV)], [sp.csc_matrix(GV.conj().T), None]], format="csc")
    rhs = np.concatenate([F, np.zeros(V.shape[1], dtype=complex)])
    sol = splu(K).solve(rhs)
    x = sol[: Mc.shape[0]]
    return cond.expand(x), x[-cond.system.m:].copy()
