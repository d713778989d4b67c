"""P1 assembly of the sesquilinear form for m-component systems.

Unknown ``(node i, component p)`` lives at index ``i*m + p``.  The matrix is

    M[(i,p),(j,k)] = int sum_ab A^{ab}_{pk} d_a phi_i d_b phi_j - w^2 B_{pk} phi_i phi_j

with the coefficients sampled once per triangle, so it is Hermitian exactly
when every block satisfies ``(A^{ab})^H = A^{ba}`` and B is Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from ..coeffs import CoefficientField
from ..errors import SolverError
from .mesh import Mesh


@dataclass
class AssembledSystem:
    mesh: Mesh
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    load: np.ndarray
    omega: float
    m: int
    dirichlet_nodes: np.ndarray
    field: Optional[CoefficientField] = None
    source: Optional[Callable] = dc_field(default=None, repr=False)

    @property
    def matrix(self) -> sp.csr_matrix:
        return (self.stiffness - self.omega**2 * self.mass).tocsr()

    @property
    def size(self) -> int:
        return self.mesh.n_nodes * self.m

    def dofs(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        return (nodes[:, None] * self.m + np.arange(self.m)[None, :]).ravel()


def p1_gradients(mesh: Mesh):
    """Barycentric gradients (M, 3, 2) and triangle areas (M,)."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    # grad phi_i = rot90(p_{i+2} - p_{i+1}) / (2 area)
    e = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)
    g = np.stack([-e[:, :, 1], e[:, :, 0]], axis=2) / (2 * area[:, None, None])
    return g, area


def _scatter(mesh: Mesh, local, m):
    """Sum element blocks (M, 3, 3, m, m) into a sparse (N m) x (N m) matrix."""
    tri = mesh.triangles
    rows = tri[:, :, None, None, None] * m + np.arange(m)[None, None, None, :, None]
    cols = tri[:, None, :, None, None] * m + np.arange(m)[None, None, None, None, :]
    rows = np.broadcast_to(rows, local.shape).ravel()
    cols = np.broadcast_to(cols, local.shape).ravel()
    n = mesh.n_nodes * m
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def source_values(f, points, m):
    vals = np.asarray(f(points), dtype=complex)
    return vals.reshape(len(points), m)


def assemble_load(mesh: Mesh, f, m: int) -> np.ndarray:
    """``int f_p phi_i`` by the edge-midpoint rule (exact for quadratics)."""
    load = np.zeros(mesh.n_nodes * m, dtype=complex)
    if f is None:
        return load
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    tri = mesh.triangles
    for a, b in ((0, 1), (1, 2), (2, 0)):
        mid = 0.5 * (p[:, a] + p[:, b])
        vals = source_values(f, mid, m) * (area / 6.0)[:, None]
        for node in (tri[:, a], tri[:, b]):
            for k in range(m):
                np.add.at(load, node * m + k, vals[:, k])
    return load


def assemble(mesh: Mesh, field: CoefficientField, omega: float, f: Optional[Callable] = None) -> AssembledSystem:
    """Assemble stiffness, mass and load for the medium ``field`` on ``mesh``."""
    m = field.m
    A, B = field.evaluate(mesh.eval_points)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise SolverError("coefficient evaluation produced non-finite values inside an element")
    g, area = p1_gradients(mesh)
    K = np.einsum("tia,tabpk,tjb,t->tijpk", g, A, g, area, optimize=True)
    w = (np.ones((3, 3)) + np.eye(3)) / 12.0
    Mloc = np.einsum("ij,tpk,t->tijpk", w, B, area, optimize=True)
    outer = mesh.boundary_nodes("outer")
    return AssembledSystem(
        mesh=mesh,
        stiffness=_scatter(mesh, K, m),
        mass=_scatter(mesh, Mloc, m),
        load=assemble_load(mesh, f, m),
        omega=float(omega),
        m=m,
        dirichlet_nodes=outer,
        field=field,
        source=f,
    )


def boundary_mass(mesh: Mesh, nodes, m: int, tag: str = "outer") -> sp.csr_matrix:
    """P1 mass matrix of the tagged curve over ``nodes`` (ordered), times I_m."""
    pos = {int(n): i for i, n in enumerate(nodes)}
    rows, cols, vals = [], [], []
    for a, b in mesh.edges(tag):
        L = np.linalg.norm(mesh.nodes[a] - mesh.nodes[b])
        ia, ib = pos[int(a)], pos[int(b)]
        for (i, j), v in (((ia, ia), L / 3), ((ib, ib), L / 3), ((ia, ib), L / 6), ((ib, ia), L / 6)):
            for k in range(m):
                rows.append(i * m + k)
                cols.append(j * m + k)
                vals.append(v)
    n = len(nodes) * m
    return sp.coo_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n, n)).tocsr()
