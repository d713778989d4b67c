"""Structured polar triangulations of disks with circular interfaces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import MeshError

TAGS = ("outer", "interface")
GRADING = 1.2


@dataclass
class Mesh:
    """P1 triangulation.

    ``eval_points`` are per-triangle coefficient sample points.  For polar
    meshes they sit at the mean vertex radius so they never leave the ring
    of annulus the triangle belongs to; otherwise they are centroids.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    h: float
    regions: Optional[np.ndarray] = None
    eval_points: Optional[np.ndarray] = None
    radii: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(self.boundary_tags, dtype=object)
        bad = set(self.boundary_tags) - set(TAGS)
        if bad:
            raise MeshError(f"unknown boundary tags {sorted(bad)}")
        if self.eval_points is None:
            self.eval_points = self.centroids()
        if np.any(self.signed_areas() <= 0):
            raise MeshError("triangles must be counterclockwise with positive area")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def edges(self, tag: str) -> np.ndarray:
        if tag not in TAGS:
            raise MeshError(f"unknown tag {tag!r}")
        sel = self.boundary_tags == tag
        if not np.any(sel):
            raise MeshError(f"mesh has no {tag!r} edges")
        return self.boundary_edges[sel]

    def boundary_nodes(self, tag: str = "outer") -> np.ndarray:
        """Node indices on the tagged curve, ordered by polar angle."""
        key = ("bnodes", tag)
        if key not in self._cache:
            idx = np.unique(self.edges(tag))
            p = self.nodes[idx]
            c = p.mean(axis=0) if tag == "outer" else np.zeros(2)
            ang = np.mod(np.arctan2(p[:, 1] - c[1], p[:, 0] - c[0]), 2 * np.pi)
            self._cache[key] = idx[np.argsort(ang, kind="stable")]
        return self._cache[key]

    def quality(self):
        """Inradius over the nominal size ``h`` for each triangle."""
        p = self.nodes[self.triangles]
        a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        return 2 * self.signed_areas() / (a + b + c) / self.h

    def mapped(self, G) -> "Mesh":
        """Image of the mesh under a diffeomorphism (orientation preserving)."""
        nodes = G.forward(self.nodes)
        ev = G.forward(self.eval_points)
        tri = self.triangles.copy()
        out = Mesh(nodes, tri, self.boundary_edges.copy(), self.boundary_tags.copy(),
                   self.h, self.regions, ev, self.radii)
        return out

    def submesh(self, region: int, retag: Optional[dict] = None) -> "Mesh":
        """Triangles of one region, renumbered; ``retag`` renames boundary tags.

        Node order is preserved, so nodes shared with a neighbouring submesh
        keep their relative order and coordinates.
        """
        if self.regions is None:
            raise MeshError("mesh carries no region ids")
        sel = np.asarray(self.regions) == region
        if not np.any(sel):
            raise MeshError(f"no triangles in region {region}")
        tri = self.triangles[sel]
        keep = np.unique(tri)
        new = -np.ones(self.n_nodes, dtype=np.int64)
        new[keep] = np.arange(len(keep))
        inside = np.all(new[self.boundary_edges] >= 0, axis=1)
        retag = retag or {}
        tags = np.array([retag.get(t, t) for t in self.boundary_tags[inside]], dtype=object)
        radii = tuple(r for r in self.radii if np.any(np.isclose(np.hypot(*self.nodes[keep].T), r)))
        return Mesh(self.nodes[keep], new[tri], new[self.boundary_edges[inside]], tags, self.h,
                    np.zeros(len(tri), dtype=np.int64), self.eval_points[sel], radii)

    # ------------------------------------------------------------------ io

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("meshfmt 1\n")
            fh.write(f"nodes {self.n_nodes}\n")
            for i, (x, y) in enumerate(self.nodes):
                fh.write(f"{i} {float(x)!r} {float(y)!r}\n")
            fh.write(f"triangles {self.n_triangles}\n")
            for i, (a, b, c) in enumerate(self.triangles):
                fh.write(f"{i} {a} {b} {c}\n")
            fh.write(f"boundary {len(self.boundary_edges)}\n")
            for i, ((a, b), t) in enumerate(zip(self.boundary_edges, self.boundary_tags)):
                fh.write(f"{i} {a} {b} {t}\n")

    @classmethod
    def read(cls, path) -> "Mesh":
        with open(path) as fh:
            lines = [ln.split() for ln in fh if ln.strip()]
        if not lines or lines[0] != ["meshfmt", "1"]:
            raise MeshError("missing or unknown header; expected 'meshfmt 1'")
        pos = 1

        def section(name, width):
            nonlocal pos
            if pos >= len(lines) or len(lines[pos]) != 2 or lines[pos][0] != name:
                raise MeshError(f"expected section '{name} N' at line {pos + 1}")
            count = int(lines[pos][1])
            rows = lines[pos + 1: pos + 1 + count]
            if len(rows) != count or any(len(r) != width for r in rows):
                raise MeshError(f"malformed '{name}' section")
            if [int(r[0]) for r in rows] != list(range(count)):
                raise MeshError(f"'{name}' indices must be 0..{count - 1} in order")
            pos += 1 + count
            return rows

        nodes = np.array([[float(r[1]), float(r[2])] for r in section("nodes", 3)]).reshape(-1, 2)
        tris = np.array([[int(v) for v in r[1:]] for r in section("triangles", 4)]).reshape(-1, 3)
        brows = section("boundary", 4)
        if pos != len(lines):
            raise MeshError(f"unexpected content at line {pos + 1}")
        edges = np.array([[int(r[1]), int(r[2])] for r in brows]).reshape(-1, 2)
        tags = np.array([r[3] for r in brows], dtype=object)
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise MeshError("triangle references a missing node")
        lengths = [np.linalg.norm(nodes[a] - nodes[b]) for t in tris for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))]
        h = max(lengths) if lengths else 0.0
        return cls(nodes, tris, edges, tags, h)


# ---------------------------------------------------------------------- generation


def _levels(lo, hi, h, grade_lo, grade_hi, h_int):
    """Ring radii in (lo, hi], graded toward the flagged ends with ratio 1.2."""
    s = np.linspace(lo, hi, 4001)

    def spacing(r):
        d = np.full_like(r, np.inf)
        if grade_lo:
            d = np.minimum(d, r - lo)
        if grade_hi:
            d = np.minimum(d, hi - r)
        return np.minimum(h, h_int + (GRADING - 1.0) * d)

    dens = 1.0 / spacing(s)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s))])
    n = max(1, int(np.ceil(cum[-1] - 1e-9)))
    targets = cum[-1] * np.arange(1, n + 1) / n
    r = np.interp(targets, cum, s)
    r[-1] = hi
    return r


def _zipper(inner, outer, shift_in, shift_out):
    """Triangles between two rings of node ids.

    Ring node ``i`` sits at angle ``2 pi (i + shift/2) / n``.  Angles are
    compared in exact integer arithmetic, so the triangulation inherits the
    rotational symmetry of the rings.
    """
    na, nb = len(inner), len(outer)
    tris = []
    i = j = 0
    while i < na or j < nb:
        # next inner angle <= next outer angle  <=>  (2(i+1)+s_a) nb <= (2(j+1)+s_b) na
        if j >= nb or (i < na and (2 * (i + 1) + shift_in) * nb <= (2 * (j + 1) + shift_out) * na):
            tris.append((inner[i], outer[j % nb], inner[(i + 1) % na]))
            i += 1
        else:
            tris.append((inner[i % na], outer[j], outer[(j + 1) % nb]))
            j += 1
    return tris


def generate_disk_mesh(radii, h: float, h_interface: Optional[float] = None) -> Mesh:
    """Polar-ring triangulation of the disk of radius ``radii[-1]``.

    Every entry of ``radii`` is a ring of nodes; interior radii are tagged
    ``interface``.  Radial spacing shrinks to ``h_interface`` (default h/2)
    next to interfaces and grows geometrically with ratio 1.2 away from them.
    """
    radii = [float(r) for r in radii]
    if not radii or radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise MeshError("radii must be positive and strictly increasing")
    if h <= 0:
        raise MeshError("h must be positive")
    widths = [b - a for a, b in zip(radii, radii[1:])]
    if widths and h > min(widths):
        raise MeshError(f"h = {h} cannot resolve an annulus of width {min(widths)}")
    if h > radii[0]:
        raise MeshError(f"h = {h} cannot resolve the inner disk of radius {radii[0]}")
    h_int = 0.5 * h if h_interface is None else float(h_interface)
    if not 0 < h_int <= h:
        raise MeshError("h_interface must lie in (0, h]")

    levels, level_region, level_step = [], [], []
    bounds = [0.0] + radii
    for k, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        grade_lo = k > 0
        grade_hi = k < len(radii) - 1
        rs = _levels(lo, hi, h, grade_lo, grade_hi, h_int)
        prev = lo
        for r in rs:
            levels.append(r)
            level_region.append(k)
            level_step.append(r - prev)
            prev = r
    levels = np.array(levels)
    steps = np.array(level_step)
    # tangential spacing follows the local radial spacing
    local = np.minimum(steps, np.concatenate([steps[1:], [steps[-1]]]))
    counts = np.maximum(6, np.ceil(2 * np.pi * levels / np.maximum(local, 1e-300)).astype(int))
    # even counts make every ring, and so the mesh, symmetric under y -> -y
    counts += counts % 2

    nodes = [np.zeros((1, 2))]
    ring_ids, ring_shift = [], []
    start = 1
    for j, (r, n) in enumerate(zip(levels, counts)):
        # stagger alternate rings by half a cell for better shapes
        ang = 2 * np.pi * (np.arange(n) + 0.5 * (j % 2)) / n
        nodes.append(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
        ring_ids.append(np.arange(start, start + n))
        ring_shift.append(j % 2)
        start += n
    nodes = np.vstack(nodes)

    tris, regs = [], []
    first = ring_ids[0]
    for i in range(len(first)):
        tris.append((0, first[i], first[(i + 1) % len(first)]))
        regs.append(level_region[0])
    for j in range(len(levels) - 1):
        t = _zipper(ring_ids[j], ring_ids[j + 1], ring_shift[j], ring_shift[j + 1])
        tris.extend(t)
        regs.extend([level_region[j + 1]] * len(t))
    tris = np.array(tris, dtype=np.int64)

    edges, tags = [], []
    for j, r in enumerate(levels):
        for k, rad in enumerate(radii):
            if abs(r - rad) <= 1e-12 * rad:
                ids = ring_ids[j]
                tag = "outer" if k == len(radii) - 1 else "interface"
                for i in range(len(ids)):
                    edges.append((ids[i], ids[(i + 1) % len(ids)]))
                    tags.append(tag)

    p = nodes[tris]
    rad = np.linalg.norm(p, axis=2).mean(axis=1)
    c = p.mean(axis=1)
    ang = np.arctan2(c[:, 1], c[:, 0])
    ev = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    return Mesh(nodes, tris, np.array(edges), np.array(tags, dtype=object), h,
                np.array(regs), ev, tuple(radii))
