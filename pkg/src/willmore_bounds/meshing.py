"""Triangulations of finitely-connected planar charts.

:class:`FCDomainMesh` stores a triangulated disc-with-holes together with
labeled boundary loops (outer loop first, positively oriented; hole loops
negatively oriented) and optional per-hole curvature charges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import ConfigError


def polygon_signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Vectorized even-odd crossing test; polygon is a closed cycle (no repeat)."""
    px, py = points[:, 0], points[:, 1]
    x0, y0 = polygon[:, 0], polygon[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    inside = np.zeros(len(points), dtype=bool)
    for k in range(len(polygon)):
        cond = (y0[k] > py) != (y1[k] > py)
        if not np.any(cond):
            continue
        xs = (x1[k] - x0[k]) * (py[cond] - y0[k]) / (y1[k] - y0[k]) + x0[k]
        flip = px[cond] < xs
        idx = np.where(cond)[0][flip]
        inside[idx] = ~inside[idx]
    return inside


@dataclass
class FCDomainMesh:
    """Triangulation of a finitely-connected Lipschitz domain.

    vertices: (n, 2) chart points
    triangles: (m, 3) positively oriented index triples
    boundary_loops: ordered vertex cycles, outer loop first
    hole_charges: optional per-hole reals
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loops: list[np.ndarray]
    hole_charges: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary_loops = [np.asarray(l, dtype=np.int64) for l in self.boundary_loops]
        if self.hole_charges is not None:
            self.hole_charges = np.asarray(self.hole_charges, dtype=float)
            if len(self.hole_charges) != self.n_holes:
                raise ConfigError("hole_charges length must match number of holes")
        self.validate()

    # -- structure ----------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_holes(self) -> int:
        return len(self.boundary_loops) - 1

    def charges(self) -> np.ndarray:
        if self.hole_charges is None:
            return np.zeros(self.n_holes)
        return self.hole_charges

    def validate(self) -> None:
        tri = self.triangles
        if tri.min() < 0 or tri.max() >= self.n_vertices:
            raise ConfigError("triangle index out of range")
        areas = self.chart_areas()
        if np.any(areas <= 0):
            raise ConfigError("all triangles must be positively oriented with positive area")
        edges = self._edge_counts()
        boundary_edges = {e for e, c in edges.items() if c == 1}
        if any(c > 2 for c in edges.values()):
            raise ConfigError("non-manifold edge found")
        loop_edges = set()
        for loop in self.boundary_loops:
            for a, b in zip(loop, np.roll(loop, -1)):
                loop_edges.add((min(a, b), max(a, b)))
        if loop_edges != boundary_edges:
            raise ConfigError("boundary loops do not tile the boundary edges")
        # Euler characteristic of a disc with m holes
        chi = self.n_vertices - len(edges) + len(tri)
        if chi != 1 - self.n_holes:
            raise ConfigError(f"Euler characteristic {chi} != {1 - self.n_holes}")
        # orientation: outer ccw, holes cw
        for i, loop in enumerate(self.boundary_loops):
            area = polygon_signed_area(self.vertices[loop])
            if i == 0 and area <= 0:
                raise ConfigError("outer boundary loop must be positively oriented")
            if i > 0 and area >= 0:
                raise ConfigError(f"hole loop {i} must be negatively oriented")

    def _edge_counts(self) -> dict:
        if "edge_counts" not in self._cache:
            counts: dict = {}
            for t in self.triangles:
                for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                    key = (min(a, b), max(a, b))
                    counts[key] = counts.get(key, 0) + 1
            self._cache["edge_counts"] = counts
        return self._cache["edge_counts"]

    # -- geometry -----------------------------------------------------------

    def tri_vertices(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def barycenters(self) -> np.ndarray:
        if "bary" not in self._cache:
            self._cache["bary"] = self.tri_vertices().mean(axis=1)
        return self._cache["bary"]

    def chart_areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.tri_vertices()
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return self._cache["areas"]

    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def boundary_vertex_set(self) -> set:
        out: set = set()
        for loop in self.boundary_loops:
            out.update(int(v) for v in loop)
        return out

    def hole_seed_points(self) -> np.ndarray:
        """One interior point per hole (centroid of the hole boundary polygon)."""
        seeds = []
        for loop in self.boundary_loops[1:]:
            seeds.append(self.vertices[loop].mean(axis=0))
        return np.asarray(seeds).reshape(-1, 2)

    def locate(self, points: np.ndarray, k: int = 12) -> np.ndarray:
        """Containing element per query point (nearest element if outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if "kdtree" not in self._cache:
            self._cache["kdtree"] = cKDTree(self.barycenters())
        tree = self._cache["kdtree"]
        kq = min(k, len(self.triangles))
        _, cand = tree.query(pts, k=kq)
        cand = np.atleast_2d(cand)
        tv = self.tri_vertices()
        out = np.empty(len(pts), dtype=np.int64)
        for i, p in enumerate(pts):
            tris = cand[i]
            a, b, c = tv[tris, 0], tv[tris, 1], tv[tris, 2]
            d = np.cross(b - a, c - a)
            w0 = np.cross(b - p, c - p) / d
            w1 = np.cross(c - p, a - p) / d
            w2 = 1.0 - w0 - w1
            ok = (w0 >= -1e-12) & (w1 >= -1e-12) & (w2 >= -1e-12)
            out[i] = tris[np.argmax(ok)] if ok.any() else tris[0]
        return out

    def triangles_inside_polygon(self, polygon: np.ndarray) -> np.ndarray:
        return points_in_polygon(self.barycenters(), polygon)

    def to_dict(self) -> dict:
        d = {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_loops": [l.tolist() for l in self.boundary_loops],
        }
        if self.hole_charges is not None:
            d["hole_charges"] = self.hole_charges.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FCDomainMesh":
        return cls(
            vertices=np.asarray(d["vertices"], dtype=float),
            triangles=np.asarray(d["triangles"], dtype=np.int64),
            boundary_loops=[np.asarray(l, dtype=np.int64) for l in d["boundary_loops"]],
            hole_charges=np.asarray(d["hole_charges"], dtype=float)
            if d.get("hole_charges") is not None
            else None,
        )


# -- structured generators --------------------------------------------------


def annulus_mesh(
    r0: float,
    R: float,
    n_r: int,
    n_phi: int,
    *,
    grading: str = "geometric",
    hole_charges: Optional[Sequence[float]] = None,
) -> FCDomainMesh:
    """Structured planar annulus r0 < |x| < R with n_r radial intervals."""
    if not (0 < r0 < R):
        raise ConfigError("need 0 < r0 < R")
    if grading == "geometric":
        radii = r0 * (R / r0) ** (np.arange(n_r + 1) / n_r)
    elif grading == "uniform":
        radii = np.linspace(r0, R, n_r + 1)
    else:
        raise ConfigError(f"unknown grading {grading!r}")
    phis = 2 * np.pi * np.arange(n_phi) / n_phi
    verts = np.empty(((n_r + 1) * n_phi, 2))
    for i, r in enumerate(radii):
        verts[i * n_phi : (i + 1) * n_phi, 0] = r * np.cos(phis)
        verts[i * n_phi : (i + 1) * n_phi, 1] = r * np.sin(phis)

    def vid(i, j):
        return i * n_phi + (j % n_phi)

    tris = []
    for i in range(n_r):
        for j in range(n_phi):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j), vid(i + 1, j + 1)
            tris.append((a, d, b))
            tris.append((a, c, d))
    outer = np.array([vid(n_r, j) for j in range(n_phi)])
    inner = np.array([vid(0, j) for j in range(n_phi - 1, -1, -1)])  # clockwise
    return FCDomainMesh(
        vertices=verts,
        triangles=np.asarray(tris),
        boundary_loops=[outer, inner],
        hole_charges=None if hole_charges is None else np.asarray(hole_charges, float),
    )


def disc_mesh(R: float, n_r: int, n_phi: int) -> FCDomainMesh:
    """Structured polar disc |x| < R with a center vertex."""
    radii = R * np.arange(1, n_r + 1) / n_r
    phis = 2 * np.pi * np.arange(n_phi) / n_phi
    verts = [np.zeros((1, 2))]
    for r in radii:
        verts.append(np.column_stack([r * np.cos(phis), r * np.sin(phis)]))
    verts = np.vstack(verts)

    def vid(i, j):
        return 1 + (i - 1) * n_phi + (j % n_phi)  # ring i >= 1

    tris = []
    for j in range(n_phi):
        tris.append((0, vid(1, j), vid(1, j + 1)))
    for i in range(1, n_r):
        for j in range(n_phi):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j), vid(i + 1, j + 1)
            tris.append((a, d, b))
            tris.append((a, c, d))
    outer = np.array([vid(n_r, j) for j in range(n_phi)])
    return FCDomainMesh(vertices=verts, triangles=np.asarray(tris), boundary_loops=[outer])


def _chain_boundary_loops(vertices: np.ndarray, triangles: np.ndarray) -> list[np.ndarray]:
    counts: dict = {}
    for t in triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    adj: dict = {}
    for (a, b), c in counts.items():
        if c == 1:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
    loops = []
    visited = set()
    for start in sorted(adj):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        prev, cur = None, start
        while True:
            nxts = [v for v in adj[cur] if v != prev]
            if not nxts:
                break
            nxt = nxts[0]
            if nxt == start:
                break
            loop.append(nxt)
            visited.add(nxt)
            prev, cur = cur, nxt
        loops.append(np.asarray(loop, dtype=np.int64))
    # outer loop has the largest absolute area; orient outer ccw, holes cw
    areas = [polygon_signed_area(vertices[l]) for l in loops]
    order = np.argsort([-abs(a) for a in areas])
    loops = [loops[i] for i in order]
    areas = [areas[i] for i in order]
    out = []
    for i, (loop, area) in enumerate(zip(loops, areas)):
        want_positive = i == 0
        if (area > 0) != want_positive:
            loop = loop[::-1]
        out.append(loop)
    return out


def multihole_disc_mesh(
    R: float,
    holes: Sequence[tuple[tuple[float, float], float]],
    h_near: float,
    *,
    growth: float = 1.25,
    hole_charges: Optional[Sequence[float]] = None,
) -> FCDomainMesh:
    """Unstructured Delaunay mesh of a disc of radius R with circular holes.

    ``holes`` is a sequence of ((cx, cy), rho) pairs; ``h_near`` is the target
    edge length at the hole boundaries, coarsening geometrically outward.
    """
    pts = []
    hole_centers = np.array([h[0] for h in holes], dtype=float).reshape(-1, 2)
    hole_radii = np.array([h[1] for h in holes], dtype=float)

    def circle(center, rho, h):
        n = max(12, int(np.ceil(2 * np.pi * rho / h)))
        t = 2 * np.pi * np.arange(n) / n
        return np.column_stack([center[0] + rho * np.cos(t), center[1] + rho * np.sin(t)])

    for (c, rho) in holes:
        pts.append(circle(c, rho, h_near))
    # local graded rings around each hole
    for (c, rho) in holes:
        r, h = rho, h_near
        while r < 4 * hole_radii.max() + np.linalg.norm(hole_centers, axis=1).max():
            r = r + h
            h = min(h * growth, 0.35 * r)
            pts.append(circle(c, r, h))
            if r > 6 * rho + 2 * np.abs(hole_centers).max():
                break
    # global rings out to R
    r_start = 4 * (np.linalg.norm(hole_centers, axis=1) + hole_radii).max()
    r, h = r_start, max(h_near * 4, 0.18 * r_start)
    ring_r = [r_start]
    while r < R:
        r = min(r + h, R)
        ring_r.append(r)
        h = min(h * growth, 0.22 * r)
    for rr in ring_r:
        pts.append(circle((0.0, 0.0), rr, 0.30 * rr if rr < R else 0.22 * R))
    boundary_n = max(48, int(np.ceil(2 * np.pi * R / (0.22 * R))))
    t = 2 * np.pi * np.arange(boundary_n) / boundary_n
    pts.append(np.column_stack([R * np.cos(t), R * np.sin(t)]))

    allpts = np.vstack(pts)
    # dedupe near-coincident points
    tree = cKDTree(allpts)
    keep = np.ones(len(allpts), dtype=bool)
    for i, j in sorted(tree.query_pairs(0.25 * h_near)):
        if keep[i] and keep[j]:
            keep[j] = False
    allpts = allpts[keep]

    dela = Delaunay(allpts)
    tris = dela.simplices
    bary = allpts[tris].mean(axis=1)
    inside = np.linalg.norm(bary, axis=1) < R * (1 - 1e-9)
    for (c, rho) in holes:
        inside &= np.linalg.norm(bary - np.asarray(c), axis=1) > rho * (1 + 1e-9)
    tris = tris[inside]
    # drop orphan vertices
    used = np.unique(tris)
    remap = -np.ones(len(allpts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = allpts[used]
    tris = remap[tris]
    # enforce ccw orientation
    p = verts[tris]
    s = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = s < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    loops = _chain_boundary_loops(verts, tris)
    # order hole loops to match the order of ``holes``
    outer, rest = loops[0], loops[1:]
    if len(rest) != len(holes):
        raise ConfigError("hole extraction failed; adjust h_near")
    centers = [verts[l].mean(axis=0) for l in rest]
    order = []
    for c in hole_centers:
        d = [np.linalg.norm(cc - c) for cc in centers]
        order.append(int(np.argmin(d)))
    rest = [rest[i] for i in order]
    return FCDomainMesh(
        vertices=verts,
        triangles=tris,
        boundary_loops=[outer] + rest,
        hole_charges=None if hole_charges is None else np.asarray(hole_charges, float),
    )
