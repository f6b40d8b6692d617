"""Curves and maps into the unit sphere: winding numbers, Gauss-map degree,
the spherical isoperimetric inequality, and the disc-level inequality chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .chart import ImmersedChart
from .errors import DegenerateConfiguration, NotRegularValue
from .tolerances import Tolerances, default_tolerances


class SphereCurve:
    """Closed polyline of unit vectors, edges being minor great-circle arcs."""

    def __init__(self, points: np.ndarray, tol: Optional[Tolerances] = None):
        self.tol = tol or default_tolerances()
        pts = np.asarray(points, dtype=float)
        norms = np.linalg.norm(pts, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e3 * self.tol.orth):
            raise ValueError("curve points must lie on the unit sphere")
        self.points = pts / norms[:, None]
        nxt = np.roll(self.points, -1, axis=0)
        if np.any(np.einsum("ni,ni->n", self.points, nxt) < -1.0 + 1e-12):
            raise ValueError("consecutive points must not be antipodal")

    def __len__(self) -> int:
        return len(self.points)

    def length(self) -> float:
        nxt = np.roll(self.points, -1, axis=0)
        dots = np.clip(np.einsum("ni,ni->n", self.points, nxt), -1.0, 1.0)
        return float(np.sum(np.arccos(dots)))

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points, np.roll(self.points, -1, axis=0)


def winding_number(curve: SphereCurve, p: np.ndarray, q: np.ndarray) -> int:
    """Signed transversal crossings of the minor geodesic arc pq with the curve.

    Crossing test: segment endpoints straddle plane(0, p, q) and p, q straddle
    plane(0, a, b); the candidate intersection of the two great circles must
    lie on both minor arcs.  Sign is the orientation of det[p x q, a x b, x].
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p = p / np.linalg.norm(p)
    q = q / np.linalg.norm(q)
    delta = curve.tol.geo
    if p @ q < -1.0 + delta:
        raise DegenerateConfiguration("p and q are (nearly) antipodal")
    u = np.cross(p, q)
    a, b = curve.segments()
    sa = a @ u
    sb = b @ u
    v = np.cross(a, b)
    tp = v @ p
    tq = v @ q
    seg_scale = np.linalg.norm(v, axis=1) + 1e-300
    arc_scale = np.linalg.norm(u) + 1e-300
    # tangency filter
    straddle_ab = sa * sb < 0
    straddle_pq = tp * tq < 0
    candidates = straddle_ab & straddle_pq
    near = (
        (np.minimum(np.abs(sa), np.abs(sb)) < delta * arc_scale)
        | (np.minimum(np.abs(tp), np.abs(tq)) < delta * seg_scale)
    )
    if np.any(near & (straddle_ab | straddle_pq)):
        raise DegenerateConfiguration("tangential crossing within tolerance")
    if not np.any(candidates):
        return 0
    idx = np.where(candidates)[0]
    x = np.cross(u[None, :], v[idx])
    # orient the candidate onto the minor arc ab
    s = np.sign(np.einsum("ki,ki->k", x, a[idx] + b[idx]))
    x = x * s[:, None]
    on_pq = np.einsum("ki,i->k", x, p + q) > 0
    return int(np.sum(s[on_pq].astype(int)))


def winding_number_robust(
    curve: SphereCurve, p: np.ndarray, q: np.ndarray, rng: Optional[np.random.Generator] = None, retries: int = 8
) -> int:
    """Winding number with jitter-retry on degenerate configurations."""
    rng = rng or np.random.default_rng(0)
    jit = curve.tol.jitter
    for attempt in range(retries):
        try:
            return winding_number(curve, p, q)
        except DegenerateConfiguration:
            p = p + jit * rng.normal(size=3)
            q = q + jit * rng.normal(size=3)
            p /= np.linalg.norm(p)
            q /= np.linalg.norm(q)
    raise DegenerateConfiguration("persistent degenerate configuration")


# -- Gauss-map degree ---------------------------------------------------------


@dataclass
class GaussMapImage:
    """Spherical image of a chart Gauss map: per-element vertex normals."""

    vertex_normals: np.ndarray  # (n_vertices, 3)
    triangles: np.ndarray       # (m, 3)
    boundary_loop: np.ndarray   # outer boundary vertex cycle

    @classmethod
    def from_chart(cls, chart: ImmersedChart) -> "GaussMapImage":
        return cls(
            vertex_normals=chart.vertex_normals(),
            triangles=chart.mesh.triangles,
            boundary_loop=chart.mesh.boundary_loops[0],
        )

    def triangle_normals(self) -> np.ndarray:
        return self.vertex_normals[self.triangles]

    def boundary_curve(self) -> SphereCurve:
        return SphereCurve(self.vertex_normals[self.boundary_loop])


def _edge_arrays(image: GaussMapImage) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    T = image.triangle_normals()
    A = T.reshape(-1, 3)
    B = T[:, [1, 2, 0], :].reshape(-1, 3)
    C = np.cross(A, B)
    C = C / (np.linalg.norm(C, axis=1, keepdims=True) + 1e-300)
    return A, B, C


def _min_arc_distance(image: GaussMapImage, p: np.ndarray) -> float:
    """Angular distance from p to the nearest image edge arc."""
    A, B, C = _edge_arrays(image)
    sin_plane = np.abs(C @ p)  # |p . unit(A x B)|
    AB = np.cross(A, B)
    in_span = (np.einsum("ki,ki->k", np.cross(A, p), AB) >= 0) & (
        np.einsum("ki,ki->k", np.cross(p, B), AB) >= 0
    )
    d_plane = np.arcsin(np.clip(sin_plane, 0.0, 1.0))
    end_a = np.arccos(np.clip(A @ p, -1.0, 1.0))
    end_b = np.arccos(np.clip(B @ p, -1.0, 1.0))
    d = np.where(in_span, d_plane, np.minimum(end_a, end_b))
    return float(d.min())


def degree_at(image: GaussMapImage, p: np.ndarray, *, delta: float = 1e-9) -> int:
    """Signed covering multiplicity of p under the piecewise-spherical map.

    p is covered by an image triangle (Na, Nb, Nc) iff the ray through p meets
    the flat triangle; the contribution is the orientation sign.  Raises
    NotRegularValue when p is within ``delta`` of an image edge arc.
    """
    p = np.asarray(p, dtype=float)
    p = p / np.linalg.norm(p)
    if _min_arc_distance(image, p) < delta:
        raise NotRegularValue("query point too close to an element image boundary")
    return int(degree_field(image, p[None, :])[0])


def degree_field(image: GaussMapImage, points: np.ndarray, *, chunk: int = 512) -> np.ndarray:
    """Batched signed covering counts (no regularity filtering)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    T = image.triangle_normals()
    cr1 = np.cross(T[:, 1], T[:, 2])
    cr2 = np.cross(T[:, 2], T[:, 0])
    cr3 = np.cross(T[:, 0], T[:, 1])
    D = np.einsum("ni,ni->n", T[:, 0], cr1)
    Dpos = D > 0
    Dneg = D < 0
    out = np.empty(len(pts), dtype=np.int64)
    for start in range(0, len(pts), chunk):
        P = pts[start : start + chunk]
        d1 = P @ cr1.T
        d2 = P @ cr2.T
        d3 = P @ cr3.T
        pos = (d1 > 0) & (d2 > 0) & (d3 > 0) & Dpos[None, :]
        neg = (d1 < 0) & (d2 < 0) & (d3 < 0) & Dneg[None, :]
        out[start : start + chunk] = pos.sum(axis=1) - neg.sum(axis=1)
    return out


def random_regular_point(
    image: GaussMapImage, rng: np.random.Generator, *, delta: float = 1e-9, max_tries: int = 100
) -> tuple[np.ndarray, int]:
    for _ in range(max_tries):
        p = rng.normal(size=3)
        p /= np.linalg.norm(p)
        try:
            return p, degree_at(image, p, delta=delta)
        except NotRegularValue:
            continue
    raise NotRegularValue("could not sample a regular value")


def check_degree_winding_relation(
    image: GaussMapImage, p: np.ndarray, q: np.ndarray, rng: Optional[np.random.Generator] = None
) -> dict:
    """Integer identity Q(p) - Q(q) = w_Gamma(p, q), Gamma = N(boundary)."""
    qp = degree_at(image, p)
    qq = degree_at(image, q)
    w = winding_number_robust(image.boundary_curve(), p, q, rng=rng)
    return {"Q_p": qp, "Q_q": qq, "winding": w, "holds": (qp - qq) == w}


# -- Weiner Monte-Carlo check -------------------------------------------------


@dataclass
class WeinerReport:
    lhs: float       # L^2
    estimate: float  # Monte-Carlo estimate of (1/2) iint w^2
    stderr: float
    n_mc: int
    n_degenerate: int
    holds: bool

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n_mc": self.n_mc,
            "n_degenerate": self.n_degenerate,
            "holds": self.holds,
        }


def _uniform_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def weiner_check(curve: SphereCurve, n_mc: int, seed: int = 0, chunk: int = 20000) -> WeinerReport:
    """Monte-Carlo check of L^2 >= (1/2) iint w_Gamma(p, q)^2 over S^2 x S^2.

    Pairs are drawn uniformly; the estimate is 8 pi^2 E[w^2] with a standard
    error, merged deterministically over seed-spawned chunks.
    """
    L = curve.length()
    a, b = curve.segments()
    v = np.cross(a, b)
    seg_scale = np.linalg.norm(v, axis=1) + 1e-300
    ss = np.random.SeedSequence(seed)
    w2_sum = 0.0
    w4_sum = 0.0
    n_done = 0
    n_degen = 0
    children = ss.spawn(int(np.ceil(n_mc / chunk)))
    for child in children:
        n_here = min(chunk, n_mc - n_done)
        rng = np.random.default_rng(child)
        p = _uniform_sphere(rng, n_here)
        q = _uniform_sphere(rng, n_here)
        u = np.cross(p, q)
        arc_scale = np.linalg.norm(u, axis=1) + 1e-300
        w = np.zeros(n_here)
        bad = np.zeros(n_here, dtype=bool)
        delta = curve.tol.geo
        for k in range(len(a)):
            sa = u @ a[k]
            sb = u @ b[k]
            tp = p @ v[k]
            tq = q @ v[k]
            straddle = (sa * sb < 0) & (tp * tq < 0)
            near = (np.minimum(np.abs(sa), np.abs(sb)) < delta * arc_scale) | (
                np.minimum(np.abs(tp), np.abs(tq)) < delta * seg_scale[k]
            )
            bad |= near & ((sa * sb < 0) | (tp * tq < 0))
            if not np.any(straddle):
                continue
            idx = np.where(straddle)[0]
            x = np.cross(u[idx], v[k][None, :])
            s = np.sign(np.einsum("ki,i->k", x, a[k] + b[k]))
            x = x * s[:, None]
            on_pq = np.einsum("ki,ki->k", x, (p + q)[idx]) > 0
            w[idx[on_pq]] += s[on_pq]
        # antipodal-ish pairs are also degenerate
        bad |= np.einsum("ni,ni->n", p, q) < -1.0 + 1e-9
        n_degen += int(bad.sum())
        w2 = w[~bad] ** 2
        w2_sum += float(np.sum(w2))
        w4_sum += float(np.sum(w2**2))
        n_done += n_here
    n_eff = n_done - n_degen
    mean_w2 = w2_sum / n_eff
    var_w2 = max(w4_sum / n_eff - mean_w2**2, 0.0)
    estimate = 8 * np.pi**2 * mean_w2
    stderr = 8 * np.pi**2 * np.sqrt(var_w2 / n_eff)
    return WeinerReport(
        lhs=L**2,
        estimate=estimate,
        stderr=stderr,
        n_mc=n_done,
        n_degenerate=n_degen,
        holds=bool(L**2 >= estimate - 3 * stderr),
    )


# -- disc-level inequality chain ----------------------------------------------


def _chart_degree_data(chart: ImmersedChart) -> tuple[GaussMapImage, np.ndarray, np.ndarray]:
    image = GaussMapImage.from_chart(chart)
    fields = chart.curvature_fields()
    return image, fields.K, fields.vol


def check_lemma_isoperimetric(chart: ImmersedChart) -> dict:
    """L^2 >= 4 pi int (Q o N) K dVol - (int K dVol)^2 on a disc chart."""
    image, K, vol = _chart_degree_data(chart)
    if chart.mesh.n_holes != 0:
        raise ValueError("disc-type chart required")
    bary_normals = chart.element_normals() if not chart.is_analytic else chart.analytic.normal(
        chart.mesh.barycenters()
    )
    Q = degree_field(image, bary_normals)
    QK = float(np.sum(Q * K * vol))
    total_K = float(np.sum(K * vol))
    L = image.boundary_curve().length()
    lhs = L**2
    rhs = 4 * np.pi * QK - total_K**2
    tol = chart.tol
    scale = max(abs(lhs), abs(rhs), 1.0)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "holds": bool(lhs >= rhs - tol.ineq * scale),
        "int_QK": QK,
        "int_K": total_K,
        "length": L,
    }


def check_lemma_degree_positivity(chart: ImmersedChart) -> dict:
    """int (Q o N) K dVol >= |int K dVol| on a disc chart."""
    image, K, vol = _chart_degree_data(chart)
    bary_normals = chart.element_normals() if not chart.is_analytic else chart.analytic.normal(
        chart.mesh.barycenters()
    )
    Q = degree_field(image, bary_normals)
    QK = float(np.sum(Q * K * vol))
    total_K = float(np.sum(K * vol))
    tol = chart.tol
    scale = max(abs(QK), abs(total_K), 1.0)
    return {
        "lhs": QK,
        "rhs": abs(total_K),
        "holds": bool(QK >= abs(total_K) - tol.ineq * scale),
    }


def check_iso_chain_disc(chart: ImmersedChart) -> dict:
    """Combined disc bound L^2 >= (4 pi - |int K|) |int K| with intermediate steps."""
    lem7 = check_lemma_isoperimetric(chart)
    lem10 = check_lemma_degree_positivity(chart)
    A = abs(lem7["int_K"])
    rhs = (4 * np.pi - A) * A
    scale = max(lem7["lhs"], abs(rhs), 1.0)
    return {
        "lhs": lem7["lhs"],
        "rhs": rhs,
        "holds": bool(lem7["lhs"] >= rhs - chart.tol.ineq * scale),
        "lemma_isoperimetric": lem7,
        "lemma_degree_positivity": lem10,
    }


def pushforward_identity_check(
    chart: ImmersedChart,
    h: Callable[[np.ndarray], np.ndarray],
    *,
    n_sphere: int = 40000,
    tol_rel: float = 2e-2,
) -> dict:
    """Residual of int_D (h o N) K dVol = int_{S^2} Q h dVol.

    The sphere-side integral uses a Fibonacci lattice with degree queries.
    """
    image, K, vol = _chart_degree_data(chart)
    bary_normals = chart.element_normals() if not chart.is_analytic else chart.analytic.normal(
        chart.mesh.barycenters()
    )
    lhs = float(np.sum(np.asarray(h(bary_normals)) * K * vol))
    pts = fibonacci_sphere(n_sphere)
    Q = degree_field(image, pts)
    rhs = float(np.mean(Q * np.asarray(h(pts))) * 4 * np.pi)
    scale = max(abs(lhs), abs(rhs), float(np.sum(np.abs(K) * vol)), 1e-12)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "residual": abs(lhs - rhs),
        "holds": bool(abs(lhs - rhs) <= tol_rel * scale),
    }


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(np.maximum(0.0, 1 - z * z))
    golden = np.pi * (3 - np.sqrt(5.0))
    th = golden * i
    return np.column_stack([r * np.cos(th), r * np.sin(th), z])
