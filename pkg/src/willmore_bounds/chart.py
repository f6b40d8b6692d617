"""Immersed charts and their curvature fields.

An :class:`ImmersedChart` couples an :class:`~willmore_bounds.meshing.FCDomainMesh`
with an immersion into R^3, given either as per-vertex positions or as an
analytic closure.  Curvature quantities are evaluated per element; meshed
immersions recover second-order data through a quadratic least-squares fit
over each element's one-ring (piecewise-linear data has no curvature).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateElement, ViolationFound
from .meshing import FCDomainMesh
from .metric import MetricField, brioschi_curvature
from .tolerances import Tolerances, default_tolerances

_EPS = np.finfo(float).eps


class AnalyticImmersion:
    """Closure-backed immersion f: chart -> R^3 with optional derivatives."""

    def __init__(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        df: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        d2f: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        *,
        diameter: float = 1.0,
        name: str = "",
    ):
        self._f = f
        self._df = df
        self._d2f = d2f
        self.diameter = float(diameter)
        self.h_fd = _EPS ** (1.0 / 3.0) * self.diameter
        self.name = name

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self._f(np.atleast_2d(pts)), dtype=float)

    def df(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self._df is not None:
            return np.asarray(self._df(pts), dtype=float).reshape(len(pts), 3, 2)
        h = self.h_fd
        out = np.empty((len(pts), 3, 2))
        for a in range(2):
            step = np.zeros(2)
            step[a] = h
            out[:, :, a] = (self(pts + step) - self(pts - step)) / (2 * h)
        return out

    def d2f(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self._d2f is not None:
            return np.asarray(self._d2f(pts), dtype=float).reshape(len(pts), 3, 2, 2)
        if self._df is not None:
            h = self.h_fd
            out = np.empty((len(pts), 3, 2, 2))
            for b in range(2):
                step = np.zeros(2)
                step[b] = h
                dp = self.df(pts + step)
                dm = self.df(pts - step)
                out[:, :, :, b] = (dp - dm) / (2 * h)
            return out
        h = _EPS ** 0.25 * self.diameter
        out = np.empty((len(pts), 3, 2, 2))
        f0 = self(pts)
        for a in range(2):
            ea = np.zeros(2)
            ea[a] = h
            out[:, :, a, a] = (self(pts + ea) - 2 * f0 + self(pts - ea)) / h**2
        eb = np.array([h, h])
        ec = np.array([h, -h])
        mixed = (self(pts + eb) - self(pts + ec) - self(pts - ec) + self(pts - eb)) / (4 * h**2)
        out[:, :, 0, 1] = mixed
        out[:, :, 1, 0] = mixed
        return out

    def normal(self, pts: np.ndarray) -> np.ndarray:
        d = self.df(pts)
        n = np.cross(d[:, :, 0], d[:, :, 1])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def dnormal(self, pts: np.ndarray) -> np.ndarray:
        """dN[:, :, a] = d_a N by central differences of the normal map."""
        pts = np.atleast_2d(pts)
        # when df itself is finite-differenced, a larger step beats roundoff
        h = self.h_fd if self._df is not None else _EPS ** 0.2 * self.diameter
        out = np.empty((len(pts), 3, 2))
        for a in range(2):
            step = np.zeros(2)
            step[a] = h
            out[:, :, a] = (self.normal(pts + step) - self.normal(pts - step)) / (2 * h)
        return out


@dataclass
class ElementFields:
    """Per-element curvature data (one-point quadrature at barycenters)."""

    K: np.ndarray            # Gauss-map-Jacobian route
    K_intrinsic: np.ndarray  # Brioschi route (NaN where unavailable)
    H: np.ndarray
    dN2: np.ndarray          # |dN|^2_g from actual normal derivatives
    vol: np.ndarray          # sqrt(det g) * chart area
    sqrt_det: np.ndarray

    def total_curvature(self) -> float:
        return float(np.sum(self.K * self.vol))


def _curvature_from_derivatives(df, d2f, dN, det_floor):
    """Common pointwise pipeline given df (n,3,2), d2f (n,3,2,2), dN (n,3,2)."""
    g = np.einsum("nia,nib->nab", df, df)
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    scale = 0.5 * (g[:, 0, 0] + g[:, 1, 1])
    if np.any(det <= det_floor * np.maximum(scale, 1e-300) ** 2):
        bad = int(np.argmin(det / np.maximum(scale, 1e-300) ** 2))
        raise DegenerateElement(f"degenerate pullback metric at element {bad}")
    ginv = np.empty_like(g)
    ginv[:, 0, 0] = g[:, 1, 1] / det
    ginv[:, 1, 1] = g[:, 0, 0] / det
    ginv[:, 0, 1] = -g[:, 0, 1] / det
    ginv[:, 1, 0] = -g[:, 1, 0] / det
    sq = np.sqrt(det)
    n = np.cross(df[:, :, 0], df[:, :, 1])
    N = n / np.linalg.norm(n, axis=1, keepdims=True)
    # second fundamental form and mean curvature
    b = np.einsum("niab,ni->nab", d2f, N)
    S = np.einsum("nab,nbc->nac", ginv, b)
    H = 0.5 * (S[:, 0, 0] + S[:, 1, 1])
    # Gauss-map Jacobian route
    K = np.einsum("ni,ni->n", N, np.cross(dN[:, :, 0], dN[:, :, 1])) / sq
    # |dN|^2_g from the normal derivatives themselves
    dN2 = np.einsum("nab,nia,nib->n", ginv, dN, dN)
    return g, ginv, sq, N, b, H, K, dN2


class ImmersedChart:
    """Immersion of a finitely-connected chart with derived curvature data."""

    def __init__(
        self,
        mesh: FCDomainMesh,
        positions: Optional[np.ndarray] = None,
        analytic: Optional[AnalyticImmersion] = None,
        *,
        tol: Optional[Tolerances] = None,
    ):
        if (positions is None) == (analytic is None):
            raise ValueError("provide exactly one of positions / analytic")
        self.mesh = mesh
        self.tol = tol or default_tolerances()
        self.analytic = analytic
        if analytic is not None:
            self.positions = analytic(mesh.vertices)
        else:
            self.positions = np.asarray(positions, dtype=float)
            if self.positions.shape != (mesh.n_vertices, 3):
                raise ValueError("positions must have shape (n_vertices, 3)")
        self._cache: dict = {}

    @property
    def is_analytic(self) -> bool:
        return self.analytic is not None

    # -- first-order element data -------------------------------------------

    def element_df(self) -> np.ndarray:
        """Jacobian per element: analytic at barycenters, else the PL gradient."""
        if "df" in self._cache:
            return self._cache["df"]
        if self.is_analytic:
            df = self.analytic.df(self.mesh.barycenters())
        else:
            tri = self.mesh.triangles
            p = self.mesh.vertices[tri]
            q = self.positions[tri]
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            # rows of the inverse chart-edge matrix
            inv00 = e2[:, 1] / det
            inv01 = -e2[:, 0] / det
            inv10 = -e1[:, 1] / det
            inv11 = e1[:, 0] / det
            F1 = q[:, 1] - q[:, 0]
            F2 = q[:, 2] - q[:, 0]
            df = np.empty((len(tri), 3, 2))
            df[:, :, 0] = F1 * inv00[:, None] + F2 * inv10[:, None]
            df[:, :, 1] = F1 * inv01[:, None] + F2 * inv11[:, None]
        self._cache["df"] = df
        return df

    def element_normals(self) -> np.ndarray:
        if "N" not in self._cache:
            df = self.element_df()
            n = np.cross(df[:, :, 0], df[:, :, 1])
            self._cache["N"] = n / np.linalg.norm(n, axis=1, keepdims=True)
        return self._cache["N"]

    def vertex_normals(self) -> np.ndarray:
        if "VN" in self._cache:
            return self._cache["VN"]
        if self.is_analytic:
            vn = self.analytic.normal(self.mesh.vertices)
        else:
            eln = self.element_normals()
            w = np.abs(self.mesh.chart_areas())
            vn = np.zeros((self.mesh.n_vertices, 3))
            for k in range(3):
                np.add.at(vn, self.mesh.triangles[:, k], eln * w[:, None])
            vn /= np.linalg.norm(vn, axis=1, keepdims=True)
        self._cache["VN"] = vn
        return vn

    def induced_metric(self) -> MetricField:
        """Pullback metric g = df^T df as a queryable field."""
        if "metric" in self._cache:
            return self._cache["metric"]
        diam = self.mesh.diameter()
        if self.is_analytic:
            imm = self.analytic

            def ev(pts):
                d = imm.df(pts)
                return np.einsum("nia,nib->nab", d, d)

            metric = MetricField(ev, diameter=diam, name=f"pullback({imm.name})")
        else:
            coeff = self._fit_coefficients()
            mesh = self.mesh

            def ev(pts):
                pts = np.atleast_2d(pts)
                els = mesh.locate(pts)
                d = _fit_df_at(coeff, mesh.barycenters()[els], els, pts)
                return np.einsum("nia,nib->nab", d, d)

            metric = MetricField(
                ev, diameter=diam, name="pullback(mesh)", has_second_derivatives=False
            )
        metric.record_bounds(self.mesh.barycenters())
        self._cache["metric"] = metric
        return metric

    # -- quadratic recovery for meshed charts --------------------------------

    def _fit_coefficients(self) -> np.ndarray:
        """Per-element quadratic fit of f over the one-ring, coeffs (m, 6, 3).

        Basis about the barycenter: [1, x, y, x^2/2, x*y, y^2/2].
        """
        if "fit" in self._cache:
            return self._cache["fit"]
        mesh = self.mesh
        tri = mesh.triangles
        v2t: list[list[int]] = [[] for _ in range(mesh.n_vertices)]
        for t, tv in enumerate(tri):
            for v in tv:
                v2t[v].append(t)
        bary = mesh.barycenters()
        coeff = np.empty((len(tri), 6, 3))
        for e, tv in enumerate(tri):
            ring: set = set()
            for v in tv:
                for t in v2t[v]:
                    ring.update(tri[t])
            if len(ring) < 6:
                for v in list(ring):
                    for t in v2t[v]:
                        ring.update(tri[t])
            idx = np.fromiter(ring, dtype=np.int64)
            xi = mesh.vertices[idx] - bary[e]
            scale = np.abs(xi).max()
            xs = xi / scale
            A = np.column_stack(
                [
                    np.ones(len(idx)),
                    xs[:, 0],
                    xs[:, 1],
                    0.5 * xs[:, 0] ** 2,
                    xs[:, 0] * xs[:, 1],
                    0.5 * xs[:, 1] ** 2,
                ]
            )
            sol, *_ = np.linalg.lstsq(A, self.positions[idx], rcond=None)
            # unscale: linear terms /scale, quadratic /scale^2
            sol[1:3] /= scale
            sol[3:6] /= scale**2
            coeff[e] = sol
        self._cache["fit"] = coeff
        return coeff

    # -- curvature fields -----------------------------------------------------

    def curvature_fields(self) -> ElementFields:
        if "fields" in self._cache:
            return self._cache["fields"]
        mesh = self.mesh
        bary = mesh.barycenters()
        areas = mesh.chart_areas()
        if self.is_analytic:
            imm = self.analytic
            df = imm.df(bary)
            d2f = imm.d2f(bary)
            dN = imm.dnormal(bary)
            g, ginv, sq, N, b, H, K, dN2 = _curvature_from_derivatives(
                df, d2f, dN, self.tol.det_floor
            )
            K_int = self._intrinsic_curvature_analytic(bary)
        else:
            coeff = self._fit_coefficients()
            df = np.transpose(coeff[:, 1:3, :], (0, 2, 1))  # (m, 3, 2)
            B = np.empty((len(coeff), 3, 2, 2))
            B[:, :, 0, 0] = coeff[:, 3, :]
            B[:, :, 0, 1] = coeff[:, 4, :]
            B[:, :, 1, 0] = coeff[:, 4, :]
            B[:, :, 1, 1] = coeff[:, 5, :]
            d2f = B
            dN = _fit_dnormal(coeff, mesh)
            g, ginv, sq, N, b, H, K, dN2 = _curvature_from_derivatives(
                df, d2f, dN, self.tol.det_floor
            )
            K_int = _fit_intrinsic_curvature(df, B, g)
        fields = ElementFields(
            K=K, K_intrinsic=K_int, H=H, dN2=dN2, vol=sq * areas, sqrt_det=sq
        )
        self._cache["fields"] = fields
        return fields

    def _intrinsic_curvature_analytic(self, pts: np.ndarray) -> np.ndarray:
        metric = self.induced_metric()
        return metric.gaussian_curvature(pts)

    def bending_energy(self) -> float:
        """Integral of |dN|^2_g over the chart (one-point quadrature)."""
        f = self.curvature_fields()
        return float(np.sum(f.dN2 * f.vol))

    def willmore_energy(self) -> float:
        f = self.curvature_fields()
        return float(np.sum(f.H**2 * f.vol))

    def area(self) -> float:
        f = self.curvature_fields()
        return float(np.sum(f.vol))

    def pointwise_agm_check(self, *, raise_on_violation: bool = True) -> dict:
        """Per-element check |dN|^2_g >= 2|K|; returns the worst margin."""
        f = self.curvature_fields()
        tol = self.tol.curv if self.is_analytic else self.tol.curv_mesh
        scale = np.maximum(np.abs(f.dN2), np.abs(2 * f.K)) + 1.0
        margins = (f.dN2 - 2 * np.abs(f.K)) / scale
        worst = int(np.argmin(margins))
        report = {
            "worst_margin": float(margins[worst]),
            "worst_element": worst,
            "holds": bool(margins[worst] >= -tol),
            "n_elements": len(margins),
        }
        if raise_on_violation and not report["holds"]:
            raise ViolationFound(
                f"AGM violated at element {worst}: margin {margins[worst]:.3e}"
            )
        return report

    # -- boundary extraction --------------------------------------------------

    def boundary_loop_data(self, loop_index: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(chart points, positions, normals) along a boundary loop."""
        loop = self.mesh.boundary_loops[loop_index]
        pts = self.mesh.vertices[loop]
        return pts, self.positions[loop], self.vertex_normals()[loop]


def pullback_metric(chart: ImmersedChart) -> MetricField:
    """Spec-level alias for the induced metric of an immersed chart."""
    return chart.induced_metric()


def _fit_df_at(coeff: np.ndarray, bary: np.ndarray, els: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Evaluate the fitted Jacobian of selected elements at chart points."""
    xi = pts - bary
    c = coeff[els]
    df = np.empty((len(pts), 3, 2))
    df[:, :, 0] = c[:, 1, :] + c[:, 3, :] * xi[:, 0:1] + c[:, 4, :] * xi[:, 1:2]
    df[:, :, 1] = c[:, 2, :] + c[:, 4, :] * xi[:, 0:1] + c[:, 5, :] * xi[:, 1:2]
    return df


def _fit_dnormal(coeff: np.ndarray, mesh: FCDomainMesh) -> np.ndarray:
    """d_a N at barycenters by differencing the fitted normal map."""
    bary = mesh.barycenters()
    h = np.sqrt(np.abs(mesh.chart_areas())) * 1e-3
    els = np.arange(len(coeff))
    out = np.empty((len(coeff), 3, 2))
    for a in range(2):
        step = np.zeros((len(coeff), 2))
        step[:, a] = h
        dp = _fit_df_at(coeff, bary, els, bary + step)
        dm = _fit_df_at(coeff, bary, els, bary - step)
        np_ = np.cross(dp[:, :, 0], dp[:, :, 1])
        nm = np.cross(dm[:, :, 0], dm[:, :, 1])
        np_ /= np.linalg.norm(np_, axis=1, keepdims=True)
        nm /= np.linalg.norm(nm, axis=1, keepdims=True)
        out[:, :, a] = (np_ - nm) / (2 * h[:, None])
    return out


def _fit_intrinsic_curvature(df: np.ndarray, B: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Brioschi curvature of the fitted quadratic surface at the barycenter.

    For quadratic f the metric derivatives are exact:
    d_a g_ij = B_ia . df_j + df_i . B_ja,  d_ab g_ij = B_ia . B_jb + B_ib . B_ja.
    """
    m = len(df)
    dg = np.empty((m, 2, 2, 2))
    for a in range(2):
        for i in range(2):
            for j in range(2):
                dg[:, a, i, j] = np.einsum("nc,nc->n", B[:, :, i, a], df[:, :, j]) + np.einsum(
                    "nc,nc->n", df[:, :, i], B[:, :, j, a]
                )
    d2g = np.empty((m, 2, 2, 2, 2))
    for a in range(2):
        for bb in range(2):
            for i in range(2):
                for j in range(2):
                    d2g[:, a, bb, i, j] = np.einsum(
                        "nc,nc->n", B[:, :, i, a], B[:, :, j, bb]
                    ) + np.einsum("nc,nc->n", B[:, :, i, bb], B[:, :, j, a])
    return brioschi_curvature(g, dg, d2g)


# -- stock analytic immersions ------------------------------------------------


def plane_immersion() -> AnalyticImmersion:
    def f(p):
        return np.column_stack([p[:, 0], p[:, 1], np.zeros(len(p))])

    def df(p):
        out = np.zeros((len(p), 3, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 1.0
        return out

    def d2f(p):
        return np.zeros((len(p), 3, 2, 2))

    return AnalyticImmersion(f, df, d2f, name="plane")


def graph_immersion(
    u: Callable[[np.ndarray], np.ndarray],
    grad_u: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    hess_u: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    *,
    height_scale: float = 1.0,
    diameter: float = 2.0,
    name: str = "graph",
) -> AnalyticImmersion:
    """Immersion (x, y, s*u(x, y)) of a graph with height scale s."""
    s = height_scale

    def f(p):
        return np.column_stack([p[:, 0], p[:, 1], s * np.asarray(u(p), dtype=float)])

    df = None
    d2f = None
    if grad_u is not None:

        def df(p):  # noqa: F811
            gu = np.asarray(grad_u(p), dtype=float)
            out = np.zeros((len(p), 3, 2))
            out[:, 0, 0] = 1.0
            out[:, 1, 1] = 1.0
            out[:, 2, :] = s * gu
            return out

    if hess_u is not None:

        def d2f(p):  # noqa: F811
            hu = np.asarray(hess_u(p), dtype=float)
            out = np.zeros((len(p), 3, 2, 2))
            out[:, 2, :, :] = s * hu
            return out

    return AnalyticImmersion(f, df, d2f, diameter=diameter, name=name)


def sphere_cap_immersion(radius: float = 1.0) -> AnalyticImmersion:
    """Geodesic-polar chart of a sphere: chart radius s maps to colatitude s.

    f(x, y) = radius * (w(s) * x, w(s) * y, cos(s)), s = |(x, y)|, w = sin(s)/s.
    """

    def _w_u(p):
        s2 = np.einsum("ni,ni->n", p, p)
        s = np.sqrt(s2)
        small = s < 1e-4
        w = np.where(small, 1.0 - s2 / 6.0 + s2 * s2 / 120.0, np.sin(s) / np.where(s > 0, s, 1.0))
        # u = w'(s)/s = (cos s - w)/s^2, series -1/3 + s^2/30 near 0
        u = np.where(
            small,
            -1.0 / 3.0 + s2 / 30.0,
            (np.cos(s) - w) / np.where(s2 > 0, s2, 1.0),
        )
        return w, u

    def f(p):
        w, _ = _w_u(p)
        s = np.linalg.norm(p, axis=1)
        return radius * np.column_stack([w * p[:, 0], w * p[:, 1], np.cos(s)])

    def df(p):
        w, u = _w_u(p)
        out = np.empty((len(p), 3, 2))
        for i in range(2):
            for a in range(2):
                out[:, i, a] = (w if i == a else 0.0) + u * p[:, a] * p[:, i]
        out[:, 2, 0] = -w * p[:, 0]
        out[:, 2, 1] = -w * p[:, 1]
        return radius * out

    return AnalyticImmersion(f, df, diameter=2.0 * radius, name=f"cap(rho={radius})")


def cylinder_immersion(radius: float = 1.0) -> AnalyticImmersion:
    """Chart (x, y) -> (rho cos(x/rho), rho sin(x/rho), y): unrolled cylinder."""

    def f(p):
        t = p[:, 0] / radius
        return np.column_stack([radius * np.cos(t), radius * np.sin(t), p[:, 1]])

    def df(p):
        t = p[:, 0] / radius
        out = np.zeros((len(p), 3, 2))
        out[:, 0, 0] = -np.sin(t)
        out[:, 1, 0] = np.cos(t)
        out[:, 2, 1] = 1.0
        return out

    def d2f(p):
        t = p[:, 0] / radius
        out = np.zeros((len(p), 3, 2, 2))
        out[:, 0, 0, 0] = -np.cos(t) / radius
        out[:, 1, 0, 0] = -np.sin(t) / radius
        return out

    return AnalyticImmersion(f, df, d2f, diameter=4 * radius, name=f"cylinder(rho={radius})")
