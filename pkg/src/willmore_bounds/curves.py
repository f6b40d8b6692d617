"""Curves inside charts: geodesic curvature and enclosed-curvature bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import HomotopyClassAmbiguous
from .meshing import FCDomainMesh, points_in_polygon
from .metric import MetricField


@dataclass
class CurveInChart:
    """Ordered chart points, closed unless stated otherwise.

    Optional velocity/acceleration arrays give exact parameter derivatives at
    the samples; otherwise periodic cubic splines supply them.
    """

    points: np.ndarray
    closed: bool = True
    velocity: Optional[np.ndarray] = None
    acceleration: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must have shape (k, 2)")
        if len(self.points) < 3:
            raise ValueError("need at least 3 samples")
        step = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        if np.any(step == 0):
            raise ValueError("consecutive samples must be distinct")

    def __len__(self) -> int:
        return len(self.points)

    def derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        """(velocity, acceleration) w.r.t. the uniform parameter, at samples."""
        if self.velocity is not None and self.acceleration is not None:
            return self.velocity, self.acceleration
        k = len(self.points)
        t = np.arange(k + 1, dtype=float)
        if self.closed:
            data = np.vstack([self.points, self.points[:1]])
            spl = CubicSpline(t, data, bc_type="periodic")
        else:
            t = t[:-1]
            spl = CubicSpline(t, self.points)
        vel = self.velocity if self.velocity is not None else spl(t[:k], 1)
        acc = self.acceleration if self.acceleration is not None else spl(t[:k], 2)
        return vel, acc


def circle_curve(radius: float, n: int, center=(0.0, 0.0)) -> CurveInChart:
    """Constant-radius chart circle with exact parameter derivatives."""
    phi = 2 * np.pi * np.arange(n) / n
    c = np.asarray(center, dtype=float)
    pts = c + radius * np.column_stack([np.cos(phi), np.sin(phi)])
    vel = radius * np.column_stack([-np.sin(phi), np.cos(phi)]) * (2 * np.pi / n)
    acc = -radius * np.column_stack([np.cos(phi), np.sin(phi)]) * (2 * np.pi / n) ** 2
    return CurveInChart(pts, closed=True, velocity=vel, acceleration=acc)


def coordinate_circle_polar(radius: float, n: int) -> CurveInChart:
    """Constant-r curve on an (r, phi) chart, phi in [0, 2pi)."""
    phi = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([np.full(n, radius), phi])
    vel = np.column_stack([np.zeros(n), np.full(n, 2 * np.pi / n)])
    acc = np.zeros((n, 2))
    return CurveInChart(pts, closed=True, velocity=vel, acceleration=acc)


def geodesic_curvature(metric: MetricField, curve: CurveInChart) -> dict:
    """Per-sample geodesic curvature and its arclength integral.

    kappa_g = <cov. acceleration, n>_g / |v|_g^2 with n the g-unit normal
    such that (t, n) is positively oriented; the integral uses the cyclic
    trapezoid rule in the curve parameter.
    """
    pts = curve.points
    vel, acc = curve.derivatives()
    g = metric(pts)
    gamma = metric.christoffel(pts)
    speed2 = np.einsum("ni,nij,nj->n", vel, g, vel)
    speed = np.sqrt(speed2)
    cov_acc = acc + np.einsum("nkij,ni,nj->nk", gamma, vel, vel)
    t_hat = vel / speed[:, None]
    n_hat = metric.unit_normal(pts, t_hat)
    kappa = np.einsum("ni,nij,nj->n", cov_acc, g, n_hat) / speed2
    dl = speed  # d(ell)/d(parameter)
    if curve.closed:
        total = float(np.mean(kappa * dl) * len(pts))
    else:
        total = float(np.trapezoid(kappa * dl, dx=1.0))
    length = float(np.mean(dl) * len(pts)) if curve.closed else float(np.trapezoid(dl, dx=1.0))
    return {"kappa": kappa, "total": total, "length": length, "speed": speed}


def curve_length(metric: MetricField, curve: CurveInChart) -> float:
    return geodesic_curvature(metric, curve)["length"]


def enclosed_curvature(
    metric: MetricField,
    mesh: FCDomainMesh,
    hole_index: int,
    test_curve: Optional[CurveInChart] = None,
    K_elements: Optional[np.ndarray] = None,
) -> float:
    """Curvature enclosed in a hole: 2 pi - total geodesic curvature of a
    homotopic test curve minus the curvature integral over the in-between
    annulus.

    ``hole_index`` is 1-based (holes are boundary loops 1..m).  ``K_elements``
    holds per-element Gaussian curvature; when omitted it is evaluated from
    the metric at barycenters.
    """
    if not (1 <= hole_index <= mesh.n_holes):
        raise ValueError(f"hole_index must be in 1..{mesh.n_holes}")
    if test_curve is None:
        seed = mesh.hole_seed_points()[hole_index - 1]
        loop_pts = mesh.vertices[mesh.boundary_loops[hole_index]]
        rho = np.linalg.norm(loop_pts - seed, axis=1).max()
        test_curve = circle_curve(1.8 * rho, 256, center=seed)
    seeds = mesh.hole_seed_points()
    inside_seeds = points_in_polygon(seeds, test_curve.points)
    if inside_seeds.sum() != 1 or not inside_seeds[hole_index - 1]:
        raise HomotopyClassAmbiguous(
            "test curve must enclose exactly the requested hole"
        )
    gk = geodesic_curvature(metric, test_curve)
    if K_elements is None:
        K_elements = metric.gaussian_curvature(mesh.barycenters())
    vol = metric.sqrt_det(mesh.barycenters()) * mesh.chart_areas()
    inside = mesh.triangles_inside_polygon(test_curve.points)
    area_term = float(np.sum(K_elements[inside] * vol[inside]))
    return 2 * np.pi - gk["total"] - area_term


def gauss_bonnet_residual(
    metric: MetricField,
    mesh: FCDomainMesh,
    region: CurveInChart,
    K_elements: Optional[np.ndarray] = None,
) -> float:
    """|int_region K dVol + int_boundary kappa_g dl - 2 pi| for a disc region."""
    seeds = mesh.hole_seed_points()
    if len(seeds) and points_in_polygon(seeds, region.points).any():
        raise HomotopyClassAmbiguous("region must be disc-type (no holes inside)")
    gk = geodesic_curvature(metric, region)
    if K_elements is None:
        K_elements = metric.gaussian_curvature(mesh.barycenters())
    vol = metric.sqrt_det(mesh.barycenters()) * mesh.chart_areas()
    inside = mesh.triangles_inside_polygon(region.points)
    area_term = float(np.sum(K_elements[inside] * vol[inside]))
    return abs(area_term + gk["total"] - 2 * np.pi)
