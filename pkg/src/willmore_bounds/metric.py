"""Riemannian metric fields over planar charts.

A :class:`MetricField` wraps a (vectorized) evaluation of a 2x2 SPD matrix
over chart coordinates, together with first and second derivatives that are
either supplied analytically or obtained by central finite differences with
step ``h_fd = eps**(1/3) * diameter``.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import DerivativeUnavailable, NonSPDMetric

_EPS = np.finfo(float).eps
ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def _as_points(points: np.ndarray) -> tuple[np.ndarray, bool]:
    pts = np.asarray(points, dtype=float)
    if pts.shape == (2,):
        return pts[None, :], True
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
    return pts, False


class MetricField:
    """2x2 symmetric-positive-definite metric over a planar chart.

    Parameters
    ----------
    eval_fn:
        maps points of shape (n, 2) to metrics of shape (n, 2, 2).
    deriv_fn:
        optional; maps points to dg of shape (n, 2, 2, 2), index layout
        ``dg[:, a, i, j] = d_a g_ij``.
    second_deriv_fn:
        optional; shape (n, 2, 2, 2, 2), ``d2g[:, a, b, i, j] = d_a d_b g_ij``.
    diameter:
        chart diameter, sets the finite-difference step.
    probe_points:
        sample points used to record the SPD eigenvalue bounds at
        construction time.
    """

    def __init__(
        self,
        eval_fn: Callable[[np.ndarray], np.ndarray],
        deriv_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        second_deriv_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        *,
        diameter: float = 1.0,
        probe_points: Optional[np.ndarray] = None,
        name: str = "",
        has_second_derivatives: bool = True,
    ):
        self._eval_fn = eval_fn
        self._deriv_fn = deriv_fn
        self._second_deriv_fn = second_deriv_fn
        self.diameter = float(diameter)
        self.h_fd = _EPS ** (1.0 / 3.0) * self.diameter
        self.name = name
        self.derivative_mode = "analytic" if deriv_fn is not None else "central-fd"
        self.has_second_derivatives = has_second_derivatives
        self.lambda_min = None
        self.lambda_max = None
        if probe_points is not None:
            self.record_bounds(probe_points)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts, squeeze = _as_points(points)
        g = np.asarray(self._eval_fn(pts), dtype=float)
        g = g.reshape(len(pts), 2, 2)
        return g[0] if squeeze else g

    def deriv(self, points: np.ndarray) -> np.ndarray:
        pts, squeeze = _as_points(points)
        if self._deriv_fn is not None:
            dg = np.asarray(self._deriv_fn(pts), dtype=float).reshape(len(pts), 2, 2, 2)
        else:
            dg = self._fd_deriv(pts)
        return dg[0] if squeeze else dg

    def second_deriv(self, points: np.ndarray) -> np.ndarray:
        if not self.has_second_derivatives:
            raise DerivativeUnavailable(
                f"metric {self.name!r} has no trustworthy second derivatives"
            )
        pts, squeeze = _as_points(points)
        if self._second_deriv_fn is not None:
            d2 = np.asarray(self._second_deriv_fn(pts), dtype=float)
            d2 = d2.reshape(len(pts), 2, 2, 2, 2)
        elif self._deriv_fn is not None:
            d2 = self._fd_of_deriv(pts)
        else:
            d2 = self._fd_second(pts)
        return d2[0] if squeeze else d2

    def _fd_deriv(self, pts: np.ndarray) -> np.ndarray:
        h = self.h_fd
        out = np.empty((len(pts), 2, 2, 2))
        for a in range(2):
            step = np.zeros(2)
            step[a] = h
            out[:, a] = (self._eval_fn(pts + step) - self._eval_fn(pts - step)) / (2 * h)
        return out

    def _fd_of_deriv(self, pts: np.ndarray) -> np.ndarray:
        h = self.h_fd
        out = np.empty((len(pts), 2, 2, 2, 2))
        for b in range(2):
            step = np.zeros(2)
            step[b] = h
            dp = np.asarray(self._deriv_fn(pts + step)).reshape(len(pts), 2, 2, 2)
            dm = np.asarray(self._deriv_fn(pts - step)).reshape(len(pts), 2, 2, 2)
            out[:, :, b] = (dp - dm) / (2 * h)
        return out

    def _fd_second(self, pts: np.ndarray) -> np.ndarray:
        # double central differences need a larger step to beat roundoff
        h = _EPS ** 0.25 * self.diameter
        out = np.empty((len(pts), 2, 2, 2, 2))
        g0 = self._eval_fn(pts)
        for a in range(2):
            ea = np.zeros(2)
            ea[a] = h
            out[:, a, a] = (self._eval_fn(pts + ea) - 2 * g0 + self._eval_fn(pts - ea)) / h**2
        eb = np.array([h, h])
        ec = np.array([h, -h])
        mixed = (
            self._eval_fn(pts + eb)
            - self._eval_fn(pts + ec)
            - self._eval_fn(pts - ec)
            + self._eval_fn(pts - eb)
        ) / (4 * h**2)
        out[:, 0, 1] = mixed
        out[:, 1, 0] = mixed
        return out

    # -- derived quantities -------------------------------------------------

    def inverse(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self(points))

    def det(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.det(self(points))

    def sqrt_det(self, points: np.ndarray) -> np.ndarray:
        d = self.det(points)
        if np.any(d <= 0):
            raise NonSPDMetric("non-positive metric determinant")
        return np.sqrt(d)

    def record_bounds(self, probe_points: np.ndarray) -> tuple[float, float]:
        g = self(np.asarray(probe_points, dtype=float))
        if g.ndim == 2:
            g = g[None]
        if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12 * max(1.0, np.abs(g).max())):
            raise NonSPDMetric("metric is not symmetric at probe points")
        eigs = np.linalg.eigvalsh(g)
        lo, hi = float(eigs.min()), float(eigs.max())
        if lo <= 0:
            raise NonSPDMetric(f"metric eigenvalue {lo} <= 0")
        self.lambda_min, self.lambda_max = lo, hi
        return lo, hi

    def christoffel(self, points: np.ndarray) -> np.ndarray:
        """Christoffel symbols of the second kind, Gamma[k, i, j]."""
        pts, squeeze = _as_points(points)
        ginv = self.inverse(pts)
        dg = self.deriv(pts)
        # Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij);
        # explicit loops over 2x2x2 are clearer and cheap
        gamma = np.zeros((len(pts), 2, 2, 2))
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    s = np.zeros(len(pts))
                    for l in range(2):
                        s += ginv[:, k, l] * (
                            dg[:, i, j, l] + dg[:, j, i, l] - dg[:, l, i, j]
                        )
                    gamma[:, k, i, j] = 0.5 * s
        return gamma[0] if squeeze else gamma

    def gaussian_curvature(self, points: np.ndarray) -> np.ndarray:
        """Intrinsic Gaussian curvature via the Brioschi determinant formula."""
        pts, squeeze = _as_points(points)
        K = brioschi_curvature(self(pts), self.deriv(pts), self.second_deriv(pts))
        return K[0] if squeeze else K

    # -- vector helpers -----------------------------------------------------

    def inner(self, points: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        g = self(points)
        if g.ndim == 2:
            return float(v @ g @ w)
        return np.einsum("ni,nij,nj->n", v, g, w)

    def norm(self, points: np.ndarray, v: np.ndarray) -> np.ndarray:
        val = self.inner(points, v, v)
        return np.sqrt(val) if isinstance(val, np.ndarray) else float(np.sqrt(val))

    def unit_normal(self, points: np.ndarray, t_hat: np.ndarray) -> np.ndarray:
        """g-unit normal n with (t_hat, n) positively oriented in the chart.

        n = sqrt(det g) g^{-1} R90 t_hat for a g-unit tangent t_hat.
        """
        g = self(points)
        single = g.ndim == 2
        if single:
            g = g[None]
            t_hat = np.asarray(t_hat, float)[None]
        ginv = np.linalg.inv(g)
        sq = np.sqrt(np.linalg.det(g))
        n = sq[:, None] * np.einsum("nij,jk,nk->ni", ginv, ROT90, t_hat)
        return n[0] if single else n


def brioschi_curvature(g: np.ndarray, dg: np.ndarray, d2g: np.ndarray) -> np.ndarray:
    """Gaussian curvature from metric derivative arrays (Brioschi formula).

    Index layout matches :class:`MetricField`: ``dg[n, a, i, j] = d_a g_ij``
    and ``d2g[n, a, b, i, j] = d_a d_b g_ij``.
    """
    E, F, G = g[:, 0, 0], g[:, 0, 1], g[:, 1, 1]
    Eu, Ev = dg[:, 0, 0, 0], dg[:, 1, 0, 0]
    Fu, Fv = dg[:, 0, 0, 1], dg[:, 1, 0, 1]
    Gu, Gv = dg[:, 0, 1, 1], dg[:, 1, 1, 1]
    Evv = d2g[:, 1, 1, 0, 0]
    Fuv = d2g[:, 0, 1, 0, 1]
    Guu = d2g[:, 0, 0, 1, 1]
    n = len(g)
    M1 = np.empty((n, 3, 3))
    M1[:, 0, 0] = -0.5 * Evv + Fuv - 0.5 * Guu
    M1[:, 0, 1] = 0.5 * Eu
    M1[:, 0, 2] = Fu - 0.5 * Ev
    M1[:, 1, 0] = Fv - 0.5 * Gu
    M1[:, 1, 1] = E
    M1[:, 1, 2] = F
    M1[:, 2, 0] = 0.5 * Gv
    M1[:, 2, 1] = F
    M1[:, 2, 2] = G
    M2 = np.empty((n, 3, 3))
    M2[:, 0, 0] = 0.0
    M2[:, 0, 1] = 0.5 * Ev
    M2[:, 0, 2] = 0.5 * Gu
    M2[:, 1, 0] = 0.5 * Ev
    M2[:, 1, 1] = E
    M2[:, 1, 2] = F
    M2[:, 2, 0] = 0.5 * Gu
    M2[:, 2, 1] = F
    M2[:, 2, 2] = G
    denom = (E * G - F * F) ** 2
    return (np.linalg.det(M1) - np.linalg.det(M2)) / denom


def euclidean_metric(diameter: float = 1.0) -> MetricField:
    def ev(pts):
        return np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy()

    def dv(pts):
        return np.zeros((len(pts), 2, 2, 2))

    def d2v(pts):
        return np.zeros((len(pts), 2, 2, 2, 2))

    return MetricField(ev, dv, d2v, diameter=diameter, name="euclidean")


def _radial_projector(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r2 = np.einsum("ni,ni->n", pts, pts)
    P = pts[:, :, None] * pts[:, None, :] / r2[:, None, None]
    return P, np.sqrt(r2)


def polar_form_metric(
    h_fn: Callable[[np.ndarray], np.ndarray],
    dh_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    *,
    diameter: float = 1.0,
    name: str = "",
) -> MetricField:
    """Metric dr^2 + h(r, phi)^2 dphi^2 over the (r, phi) chart.

    ``h_fn`` maps (n, 2) points (r, phi) to h values; ``dh_fn`` optionally
    returns (n, 2) derivatives (dh/dr, dh/dphi).
    """

    def ev(pts):
        h = h_fn(pts)
        g = np.zeros((len(pts), 2, 2))
        g[:, 0, 0] = 1.0
        g[:, 1, 1] = h * h
        return g

    dv = None
    if dh_fn is not None:

        def dv(pts):  # noqa: F811
            h = h_fn(pts)
            dh = dh_fn(pts)
            dg = np.zeros((len(pts), 2, 2, 2))
            dg[:, 0, 1, 1] = 2 * h * dh[:, 0]
            dg[:, 1, 1, 1] = 2 * h * dh[:, 1]
            return dg

    return MetricField(ev, dv, diameter=diameter, name=name)


def cone_metric_polar(alpha: float, R: float = 1.0) -> MetricField:
    """Cone metric dr^2 + (c r)^2 dphi^2 on the (r, phi) chart, c = 1 - alpha/2pi."""
    c = 1.0 - alpha / (2 * np.pi)

    def h(pts):
        return c * pts[:, 0]

    def dh(pts):
        out = np.zeros((len(pts), 2))
        out[:, 0] = c
        return out

    return polar_form_metric(h, dh, diameter=2 * R, name=f"cone(alpha={alpha})")


def cone_metric_cartesian(alpha: float, R: float = 1.0) -> MetricField:
    """Cone metric pulled back to the planar annulus chart (Cartesian components).

    g = P + c^2 (I - P) with P the radial projector; eigenvalues {1, c^2}.
    """
    c2 = (1.0 - alpha / (2 * np.pi)) ** 2

    def ev(pts):
        P, _ = _radial_projector(pts)
        eye = np.broadcast_to(np.eye(2), P.shape)
        return c2 * eye + (1.0 - c2) * P

    def dv(pts):
        r2 = np.einsum("ni,ni->n", pts, pts)
        x = pts
        dg = np.empty((len(pts), 2, 2, 2))
        for a in range(2):
            for i in range(2):
                for j in range(2):
                    val = (
                        (x[:, j] * (i == a) + x[:, i] * (j == a)) / r2
                        - 2 * x[:, i] * x[:, j] * x[:, a] / r2**2
                    )
                    dg[:, a, i, j] = (1.0 - c2) * val
        return dg

    return MetricField(ev, dv, diameter=2 * R, name=f"cone-cart(alpha={alpha})")


def dipole_metric_polar(eps: float, R: float = 1.0) -> MetricField:
    """Curvature-dipole metric dr^2 + (r + (eps/pi) cos phi)^2 dphi^2."""

    def h(pts):
        return pts[:, 0] + (eps / np.pi) * np.cos(pts[:, 1])

    def dh(pts):
        out = np.empty((len(pts), 2))
        out[:, 0] = 1.0
        out[:, 1] = -(eps / np.pi) * np.sin(pts[:, 1])
        return out

    return polar_form_metric(h, dh, diameter=2 * R, name=f"dipole(eps={eps})")


def dipole_metric_cartesian(eps: float, R: float = 1.0) -> MetricField:
    """Dipole metric over the planar annulus chart.

    With rho = 1 + eps*x/(pi r^2): g = P + rho^2 (I - P).
    """

    def ev(pts):
        P, r = _radial_projector(pts)
        rho = 1.0 + eps * pts[:, 0] / (np.pi * r**2)
        eye = np.broadcast_to(np.eye(2), P.shape)
        return P + rho[:, None, None] ** 2 * (eye - P)

    return MetricField(ev, diameter=2 * R, name=f"dipole-cart(eps={eps})")


def cap_metric_cartesian(theta0: float, radius: float = 1.0) -> MetricField:
    """Spherical-cap metric over the geodesic-polar disc chart of radius theta0.

    g = P + (sin(s)/s)^2 (I - P) with s the chart radius, scaled by sphere
    radius ``radius``.
    """

    def ev(pts):
        s2 = np.einsum("ni,ni->n", pts, pts)
        s = np.sqrt(np.maximum(s2, 1e-300))
        sinc = np.where(s > 1e-8, np.sin(s) / np.where(s > 0, s, 1.0), 1.0 - s2 / 6.0)
        P = np.where(
            (s2 > 1e-16)[:, None, None],
            pts[:, :, None] * pts[:, None, :] / np.where(s2 > 0, s2, 1.0)[:, None, None],
            0.0,
        )
        eye = np.broadcast_to(np.eye(2), (len(pts), 2, 2))
        g = P + sinc[:, None, None] ** 2 * (eye - P)
        return radius**2 * g

    return MetricField(ev, diameter=2 * theta0 * radius, name=f"cap(theta0={theta0})")
