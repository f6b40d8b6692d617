"""Framed loops: trihedra, quaternion lifts, parallel transport, Burgers vectors.

A framed loop is a closed space curve gamma with a unit normal field N
perpendicular to gamma'.  The induced moving trihedron (t, n, N) in SO(3)
decides extendability (whether the loop bounds an immersed disc with N as
Darboux normal) through the periodicity of its quaternion lift, and the
transport equation X' = -<X, N'> N defines the Burgers vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .curves import CurveInChart, geodesic_curvature
from .errors import NotTangent, SamplingTooCoarse
from .metric import MetricField
from .tolerances import Tolerances, default_tolerances

TWO_PI = 2 * np.pi


def _periodic_spline(phi: np.ndarray, values: np.ndarray) -> CubicSpline:
    x = np.concatenate([phi, [phi[0] + TWO_PI]])
    y = np.vstack([values, values[:1]])
    return CubicSpline(x, y, bc_type="periodic")


def _hermite_spline(phi, values, derivs) -> CubicHermiteSpline:
    x = np.concatenate([phi, [phi[0] + TWO_PI]])
    y = np.vstack([values, values[:1]])
    d = np.vstack([derivs, derivs[:1]])
    return CubicHermiteSpline(x, y, d)


class FramedLoop:
    """Closed sampled pair (gamma, N) with gamma' perpendicular to N.

    Optional derivative samples (``d_gamma``, ``d_normal``) or full closures
    (``gamma_fn`` etc., phi-vectorized) sharpen every derived quantity to the
    accuracy of the quadrature rule; otherwise periodic cubic splines are used.
    """

    def __init__(
        self,
        phi: np.ndarray,
        gamma: np.ndarray,
        normal: np.ndarray,
        *,
        d_gamma: Optional[np.ndarray] = None,
        d_normal: Optional[np.ndarray] = None,
        gamma_fn: Optional[Callable] = None,
        d_gamma_fn: Optional[Callable] = None,
        normal_fn: Optional[Callable] = None,
        d_normal_fn: Optional[Callable] = None,
        orthogonalize: bool = False,
        tol: Optional[Tolerances] = None,
    ):
        self.phi = np.asarray(phi, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float)
        self.normal = np.asarray(normal, dtype=float)
        self.tol = tol or default_tolerances()
        if self.phi.ndim != 1 or len(self.phi) < 8:
            raise ValueError("need at least 8 samples")
        if self.gamma.shape != (len(self.phi), 3) or self.normal.shape != self.gamma.shape:
            raise ValueError("gamma and normal must have shape (k, 3)")
        self.normal = self.normal / np.linalg.norm(self.normal, axis=1, keepdims=True)
        self._fns = {
            "gamma": gamma_fn,
            "d_gamma": d_gamma_fn,
            "normal": normal_fn,
            "d_normal": d_normal_fn,
        }
        self._d_gamma_samples = None if d_gamma is None else np.asarray(d_gamma, float)
        self._d_normal_samples = None if d_normal is None else np.asarray(d_normal, float)
        self._cache: dict = {}
        if orthogonalize:
            t = self.tangent()
            self.normal = self.normal - np.einsum("ni,ni->n", self.normal, t)[:, None] * t
            self.normal /= np.linalg.norm(self.normal, axis=1, keepdims=True)
            self._cache.clear()

    # -- sampling helpers ----------------------------------------------------

    @property
    def n_samples(self) -> int:
        return len(self.phi)

    def d_gamma(self, phi: Optional[np.ndarray] = None) -> np.ndarray:
        """gamma'(phi); at the stored samples when phi is None."""
        if phi is None and self._d_gamma_samples is not None:
            return self._d_gamma_samples
        if self._fns["d_gamma"] is not None:
            return np.asarray(self._fns["d_gamma"](self.phi if phi is None else phi))
        spl = self._spline("gamma_spl", self.gamma, self._d_gamma_samples)
        return spl(self.phi if phi is None else phi, 1)

    def normal_at(self, phi: np.ndarray) -> np.ndarray:
        if self._fns["normal"] is not None:
            n = np.asarray(self._fns["normal"](phi))
        else:
            n = self._spline("normal_spl", self.normal, self._d_normal_samples)(phi)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def d_normal(self, phi: Optional[np.ndarray] = None) -> np.ndarray:
        if phi is None and self._d_normal_samples is not None:
            return self._d_normal_samples
        if self._fns["d_normal"] is not None:
            return np.asarray(self._fns["d_normal"](self.phi if phi is None else phi))
        spl = self._spline("normal_spl", self.normal, self._d_normal_samples)
        return spl(self.phi if phi is None else phi, 1)

    def _spline(self, key, values, derivs):
        if key not in self._cache:
            if derivs is not None:
                self._cache[key] = _hermite_spline(self.phi, values, derivs)
            else:
                self._cache[key] = _periodic_spline(self.phi, values)
        return self._cache[key]

    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.d_gamma(), axis=1)

    def length(self) -> float:
        return float(np.mean(self.speed()) * TWO_PI)

    def tangent(self) -> np.ndarray:
        d = self.d_gamma()
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def in_surface_normal(self) -> np.ndarray:
        return np.cross(self.normal, self.tangent())

    def resample(self, n: int) -> "FramedLoop":
        phi = TWO_PI * np.arange(n) / n + self.phi[0]
        if self._fns["gamma"] is not None:
            gamma = np.asarray(self._fns["gamma"](phi))
        else:
            gamma = self._spline("gamma_spl", self.gamma, self._d_gamma_samples)(phi)
        normal = self.normal_at(phi)
        return FramedLoop(
            phi,
            gamma,
            normal,
            gamma_fn=self._fns["gamma"],
            d_gamma_fn=self._fns["d_gamma"],
            normal_fn=self._fns["normal"],
            d_normal_fn=self._fns["d_normal"],
            tol=self.tol,
        )

    def validate(self) -> None:
        t = self.tangent()
        err = np.abs(np.einsum("ni,ni->n", t, self.normal)).max()
        if err > 1e3 * self.tol.orth:
            raise ValueError(f"normal not orthogonal to gamma': max |<t, N>| = {err:.2e}")

    # -- trihedron and lift ----------------------------------------------------

    def trihedron(self) -> "TrihedronPath":
        if "trihedron" not in self._cache:
            t = self.tangent()
            N = self.normal
            n = np.cross(N, t)
            n /= np.linalg.norm(n, axis=1, keepdims=True)
            R = np.stack([t, n, N], axis=2)  # columns (t, n, N)
            self._cache["trihedron"] = TrihedronPath(self.phi, R)
        return self._cache["trihedron"]


@dataclass
class TrihedronPath:
    """Sampled SO(3) path with a branch-continuous quaternion lift."""

    phi: np.ndarray
    rotations: np.ndarray  # (k, 3, 3)

    def __post_init__(self):
        self.quaternions, self.closure_dot = _lift(self.rotations)

    def is_antiperiodic(self) -> bool:
        return self.closure_dot < 0.0


def _quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) per rotation matrix (vectorized)."""
    m = R
    k = len(m)
    q = np.empty((k, 4))
    tr = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]
    # branch per element; loop is fine for the sizes involved
    for i in range(k):
        t = tr[i]
        M = m[i]
        if t > 0:
            s = np.sqrt(t + 1.0) * 2
            q[i] = [0.25 * s, (M[2, 1] - M[1, 2]) / s, (M[0, 2] - M[2, 0]) / s, (M[1, 0] - M[0, 1]) / s]
        elif M[0, 0] >= M[1, 1] and M[0, 0] >= M[2, 2]:
            s = np.sqrt(1.0 + M[0, 0] - M[1, 1] - M[2, 2]) * 2
            q[i] = [(M[2, 1] - M[1, 2]) / s, 0.25 * s, (M[0, 1] + M[1, 0]) / s, (M[0, 2] + M[2, 0]) / s]
        elif M[1, 1] >= M[2, 2]:
            s = np.sqrt(1.0 + M[1, 1] - M[0, 0] - M[2, 2]) * 2
            q[i] = [(M[0, 2] - M[2, 0]) / s, (M[0, 1] + M[1, 0]) / s, 0.25 * s, (M[1, 2] + M[2, 1]) / s]
        else:
            s = np.sqrt(1.0 + M[2, 2] - M[0, 0] - M[1, 1]) * 2
            q[i] = [(M[1, 0] - M[0, 1]) / s, (M[0, 2] + M[2, 0]) / s, (M[1, 2] + M[2, 1]) / s, 0.25 * s]
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _lift(R: np.ndarray) -> tuple[np.ndarray, float]:
    """Branch-continuous quaternion lift; returns (lift, closure dot product).

    The closure dot is <q_continued(2 pi), q(0)>: -1 for an anti-periodic lift
    (non-trivial class), +1 for a periodic one.
    """
    q = _quat_from_matrix(R)
    k = len(q)
    for i in range(1, k):
        d = float(q[i] @ q[i - 1])
        if abs(d) < np.sqrt(0.5):
            raise SamplingTooCoarse(
                f"consecutive trihedron rotation >= pi/2 between samples {i - 1}, {i}"
            )
        if d < 0:
            q[i] = -q[i]
    d_close = float(q[-1] @ q[0])
    if abs(d_close) < np.sqrt(0.5):
        raise SamplingTooCoarse("closure rotation >= pi/2; refine sampling")
    return q, d_close


# -- spec operations ---------------------------------------------------------


def build_trihedron(loop: FramedLoop) -> TrihedronPath:
    return loop.trihedron()


def recommended_samples(loop: FramedLoop) -> int:
    turning = abs(total_geodesic_curvature(loop)) + normal_turning(loop)
    return max(256, 32 * int(np.ceil(turning / np.pi)))


def is_extendable(loop: FramedLoop) -> bool:
    """True iff the trihedron lift is anti-periodic (generator of pi_1(SO(3)))."""
    n = recommended_samples(loop)
    work = loop.resample(n) if loop.n_samples < n else loop
    return work.trihedron().is_antiperiodic()


def total_geodesic_curvature(loop: FramedLoop) -> float:
    """Integral of <t'(phi), n(phi)> d phi (cyclic trapezoid, spectrally accurate)."""
    t = loop.tangent()
    n = loop.in_surface_normal()
    tp = _periodic_spline(loop.phi, t)(loop.phi, 1)
    vals = np.einsum("ni,ni->n", tp, n)
    return float(np.mean(vals) * TWO_PI)


def normal_turning(loop: FramedLoop) -> float:
    """Length of N(S^1) on the sphere: integral of |D_s N| d ell = |N'(phi)| d phi.

    Uses exact normal derivatives when available; falls back to summed
    geodesic increments of the sampled normal path.
    """
    if loop._d_normal_samples is not None or loop._fns["d_normal"] is not None:
        vals = np.linalg.norm(loop.d_normal(), axis=1)
        return float(np.mean(vals) * TWO_PI)
    N = loop.normal
    dots = np.clip(np.einsum("ni,ni->n", N, np.roll(N, -1, axis=0)), -1.0, 1.0)
    return float(np.sum(np.arccos(dots)))


@dataclass
class IsoCheckResult:
    lhs: float
    rhs: float
    holds: bool
    case: str
    total_kg: float
    turning: float

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "holds": self.holds,
            "case": self.case,
            "total_geodesic_curvature": self.total_kg,
            "normal_turning": self.turning,
        }


def check_iso_inequality(loop: FramedLoop, *, extendable: Optional[bool] = None) -> IsoCheckResult:
    """Isoperimetric framed-loop inequality.

    Extendable case:      turning^2 >= (4 pi - |2 pi - k|) |2 pi - k|
    Non-extendable case:  turning^2 >= (4 pi - |k|) |k|,   k = total geodesic curvature.
    """
    tol = loop.tol
    if extendable is None:
        extendable = is_extendable(loop)
    k = total_geodesic_curvature(loop)
    turning = normal_turning(loop)
    deficit = abs(TWO_PI - k) if extendable else abs(k)
    lhs = turning**2
    rhs = (4 * np.pi - deficit) * deficit
    holds = lhs >= rhs * (1 - tol.ineq) - tol.ineq
    return IsoCheckResult(
        lhs=lhs,
        rhs=rhs,
        holds=bool(holds),
        case="extendable" if extendable else "non-extendable",
        total_kg=k,
        turning=turning,
    )


def _transport_generator(loop: FramedLoop):
    """A(phi) = N' N^T - N N'^T: antisymmetric generator of the transport.

    For X perpendicular to N, A X = -<X, N'> N, the transport equation; the
    full propagator stays in SO(3) so its transpose inverts it.
    """

    def A(phi_val: float) -> np.ndarray:
        p = np.atleast_1d(phi_val)
        N = loop.normal_at(p)[0]
        dN = np.asarray(loop.d_normal(p))[0]
        return np.outer(dN, N) - np.outer(N, dN)

    return A


def transport_propagator(loop: FramedLoop, base_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """RK4 propagators R(phi_k) with R(base) = I, and W_k = int R^T gamma' d phi.

    Integrates around the loop once, starting at ``base_index``; returns
    (R values (k+1, 3, 3), W values (k+1, 3)) over the wrapped grid.
    """
    k = loop.n_samples
    phis = np.concatenate([loop.phi[base_index:], loop.phi[:base_index] + TWO_PI])
    phis = np.concatenate([phis, [loop.phi[base_index] + TWO_PI]])
    A = _transport_generator(loop)

    def dgamma(phi_val):
        p = np.atleast_1d(np.mod(phi_val, TWO_PI))
        if loop._fns["d_gamma"] is not None:
            return np.asarray(loop._fns["d_gamma"](p))[0]
        return loop._spline("gamma_spl", loop.gamma, loop._d_gamma_samples)(p, 1)[0]

    R = np.empty((k + 1, 3, 3))
    W = np.empty((k + 1, 3))
    R[0] = np.eye(3)
    W[0] = 0.0
    for i in range(k):
        h = phis[i + 1] - phis[i]
        Ri, Wi = R[i], W[i]
        p0, p1, pm = phis[i], phis[i + 1], phis[i] + 0.5 * h
        A0, Am, A1 = A(p0), A(pm), A(p1)
        g0, gm, g1 = dgamma(p0), dgamma(pm), dgamma(p1)
        k1R = A0 @ Ri
        k1W = Ri.T @ g0
        R2 = Ri + 0.5 * h * k1R
        k2R = Am @ R2
        k2W = R2.T @ gm
        R3 = Ri + 0.5 * h * k2R
        k3R = Am @ R3
        k3W = R3.T @ gm
        R4 = Ri + h * k3R
        k4R = A1 @ R4
        k4W = R4.T @ g1
        R[i + 1] = Ri + (h / 6) * (k1R + 2 * k2R + 2 * k3R + k4R)
        W[i + 1] = Wi + (h / 6) * (k1W + 2 * k2W + 2 * k3W + k4W)
    return R, W


def parallel_transport(loop: FramedLoop, phi_from: float, phi_to: float, v: np.ndarray) -> np.ndarray:
    """Transport v from phi_from to phi_to along the negatively-oriented path.

    The path runs against the parametrization direction (wrapping through the
    base of the parameter interval when needed).
    """
    v = np.asarray(v, dtype=float)
    N_from = loop.normal_at(np.atleast_1d(phi_from))[0]
    if abs(v @ N_from) > loop.tol.orth * max(np.linalg.norm(v), 1e-300) * 1e3:
        raise NotTangent("vector must be perpendicular to N at phi_from")
    a, b = phi_to, phi_from
    if b < a:
        b += TWO_PI
    # forward propagator on [a, b], then invert (orthogonal transpose)
    n_steps = max(64, int(np.ceil((b - a) / TWO_PI * max(loop.n_samples, 64))))
    A = _transport_generator(loop)
    R = np.eye(3)
    h = (b - a) / n_steps
    for i in range(n_steps):
        p0 = a + i * h
        A0, Am, A1 = A(p0), A(p0 + 0.5 * h), A(p0 + h)
        k1 = A0 @ R
        k2 = Am @ (R + 0.5 * h * k1)
        k3 = Am @ (R + 0.5 * h * k2)
        k4 = A1 @ (R + h * k3)
        R = R + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return R.T @ v


@dataclass
class BurgersResult:
    """Burgers vector in the frame at the base sample."""

    vector: np.ndarray            # ambient components (R^3, or chart R^2 for intrinsic)
    frame_components: np.ndarray  # components in (t, n[, N]) at the base
    magnitude: float
    base_index: int
    loop_length: float
    magnitude_dual: Optional[float] = None
    dual_gap: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "vector": [float(x) for x in self.vector],
            "frame_components": [float(x) for x in self.frame_components],
            "magnitude": self.magnitude,
            "base_index": self.base_index,
            "length": self.loop_length,
            "magnitude_dual": self.magnitude_dual,
        }


def burgers_vector(loop: FramedLoop, base_index: int = 0) -> BurgersResult:
    """Burgers vector of a framed loop relative to a base sample.

    Primal route: B = int Pi_{phi, phi0} gamma'(phi) d phi via the transport
    propagator; the equivalent distributional formula
    B = int <L(phi), N'(phi)> N(phi) d phi is evaluated as a cross-check.
    """
    n_min = max(256, loop.n_samples)
    work = loop.resample(n_min) if loop.n_samples < n_min else loop
    base = int(np.argmin(np.abs(np.mod(work.phi - loop.phi[base_index], TWO_PI))))
    R, W = transport_propagator(work, base)
    B = W[-1]
    # dual formula: L(phi) = R(phi) (W_end - W(phi)); integrand <L, N'> N
    order = np.concatenate([np.arange(base, work.n_samples), np.arange(base)])
    phis = np.concatenate([work.phi[order], [work.phi[base] + TWO_PI]])
    Ngrid = np.vstack([work.normal[order], work.normal[base][None]])
    dN = work.d_normal()
    dNgrid = np.vstack([dN[order], dN[base][None]])
    L = np.einsum("kij,kj->ki", R, (W[-1] - W))
    integrand = np.einsum("ki,ki->k", L, dNgrid)[:, None] * Ngrid
    B_dual = simpson(integrand, x=phis, axis=0)
    t = work.tangent()[base]
    N = work.normal[base]
    n = np.cross(N, t)
    frame = np.array([B @ t, B @ n, B @ N])
    mag, mag_dual = float(np.linalg.norm(B)), float(np.linalg.norm(B_dual))
    return BurgersResult(
        vector=B,
        frame_components=frame,
        magnitude=mag,
        base_index=base_index,
        loop_length=work.length(),
        magnitude_dual=mag_dual,
        dual_gap=float(np.linalg.norm(B - B_dual)),
    )


def burgers_intrinsic(
    metric: MetricField, curve: CurveInChart, base_index: int = 0
) -> BurgersResult:
    """Burgers vector from intrinsic data alone.

    Transport back to the base rotates by minus the accumulated geodesic
    curvature; the chart velocity has Darboux components (speed, 0), so
    B = int speed(t) (cos theta(t), -sin theta(t)) dt in the base frame.
    """
    k = len(curve.points)
    gk = geodesic_curvature(metric, curve)
    order = np.concatenate([np.arange(base_index, k), np.arange(base_index)])
    tau = np.arange(k + 1, dtype=float)
    rate = (gk["kappa"] * gk["speed"])[order]
    rate_spl = CubicSpline(tau, np.concatenate([rate, rate[:1]]), bc_type="periodic")
    theta = rate_spl.antiderivative()(tau)
    speed = np.concatenate([gk["speed"][order], gk["speed"][order][:1]])
    comp_t = simpson(speed * np.cos(theta), x=tau)
    comp_n = -simpson(speed * np.sin(theta), x=tau)
    frame = np.array([comp_t, comp_n])
    # chart components of the base Darboux frame
    pts0 = curve.points[base_index]
    vel, _ = curve.derivatives()
    v0 = vel[base_index]
    t0 = v0 / metric.norm(pts0, v0)
    n0 = metric.unit_normal(pts0, t0)
    vec = comp_t * t0 + comp_n * n0
    return BurgersResult(
        vector=vec,
        frame_components=frame,
        magnitude=float(np.hypot(comp_t, comp_n)),
        base_index=base_index,
        loop_length=gk["length"],
    )


@dataclass
class BurgersBoundResult:
    lhs: float
    rhs: float
    holds: bool
    burgers: BurgersResult

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "holds": self.holds,
            "burgers": self.burgers.to_dict(),
        }


def check_burgers_bound(loop: FramedLoop) -> BurgersBoundResult:
    """Turning bound: int |D_s N| d ell >= |B| / Length(gamma)."""
    b = burgers_vector(loop)
    lhs = normal_turning(loop)
    rhs = b.magnitude / b.loop_length
    holds = lhs >= rhs * (1 - loop.tol.ineq) - loop.tol.ineq
    return BurgersBoundResult(lhs=lhs, rhs=rhs, holds=bool(holds), burgers=b)
