"""Floating-potential Poisson solver on finitely-connected metric charts.

Solves  -Delta_g u = K  with u = 0 on the outer boundary, u constant on each
hole boundary (floating conductor) and prescribed total flux K_i through each
hole.  Piecewise-linear Galerkin with the hole constraint imposed by unknown
tying keeps the system symmetric positive definite; the weak form makes the
flux condition automatic and it is re-verified a posteriori by boundary
integration.  The Dirichlet energy of the solution is the squared
multiply-connected H^{-1} norm of the curvature data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InadmissibleTrial, NonSPDMetric, SingularSystem
from .meshing import FCDomainMesh
from .metric import MetricField
from .tolerances import Tolerances, default_tolerances

SourceSpec = Union[None, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass
class PoissonProblem:
    mesh: FCDomainMesh
    metric: MetricField
    source: SourceSpec = None          # per-element K, callable, or None (zero)
    hole_charges: Optional[Sequence[float]] = None
    tol: Tolerances = field(default_factory=default_tolerances)

    def charges(self) -> np.ndarray:
        if self.hole_charges is not None:
            return np.asarray(self.hole_charges, dtype=float)
        return self.mesh.charges()

    def source_elements(self) -> np.ndarray:
        m = len(self.mesh.triangles)
        if self.source is None:
            return np.zeros(m)
        if callable(self.source):
            return np.asarray(self.source(self.mesh.barycenters()), dtype=float)
        arr = np.asarray(self.source, dtype=float)
        if arr.shape != (m,):
            raise ValueError(f"per-element source must have shape ({m},)")
        return arr


@dataclass
class PotentialSolution:
    problem: PoissonProblem
    u: np.ndarray                  # nodal values on all vertices
    hole_values: np.ndarray        # c_i = u|_{Gamma_i}
    dirichlet_energy: float        # ||u||^2 in the homogeneous H^1 norm
    hole_flux: np.ndarray          # a-posteriori conormal flux per hole
    iterations: int

    @property
    def dual_norm(self) -> float:
        return float(np.sqrt(max(self.dirichlet_energy, 0.0)))

    def summary(self) -> dict:
        return {
            "dual_norm": self.dual_norm,
            "dirichlet_energy": self.dirichlet_energy,
            "c": [float(c) for c in self.hole_values],
            "flux": [float(f) for f in self.hole_flux],
            "iterations": self.iterations,
        }


class _Assembly:
    """Stiffness/load assembly and the tied DOF map for a problem."""

    def __init__(self, problem: PoissonProblem):
        mesh, metric = problem.mesh, problem.metric
        self.mesh = mesh
        tris = mesh.triangles
        verts = mesh.vertices
        bary = mesh.barycenters()
        areas = mesh.chart_areas()
        g = metric(bary)
        det = np.linalg.det(g)
        if np.any(det <= 0):
            raise NonSPDMetric("metric not SPD at some barycenter")
        self.sqrt_det = np.sqrt(det)
        coeff = np.linalg.inv(g) * self.sqrt_det[:, None, None]  # sqrt(det g) g^{-1}
        p = verts[tris]
        grads = np.empty((len(tris), 3, 2))
        for k, (i, j) in enumerate(((1, 2), (2, 0), (0, 1))):
            e = p[:, j] - p[:, i]
            grads[:, k, 0] = -e[:, 1]
            grads[:, k, 1] = e[:, 0]
        grads /= (2 * areas)[:, None, None]
        ke = np.einsum("nia,nab,njb,n->nij", grads, coeff, grads, areas)
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        n = mesh.n_vertices
        self.A_full = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        self.grads = grads
        self.areas = areas

        # DOF map: outer boundary eliminated, each hole tied to one master DOF
        idx = -np.ones(n, dtype=np.int64)
        outer = set(int(v) for v in mesh.boundary_loops[0])
        hole_sets = [set(int(v) for v in loop) for loop in mesh.boundary_loops[1:]]
        self.n_holes = len(hole_sets)
        free = [v for v in range(n) if v not in outer and not any(v in h for h in hole_sets)]
        for d, v in enumerate(free):
            idx[v] = d
        self.master = np.arange(len(free), len(free) + self.n_holes)
        for i, hs in enumerate(hole_sets):
            for v in hs:
                idx[v] = self.master[i]
        self.idx = idx
        self.n_dofs = len(free) + self.n_holes
        keep = idx >= 0
        C = sp.coo_matrix(
            (np.ones(keep.sum()), (np.where(keep)[0], idx[keep])),
            shape=(n, self.n_dofs),
        ).tocsr()
        self.C = C
        self.A_red = (C.T @ self.A_full @ C).tocsr()

    def load(self, k_elements: np.ndarray, charges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mesh = self.mesh
        b_full = np.zeros(mesh.n_vertices)
        w = k_elements * self.sqrt_det * self.areas / 3.0
        for k in range(3):
            np.add.at(b_full, mesh.triangles[:, k], w)
        b_red = self.C.T @ b_full
        for i, q in enumerate(charges):
            b_red[self.master[i]] += q
        return b_full, b_red

    def reduce(self, phi_full: np.ndarray) -> np.ndarray:
        """Nodal vector -> DOF vector; raises if constraints are violated."""
        mesh = self.mesh
        outer = mesh.boundary_loops[0]
        if np.any(phi_full[outer] != 0.0):
            raise InadmissibleTrial("trial must vanish on the outer boundary")
        for loop in mesh.boundary_loops[1:]:
            vals = phi_full[loop]
            if np.ptp(vals) > 1e-12 * (1 + np.abs(vals).max()):
                raise InadmissibleTrial("trial must be constant on each hole boundary")
        phi_red = np.zeros(self.n_dofs)
        keep = self.idx >= 0
        phi_red[self.idx[keep]] = phi_full[keep]
        return phi_red

    def energy_norm(self, phi_red: np.ndarray) -> float:
        return float(np.sqrt(max(phi_red @ (self.A_red @ phi_red), 0.0)))


def _edge_to_triangle(mesh: FCDomainMesh) -> dict:
    out: dict = {}
    for t, tv in enumerate(mesh.triangles):
        for a, b in ((tv[0], tv[1]), (tv[1], tv[2]), (tv[2], tv[0])):
            out.setdefault((min(a, b), max(a, b)), []).append(t)
    return out


def element_gradients(mesh: FCDomainMesh, u: np.ndarray) -> np.ndarray:
    """Piecewise-constant chart gradient of a nodal field."""
    tris = mesh.triangles
    p = mesh.vertices[tris]
    areas = mesh.chart_areas()
    grad = np.zeros((len(tris), 2))
    for k, (i, j) in enumerate(((1, 2), (2, 0), (0, 1))):
        e = p[:, j] - p[:, i]
        grad[:, 0] += u[tris[:, k]] * (-e[:, 1])
        grad[:, 1] += u[tris[:, k]] * e[:, 0]
    return grad / (2 * areas)[:, None]


def boundary_flux(problem: PoissonProblem, u: np.ndarray) -> np.ndarray:
    """Outward conormal flux through each hole loop by boundary integration."""
    mesh, metric = problem.mesh, problem.metric
    grad = element_gradients(mesh, u)
    bary = mesh.barycenters()
    g = metric(bary)
    coeff = np.linalg.inv(g) * np.sqrt(np.linalg.det(g))[:, None, None]
    sigma = np.einsum("nab,nb->na", coeff, grad)
    e2t = _edge_to_triangle(mesh)
    fluxes = np.zeros(mesh.n_holes)
    for i, loop in enumerate(mesh.boundary_loops[1:]):
        total = 0.0
        for a, b in zip(loop, np.roll(loop, -1)):
            ts = e2t[(min(a, b), max(a, b))]
            t = ts[0]
            tvec = mesh.vertices[b] - mesh.vertices[a]
            n_out = np.array([tvec[1], -tvec[0]])  # right of travel: away from domain
            total += sigma[t] @ n_out
        fluxes[i] = total
    return fluxes


def solve_floating_potential(problem: PoissonProblem) -> PotentialSolution:
    """Piecewise-linear Galerkin solution of the floating-potential problem."""
    asm = _Assembly(problem)
    k_elements = problem.source_elements()
    charges = problem.charges()
    _, b_red = asm.load(k_elements, charges)
    if asm.n_dofs == 0:
        raise SingularSystem("no free degrees of freedom")
    if not np.any(b_red):
        u_red = np.zeros(asm.n_dofs)
        iters = 0
    else:
        diag = asm.A_red.diagonal()
        if np.any(diag <= 0):
            raise SingularSystem("non-positive stiffness diagonal")
        M = sp.diags(1.0 / diag)
        maxiter = int(50 * np.sqrt(asm.n_dofs)) + 50
        count = {"n": 0}

        def cb(_):
            count["n"] += 1

        u_red, info = spla.cg(asm.A_red, b_red, rtol=1e-10, atol=0.0, maxiter=maxiter, M=M, callback=cb)
        if info > 0:
            raise SingularSystem(f"CG did not converge within {maxiter} iterations")
        if info < 0:
            raise SingularSystem("CG failed (singular or non-SPD system)")
        iters = count["n"]
    u_full = asm.C @ u_red
    energy = float(u_red @ (asm.A_red @ u_red))
    c = np.array([u_full[loop[0]] for loop in problem.mesh.boundary_loops[1:]])
    flux = boundary_flux(problem, u_full)
    sol = PotentialSolution(
        problem=problem,
        u=u_full,
        hole_values=c,
        dirichlet_energy=energy,
        hole_flux=flux,
        iterations=iters,
    )
    sol._assembly = asm  # cached for trial evaluations
    return sol


def h1mc_dual_norm(arg: Union[PoissonProblem, PotentialSolution]) -> float:
    """H^{-1}_MC norm of the curvature data = homogeneous H^1 norm of u."""
    sol = solve_floating_potential(arg) if isinstance(arg, PoissonProblem) else arg
    return sol.dual_norm


def l1mc_norm(problem: PoissonProblem) -> float:
    """Total absolute curvature: int |K| dVol + sum |K_i|."""
    k = problem.source_elements()
    vol = problem.metric.sqrt_det(problem.mesh.barycenters()) * problem.mesh.chart_areas()
    return float(np.sum(np.abs(k) * vol) + np.sum(np.abs(problem.charges())))


def lp_norm(problem: PoissonProblem, p: float) -> float:
    k = problem.source_elements()
    vol = problem.metric.sqrt_det(problem.mesh.barycenters()) * problem.mesh.chart_areas()
    return float(np.sum(np.abs(k) ** p * vol) ** (1.0 / p))


def dual_sup_property_check(
    sol: PotentialSolution, trials: Sequence[np.ndarray]
) -> dict:
    """Check the dual-norm supremum property on trial functions.

    Each admissible trial satisfies E(phi) <= ||K|| * ||phi||_H1 (within
    tolerance), with equality attained by the solution itself.
    """
    problem = sol.problem
    asm = getattr(sol, "_assembly", None) or _Assembly(problem)
    _, b_red = asm.load(problem.source_elements(), problem.charges())
    dual = sol.dual_norm
    tol = problem.tol
    rows = []
    for phi in trials:
        phi_red = asm.reduce(np.asarray(phi, dtype=float))
        nrm = asm.energy_norm(phi_red)
        if nrm == 0.0:
            raise InadmissibleTrial("trial has zero energy norm")
        pairing = float(b_red @ phi_red)
        ratio = pairing / nrm
        rows.append(
            {
                "pairing": pairing,
                "h1_norm": nrm,
                "ratio": ratio,
                "bounded": bool(pairing <= dual * nrm * (1 + tol.ineq) + tol.ineq),
            }
        )
    phi_u = asm.reduce(sol.u)
    nrm_u = asm.energy_norm(phi_u)
    eq_ratio = float(b_red @ phi_u) / nrm_u if nrm_u > 0 else 0.0
    return {
        "trials": rows,
        "dual_norm": dual,
        "maximizer_ratio": eq_ratio,
        "maximizer_attains": bool(abs(eq_ratio - dual) <= tol.ineq * max(dual, 1e-12) + 1e-12),
        "all_bounded": all(r["bounded"] for r in rows),
    }


def linfty_report(sol: PotentialSolution, p: float = 1.5) -> dict:
    """Max-norm of u against the L^p + charges proxy (qualitative bound)."""
    problem = sol.problem
    u_inf = float(np.abs(sol.u).max())
    proxy = lp_norm(problem, p) + float(np.sum(np.abs(problem.charges())))
    return {
        "u_inf": u_inf,
        "bound_proxy": proxy,
        "ratio": u_inf / proxy if proxy > 0 else 0.0,
        "p": p,
    }
