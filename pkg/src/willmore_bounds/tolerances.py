"""Default numeric tolerances.

All tolerances can be scaled globally through the ``WB_TOL_SCALE``
environment variable (CI escape hatch); values below are the calibrated
defaults for the bundled fixture corpus.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields


@dataclass(frozen=True)
class Tolerances:
    curv: float = 1e-6          # curvature identities, analytic charts
    curv_mesh: float = 1e-2     # curvature identities, finest meshed level
    gb: float = 1e-2            # Gauss-Bonnet / enclosed-curvature residuals
    orth: float = 1e-8          # orthonormality of frames and normals
    burg: float = 1e-6          # Burgers cross-checks, analytic loops
    burg_mesh: float = 1e-3     # Burgers cross-checks, mesh-extracted loops
    ineq: float = 1e-3          # slack factor for verified inequalities
    flux: float = 1e-2          # a-posteriori hole-flux residual (coarsest mesh)
    coarea: float = 1e-2        # coarea residual, relative
    geo: float = 1e-9           # angular exclusion zone on the sphere
    jitter: float = 1e-6        # retry perturbation for degenerate sphere queries
    grad_floor: float = 1e-6    # |grad u| floor (relative to range) for regular levels
    det_floor: float = 1e-12    # determinant floor for immersion elements

    def scaled(self, factor: float) -> "Tolerances":
        return Tolerances(**{f.name: getattr(self, f.name) * factor for f in fields(self)})


def default_tolerances() -> Tolerances:
    """Tolerances with the WB_TOL_SCALE environment override applied."""
    base = Tolerances()
    scale = os.environ.get("WB_TOL_SCALE")
    if scale is None:
        return base
    try:
        factor = float(scale)
    except ValueError:
        raise ValueError(f"WB_TOL_SCALE must be a number, got {scale!r}") from None
    if factor <= 0:
        raise ValueError("WB_TOL_SCALE must be positive")
    return base.scaled(factor)
