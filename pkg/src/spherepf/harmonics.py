"""Real spherical harmonics on the doubled grid, for solver verification.

The doubled-domain continuation of sin^m(theta) P_l^m(cos theta) e^{i m phi}
uses the plain signed sin(theta) power, which is exactly glide-symmetric, so
these fields are valid BMC data with known Laplace-Beltrami eigenvalues
l(l+1).
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import Legendre

from .dfs import Grid, SphereField

__all__ = ["real_harmonic", "harmonic_basis", "eigenvalue"]


def eigenvalue(degree: int) -> float:
    return float(degree * (degree + 1))


def real_harmonic(grid: Grid, degree: int, order: int, kind: str = "cos") -> SphereField:
    """Unnormalized real harmonic sin^m P_l^(m)(cos) * {cos,sin}(m phi)."""
    if not 0 <= order <= degree:
        raise ValueError("need 0 <= order <= degree")
    if kind not in ("cos", "sin"):
        raise ValueError("kind must be 'cos' or 'sin'")
    if order == 0 and kind == "sin":
        raise ValueError("order 0 has no sine component")
    P, T = grid.meshgrid()
    poly = Legendre.basis(degree).deriv(order)
    radial = np.sin(T) ** order * poly(np.cos(T))
    azim = np.cos(order * P) if kind == "cos" else np.sin(order * P)
    return SphereField(grid, radial * azim)


def harmonic_basis(grid: Grid, max_degree: int):
    """All real harmonics with 1 <= degree <= max_degree, with eigenvalues."""
    out = []
    for d in range(1, max_degree + 1):
        for m in range(0, d + 1):
            kinds = ("cos",) if m == 0 else ("cos", "sin")
            for kind in kinds:
                out.append((d, m, kind, real_harmonic(grid, d, m, kind)))
    return out
