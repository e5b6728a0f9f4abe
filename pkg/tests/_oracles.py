"""Independent oracles kept out of the package: brute-force component
labeling with the sphere topology, and simple quadrature/fd helpers."""

import math

import numpy as np


def brute_force_components(mask: np.ndarray) -> int:
    """Count components of a native-grid boolean mask by explicit union-find
    over every neighbor pair: 4-adjacency, phi wraparound, and pole rows
    collapsed to single points."""
    n_phi, n_nat = mask.shape
    idx = {(i, j): k for k, (i, j) in enumerate(zip(*np.nonzero(mask)))}
    parent = list(range(len(idx)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    cells = list(idx)
    for (i, j) in cells:
        for (i2, j2) in (((i + 1) % n_phi, j), ((i - 1) % n_phi, j),
                         (i, j + 1), (i, j - 1)):
            if 0 <= j2 < n_nat and (i2, j2) in idx:
                union(idx[(i, j)], idx[(i2, j2)])
    for row in (0, n_nat - 1):
        row_cells = [idx[(i, row)] for i in range(n_phi) if (i, row) in idx]
        for other in row_cells[1:]:
            union(row_cells[0], other)
    return len({find(k) for k in range(len(idx))})


def harmonic_self_integral(degree: int, order: int) -> float:
    """Closed form of int (sin^m P_d^(m)(cos))^2 {cos,sin}^2(m phi) dOmega
    for the unnormalized real harmonics used in the tests."""
    phi_factor = 2.0 * math.pi if order == 0 else math.pi
    radial = (2.0 / (2 * degree + 1)) * (
        math.factorial(degree + order) / math.factorial(degree - order)
    )
    return phi_factor * radial


def central_difference(fn, x, h=1e-5):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)
