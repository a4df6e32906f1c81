"""Gauss-Legendre quadrature rules on the unit interval.

Rules are generated by Newton iteration on the Legendre polynomial over
[-1, 1] and mapped affinely to [0, 1].  An n-point rule integrates every
polynomial of degree <= 2n - 1 exactly, which is what makes a small fixed
rule sufficient for the tree-attribution integrands: summed over the leaves
of one tree, the order-s integrand is a polynomial of degree at most d - s,
where d is the largest number of distinct features on any root-to-leaf path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_POINTS = 64
DEFAULT_POINTS = 8

_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class QuadratureRule:
    """An n-point quadrature rule on [0, 1].

    nodes are strictly increasing in (0, 1) and symmetric about 0.5;
    weights are positive, sum to 1, and are equal for mirrored node pairs.
    """

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, samples: np.ndarray) -> float:
        """Weighted sum of integrand samples taken at ``nodes``."""
        return float(np.dot(self.weights, samples))


def _legendre_value_and_derivative(n: int, x: float) -> tuple[float, float]:
    """Evaluate the degree-n Legendre polynomial and its derivative at x."""
    p_prev, p = 1.0, x
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    # x is always an interior point here, so x^2 - 1 never vanishes
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre(n: int) -> QuadratureRule:
    """Build the n-point Gauss-Legendre rule on [0, 1].

    Deterministic; valid for 1 <= n <= MAX_POINTS.  Node symmetry about 0.5
    is exact by construction: the upper half is computed and the lower half
    is mirrored as 1 - t with identical weights.
    """
    if not isinstance(n, int) or isinstance(n, bool):
        raise TypeError(f"point count must be an int, got {type(n).__name__}")
    if not 1 <= n <= MAX_POINTS:
        raise ValueError(f"point count must be in 1..{MAX_POINTS}, got {n}")

    nodes = np.empty(n, dtype=np.float64)
    weights = np.empty(n, dtype=np.float64)

    # Roots of P_n in (0, 1] on the [-1, 1] interval, found from the
    # asymptotic cosine initial guess; k = 1 is the root closest to +1.
    for k in range(1, n // 2 + 1):
        x = math.cos(math.pi * (k - 0.25) / (n + 0.5))
        for _ in range(_NEWTON_MAX_ITER):
            p, dp = _legendre_value_and_derivative(n, x)
            dx = p / dp
            x -= dx
            if abs(dx) <= _NEWTON_TOL:
                break
        p, dp = _legendre_value_and_derivative(n, x)
        w = 2.0 / ((1.0 - x * x) * dp * dp)
        hi = 0.5 * (1.0 + x)
        nodes[n - k] = hi
        nodes[k - 1] = 1.0 - hi
        weights[n - k] = 0.5 * w
        weights[k - 1] = 0.5 * w

    if n % 2 == 1:
        mid = n // 2
        _, dp = _legendre_value_and_derivative(n, 0.0)
        nodes[mid] = 0.5
        weights[mid] = 1.0 / (dp * dp)

    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights)


def min_points(d: int, s: int) -> int:
    """Smallest point count that integrates every order-s integrand exactly.

    The summed order-s integrand has polynomial degree at most d - s, so
    ceil((d - s + 1) / 2) points suffice.  The bound decreases with s:
    higher interaction orders need fewer points, not more.
    """
    if d < 1:
        raise ValueError(f"max unique-feature depth must be >= 1, got {d}")
    if s < 1:
        raise ValueError(f"interaction order must be >= 1, got {s}")
    if s > d:
        raise ValueError(
            f"interaction order {s} exceeds unique-feature depth {d}: "
            "no path carries that many distinct features, so every order-"
            f"{s} interaction is identically zero"
        )
    return (d - s + 2) // 2
