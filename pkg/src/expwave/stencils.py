"""Finite-difference weight sets for the staggered 8th-order discretization.

Coefficients only; applying rows along grid axes lives in :mod:`expwave.operator`.
Depth is measured downward from the free surface, so every first-derivative row
here differentiates along increasing depth.

Weight provenance:

* interior rows: fixed rational tables (antisymmetric staggered first
  derivative, symmetric 9-point second derivative);
* surface rows for ``u``: rational Hermite rules that consume the zero-slope
  free-surface condition in addition to the in-domain samples;
* surface rows for ``w_y``: generated by :func:`fornberg_weights` over the
  nearest half-depth nodes plus the known zero boundary sample.

All tables are built in exact rational arithmetic and converted to floats once.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "StencilWeights",
    "fornberg_weights",
    "zero_slope_weights",
    "d1_staggered_weights",
    "d2_centered_weights",
    "free_surface_rows",
    "beta_profile",
    "D1_STAGGERED_HALF",
    "D2_CENTERED",
    "D2_SURFACE_EXACT",
    "D1_U_SURFACE_EXACT",
    "D1_WY_SURFACE_EXACT",
]

Rational = Fraction | int


@dataclass(frozen=True)
class StencilWeights:
    """One derivative row: sample offsets, weights, and the 1/dx power.

    Attributes:
        offsets_half: sample positions relative to the target point, in units
            of dx/2 (integers avoid float node arithmetic; even values are
            collocated nodes, odd values are staggered ones).
        weights: row weights, exact rationals rounded once to float.
        scale_power: exponent of 1/dx applied when the row is evaluated
            (1 for first derivatives, 2 for second derivatives).
    """

    offsets_half: tuple[int, ...]
    weights: tuple[float, ...]
    scale_power: int

    def __post_init__(self) -> None:
        if len(self.offsets_half) != len(self.weights):
            raise ValueError("offsets and weights must have equal length")
        if self.scale_power not in (1, 2):
            raise ValueError("scale_power must be 1 or 2")

    def evaluate(self, samples: Sequence[float], dx: float) -> float:
        """Apply the row to samples aligned with ``offsets_half``."""
        acc = float(np.dot(np.asarray(self.weights), np.asarray(samples, dtype=float)))
        return acc / dx**self.scale_power


# ---------------------------------------------------------------------------
# weight generation


def fornberg_weights(nodes: Sequence, x0, k: int) -> list:
    """Finite-difference weights for the k-th derivative at ``x0``.

    Classic recursive generation over arbitrary distinct abscissae.  The
    arithmetic type of the inputs is preserved: pass ``Fraction`` nodes to get
    exact rational weights, floats for float weights.

    Args:
        nodes: distinct sample abscissae, any order.
        x0: evaluation point of the derivative.
        k: derivative order, ``0 <= k <= len(nodes) - 1``.

    Returns:
        Weights ``w`` with ``sum(w_j * p(nodes_j)) == p^(k)(x0)`` for every
        polynomial ``p`` with ``deg p < len(nodes)``.
    """
    pts = list(nodes)
    n = len(pts)
    if len(set(pts)) != n:
        raise ValueError("nodes must be distinct")
    if k < 0 or n < k + 1:
        raise ValueError(f"need at least {k + 1} nodes for derivative order {k}")

    exact = all(isinstance(v, (int, Fraction)) for v in pts) and isinstance(
        x0, (int, Fraction)
    )
    cast = Fraction if exact else float
    pts = [cast(v) for v in pts]
    x0 = cast(x0)

    zero, one = cast(0), cast(1)
    c = [[zero] * (k + 1) for _ in range(n)]
    c[0][0] = one
    c1 = one
    c4 = pts[0] - x0
    for i in range(1, n):
        mn = min(i, k)
        c2 = one
        c5 = c4
        c4 = pts[i] - x0
        for j in range(i):
            c3 = pts[i] - pts[j]
            c2 = c2 * c3
            if j == i - 1:
                for s in range(mn, 0, -1):
                    c[i][s] = c1 * (s * c[i - 1][s - 1] - c5 * c[i - 1][s]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for s in range(mn, 0, -1):
                c[j][s] = (c4 * c[j][s] - s * c[j][s - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return [c[i][k] for i in range(n)]


def zero_slope_weights(
    nodes: Sequence[Rational], x0: Rational, k: int, slope_node: Rational = 0
) -> tuple[list[Fraction], Fraction]:
    """Derivative weights that also consume a known zero slope at one point.

    Solves, in exact rational arithmetic, for ``w`` and a dual weight ``w'``
    such that ``sum(w_i p(nodes_i)) + w' p'(slope_node) == p^(k)(x0)`` for all
    polynomials of degree ``<= len(nodes)``.  Applied to a function whose
    first derivative vanishes at ``slope_node`` (the free-surface condition),
    the ``w`` row alone is exact on that space.

    Returns:
        ``(weights, dual)`` where ``dual`` is the discarded weight on the
        slope datum; it equals the row's residual on the linear monomial.
    """
    pts = [Fraction(v) for v in nodes]
    if len(set(pts)) != len(pts):
        raise ValueError("nodes must be distinct")
    x0 = Fraction(x0)
    s0 = Fraction(slope_node)
    n = len(pts)

    # Vandermonde moment system: one equation per monomial degree 0..n.
    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    for d in range(n + 1):
        row = [p**d for p in pts]
        row.append(d * s0 ** (d - 1) if d >= 1 else Fraction(0))
        rows.append(row)
        if k == 1:
            rhs.append(d * x0 ** (d - 1) if d >= 1 else Fraction(0))
        elif k == 2:
            rhs.append(d * (d - 1) * x0 ** (d - 2) if d >= 2 else Fraction(0))
        else:
            raise ValueError("only first and second derivative rows are supported")

    sol = _solve_exact(rows, rhs)
    return sol[:-1], sol[-1]


def _solve_exact(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    # Gauss elimination with partial pivoting over exact rationals.
    n = len(a)
    m = [row[:] + [rv] for row, rv in zip(a, b)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        if m[piv][col] == 0:
            raise ValueError("singular weight system")
        m[col], m[piv] = m[piv], m[col]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col] / m[col][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [m[i][n] / m[i][i] for i in range(n)]


# ---------------------------------------------------------------------------
# interior rows

# First derivative at a half node from 8 collocated samples (and vice versa):
# antisymmetric pairs at distances (2i-1)/2 * dx.
D1_STAGGERED_HALF: tuple[Fraction, ...] = (
    Fraction(1225, 1024),
    Fraction(-1225, 1024 * 15),
    Fraction(1225, 1024 * 125),
    Fraction(-1225, 1024 * 1715),
)

# Second derivative at a collocated node: center weight plus symmetric pairs.
D2_CENTERED: tuple[Fraction, ...] = (
    Fraction(-205, 72),
    Fraction(8, 5),
    Fraction(-1, 5),
    Fraction(8, 315),
    Fraction(-1, 560),
)


def d1_staggered_weights() -> StencilWeights:
    """Interior staggered first-derivative row (target midway between samples)."""
    offsets = []
    weights = []
    for i, w in enumerate(D1_STAGGERED_HALF, start=1):
        offsets.extend([2 * i - 1, -(2 * i - 1)])
        weights.extend([float(w), float(-w)])
    order = np.argsort(offsets)
    return StencilWeights(
        offsets_half=tuple(int(offsets[i]) for i in order),
        weights=tuple(weights[i] for i in order),
        scale_power=1,
    )


def d2_centered_weights() -> StencilWeights:
    """Interior centered second-derivative row."""
    offsets = [0]
    weights = [float(D2_CENTERED[0])]
    for i, w in enumerate(D2_CENTERED[1:], start=1):
        offsets.extend([2 * i, -2 * i])
        weights.extend([float(w), float(w)])
    order = np.argsort(offsets)
    return StencilWeights(
        offsets_half=tuple(int(offsets[i]) for i in order),
        weights=tuple(weights[i] for i in order),
        scale_power=2,
    )


# ---------------------------------------------------------------------------
# free-surface rows
#
# u rows are Hermite rules: in-domain samples plus the zero-slope surface
# condition.  They are exact on every polynomial compatible with that
# condition; the linear monomial is not in their trial space (its residual is
# the dual weight returned by zero_slope_weights).

_U_DEPTHS_D2 = tuple(range(9))
_U_DEPTHS_D1 = tuple(range(8))
# w_y half-depth nodes augmented with the zero boundary sample at depth 0.
_WY_NODES = (Fraction(0),) + tuple(Fraction(2 * i + 1, 2) for i in range(8))

D2_SURFACE_EXACT: dict[int, tuple[Fraction, ...]] = {
    0: (
        Fraction(-3144919, 352800),
        Fraction(16),
        Fraction(-14),
        Fraction(112, 9),
        Fraction(-35, 4),
        Fraction(112, 25),
        Fraction(-14, 9),
        Fraction(16, 49),
        Fraction(-1, 32),
    ),
    1: (
        Fraction(271343, 156800),
        Fraction(-1991, 630),
        Fraction(57, 40),
        Fraction(13, 60),
        Fraction(-109, 288),
        Fraction(6, 25),
        Fraction(-11, 120),
        Fraction(179, 8820),
        Fraction(-9, 4480),
    ),
    2: (
        Fraction(-18519, 78400),
        Fraction(58, 35),
        Fraction(-251, 90),
        Fraction(22, 15),
        Fraction(-1, 16),
        Fraction(-14, 225),
        Fraction(1, 30),
        Fraction(-2, 245),
        Fraction(17, 20160),
    ),
    3: (
        Fraction(74801, 1411200),
        Fraction(-37, 140),
        Fraction(67, 40),
        Fraction(-263, 90),
        Fraction(53, 32),
        Fraction(-23, 100),
        Fraction(13, 360),
        Fraction(-1, 245),
        Fraction(1, 4480),
    ),
}

# First derivative of u along depth at half-depth targets.  Oriented along
# increasing depth (sign-flipped relative to an upward-axis convention).
D1_U_SURFACE_EXACT: dict[Fraction, tuple[Fraction, ...]] = {
    Fraction(1, 2): (
        Fraction(-5034629, 3763200),
        Fraction(23533, 15360),
        Fraction(-4259, 15360),
        Fraction(1103, 9216),
        Fraction(-151, 3072),
        Fraction(1171, 76800),
        Fraction(-139, 46080),
        Fraction(211, 752640),
    ),
    Fraction(3, 2): (
        Fraction(363509, 3763200),
        Fraction(-6297, 5120),
        Fraction(6147, 5120),
        Fraction(-211, 3072),
        Fraction(-3, 1024),
        Fraction(153, 25600),
        Fraction(-29, 15360),
        Fraction(57, 250880),
    ),
    Fraction(5, 2): (
        Fraction(-4631, 250880),
        Fraction(305, 3072),
        Fraction(-1245, 1024),
        Fraction(3725, 3072),
        Fraction(-275, 3072),
        Fraction(69, 5120),
        Fraction(-5, 3072),
        Fraction(5, 50176),
    ),
}

# First derivative of w_y along depth at collocated targets, from the
# half-depth samples plus the zero surface sample.
D1_WY_SURFACE_EXACT: dict[int, tuple[Fraction, ...]] = {
    depth: tuple(fornberg_weights(_WY_NODES, Fraction(depth), 1))
    for depth in range(4)
}


def free_surface_rows(kind: str, depth_index) -> StencilWeights:
    """Return the one-sided derivative row used near the free surface.

    Args:
        kind: ``"d2_u"`` (second depth derivative of u at collocated depths
            0..3), ``"d1_u_half"`` (first depth derivative of u at half depths
            1/2, 3/2, 5/2), or ``"d1_wy"`` (first depth derivative of w_y at
            collocated depths 0..3).
        depth_index: target depth in units of dx (half-integral for
            ``d1_u_half``).

    Raises:
        ValueError: unknown kind or a depth outside the row table.
    """
    if kind == "d2_u":
        key = _as_int_depth(depth_index)
        if key not in D2_SURFACE_EXACT:
            raise ValueError(f"d2_u rows exist for depths 0..3, got {depth_index}")
        exact = D2_SURFACE_EXACT[key]
        offsets = tuple(2 * (i - key) for i in _U_DEPTHS_D2)
        return StencilWeights(offsets, tuple(float(w) for w in exact), 2)
    if kind == "d1_u_half":
        key = Fraction(depth_index)
        if key not in D1_U_SURFACE_EXACT:
            raise ValueError(
                f"d1_u_half rows exist for depths 1/2, 3/2, 5/2, got {depth_index}"
            )
        exact = D1_U_SURFACE_EXACT[key]
        offsets = tuple(int(2 * i - 2 * key) for i in _U_DEPTHS_D1)
        return StencilWeights(offsets, tuple(float(w) for w in exact), 1)
    if kind == "d1_wy":
        key = _as_int_depth(depth_index)
        if key not in D1_WY_SURFACE_EXACT:
            raise ValueError(f"d1_wy rows exist for depths 0..3, got {depth_index}")
        exact = D1_WY_SURFACE_EXACT[key]
        offsets = tuple(int(2 * n - 2 * key) for n in _WY_NODES)
        return StencilWeights(offsets, tuple(float(w) for w in exact), 1)
    raise ValueError(f"unknown row kind {kind!r}")


def _as_int_depth(depth_index) -> int:
    key = Fraction(depth_index)
    if key.denominator != 1:
        raise ValueError(f"expected a collocated depth index, got {depth_index}")
    return int(key)


# ---------------------------------------------------------------------------
# damping profile


def beta_profile(d_to_boundary, delta: float, beta0: float):
    """Quadratic absorbing-layer damping profile.

    Zero outside the layer, ramping to ``beta0`` at the boundary:
    ``beta0 * (1 - d/delta)**2`` for ``d <= delta``.

    Args:
        d_to_boundary: distance(s) to the domain boundary, km; scalar or array.
        delta: layer thickness, km; must be positive.
        beta0: peak damping, 1/s; must be nonnegative.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if beta0 < 0.0:
        raise ValueError("beta0 must be nonnegative")
    d = np.asarray(d_to_boundary, dtype=float)
    if np.any(d < 0.0):
        raise ValueError("distances must be nonnegative")
    ramp = np.where(d <= delta, (1.0 - d / delta) ** 2, 0.0)
    out = beta0 * ramp
    return float(out) if np.isscalar(d_to_boundary) else out
