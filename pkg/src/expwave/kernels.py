"""Numerical kernels behind the exponential integrators.

Dense matrix exponential, Arnoldi factorization plus Krylov propagation,
Faber ellipse parameters / series coefficients / vector recurrence, and the
lambda coefficients of the one-leg high-order Runge-Kutta family.  Every
kernel is a pure function; operators enter as plain ``apply(vector) -> vector``
callables so dense toy matrices and the matrix-free operator share one code
path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial, isfinite
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from scipy.linalg.blas import get_blas_funcs

__all__ = [
    "pade_expm",
    "ArnoldiFactorization",
    "arnoldi",
    "krylov_expmv",
    "FaberParams",
    "FaberSeries",
    "faber_params",
    "faber_coeffs",
    "faber_series",
    "faber_expmv",
    "HorkCoefficients",
    "hork_lambda",
]

Apply = Callable[[NDArray], NDArray]

#: dense exponentials are meant for reduced matrices only
PADE_DIM_CAP = 256

#: happy-breakdown threshold, relative to the initial vector norm
ARNOLDI_BREAKDOWN_RTOL = 1e-14


# ---------------------------------------------------------------------------
# dense exponential


def pade_expm(a: NDArray, max_dim: int = PADE_DIM_CAP) -> NDArray:
    """Matrix exponential of a small dense matrix.

    Diagonal Pade approximation with scaling and squaring (scipy's expm).

    Raises:
        ValueError: non-square input, dimension beyond ``max_dim``, or
            non-finite entries.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > max_dim:
        raise ValueError(
            f"dense exponential capped at dimension {max_dim}, got {a.shape[0]}"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return scipy.linalg.expm(a)


# ---------------------------------------------------------------------------
# Krylov projection


@dataclass
class ArnoldiFactorization:
    """Orthonormal Krylov basis and its Hessenberg projection.

    Attributes:
        V: basis columns u_1..u_{m_eff}, shape (n, m_eff).
        A: Hessenberg block, shape (m_eff + 1, m_eff); the trailing row holds
            the residual norm coupling to ``next_vector``.
        m: requested subspace dimension.
        breakdown_at: column index j where the residual vanished (the span is
            then invariant and the projection exact); None if no breakdown.
        next_vector: u_{m_eff+1}, present unless breakdown stopped the loop.
    """

    V: NDArray = field(repr=False)
    A: NDArray = field(repr=False)
    m: int = 0
    breakdown_at: int | None = None
    next_vector: NDArray | None = field(default=None, repr=False)

    @property
    def m_eff(self) -> int:
        return self.V.shape[1]

    @property
    def square_block(self) -> NDArray:
        """The projected operator A_m (top square of A)."""
        return self.A[: self.m_eff, :]


def arnoldi(apply: Apply, v0: NDArray, m: int) -> ArnoldiFactorization:
    """Modified Gram-Schmidt Arnoldi factorization of span{v0, Hv0, ...}.

    Args:
        apply: the linear operator.
        v0: starting vector, nonzero.
        m: subspace dimension, >= 1.

    Raises:
        ValueError: zero starting vector or m < 1.
    """
    if m < 1:
        raise ValueError("subspace dimension must be >= 1")
    v0 = np.asarray(v0)
    norm0 = float(np.linalg.norm(v0))
    if norm0 == 0.0:
        raise ValueError("starting vector is zero")
    tol = ARNOLDI_BREAKDOWN_RTOL * norm0

    n = v0.shape[0]
    dtype = np.result_type(v0.dtype, np.float64)
    # rows, not columns: the projection loop then streams contiguous memory
    basis = np.empty((m + 1, n), dtype=dtype)
    hess = np.zeros((m + 1, m), dtype=dtype)
    scratch = np.empty(n, dtype=dtype)
    basis[0] = v0 / norm0

    for j in range(m):
        # private copy: the in-place projection must not reach through an
        # apply() that returns its input or a shared buffer
        w = np.array(apply(basis[j]), dtype=dtype)
        for k in range(j + 1):
            coeff = np.vdot(basis[k], w)
            hess[k, j] = coeff
            np.multiply(basis[k], coeff, out=scratch)
            np.subtract(w, scratch, out=w)
        res = float(np.linalg.norm(w))
        hess[j + 1, j] = res
        if res < tol:
            keep = j + 1
            return ArnoldiFactorization(
                V=basis[:keep].T,
                A=hess[: keep + 1, :keep].copy(),
                m=m,
                breakdown_at=keep,
                next_vector=None,
            )
        basis[j + 1] = w / res

    return ArnoldiFactorization(
        V=basis[:m].T,
        A=hess,
        m=m,
        breakdown_at=None,
        next_vector=basis[m].copy(),
    )


def krylov_expmv(apply: Apply, v: NDArray, dt: float, m: int) -> NDArray:
    """Approximate e^{dt H} v by projection onto an m-dimensional Krylov space.

    Returns ||v|| V_m e^{dt A_m} e_1; exact whenever the space becomes
    invariant (happy breakdown) at or before m.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    fac = arnoldi(apply, v, m)
    exp_block = pade_expm(dt * fac.square_block)
    return float(np.linalg.norm(v)) * (fac.V @ exp_block[:, 0])


# ---------------------------------------------------------------------------
# Faber series on an elliptic enclosure


class FaberParams(NamedTuple):
    """Conformal map psi(w) = gamma (w + c0 + c1/w) of the enclosing ellipse."""

    gamma: float
    c0: float
    c1: float


@dataclass(frozen=True)
class FaberSeries:
    """Ellipse parameters plus expansion coefficients a_0..a_m of e^z."""

    gamma: float
    c0: float
    c1: float
    coeffs: NDArray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.coeffs) - 1

    @property
    def params(self) -> FaberParams:
        return FaberParams(self.gamma, self.c0, self.c1)


def faber_params(rho_imag: float, rho_real: float, dt: float) -> FaberParams:
    """Ellipse enclosing the scaled spectral rectangle of dt H.

    The eigenvalues of dt H lie in [-dt rho_real, 0] x [+-i dt rho_imag].
    Among axis-aligned ellipses centered on that rectangle, the area minimizer
    through its corners has semi-axes sqrt(2) (half-width, half-height); when
    one side collapses the ellipse degenerates to a tight segment.  gamma and
    the center scale linearly with dt; c0 = center/gamma and c1 are
    dt-invariant shape parameters.

    Raises:
        ValueError: both radii zero (no spectrum to enclose), or negative
            inputs.
    """
    if rho_imag < 0.0 or rho_real < 0.0 or dt <= 0.0:
        raise ValueError("spectral radii must be nonnegative and dt positive")
    if rho_imag == 0.0 and rho_real == 0.0:
        raise ValueError("zero-size spectrum: nothing to enclose")
    half_width = 0.5 * dt * rho_real
    half_height = dt * rho_imag
    if half_width == 0.0:
        semi_real, semi_imag = 0.0, half_height
    elif half_height == 0.0:
        semi_real, semi_imag = half_width, 0.0
    else:
        semi_real = np.sqrt(2.0) * half_width
        semi_imag = np.sqrt(2.0) * half_height
    gamma = 0.5 * (semi_real + semi_imag)
    c1 = (semi_real - semi_imag) / (semi_real + semi_imag)
    c0 = -half_width / gamma
    return FaberParams(gamma=float(gamma), c0=float(c0), c1=float(c1))


def _psi_samples(params: FaberParams, n: int) -> NDArray:
    theta = 2.0 * np.pi * np.arange(n) / n
    w = np.exp(1j * theta)
    psi = params.gamma * (w + params.c0 + params.c1 / w)
    with np.errstate(over="ignore"):  # the caller turns overflow into ValueError
        return np.exp(psi)


def faber_coeffs(params: FaberParams, m: int) -> NDArray[np.float64]:
    """Faber expansion coefficients a_0..a_m of e^z on the ellipse.

    Trapezoidal quadrature of (1/2pi) int e^{psi(e^{i theta})} e^{-ij theta}
    on N = max(4m, 128) circle samples, which the FFT evaluates for all j at
    once; a doubled-N pass must agree, otherwise the quadrature (or the
    ellipse) is unusable.

    Raises:
        ValueError: m < 0, non-finite samples (e^psi overflow), or refinement
            disagreement.
    """
    if m < 0:
        raise ValueError("degree must be nonnegative")
    n = max(4 * m, 128)
    out = None
    for size in (n, 2 * n):
        samples = _psi_samples(params, size)
        if not np.all(np.isfinite(samples)):
            raise ValueError("e^psi overflows on the ellipse; enclosure too large")
        coeffs = (np.fft.fft(samples) / size)[: m + 1].real
        if out is not None:
            scale = max(1.0, float(np.max(np.abs(coeffs))))
            if float(np.max(np.abs(coeffs - out))) > 1e-9 * scale:
                raise ValueError("Faber quadrature failed to converge")
        out = coeffs
    return out


def faber_series(
    rho_imag: float, rho_real: float, dt: float, m: int
) -> FaberSeries:
    """Bundle of ellipse parameters and coefficients for one (dt, m) choice."""
    params = faber_params(rho_imag, rho_real, dt)
    return FaberSeries(
        gamma=params.gamma,
        c0=params.c0,
        c1=params.c1,
        coeffs=faber_coeffs(params, m),
    )


def faber_expmv(
    apply: Apply, v: NDArray, dt: float, series: FaberSeries, m: int | None = None
) -> NDArray:
    """Approximate e^{dt H} v with the degree-m Faber sum.

    Three-term vector recurrence with F_1 = dt H / gamma - c0 I; exactly m
    operator applications.

    Raises:
        FloatingPointError: non-finite iterate (spectrum escaping the ellipse
            enclosure is the usual cause).
    """
    if m is None:
        m = series.m
    if not 0 <= m <= series.m:
        raise ValueError(f"degree {m} outside the series range 0..{series.m}")
    a = series.coeffs
    acc = a[0] * v
    if m == 0:
        return acc
    scale = dt / series.gamma
    c0, c1 = series.c0, series.c1
    axpy = get_blas_funcs("axpy", (acc,))
    f_prev2 = v
    f_prev = np.asarray(apply(v)) * scale
    f_prev = axpy(v, f_prev, a=-c0)
    acc = axpy(f_prev, acc, a=a[1])
    for j in range(2, m + 1):
        f_new = np.asarray(apply(f_prev)) * scale
        f_new = axpy(f_prev, f_new, a=-c0)
        f_new = axpy(f_prev2, f_new, a=-c1)
        if j == 2:
            f_new = axpy(f_prev2, f_new, a=-c1)  # F_2 doubles the constant term
        # a non-finite iterate makes this self-product non-finite
        if not isfinite(abs(np.vdot(f_new, f_new))):
            raise FloatingPointError(
                f"Faber recurrence diverged at degree {j}: "
                "spectral enclosure likely violated"
            )
        acc = axpy(f_new, acc, a=a[j])
        f_prev2, f_prev = f_prev, f_new
    return acc


# ---------------------------------------------------------------------------
# one-leg high-order Runge-Kutta coefficients


@dataclass(frozen=True)
class HorkCoefficients:
    """Combination weights lambda_0..lambda_{m-1} of the m-stage scheme.

    The induced stability polynomial sum_{i<=m-2} l_i (1+z)^i
    + l_{m-1} (1+z)^m equals the degree-m Taylor polynomial of e^z.
    """

    m: int
    lambdas: tuple[float, ...]
    lambdas_exact: tuple[Fraction, ...] = field(repr=False, default=())

    def stability_value(self, z: complex) -> complex:
        """R(z), for stability and consistency checks."""
        acc = self.lambdas[self.m - 1] * (1.0 + z) ** self.m
        for i in range(self.m - 1):
            acc += self.lambdas[i] * (1.0 + z) ** i
        return acc


def hork_lambda(m: int) -> HorkCoefficients:
    """Solve the binomial system for the m-stage combination weights.

    Matching powers of z from z^m downward is upper triangular: the z^m row
    fixes lambda_{m-1} = 1/m!, each remaining row determines one lambda_k.
    Solved in exact rationals (the float system is violently ill-conditioned
    for large m), rounded once.

    Raises:
        ValueError: m < 1.

    Warns:
        UserWarning: some weight is negative (strong-stability preservation
            is lost; the scheme itself remains valid).
    """
    if m < 1:
        raise ValueError("stage count must be >= 1")
    lam = [Fraction(0)] * m
    lam[m - 1] = Fraction(1, factorial(m))
    for k in range(m - 2, -1, -1):
        acc = Fraction(1, factorial(k)) - lam[m - 1] * comb(m, k)
        for i in range(k + 1, m - 1):
            acc -= lam[i] * comb(i, k)
        lam[k] = acc
    if any(v < 0 for v in lam):
        warnings.warn(
            f"negative combination weights at m={m}: "
            "strong-stability preservation does not hold",
            stacklevel=2,
        )
    return HorkCoefficients(
        m=m,
        lambdas=tuple(float(v) for v in lam),
        lambdas_exact=tuple(lam),
    )
