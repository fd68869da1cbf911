"""Generate the 9-stage, 7th-order Runge-Kutta tableau data file.

The tableau targets linear non-autonomous problems u' = H u + f(t): it
satisfies b^T A^j c^k = k!/(j+k+1)! for all j, k >= 0 with j + k <= 6, which
makes the step error O(dt^8) on that class.  The two remaining free stability
coefficients (the z^8 and z^9 terms of the amplification polynomial) are tuned
for a wide stability interval on the imaginary axis before the tableau is
solved, since wave operators have near-imaginary spectra.

Pipeline: fix the abscissae c, take interpolatory weights b (exact rationals),
float least-squares for the strictly lower triangle of A, then a
high-precision Gauss-Newton polish.  Coefficients are written as 40-digit
decimal strings.

Usage: python tools/gen_rk97_tableau.py [output.json]
"""

from __future__ import annotations

import json
import sys
from fractions import Fraction
from math import factorial
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy.optimize import least_squares

S = 9
ORDER = 7
C_NODES = [Fraction(i, 8) for i in range(9)]


def interpolatory_b() -> list[Fraction]:
    """Quadrature weights on C_NODES: b^T c^k = 1/(k+1) for k = 0..8."""
    n = len(C_NODES)
    rows = [[c**k for c in C_NODES] for k in range(n)]
    rhs = [Fraction(1, k + 1) for k in range(n)]
    # exact Gauss elimination
    m = [row[:] + [r] for row, r in zip(rows, rhs)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col] / m[col][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [m[i][n] / m[i][i] for i in range(n)]


def imag_interval(s8: float, s9: float) -> float:
    """Largest y with |P(iy)| <= 1 on [0, y] for the amplification polynomial."""
    coeffs = [1.0 / factorial(k) for k in range(8)] + [s8, s9]
    ys = np.linspace(0.0, 6.0, 2401)
    z = 1j * ys
    p = sum(coeffs[k] * z**k for k in range(10))
    good = np.abs(p) <= 1.0 + 1e-12
    bad = np.nonzero(~good)[0]
    return 6.0 if len(bad) == 0 else float(ys[bad[0] - 1]) if bad[0] > 0 else 0.0


def tune_stability() -> tuple[float, float]:
    best = (0.0, 1.0 / factorial(8), 1.0 / factorial(9))
    lo8, hi8 = 0.0, 4.0 / factorial(8)
    lo9, hi9 = 0.0, 4.0 / factorial(9)
    for _ in range(4):
        for s8 in np.linspace(lo8, hi8, 41):
            for s9 in np.linspace(lo9, hi9, 41):
                y = imag_interval(s8, s9)
                if y > best[0]:
                    best = (y, float(s8), float(s9))
        span8 = (hi8 - lo8) / 8
        span9 = (hi9 - lo9) / 8
        lo8, hi8 = best[1] - span8, best[1] + span8
        lo9, hi9 = best[2] - span9, best[2] + span9
    print(f"imaginary stability interval: {best[0]:.4f}")
    return best[1], best[2]


def unpack(x: np.ndarray) -> np.ndarray:
    a = np.zeros((S, S))
    idx = 0
    for i in range(1, S):
        a[i, :i] = x[idx : idx + i]
        idx += i
    return a


def conditions() -> list[tuple[int, int, float]]:
    """(j, k, target) for the linear order conditions with j >= 1."""
    out = []
    for total in range(ORDER):
        for k in range(total + 1):
            j = total - k
            if j >= 1:
                out.append((j, k, factorial(k) / factorial(j + k + 1)))
    return out


COND = conditions()
B = np.array([float(v) for v in interpolatory_b()])
C = np.array([float(v) for v in C_NODES])
S8, S9 = tune_stability()


def residuals(x: np.ndarray) -> np.ndarray:
    a = unpack(x)
    res = list(a.sum(axis=1)[1:] - C[1:])
    for j, k, target in COND:
        vec = C**k
        for _ in range(j):
            vec = a @ vec
        res.append(float(B @ vec) - target)
    ones = np.ones(S)
    vec = ones
    for _ in range(7):
        vec = a @ vec
    res.append(float(B @ vec) - S8)
    res.append(float(B @ (a @ vec)) - S9)
    return np.array(res)


def initial_guess() -> np.ndarray:
    x0 = []
    for i in range(1, S):
        x0.extend([C[i] / i] * i)
    return np.array(x0)


def mp_residuals(xs: list, b: list, c: list, s8: mp.mpf, s9: mp.mpf) -> list:
    a = [[mp.mpf(0)] * S for _ in range(S)]
    idx = 0
    for i in range(1, S):
        for j in range(i):
            a[i][j] = xs[idx]
            idx += 1

    def matvec(v):
        return [mp.fsum(a[r][s] * v[s] for s in range(S)) for r in range(S)]

    res = []
    for i in range(1, S):
        res.append(mp.fsum(a[i][j] for j in range(i)) - c[i])
    for j, k, _ in COND:
        target = mp.mpf(factorial(k)) / factorial(j + k + 1)
        vec = [c[s] ** k if k else mp.mpf(1) for s in range(S)]
        for _ in range(j):
            vec = matvec(vec)
        res.append(mp.fsum(b[s] * vec[s] for s in range(S)) - target)
    vec = [mp.mpf(1)] * S
    for _ in range(7):
        vec = matvec(vec)
    res.append(mp.fsum(b[s] * vec[s] for s in range(S)) - s8)
    vec = matvec(vec)
    res.append(mp.fsum(b[s] * vec[s] for s in range(S)) - s9)
    return res


def polish(x_float: np.ndarray) -> list:
    mp.mp.dps = 60
    b = [mp.mpf(fr.numerator) / fr.denominator for fr in interpolatory_b()]
    c = [mp.mpf(fr.numerator) / fr.denominator for fr in C_NODES]
    s8, s9 = mp.mpf(repr(S8)), mp.mpf(repr(S9))
    xs = [mp.mpf(repr(float(v))) for v in x_float]
    n = len(xs)
    for it in range(60):
        r = mp_residuals(xs, b, c, s8, s9)
        norm = mp.sqrt(mp.fsum(v**2 for v in r))
        if norm < mp.mpf("1e-45"):
            break
        h = mp.mpf("1e-25")
        jac = mp.matrix(len(r), n)
        for col in range(n):
            bumped = xs[:]
            bumped[col] = bumped[col] + h
            r2 = mp_residuals(bumped, b, c, s8, s9)
            for row in range(len(r)):
                jac[row, col] = (r2[row] - r[row]) / h
        # minimum-norm Gauss-Newton step; tiny ridge absorbs redundant rows
        jt = jac.T
        gram = jac * jt
        ridge = mp.mpf("1e-40") * max(gram[i, i] for i in range(gram.rows))
        for i in range(gram.rows):
            gram[i, i] += ridge
        rhs = mp.matrix(r)
        y = mp.lu_solve(gram, rhs)
        step = jt * y
        xs = [xs[i] - step[i] for i in range(n)]
    print(f"polish iterations {it + 1}, residual {mp.nstr(norm, 5)}")
    return xs


def main() -> None:
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(
        "src/expwave/data/rk97_tableau.json"
    )
    sol = least_squares(
        residuals, initial_guess(), method="trf", xtol=3e-16, ftol=3e-16, gtol=3e-16,
        max_nfev=20000,
    )
    print(f"float residual: {np.max(np.abs(sol.fun)):.3e}")
    xs = polish(sol.x)

    mp.mp.dps = 60
    a = [[mp.mpf(0)] * S for _ in range(S)]
    idx = 0
    for i in range(1, S):
        for j in range(i):
            a[i][j] = xs[idx]
            idx += 1
    b = [mp.mpf(fr.numerator) / fr.denominator for fr in interpolatory_b()]
    c_rows = [mp.fsum(a[i][j] for j in range(i)) if i else mp.mpf(0) for i in range(S)]

    def fmt(v) -> str:
        return mp.nstr(v, 40, strip_zeros=False)

    payload = {
        "stages": S,
        "order": ORDER,
        "a": [[fmt(a[i][j]) for j in range(S)] for i in range(S)],
        "b": [fmt(v) for v in b],
        "c": [fmt(v) for v in c_rows],
    }
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, indent=1) + "\n")
    print(f"wrote {out_path}")

    # float-level verification of every condition
    af = np.array([[float(mp.mpf(payload["a"][i][j])) for j in range(S)] for i in range(S)])
    bf = np.array([float(mp.mpf(v)) for v in payload["b"]])
    cf = np.array([float(mp.mpf(v)) for v in payload["c"]])
    worst = 0.0
    for total in range(ORDER):
        for k in range(total + 1):
            j = total - k
            vec = cf**k
            for _ in range(j):
                vec = af @ vec
            worst = max(worst, abs(float(bf @ vec) - factorial(k) / factorial(j + k + 1)))
    print(f"worst order-condition residual (float): {worst:.3e}")
    print(f"row-sum residual: {np.max(np.abs(af.sum(axis=1) - cf)):.3e}")


if __name__ == "__main__":
    main()
