"""Error metrics, Fourier dispersion analysis, dt scanning, and the cost model.

Everything here is deterministic: reductions run in numpy's fixed pairwise
order, so repeated evaluations of the same inputs give bit-identical floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .grid import StaggeredGrid
from .integrators import Scheme, SchemeConfig
from .operator import StateVector

__all__ = [
    "SignalTrace",
    "SpectrumComparison",
    "DtMaxResult",
    "CostReport",
    "rms",
    "snapshot_error",
    "seismogram_error",
    "dispersion_dissipation",
    "scan_dt_max",
    "cost_report",
]

#: spectral mask threshold relative to the reference peak amplitude
MASK_FRACTION = 0.01

#: default geometric spacing of the dt scan grid
SCAN_RATIO = 2.0 ** 0.125

#: relative dt resolution of the bracketing refinement
SCAN_REFINE = 0.01


def rms(values: NDArray) -> float:
    """Root-mean-square over all entries."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("rms of an empty array")
    return float(np.sqrt(np.mean(np.square(arr))))


# ---------------------------------------------------------------------------
# error metrics


def snapshot_error(
    appr: StateVector,
    ref: StateVector,
    appr_grid: StaggeredGrid,
    ref_grid: StaggeredGrid,
) -> float:
    """RMS of (u_appr - u_ref) over physical-domain collocated nodes.

    The reference lives on a finer grid whose spacing divides the coarse one;
    it is downsampled by exact index striding, then both fields are cut to
    the coarse grid's physical slices (absorbing collar excluded).

    Raises:
        ValueError: grids incommensurate (spacing ratio not an integer, or
            extents/origins differ).
    """
    ratio = appr_grid.dx / ref_grid.dx
    step = round(ratio)
    if step < 1 or abs(ratio - step) > 1e-9 * ratio:
        raise ValueError(
            f"grid spacings are incommensurate: {appr_grid.dx} vs {ref_grid.dx}"
        )
    if ref_grid.nx != appr_grid.nx * step or ref_grid.ny != appr_grid.ny * step:
        raise ValueError("grid extents differ")
    if appr_grid.origin != ref_grid.origin:
        raise ValueError("grid origins differ")
    coarse_ref = ref.u[::step, ::step]
    rows, cols = appr_grid.physical_slices()
    return rms(appr.u[rows, cols] - coarse_ref[rows, cols])


def seismogram_error(appr: NDArray, ref: NDArray) -> float:
    """RMS of the trace-sample differences over receivers and samples.

    Both arguments are (n_samples, n_receivers) arrays on the same schedule.
    """
    a = np.asarray(appr, dtype=float)
    r = np.asarray(ref, dtype=float)
    if a.shape != r.shape:
        raise ValueError(f"trace shapes differ: {a.shape} vs {r.shape}")
    if a.size == 0:
        raise ValueError("empty seismograms")
    return rms(a - r)


# ---------------------------------------------------------------------------
# dispersion / dissipation


@dataclass(frozen=True)
class SignalTrace:
    """Uniformly sampled receiver signal."""

    samples: NDArray
    dt_sample: float
    t_start: float = 0.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1:
            raise ValueError("trace samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("trace samples must be finite")
        if self.dt_sample <= 0.0:
            raise ValueError("dt_sample must be positive")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SpectrumComparison:
    """Per-bin log-amplitude and phase mismatch between two signals.

    k_of_omega and l_of_omega hold ln|F_ref/F_appr| and the principal-value
    argument of F_ref/F_appr; bins outside the mask are reported as 0.  The
    scalar errors are means of |k| and |l| over the masked bins only.
    """

    omega: NDArray
    k_of_omega: NDArray
    l_of_omega: NDArray
    mask: NDArray
    dissipation_error: float
    dispersion_error: float


def dispersion_dissipation(
    ref: SignalTrace, appr: SignalTrace, mask: NDArray | None = None
) -> SpectrumComparison:
    """Fit F_ref(w) = exp(k + i l) F_appr(w) bin by bin.

    Masked bins are those where |F_ref| or |F_appr| exceeds 1% of the
    reference peak; pass an explicit mask to pin the band (e.g. when
    checking the ref/appr swap antisymmetry).

    Raises:
        ValueError: zero-length traces, mismatched sampling, or a mask that
            selects no bins.
    """
    if len(ref) == 0 or len(appr) == 0:
        raise ValueError("zero-length trace")
    if len(ref) != len(appr):
        raise ValueError(f"trace lengths differ: {len(ref)} vs {len(appr)}")
    if abs(ref.dt_sample - appr.dt_sample) > 1e-12 * ref.dt_sample:
        raise ValueError("trace sampling intervals differ")
    n = len(ref)
    f_ref = np.fft.rfft(ref.samples)
    f_appr = np.fft.rfft(appr.samples)
    omega = 2.0 * math.pi * np.fft.rfftfreq(n, d=ref.dt_sample)
    if mask is None:
        peak = float(np.max(np.abs(f_ref)))
        threshold = MASK_FRACTION * peak
        mask = (np.abs(f_ref) > threshold) | (np.abs(f_appr) > threshold)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != omega.shape:
            raise ValueError("mask shape does not match the spectrum")
    if not np.any(mask):
        raise ValueError("mask selects no frequency bins")
    k = np.zeros_like(omega)
    ell = np.zeros_like(omega)
    # log/angle differences rather than an explicit ratio: identical inputs
    # give exact zeros, and a vanishing denominator cannot poison the phase
    with np.errstate(divide="ignore"):
        k[mask] = np.log(np.abs(f_ref[mask])) - np.log(np.abs(f_appr[mask]))
    delta = np.angle(f_ref[mask]) - np.angle(f_appr[mask])
    two_pi = 2.0 * math.pi
    delta = delta - two_pi * np.round(delta / two_pi)
    ell[mask] = np.where(delta <= -math.pi, delta + two_pi, delta)
    return SpectrumComparison(
        omega=omega,
        k_of_omega=k,
        l_of_omega=ell,
        mask=mask,
        dissipation_error=float(np.mean(np.abs(k[mask]))),
        dispersion_error=float(np.mean(np.abs(ell[mask]))),
    )


# ---------------------------------------------------------------------------
# dt_max scanning


@dataclass(frozen=True)
class DtMaxResult:
    """Outcome of one scheme's dt scan.

    scan holds every evaluated (dt, error) pair in evaluation order, with
    inf marking unstable runs.  The bracketing invariant holds on emission:
    error(dt_max) <= tolerance and every scanned dt above dt_max failed.
    """

    scheme: str
    degree: int
    dt_max: float
    tolerance: float
    metric: str
    scan: tuple[tuple[float, float], ...]


def scan_dt_max(
    evaluate: Callable[[float], float],
    dt_floor: float,
    dt_ceiling: float,
    tolerance: float,
    ratio: float = SCAN_RATIO,
    refine: float = SCAN_REFINE,
) -> tuple[float, tuple[tuple[float, float], ...]]:
    """Largest dt whose error meets the tolerance, on a geometric grid.

    Walks dt_floor * ratio^j upward (the ceiling is appended as the final
    grid point), stops at the first failure, then bisects the bracketing
    pair geometrically down to the requested relative resolution.  A
    non-finite error counts as failure.

    Returns:
        (dt_max, scan trace of evaluated (dt, error) pairs).

    Raises:
        ValueError: empty scan range.
        RuntimeError: the floor itself fails the tolerance.
    """
    if dt_floor <= 0.0 or dt_ceiling < dt_floor:
        raise ValueError("scan range is empty")
    if ratio <= 1.0:
        raise ValueError("scan ratio must exceed one")
    grid = [dt_floor]
    while grid[-1] * ratio < dt_ceiling * (1.0 - 1e-12):
        grid.append(grid[-1] * ratio)
    if grid[-1] < dt_ceiling * (1.0 - 1e-12):
        grid.append(dt_ceiling)

    trace: list[tuple[float, float]] = []

    def passes(dt: float) -> bool:
        err = float(evaluate(dt))
        trace.append((dt, err))
        return math.isfinite(err) and err <= tolerance

    lo = None
    hi = None
    for dt in grid:
        if passes(dt):
            lo = dt
        else:
            hi = dt
            break
    if lo is None:
        raise RuntimeError(
            f"no stable dt: the scan floor {dt_floor:.6g} s already exceeds "
            f"the tolerance {tolerance:.6g}"
        )
    if hi is not None:
        while hi - lo > refine * lo:
            mid = math.sqrt(lo * hi)
            if mid <= lo or mid >= hi:
                break
            if passes(mid):
                lo = mid
            else:
                hi = mid
    return lo, tuple(trace)


# ---------------------------------------------------------------------------
# cost model


@dataclass(frozen=True)
class CostReport:
    """Sweep-rate and storage cost implied by a scheme's dt_max."""

    n_op: float
    n_mem: float
    krylov_cost_excluded: bool


def cost_report(dt_max: float, scheme: SchemeConfig, t_total: float) -> CostReport:
    """N_op = stages/dt_max, N_mem = T/dt_max.

    Krylov rows carry krylov_cost_excluded = True: the subspace build's
    orthogonalization work is not part of the sweep count.
    """
    if dt_max <= 0.0:
        raise ValueError("dt_max must be positive")
    return CostReport(
        n_op=scheme.stages / dt_max,
        n_mem=t_total / dt_max,
        krylov_cost_excluded=scheme.scheme is Scheme.KRYLOV,
    )
