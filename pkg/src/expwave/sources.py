"""Ricker source wavelet, point-source injection, and receiver recording.

The wavelet's analytic derivatives come from the Gaussian product rule: with
w(tau) = P(tau) exp(-a tau^2), each derivative maps the polynomial factor
P -> P' - 2 a tau P, so every order is again polynomial-times-Gaussian.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from numpy.typing import NDArray

from .grid import StaggeredGrid

__all__ = [
    "P_MAX",
    "RickerWavelet",
    "ricker_eval",
    "SourceInjection",
    "ReceiverArray",
]

# highest wavelet derivative kept analytic; caps the augmentation order
P_MAX = 8


@dataclass(frozen=True)
class RickerWavelet:
    """Ricker pulse (1 - 2 pi^2 f_m^2 tau^2) exp(-pi^2 f_m^2 tau^2), tau = t - t0.

    Attributes:
        f_m: peak frequency, Hz.
        t0: delay of the maximum, s.
        amplitude: dimensionless scale applied to every derivative order.
    """

    f_m: float
    t0: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.f_m <= 0.0:
            raise ValueError("peak frequency must be positive")

    @cached_property
    def _polynomials(self) -> tuple[Polynomial, ...]:
        a = (np.pi * self.f_m) ** 2
        damp = Polynomial([0.0, -2.0 * a])
        polys = [Polynomial([1.0, 0.0, -2.0 * a])]
        for _ in range(P_MAX):
            p = polys[-1]
            polys.append(p.deriv() + damp * p)
        return tuple(polys)

    def __call__(self, t, k: int = 0):
        """k-th time derivative at t (scalar or array)."""
        if not 0 <= k <= P_MAX:
            raise ValueError(f"derivative order must lie in [0, {P_MAX}], got {k}")
        tau = np.asarray(t, dtype=np.float64) - self.t0
        a = (np.pi * self.f_m) ** 2
        out = self.amplitude * self._polynomials[k](tau) * np.exp(-a * tau * tau)
        return out if out.ndim else float(out)


def ricker_eval(wavelet: RickerWavelet, t, k: int = 0):
    """Function-call spelling of :meth:`RickerWavelet.__call__`."""
    return wavelet(t, k)


@dataclass(frozen=True)
class SourceInjection:
    """Point source feeding the velocity equation at one collocated node.

    The forcing is wavelet(t)/dx^2: a discrete point mass whose integral over
    the node's cell is the wavelet value.

    Attributes:
        grid: geometry used to snap the position.
        position: (x, depth) in km; must lie in the physical domain.
        wavelet: time signature.
        node: nearest collocated node (row, col), derived.
    """

    grid: StaggeredGrid
    position: tuple[float, float]
    wavelet: RickerWavelet
    node: tuple[int, int] = field(init=False)

    def __post_init__(self) -> None:
        x, depth = self.position
        if not self.grid.in_physical_domain(x, depth):
            raise ValueError(f"source position {self.position} is inside the absorbing collar")
        object.__setattr__(self, "node", self.grid.nearest_node(x, depth))

    @property
    def scale(self) -> float:
        return 1.0 / self.grid.dx**2

    def value(self, t: float, k: int = 0) -> float:
        """k-th derivative of the injected forcing at time t."""
        return self.wavelet(t, k) * self.scale

    def derivative_stack(self, t: float, p: int) -> NDArray[np.float64]:
        """Forcing derivatives (orders 0..p-1) at time t, for source augmentation."""
        return np.array([self.value(t, k) for k in range(p)])


class ReceiverArray:
    """Pressure recordings at node-snapped positions on a uniform sample clock.

    Samples land exactly at t_start + k*sample_interval.  Each record call
    fills every pending slot inside (previous record time, t] by linear
    interpolation between the two bracketing states, so the series stays on
    its nominal clock whatever the step size (exact when a step lands on a
    slot, second-order in the step otherwise).
    """

    def __init__(
        self,
        grid: StaggeredGrid,
        positions: list[tuple[float, float]],
        sample_interval: float,
        t_start: float = 0.0,
    ) -> None:
        if sample_interval <= 0.0:
            raise ValueError("sample interval must be positive")
        if not positions:
            raise ValueError("receiver array needs at least one position")
        for x, depth in positions:
            if not grid.in_physical_domain(x, depth):
                raise ValueError(f"receiver {(x, depth)} is inside the absorbing collar")
        self.grid = grid
        self.positions = [(float(x), float(d)) for x, d in positions]
        self.nodes = [grid.nearest_node(x, d) for x, d in positions]
        self.sample_interval = float(sample_interval)
        self.t_start = float(t_start)
        self.times: list[float] = []
        self._rows: list[list[float]] = []
        self._last_t: float | None = None
        self._last_vals: NDArray[np.float64] | None = None

    def __len__(self) -> int:
        return len(self._rows)

    def _slot_time(self, k: int) -> float:
        return self.t_start + k * self.sample_interval

    def record(self, state, t: float) -> None:
        """Fill every sample slot reached by t (interpolating as needed)."""
        eps = 1e-9 * self.sample_interval
        if self._last_t is not None and t < self._last_t - eps:
            raise ValueError(f"record at t={t} after t={self._last_t}")
        u = getattr(state, "u", state)
        vals = np.array([float(u[j, i]) for j, i in self.nodes])
        if self._last_t is None and self._slot_time(0) < t - eps:
            raise ValueError(
                f"recording starts at t={t}, after the first sample slot"
            )
        while True:
            t_k = self._slot_time(len(self._rows))
            if t_k > t + eps:
                break
            if abs(t_k - t) <= eps or self._last_t is None:
                row = vals
            else:
                theta = (t_k - self._last_t) / (t - self._last_t)
                row = (1.0 - theta) * self._last_vals + theta * vals
            self.times.append(t_k)
            self._rows.append([float(v) for v in row])
        self._last_t = t
        self._last_vals = vals

    def trace(self, index: int = 0) -> NDArray[np.float64]:
        """Recorded time series of one receiver."""
        return np.array([row[index] for row in self._rows])

    def traces(self) -> NDArray[np.float64]:
        """All recordings, shape (n_samples, n_receivers)."""
        return np.array(self._rows).reshape(len(self._rows), len(self.nodes))

    def write_csv(self, path: str | Path) -> None:
        """Seismogram CSV: header t_s,rx_0,..., one row per sample, 17 digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_s"] + [f"rx_{i}" for i in range(len(self.nodes))])
            for t, row in zip(self.times, self._rows):
                writer.writerow([format(t, ".17g")] + [format(v, ".17g") for v in row])
