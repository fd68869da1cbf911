"""Uniform staggered grid geometry and the absorbing-layer damping samples.

Axis convention: array axis 0 is depth (increasing downward from the free
surface at depth 0), axis 1 is x.  Displacement ``u``, velocity ``v``, and the
medium live at collocated nodes; the auxiliary ``w_x`` sits at half-x nodes and
``w_y`` at half-depth nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .stencils import beta_profile

__all__ = ["StaggeredGrid", "PmlProfile", "default_beta0"]

#: stencil half-width; an absorbing layer must be at least this many cells deep
STENCIL_HALO = 4


@dataclass(frozen=True)
class StaggeredGrid:
    """Geometry of the computational rectangle, absorbing collar included.

    Attributes:
        nx: cell count along x (collocated node count is ``nx + 1``).
        ny: cell count along depth.
        dx: grid spacing in km, identical along both axes.
        origin: physical (x, depth) of node (0, 0) in km.
        pml_thickness: absorbing-layer thickness delta in km; zero disables
            the layer (left, right, and bottom sides; the top never has one).
    """

    nx: int
    ny: int
    dx: float
    origin: tuple[float, float] = (0.0, 0.0)
    pml_thickness: float = 0.0

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError("cell counts must be positive")
        if self.dx <= 0.0:
            raise ValueError("dx must be positive")
        if self.pml_thickness < 0.0:
            raise ValueError("pml_thickness must be nonnegative")
        if self.pml_thickness > 0.0:
            cells = self.pml_thickness / self.dx
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise ValueError("pml_thickness must be a whole number of cells")
            if round(cells) < STENCIL_HALO:
                raise ValueError(
                    f"absorbing layer must span at least {STENCIL_HALO} cells"
                )

    @property
    def pml_cells(self) -> int:
        return int(round(self.pml_thickness / self.dx)) if self.pml_thickness else 0

    @property
    def extent(self) -> tuple[float, float]:
        """(Lx, Ly) in km."""
        return (self.nx * self.dx, self.ny * self.dx)

    @property
    def shape_u(self) -> tuple[int, int]:
        return (self.ny + 1, self.nx + 1)

    @property
    def shape_wx(self) -> tuple[int, int]:
        return (self.ny + 1, self.nx)

    @property
    def shape_wy(self) -> tuple[int, int]:
        return (self.ny, self.nx + 1)

    @cached_property
    def x_nodes(self) -> NDArray[np.float64]:
        return self.origin[0] + self.dx * np.arange(self.nx + 1)

    @cached_property
    def depth_nodes(self) -> NDArray[np.float64]:
        return self.origin[1] + self.dx * np.arange(self.ny + 1)

    @cached_property
    def x_half(self) -> NDArray[np.float64]:
        return self.origin[0] + self.dx * (np.arange(self.nx) + 0.5)

    @cached_property
    def depth_half(self) -> NDArray[np.float64]:
        return self.origin[1] + self.dx * (np.arange(self.ny) + 0.5)

    def nearest_node(self, x_km: float, depth_km: float) -> tuple[int, int]:
        """Indices (row, col) of the collocated node nearest to a position."""
        i = int(round((x_km - self.origin[0]) / self.dx))
        j = int(round((depth_km - self.origin[1]) / self.dx))
        if not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise ValueError(f"position ({x_km}, {depth_km}) km is outside the grid")
        return j, i

    def in_physical_domain(self, x_km: float, depth_km: float) -> bool:
        """True if the position lies outside the absorbing collar."""
        lx, ly = self.extent
        d = self.pml_thickness
        x0, y0 = self.origin
        return (
            x0 + d <= x_km <= x0 + lx - d and y0 <= depth_km <= y0 + ly - d
        )

    def physical_slices(self) -> tuple[slice, slice]:
        """Index slices (rows, cols) of collocated nodes outside the collar."""
        c = self.pml_cells
        return slice(0, self.ny + 1 - c), slice(c, self.nx + 1 - c)


def default_beta0(c_max: float, delta: float, reflection: float = 1e-4) -> float:
    """Peak damping tuned for a target boundary reflection coefficient.

    Standard quadratic-profile calibration: ``3 c ln(1/R) / (2 delta)``.

    Args:
        c_max: largest medium velocity, km/s.
        delta: layer thickness, km.
        reflection: design reflection coefficient R.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if not 0.0 < reflection < 1.0:
        raise ValueError("reflection must lie in (0, 1)")
    return 3.0 * c_max * math.log(1.0 / reflection) / (2.0 * delta)


@dataclass(frozen=True)
class PmlProfile:
    """Damping factors sampled on the staggered grid.

    beta_x depends on x only and ramps inside both vertical layer strips;
    beta_y depends on depth only and ramps inside the bottom strip.  The top
    side carries no layer, so beta_y vanishes near the free surface.  1D
    samples are stored per staggering; 2D fields follow by broadcasting.

    Attributes:
        beta0: peak damping magnitude, 1/s.
        delta: layer thickness, km.
    """

    grid: StaggeredGrid
    beta0: float
    delta: float
    bx_nodes: NDArray[np.float64] = field(repr=False)
    bx_half: NDArray[np.float64] = field(repr=False)
    by_nodes: NDArray[np.float64] = field(repr=False)
    by_half: NDArray[np.float64] = field(repr=False)

    @classmethod
    def for_grid(
        cls, grid: StaggeredGrid, beta0: float | None = None, c_max: float = 1.0
    ) -> "PmlProfile":
        """Sample the damping profile on every staggered location of ``grid``.

        Args:
            grid: target geometry; its ``pml_thickness`` sets the layer.
            beta0: peak damping, 1/s; ``None`` selects the reflection-based
                default (requires ``c_max``).
            c_max: largest velocity, used only for the default ``beta0``.
        """
        delta = grid.pml_thickness
        if delta == 0.0:
            zeros = np.zeros
            return cls(
                grid=grid,
                beta0=0.0,
                delta=0.0,
                bx_nodes=zeros(grid.nx + 1),
                bx_half=zeros(grid.nx),
                by_nodes=zeros(grid.ny + 1),
                by_half=zeros(grid.ny),
            )
        if beta0 is None:
            beta0 = default_beta0(c_max, delta)
        lx, ly = grid.extent
        x0, y0 = grid.origin

        def bx(x: NDArray[np.float64]) -> NDArray[np.float64]:
            d_edge = np.minimum(x - x0, x0 + lx - x)
            return beta_profile(np.maximum(d_edge, 0.0), delta, beta0)

        def by(depth: NDArray[np.float64]) -> NDArray[np.float64]:
            # distance to the bottom only: the free surface has no layer
            d_edge = np.maximum(y0 + ly - depth, 0.0)
            return beta_profile(d_edge, delta, beta0)

        return cls(
            grid=grid,
            beta0=float(beta0),
            delta=delta,
            bx_nodes=bx(grid.x_nodes),
            bx_half=bx(grid.x_half),
            by_nodes=by(grid.depth_nodes),
            by_half=by(grid.depth_half),
        )

    def beta_x_at_u(self) -> NDArray[np.float64]:
        return np.broadcast_to(self.bx_nodes, self.grid.shape_u)

    def beta_y_at_u(self) -> NDArray[np.float64]:
        return np.broadcast_to(self.by_nodes[:, None], self.grid.shape_u)

    def beta_x_at_wx(self) -> NDArray[np.float64]:
        return np.broadcast_to(self.bx_half, self.grid.shape_wx)

    def beta_y_at_wx(self) -> NDArray[np.float64]:
        return np.broadcast_to(self.by_nodes[:, None], self.grid.shape_wx)

    def beta_x_at_wy(self) -> NDArray[np.float64]:
        return np.broadcast_to(self.bx_nodes, self.grid.shape_wy)

    def beta_y_at_wy(self) -> NDArray[np.float64]:
        return np.broadcast_to(self.by_half[:, None], self.grid.shape_wy)

    def max_beta_sum(self) -> float:
        """Largest beta_x + beta_y over collocated nodes (damping bound)."""
        return float(np.max(self.bx_nodes) + np.max(self.by_nodes))
