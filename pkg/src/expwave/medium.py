"""Velocity-model construction, ingestion, and persistence.

External format: ``<name>.json`` sidecar describing the sample lattice plus
``<name>.f32`` raw little-endian float32 payload, row-major with the depth
index varying fastest.  The sample lattice covers the physical region; loading
onto an experiment grid resamples by nearest node and extends the field into
the absorbing collar by edge replication.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .grid import StaggeredGrid

__all__ = [
    "VelocityModel",
    "homogeneous_model",
    "gen_corner_model",
    "save_velocity",
    "load_velocity",
]


@dataclass(frozen=True)
class VelocityModel:
    """Velocity field sampled at collocated grid nodes.

    Attributes:
        grid: geometry the samples live on.
        c: velocities in km/s, shape ``grid.shape_u``.
    """

    grid: StaggeredGrid
    c: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        if self.c.shape != self.grid.shape_u:
            raise ValueError(
                f"velocity shape {self.c.shape} does not match grid {self.grid.shape_u}"
            )
        if not np.all(np.isfinite(self.c)) or np.any(self.c <= 0.0):
            raise ValueError("velocities must be finite and positive")

    @property
    def c_min(self) -> float:
        return float(self.c.min())

    @property
    def c_max(self) -> float:
        return float(self.c.max())


def homogeneous_model(grid: StaggeredGrid, c_km_s: float) -> VelocityModel:
    """Constant-velocity medium."""
    return VelocityModel(grid, np.full(grid.shape_u, float(c_km_s)))


def gen_corner_model(
    grid: StaggeredGrid, c_bg: float = 1.5, c_block: float = 4.5
) -> VelocityModel:
    """High-contrast medium with an L-shaped fast block and a reentrant corner.

    The block occupies all depths below 2.4 km plus, for x beyond 2.4 km, the
    shallower band below 1.2 km, leaving a sharp inner corner at
    (2.4 km, 1.2 km).  Every node carries exactly one of the two velocities.

    Args:
        grid: must span a 4 km x 4 km domain.
        c_bg: background velocity, km/s.
        c_block: block velocity, km/s.
    """
    lx, ly = grid.extent
    if abs(lx - 4.0) > 1e-9 or abs(ly - 4.0) > 1e-9:
        raise ValueError("corner model is defined on a 4 km x 4 km domain")
    x = grid.x_nodes - grid.origin[0]
    depth = grid.depth_nodes - grid.origin[1]
    deep = depth[:, None] >= 2.4
    shoulder = (x[None, :] >= 2.4) & (depth[:, None] >= 1.2)
    c = np.where(deep | shoulder, float(c_block), float(c_bg))
    return VelocityModel(grid, c)


def save_velocity(model: VelocityModel, base_path: str | Path) -> None:
    """Write ``<base>.json`` + ``<base>.f32`` for a model's node samples."""
    base = Path(base_path)
    ny, nx = model.c.shape
    header = {
        "nx": nx,
        "ny": ny,
        "dx_km": model.grid.dx,
        "origin_km": [model.grid.origin[0], model.grid.origin[1]],
        "units": "km/s",
    }
    base.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")
    # x slow, depth fast: payload is the transposed array in C order
    payload = np.ascontiguousarray(model.c.T, dtype="<f4")
    base.with_suffix(".f32").write_bytes(payload.tobytes())


def load_velocity(base_path: str | Path, grid: StaggeredGrid) -> VelocityModel:
    """Load a velocity file pair and resample it onto ``grid``.

    Grid nodes are mapped to the nearest file sample; nodes outside the file
    lattice (the absorbing collar in particular) replicate the nearest edge
    sample.

    Raises:
        ValueError: malformed header, payload size mismatch, or non-positive
            velocities.
    """
    base = Path(base_path)
    header_path = base.with_suffix(".json")
    payload_path = base.with_suffix(".f32")
    try:
        header = json.loads(header_path.read_text())
    except OSError as exc:
        raise ValueError(f"cannot read velocity header {header_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed velocity header {header_path}: {exc}") from exc

    try:
        nx = int(header["nx"])
        ny = int(header["ny"])
        dx_file = float(header["dx_km"])
        ox, oy = (float(v) for v in header["origin_km"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"velocity header {header_path} is missing fields: {exc}") from exc
    if header.get("units") != "km/s":
        raise ValueError("velocity payload must be declared in km/s")
    if nx < 1 or ny < 1 or dx_file <= 0.0:
        raise ValueError("velocity header declares an empty or degenerate lattice")

    try:
        raw = payload_path.read_bytes()
    except OSError as exc:
        raise ValueError(f"cannot read velocity payload {payload_path}: {exc}") from exc
    expected = nx * ny * 4
    if len(raw) != expected:
        raise ValueError(
            f"velocity payload is {len(raw)} bytes, header implies {expected}"
        )
    samples = (
        np.frombuffer(raw, dtype="<f4").reshape(nx, ny).T.astype(np.float64)
    )
    if np.any(samples <= 0.0) or not np.all(np.isfinite(samples)):
        raise ValueError("velocity payload contains non-positive or non-finite values")

    # nearest-sample indices, clamped: clamping is the edge replication
    ix = np.clip(np.round((grid.x_nodes - ox) / dx_file).astype(int), 0, nx - 1)
    jy = np.clip(np.round((grid.depth_nodes - oy) / dx_file).astype(int), 0, ny - 1)
    c = samples[np.ix_(jy, ix)]
    return VelocityModel(grid, c)
