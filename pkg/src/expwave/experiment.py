"""Experiment configuration, reference caching, scan pipelines, CSV output.

Configs are JSON with units suffixed in the key names (dx_km, f_m_hz, ...).
A reference run is cached on disk under a content hash of exactly the fields
that shape it, so every scheme scan against the same setup reuses one
reference.  All CSV emission formats floats with 17 significant digits;
reruns of the same config produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .analysis import (
    CostReport,
    DtMaxResult,
    SignalTrace,
    SpectrumComparison,
    cost_report,
    dispersion_dissipation,
    scan_dt_max,
    seismogram_error,
    snapshot_error,
)
from .grid import PmlProfile, StaggeredGrid
from .integrators import CLASSICAL_STAGES, RunResult, Scheme, SchemeConfig, advance
from .medium import VelocityModel, gen_corner_model, homogeneous_model, load_velocity
from .operator import WaveOperator
from .sources import ReceiverArray, RickerWavelet, SourceInjection

__all__ = [
    "VelocitySpec",
    "SourceSpec",
    "ReceiverSpec",
    "PmlSpec",
    "ReferenceSpec",
    "ExperimentConfig",
    "load_config",
    "config_from_dict",
    "parse_scheme_list",
    "build_grid",
    "build_model",
    "build_operator",
    "build_source",
    "build_receivers",
    "RunArtifacts",
    "run_once",
    "ReferenceData",
    "reference_key",
    "load_or_build_reference",
    "snap_dt",
    "dt_floor",
    "spatial_floor",
    "find_dt_max",
    "DtMaxRow",
    "dtmax_pipeline",
    "dispersion_pipeline",
    "run_pipeline",
    "write_error_csv",
    "write_dtmax_csv",
    "write_scan_csv",
    "write_spectrum_csv",
    "write_dispersion_summary_csv",
    "format_float",
]

METRICS = ("snapshot", "seismogram", "dispersion", "dissipation")


def _field(data: dict, key: str, context: str):
    if key not in data:
        raise ValueError(f"config field '{context}{key}' is missing")
    return data[key]


def _number(data: dict, key: str, context: str, positive: bool = False) -> float:
    value = _field(data, key, context)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValueError(f"config field '{context}{key}' must be a number")
    value = float(value)
    if positive and value <= 0.0:
        raise ValueError(f"config field '{context}{key}' must be positive")
    return value


def _optional_number(data: dict, key: str, context: str) -> float | None:
    if data.get(key) is None:
        return None
    return _number(data, key, context)


@dataclass(frozen=True)
class VelocitySpec:
    """Where the medium comes from: a constant, a file pair, or a generator."""

    kind: str
    c_km_s: float | None = None
    path: str | None = None
    generator: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "c_km_s": self.c_km_s,
            "path": self.path,
            "generator": self.generator,
        }


@dataclass(frozen=True)
class SourceSpec:
    x_km: float
    depth_km: float
    f_m_hz: float
    t0_s: float

    def to_dict(self) -> dict:
        return {
            "x_km": self.x_km,
            "depth_km": self.depth_km,
            "f_m_hz": self.f_m_hz,
            "t0_s": self.t0_s,
        }


@dataclass(frozen=True)
class ReceiverSpec:
    depth_km: float
    x_km: tuple[float, ...]
    sample_interval_s: float
    t_start_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "depth_km": self.depth_km,
            "x_km": list(self.x_km),
            "sample_interval_s": self.sample_interval_s,
            "t_start_s": self.t_start_s,
        }


@dataclass(frozen=True)
class PmlSpec:
    delta_km: float = 0.0
    beta0: float | None = None

    def to_dict(self) -> dict:
        return {"delta_km": self.delta_km, "beta0": self.beta0}


@dataclass(frozen=True)
class ReferenceSpec:
    """Settings of the fine-grid reference run."""

    scheme: Scheme = Scheme.RK9_7
    degree: int | None = None
    dx_km: float = 0.0
    dt_s: float | None = None

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "degree": self.degree,
            "dx_km": self.dx_km,
            "dt_s": self.dt_s,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    extent_x_km: float
    extent_depth_km: float
    dx_km: float
    velocity: VelocitySpec
    source: SourceSpec
    receivers: ReceiverSpec | None
    t_total_s: float
    scheme: SchemeConfig
    pml: PmlSpec
    reference: ReferenceSpec

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "extent_x_km": self.extent_x_km,
            "extent_depth_km": self.extent_depth_km,
            "dx_km": self.dx_km,
            "velocity": self.velocity.to_dict(),
            "source": self.source.to_dict(),
            "receivers": self.receivers.to_dict() if self.receivers else None,
            "t_total_s": self.t_total_s,
            "scheme": scheme_to_dict(self.scheme),
            "pml": self.pml.to_dict(),
            "reference": self.reference.to_dict(),
        }


def scheme_to_dict(cfg: SchemeConfig) -> dict:
    return {
        "name": cfg.scheme.value,
        "degree": cfg.degree,
        "dt_s": cfg.dt,
        "p": cfg.p,
        "dt_coarse_s": cfg.dt_coarse,
        "t_switch_s": cfg.t_switch,
    }


def scheme_from_dict(data: dict, context: str = "scheme.") -> SchemeConfig:
    name = _field(data, "name", context)
    try:
        scheme = Scheme(name)
    except ValueError:
        valid = ", ".join(s.value for s in Scheme)
        raise ValueError(
            f"config field '{context}name': unknown scheme '{name}' (one of {valid})"
        ) from None
    degree = data.get("degree")
    if degree is not None:
        if not isinstance(degree, int) or isinstance(degree, bool):
            raise ValueError(f"config field '{context}degree' must be an integer")
    try:
        return SchemeConfig(
            scheme=scheme,
            dt=_number(data, "dt_s", context, positive=True),
            degree=degree,
            p=int(data.get("p", 3)),
            dt_coarse=_optional_number(data, "dt_coarse_s", context),
            t_switch=_optional_number(data, "t_switch_s", context),
        )
    except ValueError as exc:
        raise ValueError(f"config field '{context}*': {exc}") from None


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a parsed config; messages name the offending field."""
    name = _field(data, "name", "")
    if not isinstance(name, str) or not name:
        raise ValueError("config field 'name' must be a nonempty string")

    vel_data = _field(data, "velocity", "")
    kind = _field(vel_data, "kind", "velocity.")
    if kind == "homogeneous":
        velocity = VelocitySpec(kind, c_km_s=_number(vel_data, "c_km_s", "velocity.", positive=True))
    elif kind == "file":
        path = _field(vel_data, "path", "velocity.")
        if base_dir is not None and not Path(path).is_absolute():
            path = str(base_dir / path)
        velocity = VelocitySpec(kind, path=path)
    elif kind == "generator":
        gen = _field(vel_data, "generator", "velocity.")
        if gen != "corner":
            raise ValueError(
                f"config field 'velocity.generator': unknown generator '{gen}'"
            )
        velocity = VelocitySpec(kind, generator=gen)
    else:
        raise ValueError(
            f"config field 'velocity.kind': '{kind}' is not homogeneous|file|generator"
        )

    src_data = _field(data, "source", "")
    source = SourceSpec(
        x_km=_number(src_data, "x_km", "source."),
        depth_km=_number(src_data, "depth_km", "source."),
        f_m_hz=_number(src_data, "f_m_hz", "source.", positive=True),
        t0_s=_number(src_data, "t0_s", "source."),
    )

    receivers = None
    if data.get("receivers") is not None:
        rx = data["receivers"]
        xs = _field(rx, "x_km", "receivers.")
        if not isinstance(xs, list) or not xs:
            raise ValueError("config field 'receivers.x_km' must be a nonempty list")
        receivers = ReceiverSpec(
            depth_km=_number(rx, "depth_km", "receivers."),
            x_km=tuple(float(x) for x in xs),
            sample_interval_s=_number(rx, "sample_interval_s", "receivers.", positive=True),
            t_start_s=float(rx.get("t_start_s", 0.0)),
        )

    pml_data = data.get("pml") or {}
    pml = PmlSpec(
        delta_km=float(pml_data.get("delta_km", 0.0)),
        beta0=_optional_number(pml_data, "beta0", "pml."),
    )
    if pml.delta_km < 0.0:
        raise ValueError("config field 'pml.delta_km' must be nonnegative")

    ref_data = _field(data, "reference", "")
    ref_scheme_name = ref_data.get("scheme", "rk97")
    try:
        ref_scheme = Scheme(ref_scheme_name)
    except ValueError:
        raise ValueError(
            f"config field 'reference.scheme': unknown scheme '{ref_scheme_name}'"
        ) from None
    reference = ReferenceSpec(
        scheme=ref_scheme,
        degree=ref_data.get("degree"),
        dx_km=_number(ref_data, "dx_km", "reference.", positive=True),
        dt_s=_optional_number(ref_data, "dt_s", "reference."),
    )

    config = ExperimentConfig(
        name=name,
        extent_x_km=_number(data, "extent_x_km", "", positive=True),
        extent_depth_km=_number(data, "extent_depth_km", "", positive=True),
        dx_km=_number(data, "dx_km", "", positive=True),
        velocity=velocity,
        source=source,
        receivers=receivers,
        t_total_s=_number(data, "t_total_s", "", positive=True),
        scheme=scheme_from_dict(_field(data, "scheme", "")),
        pml=pml,
        reference=reference,
    )
    _validate_geometry(config)
    return config


def _validate_geometry(config: ExperimentConfig) -> None:
    for key, extent in (
        ("extent_x_km", config.extent_x_km),
        ("extent_depth_km", config.extent_depth_km),
    ):
        cells = extent / config.dx_km
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ValueError(
                f"config field '{key}': {extent} km is not a whole number of"
                f" dx_km = {config.dx_km} km cells"
            )
    ratio = config.dx_km / config.reference.dx_km
    if ratio < 1.0 - 1e-12 or abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise ValueError(
            "config field 'reference.dx_km': must divide dx_km exactly"
            f" (got {config.reference.dx_km} vs {config.dx_km})"
        )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON experiment config.

    Raises:
        ValueError: parse errors (with line/column) or invalid fields.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(
            f"config parse error in {path} at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    return config_from_dict(data, base_dir=path.parent)


def parse_scheme_list(spec: str) -> list[tuple[Scheme, int | None]]:
    """Parse a CLI scheme list like 'leapfrog,rk44,faber:5..25,hork:7'.

    Degree ranges 'a..b' are inclusive with step 5 (matching the scan
    families), 'a..b..s' sets the step, and 'a,b,c' inside the degree slot
    is not supported — repeat the scheme token instead.
    """
    out: list[tuple[Scheme, int | None]] = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        name, _, deg = token.partition(":")
        try:
            scheme = Scheme(name)
        except ValueError:
            valid = ", ".join(s.value for s in Scheme)
            raise ValueError(f"unknown scheme '{name}' (one of {valid})") from None
        if not deg:
            if scheme in CLASSICAL_STAGES:
                out.append((scheme, None))
                continue
            raise ValueError(f"scheme '{name}' needs a degree, e.g. {name}:10")
        if scheme in CLASSICAL_STAGES:
            raise ValueError(f"scheme '{name}' has a fixed stage count")
        if ".." in deg:
            parts = deg.split("..")
            if len(parts) == 2:
                start, stop, step = int(parts[0]), int(parts[1]), 5
            elif len(parts) == 3:
                start, stop, step = int(parts[0]), int(parts[1]), int(parts[2])
            else:
                raise ValueError(f"bad degree range '{deg}'")
            if step < 1 or stop < start:
                raise ValueError(f"bad degree range '{deg}'")
            out.extend((scheme, d) for d in range(start, stop + 1, step))
        else:
            out.append((scheme, int(deg)))
    if not out:
        raise ValueError("empty scheme list")
    return out


# ---------------------------------------------------------------------------
# builders


def build_grid(config: ExperimentConfig, dx_km: float | None = None) -> StaggeredGrid:
    dx = config.dx_km if dx_km is None else dx_km
    return StaggeredGrid(
        nx=round(config.extent_x_km / dx),
        ny=round(config.extent_depth_km / dx),
        dx=dx,
        pml_thickness=config.pml.delta_km,
    )


def build_model(config: ExperimentConfig, grid: StaggeredGrid) -> VelocityModel:
    spec = config.velocity
    if spec.kind == "homogeneous":
        return homogeneous_model(grid, spec.c_km_s)
    if spec.kind == "file":
        return load_velocity(spec.path, grid)
    return gen_corner_model(grid)


def build_operator(config: ExperimentConfig, grid: StaggeredGrid) -> WaveOperator:
    model = build_model(config, grid)
    pml = PmlProfile.for_grid(grid, beta0=config.pml.beta0, c_max=model.c_max)
    return WaveOperator(model, pml)


def build_source(config: ExperimentConfig, grid: StaggeredGrid) -> SourceInjection:
    wavelet = RickerWavelet(f_m=config.source.f_m_hz, t0=config.source.t0_s)
    return SourceInjection(
        grid, (config.source.x_km, config.source.depth_km), wavelet
    )


def build_receivers(config: ExperimentConfig, grid: StaggeredGrid) -> ReceiverArray | None:
    spec = config.receivers
    if spec is None:
        return None
    return ReceiverArray(
        grid,
        [(x, spec.depth_km) for x in spec.x_km],
        sample_interval=spec.sample_interval_s,
        t_start=spec.t_start_s,
    )


# ---------------------------------------------------------------------------
# running


@dataclass
class RunArtifacts:
    grid: StaggeredGrid
    op: WaveOperator
    source: SourceInjection
    receivers: ReceiverArray | None
    result: RunResult


def run_once(
    config: ExperimentConfig,
    scheme: SchemeConfig | None = None,
    dx_km: float | None = None,
    op: WaveOperator | None = None,
) -> RunArtifacts:
    """One forward run; pass an operator to reuse its precomputation."""
    scheme = scheme or config.scheme
    if op is None:
        grid = build_grid(config, dx_km)
        op = build_operator(config, grid)
    else:
        grid = op.grid
    source = build_source(config, grid)
    receivers = build_receivers(config, grid)
    recorders = [receivers] if receivers is not None else []
    result = advance(scheme, op, source, config.t_total_s, recorders=recorders)
    return RunArtifacts(grid=grid, op=op, source=source, receivers=receivers, result=result)


# ---------------------------------------------------------------------------
# reference runs


@dataclass
class ReferenceData:
    """Cached fine-grid reference: final field plus receiver traces."""

    u: NDArray
    traces: NDArray | None
    dx_km: float
    t_end: float

    def grid_for(self, config: ExperimentConfig) -> StaggeredGrid:
        return build_grid(config, self.dx_km)


def _reference_scheme(config: ExperimentConfig) -> SchemeConfig:
    ref = config.reference
    dt = ref.dt_s
    if dt is None:
        # fine-grid floor step, snapped so the run ends exactly at T
        dt = snap_dt(config.t_total_s, ref.dx_km / (8.0 * _c_max(config)))
    degree = ref.degree if ref.scheme not in CLASSICAL_STAGES else None
    return SchemeConfig(scheme=ref.scheme, dt=dt, degree=degree, p=config.scheme.p)


def _c_max(config: ExperimentConfig) -> float:
    spec = config.velocity
    if spec.kind == "homogeneous":
        return spec.c_km_s
    if spec.kind == "generator":
        return 4.5
    # file media: sample on the coarse grid once
    grid = build_grid(config)
    return load_velocity(spec.path, grid).c_max


def reference_key(config: ExperimentConfig) -> str:
    """Content hash of exactly the fields that shape the reference run."""
    subset = {
        "extent_x_km": config.extent_x_km,
        "extent_depth_km": config.extent_depth_km,
        "velocity": config.velocity.to_dict(),
        "source": config.source.to_dict(),
        "receivers": config.receivers.to_dict() if config.receivers else None,
        "t_total_s": config.t_total_s,
        "pml": config.pml.to_dict(),
        "reference": config.reference.to_dict(),
        "p": config.scheme.p,
    }
    blob = json.dumps(subset, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_or_build_reference(
    config: ExperimentConfig, cache_dir: str | Path | None = None
) -> ReferenceData:
    """Run (or reload) the fine-grid reference for this config."""
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"ref-{reference_key(config)}.npz"
        if cache_path.exists():
            with np.load(cache_path, allow_pickle=False) as data:
                traces = data["traces"] if data["traces"].size else None
                return ReferenceData(
                    u=data["u"],
                    traces=traces,
                    dx_km=float(data["dx_km"]),
                    t_end=float(data["t_end"]),
                )
    arts = run_once(config, scheme=_reference_scheme(config), dx_km=config.reference.dx_km)
    traces = arts.receivers.traces() if arts.receivers is not None else None
    ref = ReferenceData(
        u=arts.result.state.u,
        traces=traces,
        dx_km=config.reference.dx_km,
        t_end=arts.result.t_end,
    )
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(
            cache_path,
            u=ref.u,
            traces=ref.traces if ref.traces is not None else np.empty((0, 0)),
            dx_km=ref.dx_km,
            t_end=ref.t_end,
        )
    return ref


# ---------------------------------------------------------------------------
# metrics against the reference


def _trace_pair(
    arts: RunArtifacts, ref: ReferenceData, config: ExperimentConfig
) -> tuple[SignalTrace, SignalTrace]:
    if arts.receivers is None or ref.traces is None:
        raise ValueError("this metric needs receivers in the config")
    interval = config.receivers.sample_interval_s
    t0 = config.receivers.t_start_s
    return (
        SignalTrace(ref.traces[:, 0], interval, t0),
        SignalTrace(arts.receivers.traces()[:, 0], interval, t0),
    )


def metric_error(
    metric: str, arts: RunArtifacts, ref: ReferenceData, config: ExperimentConfig
) -> float:
    """Evaluate one run against the reference under the chosen metric."""
    if metric == "snapshot":
        return snapshot_error(
            arts.result.state, ref, arts.grid, ref.grid_for(config)
        )
    if metric == "seismogram":
        if arts.receivers is None or ref.traces is None:
            raise ValueError("seismogram metric needs receivers in the config")
        return seismogram_error(arts.receivers.traces(), ref.traces)
    if metric in ("dispersion", "dissipation"):
        ref_trace, appr_trace = _trace_pair(arts, ref, config)
        comparison = dispersion_dissipation(ref_trace, appr_trace)
        if metric == "dispersion":
            return comparison.dispersion_error
        return comparison.dissipation_error
    raise ValueError(f"unknown metric '{metric}' (one of {', '.join(METRICS)})")


# ---------------------------------------------------------------------------
# dt_max pipeline


def snap_dt(t_total: float, dt: float) -> float:
    """Largest exact divisor of t_total that is <= dt.

    Scanned steps are snapped so every run ends exactly at T and snapshots
    compare at equal times.
    """
    if dt >= t_total:
        return t_total
    n = math.ceil(t_total / dt - 1e-9)
    return t_total / n


def dt_floor(config: ExperimentConfig) -> float:
    """Safe scan floor dx/(8 c_max) on the coarse grid."""
    return config.dx_km / (8.0 * _c_max(config))


def _scheme_config(
    config: ExperimentConfig, scheme: Scheme, degree: int | None, dt: float
) -> SchemeConfig:
    return SchemeConfig(
        scheme=scheme,
        dt=dt,
        degree=degree if scheme not in CLASSICAL_STAGES else None,
        p=config.scheme.p,
    )


def scheme_degree_column(scheme: Scheme, degree: int | None) -> int:
    """CSV degree column: the polynomial degree, or the fixed stage count."""
    if degree is not None:
        return degree
    return CLASSICAL_STAGES[scheme]


class _ScanRunner:
    """Shared operator + reference + memoized metric evaluations."""

    def __init__(
        self,
        config: ExperimentConfig,
        metric: str,
        cache_dir: str | Path | None,
    ) -> None:
        if metric not in METRICS:
            raise ValueError(f"unknown metric '{metric}' (one of {', '.join(METRICS)})")
        self.config = config
        self.metric = metric
        self.grid = build_grid(config)
        self.op = build_operator(config, self.grid)
        self.ref = load_or_build_reference(config, cache_dir)
        self._cache: dict[tuple[Scheme, int | None, float], float] = {}

    def error_at(self, scheme: Scheme, degree: int | None, dt: float) -> float:
        dt = snap_dt(self.config.t_total_s, dt)
        key = (scheme, degree, dt)
        if key in self._cache:
            return self._cache[key]
        scheme_cfg = _scheme_config(self.config, scheme, degree, dt)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                arts = run_once(self.config, scheme=scheme_cfg, op=self.op)
            err = metric_error(self.metric, arts, self.ref, self.config)
        except FloatingPointError:
            # blow-up at this dt (NaN abort or series overflow) = scan failure
            err = math.inf
        if not math.isfinite(err):
            err = math.inf
        self._cache[key] = err
        return err

    def evaluator(self, scheme: Scheme, degree: int | None) -> Callable[[float], float]:
        return lambda dt: self.error_at(scheme, degree, dt)


def spatial_floor(
    config: ExperimentConfig,
    schemes: Sequence[tuple[Scheme, int | None]],
    metric: str = "snapshot",
    cache_dir: str | Path | None = None,
    runner: "_ScanRunner | None" = None,
) -> float:
    """Smallest error any configured scheme reaches at the floor step.

    Every scheme runs once at dt = dx/(8 c_max); the minimum is the spatial
    discretization error estimate that tolerances are derived from (x 1.5).
    """
    runner = runner or _ScanRunner(config, metric, cache_dir)
    floor = dt_floor(config)
    return min(runner.error_at(s, d, floor) for s, d in schemes)


@dataclass
class DtMaxRow:
    result: DtMaxResult
    cost: CostReport


def find_dt_max(
    config: ExperimentConfig,
    metric: str,
    tolerance: float,
    scheme: Scheme | None = None,
    degree: int | None = None,
    cache_dir: str | Path | None = None,
    dt_ceiling: float | None = None,
    runner: "_ScanRunner | None" = None,
) -> DtMaxResult:
    """Scan one scheme's largest stable-and-accurate step.

    Defaults to the scheme in the config; scanned steps are snapped to exact
    divisors of T (see snap_dt), and the refinement stops once consecutive
    divisors meet.
    """
    if scheme is None:
        scheme = config.scheme.scheme
        degree = config.scheme.degree
    runner = runner or _ScanRunner(config, metric, cache_dir)
    ceiling = dt_ceiling if dt_ceiling is not None else config.t_total_s
    dt_max, trace = scan_dt_max(
        runner.evaluator(scheme, degree),
        dt_floor(config),
        ceiling,
        tolerance,
    )
    return DtMaxResult(
        scheme=scheme.value,
        degree=scheme_degree_column(scheme, degree),
        dt_max=snap_dt(config.t_total_s, dt_max),
        tolerance=tolerance,
        metric=metric,
        scan=tuple(
            (snap_dt(config.t_total_s, dt), err) for dt, err in trace
        ),
    )


def dtmax_pipeline(
    config: ExperimentConfig,
    schemes: Sequence[tuple[Scheme, int | None]],
    metric: str = "snapshot",
    tolerance: float | None = None,
    cache_dir: str | Path | None = None,
    dt_ceiling: float | None = None,
) -> tuple[list[DtMaxRow], float]:
    """Scan every scheme in the list against one shared reference.

    A missing tolerance is derived as 1.5 x the spatial floor of the same
    scheme set.  Returns the rows plus the tolerance used.
    """
    runner = _ScanRunner(config, metric, cache_dir)
    if tolerance is None:
        floor_err = spatial_floor(config, schemes, metric, runner=runner)
        if not math.isfinite(floor_err):
            raise RuntimeError("every scheme diverged at the floor step")
        tolerance = 1.5 * floor_err
    rows = []
    for scheme, degree in schemes:
        result = find_dt_max(
            config,
            metric,
            tolerance,
            scheme=scheme,
            degree=degree,
            runner=runner,
            dt_ceiling=dt_ceiling,
        )
        scheme_cfg = _scheme_config(config, scheme, degree, result.dt_max)
        rows.append(
            DtMaxRow(result=result, cost=cost_report(result.dt_max, scheme_cfg, config.t_total_s))
        )
    return rows, tolerance


# ---------------------------------------------------------------------------
# run + dispersion pipelines


def run_pipeline(
    config: ExperimentConfig, cache_dir: str | Path | None = None
) -> tuple[RunArtifacts, dict[str, float]]:
    """Single forward run; errors vs the reference for both base metrics."""
    ref = load_or_build_reference(config, cache_dir)
    arts = run_once(config)
    errors = {"snapshot": metric_error("snapshot", arts, ref, config)}
    if arts.receivers is not None and ref.traces is not None:
        errors["seismogram"] = metric_error("seismogram", arts, ref, config)
    return arts, errors


def dispersion_pipeline(
    config: ExperimentConfig,
    schemes: Sequence[tuple[Scheme, int | None]],
    cache_dir: str | Path | None = None,
) -> list[tuple[Scheme, int | None, float, SpectrumComparison]]:
    """Receiver-spectrum comparison per scheme at the config's dt schedule."""
    if config.receivers is None:
        raise ValueError("dispersion pipeline needs receivers in the config")
    ref = load_or_build_reference(config, cache_dir)
    if ref.traces is None:
        raise ValueError("reference run produced no traces")
    grid = build_grid(config)
    op = build_operator(config, grid)
    out = []
    for scheme, degree in schemes:
        scheme_cfg = replace(
            config.scheme,
            scheme=scheme,
            degree=degree if scheme not in CLASSICAL_STAGES else None,
        )
        arts = run_once(config, scheme=scheme_cfg, op=op)
        ref_trace, appr_trace = _trace_pair(arts, ref, config)
        out.append((scheme, degree, scheme_cfg.dt, dispersion_dissipation(ref_trace, appr_trace)))
    return out


# ---------------------------------------------------------------------------
# CSV emission


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_error_csv(path: str | Path, rows: Sequence[tuple[str, int, float, float, str]]) -> None:
    """Rows of (scheme, degree, dt_s, error, metric)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "degree", "dt_s", "error", "metric"])
        for scheme, degree, dt, error, metric in rows:
            writer.writerow(
                [scheme, degree, format_float(dt), format_float(error), metric]
            )


def write_dtmax_csv(path: str | Path, rows: Sequence[DtMaxRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scheme", "degree", "dt_max_s", "n_op_per_s", "n_mem", "krylov_cost_excluded"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.result.scheme,
                    row.result.degree,
                    format_float(row.result.dt_max),
                    format_float(row.cost.n_op),
                    format_float(row.cost.n_mem),
                    "true" if row.cost.krylov_cost_excluded else "false",
                ]
            )


def write_scan_csv(path: str | Path, results: Sequence[DtMaxResult]) -> None:
    """Every scanned (dt, error) pair, in the shared error-row schema."""
    rows = []
    for res in results:
        for dt, err in res.scan:
            rows.append((res.scheme, res.degree, dt, err, res.metric))
    write_error_csv(path, rows)


def write_spectrum_csv(path: str | Path, comparison: SpectrumComparison) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega_rad_s", "k", "l", "masked"])
        for i in range(len(comparison.omega)):
            writer.writerow(
                [
                    format_float(comparison.omega[i]),
                    format_float(comparison.k_of_omega[i]),
                    format_float(comparison.l_of_omega[i]),
                    "true" if comparison.mask[i] else "false",
                ]
            )


def write_dispersion_summary_csv(
    path: str | Path,
    rows: Sequence[tuple[Scheme, int | None, float, SpectrumComparison]],
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scheme", "degree", "dt_s", "mask_size", "dispersion_error", "dissipation_error"]
        )
        for scheme, degree, dt, comparison in rows:
            writer.writerow(
                [
                    scheme.value,
                    scheme_degree_column(scheme, degree),
                    format_float(dt),
                    int(np.sum(comparison.mask)),
                    format_float(comparison.dispersion_error),
                    format_float(comparison.dissipation_error),
                ]
            )
