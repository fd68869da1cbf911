"""Config parsing, reference caching, scan pipelines, and CSV emission."""

import json
import math

import numpy as np
import pytest

from expwave.grid import StaggeredGrid
from expwave.integrators import Scheme, SchemeConfig
from expwave.medium import gen_corner_model, homogeneous_model, save_velocity
from expwave import experiment as ex


def toy_dict(**overrides):
    data = {
        "name": "toy",
        "extent_x_km": 0.24,
        "extent_depth_km": 0.2,
        "dx_km": 0.02,
        "t_total_s": 0.02,
        "velocity": {"kind": "homogeneous", "c_km_s": 1.8},
        "source": {"x_km": 0.12, "depth_km": 0.08, "f_m_hz": 40.0, "t0_s": 0.02},
        "receivers": None,
        "scheme": {"name": "rk44", "dt_s": 2.5e-4},
        "pml": {"delta_km": 0.0},
        "reference": {"scheme": "rk97", "dx_km": 0.01},
    }
    data.update(overrides)
    return data


def toy_config(**overrides):
    return ex.config_from_dict(toy_dict(**overrides))


RECEIVERS = {
    "depth_km": 0.08,
    "x_km": [0.06, 0.18],
    "sample_interval_s": 1e-3,
}


# -- config parsing --------------------------------------------------------------


def test_config_round_trips_through_dict():
    cfg = toy_config(receivers=RECEIVERS)
    assert ex.config_from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "mutate,fragment",
    [
        (lambda d: d.pop("name"), "'name'"),
        (lambda d: d.update(dx_km=-0.02), "'dx_km'"),
        (lambda d: d.update(extent_x_km=0.25), "'extent_x_km'"),
        (lambda d: d["velocity"].update(kind="magic"), "'velocity.kind'"),
        (lambda d: d["velocity"].pop("c_km_s"), "'velocity.c_km_s'"),
        (lambda d: d["source"].pop("f_m_hz"), "'source.f_m_hz'"),
        (lambda d: d["scheme"].update(name="rk5"), "'scheme.name'"),
        (lambda d: d["scheme"].update(degree=2.5), "'scheme.degree'"),
        (lambda d: d["reference"].update(dx_km=0.015), "'reference.dx_km'"),
        (lambda d: d.update(pml={"delta_km": -1.0}), "'pml.delta_km'"),
        (lambda d: d.update(receivers={"depth_km": 0.1, "x_km": [],
                                       "sample_interval_s": 1e-3}), "'receivers.x_km'"),
    ],
)
def test_config_errors_name_the_field(mutate, fragment):
    data = toy_dict()
    mutate(data)
    with pytest.raises(ValueError, match=fragment):
        ex.config_from_dict(data)


def test_generator_velocity_kind():
    cfg = toy_config(
        extent_x_km=4.0,
        extent_depth_km=4.0,
        dx_km=0.5,
        reference={"scheme": "rk97", "dx_km": 0.25},
        source={"x_km": 2.0, "depth_km": 2.0, "f_m_hz": 10.0, "t0_s": 0.1},
    )
    cfg = ex.config_from_dict({**cfg.to_dict(), "velocity": {"kind": "generator", "generator": "corner"}})
    model = ex.build_model(cfg, ex.build_grid(cfg))
    assert set(np.unique(model.c)) == {1.5, 4.5}
    assert ex.dt_floor(cfg) == 0.5 / (8.0 * 4.5)
    with pytest.raises(ValueError, match="generator"):
        ex.config_from_dict({**cfg.to_dict(), "velocity": {"kind": "generator", "generator": "mystery"}})


def test_file_velocity_resolves_against_config_dir(tmp_path):
    grid = StaggeredGrid(nx=12, ny=10, dx=0.02)
    save_velocity(homogeneous_model(grid, 2.2), tmp_path / "medium")
    data = toy_dict(velocity={"kind": "file", "path": "medium"})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    cfg = ex.load_config(path)
    model = ex.build_model(cfg, ex.build_grid(cfg))
    assert np.all(model.c == pytest.approx(2.2, rel=1e-6))


def test_load_config_reports_parse_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "name": "x",,\n}\n')
    with pytest.raises(ValueError, match="line 2"):
        ex.load_config(path)
    with pytest.raises(ValueError, match="cannot read"):
        ex.load_config(tmp_path / "absent.json")
    array = tmp_path / "arr.json"
    array.write_text("[1, 2]")
    with pytest.raises(ValueError, match="JSON object"):
        ex.load_config(array)


def test_parse_scheme_list():
    assert ex.parse_scheme_list("leapfrog,rk44") == [
        (Scheme.LEAPFROG, None),
        (Scheme.RK4_4, None),
    ]
    assert ex.parse_scheme_list("faber:5..25") == [
        (Scheme.FABER, d) for d in (5, 10, 15, 20, 25)
    ]
    assert ex.parse_scheme_list("hork:3..9..3") == [
        (Scheme.HORK, d) for d in (3, 6, 9)
    ]
    assert ex.parse_scheme_list("krylov:25, rk97") == [
        (Scheme.KRYLOV, 25),
        (Scheme.RK9_7, None),
    ]
    for bad in ("faber", "rk44:3", "nope", "faber:9..5", "hork:5..25..0", ""):
        with pytest.raises(ValueError):
            ex.parse_scheme_list(bad)


# -- builders ---------------------------------------------------------------------


def test_build_grid_and_reference_grid():
    cfg = toy_config()
    grid = ex.build_grid(cfg)
    assert (grid.nx, grid.ny, grid.dx) == (12, 10, 0.02)
    fine = ex.build_grid(cfg, cfg.reference.dx_km)
    assert (fine.nx, fine.ny, fine.dx) == (24, 20, 0.01)
    assert ex.build_receivers(cfg, grid) is None


def test_build_source_and_receivers():
    cfg = toy_config(receivers=RECEIVERS)
    grid = ex.build_grid(cfg)
    src = ex.build_source(cfg, grid)
    assert src.wavelet.f_m == 40.0 and src.wavelet.t0 == 0.02
    assert src.node == grid.nearest_node(0.12, 0.08)
    rx = ex.build_receivers(cfg, grid)
    assert rx is not None and len(rx.nodes) == 2


# -- dt snapping and floors ----------------------------------------------------------


def test_snap_dt():
    assert ex.snap_dt(0.02, 0.03) == 0.02
    assert ex.snap_dt(0.1, 0.03) == pytest.approx(0.025, rel=1e-15)
    assert ex.snap_dt(0.1, 0.025) == pytest.approx(0.025, rel=1e-15)
    out = ex.snap_dt(0.15, 8.333e-4)
    assert out <= 8.333e-4 * (1 + 1e-12)
    assert abs(0.15 / out - round(0.15 / out)) < 1e-9


def test_dt_floor_homogeneous():
    assert ex.dt_floor(toy_config()) == 0.02 / (8.0 * 1.8)


# -- reference runs ----------------------------------------------------------------


def test_reference_key_tracks_only_shaping_fields():
    base = toy_config()
    key = ex.reference_key(base)
    assert len(key) == 16
    assert ex.reference_key(toy_config(name="other")) == key
    assert ex.reference_key(toy_config(scheme={"name": "hork", "degree": 7, "dt_s": 1e-3})) == key
    moved = toy_config(source={"x_km": 0.10, "depth_km": 0.08, "f_m_hz": 40.0, "t0_s": 0.02})
    assert ex.reference_key(moved) != key
    deeper = toy_config(scheme={"name": "rk44", "dt_s": 2.5e-4, "p": 5})
    assert ex.reference_key(deeper) != key  # augmentation depth shapes exponential refs


def test_reference_cache_round_trip(tmp_path, monkeypatch):
    cfg = toy_config(receivers=RECEIVERS)
    ref = ex.load_or_build_reference(cfg, cache_dir=tmp_path)
    assert ref.dx_km == 0.01
    assert ref.t_end == pytest.approx(0.02)
    assert ref.traces is not None and ref.traces.shape[1] == 2
    files = list(tmp_path.glob("ref-*.npz"))
    assert len(files) == 1

    def boom(*args, **kwargs):
        raise AssertionError("reference should come from the cache")

    monkeypatch.setattr(ex, "run_once", boom)
    again = ex.load_or_build_reference(cfg, cache_dir=tmp_path)
    assert np.array_equal(again.u, ref.u)
    assert np.array_equal(again.traces, ref.traces)


def test_run_once_reuses_operator():
    cfg = toy_config()
    grid = ex.build_grid(cfg)
    op = ex.build_operator(cfg, grid)
    arts = ex.run_once(cfg, op=op)
    assert arts.op is op and arts.grid is grid
    assert arts.result.n_steps == 80
    half = ex.run_once(cfg, scheme=SchemeConfig(scheme=Scheme.RK4_4, dt=5e-4), op=op)
    assert half.result.n_steps == 40


# -- scan pipeline -----------------------------------------------------------------


def test_scan_runner_memoizes_repeat_evaluations():
    cfg = toy_config()
    runner = ex._ScanRunner(cfg, "snapshot", None)
    first = runner.error_at(Scheme.RK4_4, None, 1e-3)
    spent = runner.op.counter.mvos
    second = runner.error_at(Scheme.RK4_4, None, 1e-3)
    assert second == first
    assert runner.op.counter.mvos == spent


def test_scan_runner_rejects_unknown_metric():
    with pytest.raises(ValueError, match="metric"):
        ex._ScanRunner(toy_config(), "psnr", None)


def test_spatial_floor_is_min_over_schemes():
    cfg = toy_config()
    runner = ex._ScanRunner(cfg, "snapshot", None)
    schemes = [(Scheme.RK4_4, None), (Scheme.FABER, 8)]
    floor = ex.spatial_floor(cfg, schemes, runner=runner)
    dt = ex.dt_floor(cfg)
    singles = [runner.error_at(s, d, dt) for s, d in schemes]
    assert floor == min(singles)


def test_find_dt_max_bracketing_on_a_real_run():
    cfg = toy_config()
    runner = ex._ScanRunner(cfg, "snapshot", None)
    floor = ex.spatial_floor(cfg, [(Scheme.RK4_4, None)], runner=runner)
    tol = 1.5 * floor
    res = ex.find_dt_max(cfg, "snapshot", tol, scheme=Scheme.RK4_4, runner=runner)
    errs = dict(res.scan)
    assert errs[res.dt_max] <= tol
    larger = [dt for dt in errs if dt > res.dt_max]
    assert larger and all(
        not math.isfinite(errs[dt]) or errs[dt] > tol for dt in (min(larger),)
    )
    for dt, _ in res.scan:
        assert abs(cfg.t_total_s / dt - round(cfg.t_total_s / dt)) < 1e-9
    assert res.scheme == "rk44" and res.degree == 4
    assert res.metric == "snapshot" and res.tolerance == tol


def test_dtmax_pipeline_rows_and_derived_tolerance():
    cfg = toy_config()
    schemes = [(Scheme.RK4_4, None), (Scheme.FABER, 8)]
    rows, tol = ex.dtmax_pipeline(cfg, schemes)
    runner = ex._ScanRunner(cfg, "snapshot", None)
    assert tol == 1.5 * ex.spatial_floor(cfg, schemes, runner=runner)
    assert [r.result.scheme for r in rows] == ["rk44", "faber"]
    for row in rows:
        stages = row.result.degree
        assert row.cost.n_op == stages / row.result.dt_max
        assert row.cost.n_mem == cfg.t_total_s / row.result.dt_max
    assert not rows[0].cost.krylov_cost_excluded


def test_dtmax_pipeline_raises_when_everything_diverges(monkeypatch):
    class Hopeless:
        def __init__(self, *args, **kwargs):
            pass

        def error_at(self, scheme, degree, dt):
            return math.inf

    monkeypatch.setattr(ex, "_ScanRunner", Hopeless)
    with pytest.raises(RuntimeError, match="floor"):
        ex.dtmax_pipeline(toy_config(), [(Scheme.RK4_4, None)])


def test_run_pipeline_metrics():
    arts, errors = ex.run_pipeline(toy_config(receivers=RECEIVERS))
    assert set(errors) == {"snapshot", "seismogram"}
    assert all(math.isfinite(v) for v in errors.values())
    assert arts.receivers.traces().shape == (21, 2)


def test_dispersion_pipeline_needs_receivers():
    with pytest.raises(ValueError, match="receivers"):
        ex.dispersion_pipeline(toy_config(), [(Scheme.RK4_4, None)])


def test_dispersion_pipeline_rows():
    cfg = toy_config(receivers=RECEIVERS)
    out = ex.dispersion_pipeline(cfg, [(Scheme.RK4_4, None), (Scheme.HORK, 6)])
    assert [(s, d) for s, d, _, _ in out] == [(Scheme.RK4_4, None), (Scheme.HORK, 6)]
    for _, _, dt, comparison in out:
        assert dt == cfg.scheme.dt
        assert math.isfinite(comparison.dispersion_error)
        assert np.any(comparison.mask)


# -- CSV emission -----------------------------------------------------------------


def test_format_float_17g():
    assert ex.format_float(0.1) == "0.10000000000000001"
    assert ex.format_float(2.0) == "2"


def read_lines(path):
    return path.read_text().splitlines()


def test_error_csv_schema_and_determinism(tmp_path):
    rows = [("rk44", 4, 1e-3, 2.5e-7, "snapshot")]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    ex.write_error_csv(a, rows)
    ex.write_error_csv(b, rows)
    assert a.read_bytes() == b.read_bytes()
    header, line = read_lines(a)
    assert header == "scheme,degree,dt_s,error,metric"
    assert line == "rk44,4,0.001,2.4999999999999999e-07,snapshot"


def test_dtmax_and_scan_csv(tmp_path):
    cfg = toy_config()
    rows, _ = ex.dtmax_pipeline(cfg, [(Scheme.FABER, 8)])
    out = tmp_path / "dtmax.csv"
    ex.write_dtmax_csv(out, rows)
    header, line = read_lines(out)
    assert header == "scheme,degree,dt_max_s,n_op_per_s,n_mem,krylov_cost_excluded"
    assert line.startswith("faber,8,") and line.endswith(",false")
    scan = tmp_path / "scan.csv"
    ex.write_scan_csv(scan, [r.result for r in rows])
    lines = read_lines(scan)
    assert lines[0] == "scheme,degree,dt_s,error,metric"
    assert len(lines) == 1 + len(rows[0].result.scan)


def test_spectrum_and_summary_csv(tmp_path):
    cfg = toy_config(receivers=RECEIVERS)
    out = ex.dispersion_pipeline(cfg, [(Scheme.RK4_4, None)])
    spec = tmp_path / "spectrum.csv"
    ex.write_spectrum_csv(spec, out[0][3])
    lines = read_lines(spec)
    assert lines[0] == "omega_rad_s,k,l,masked"
    assert len(lines) == 1 + len(out[0][3].omega)
    summary = tmp_path / "summary.csv"
    ex.write_dispersion_summary_csv(summary, out)
    header, line = read_lines(summary)
    assert header == "scheme,degree,dt_s,mask_size,dispersion_error,dissipation_error"
    assert line.startswith("rk44,4,")
