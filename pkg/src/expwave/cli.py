"""Command line driver: run, reference, dtmax, dispersion, report, selftest.

Every subcommand writes delimited text with fixed headers; `report` also
renders SVG figures next to its CSV.  Exit status is nonzero on any failed
run or bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiment import (
    dispersion_pipeline,
    dtmax_pipeline,
    load_config,
    load_or_build_reference,
    parse_scheme_list,
    reference_key,
    run_pipeline,
    scheme_degree_column,
    write_dispersion_summary_csv,
    write_dtmax_csv,
    write_error_csv,
    write_scan_csv,
    write_spectrum_csv,
)
from .plots import plot_dtmax_curves, plot_nop_curves

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expwave",
        description="2D acoustic wave propagation with exponential and classical time stepping",
    )
    parser.add_argument("--version", action="version", version=f"expwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="single forward run, errors vs the reference")
    run.add_argument("--config", required=True, help="experiment JSON config")
    run.add_argument("--out-dir", required=True, help="output directory")
    run.add_argument("--cache-dir", default=None, help="reference cache directory")

    ref = sub.add_parser("reference", help="build and cache the reference run")
    ref.add_argument("--config", required=True)
    ref.add_argument("--cache-dir", required=True)

    dtmax = sub.add_parser("dtmax", help="largest admissible step per scheme")
    dtmax.add_argument("--config", required=True)
    dtmax.add_argument(
        "--schemes",
        required=True,
        help="comma list, e.g. leapfrog,rk44,faber:5..25,hork:7",
    )
    dtmax.add_argument(
        "--metric",
        default="snapshot",
        choices=["snapshot", "seismogram", "dispersion", "dissipation"],
    )
    dtmax.add_argument(
        "--tolerance",
        type=float,
        default=None,
        help="error bound; defaults to 1.5 x the spatial floor",
    )
    dtmax.add_argument("--dt-ceiling", type=float, default=None, help="scan ceiling, s")
    dtmax.add_argument("--cache-dir", default=None)
    dtmax.add_argument("--out", required=True, help="result CSV path")
    dtmax.add_argument("--scan-trace", default=None, help="optional scanned-points CSV")

    disp = sub.add_parser("dispersion", help="receiver-spectrum comparison per scheme")
    disp.add_argument("--config", required=True)
    disp.add_argument("--schemes", required=True)
    disp.add_argument("--cache-dir", default=None)
    disp.add_argument("--out-dir", required=True)

    report = sub.add_parser("report", help="cost table, degree curves, annotations")
    report.add_argument("--input", required=True, help="dtmax result CSV")
    report.add_argument("--out-dir", required=True)

    sub.add_parser("selftest", help="run the built-in oracle battery")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    arts, errors = run_pipeline(config, cache_dir=args.cache_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    degree = scheme_degree_column(config.scheme.scheme, config.scheme.degree)
    base = (config.scheme.scheme.value, degree, config.scheme.dt)
    write_error_csv(out_dir / "snapshot.csv", [base + (errors["snapshot"], "snapshot")])
    print(f"snapshot error: {errors['snapshot']:.6e}")
    if "seismogram" in errors:
        write_error_csv(
            out_dir / "seismogram.csv", [base + (errors["seismogram"], "seismogram")]
        )
        print(f"seismogram error: {errors['seismogram']:.6e}")
    if arts.receivers is not None:
        arts.receivers.write_csv(out_dir / "traces.csv")
    print(
        f"run complete: {arts.result.n_steps} steps to t = {arts.result.t_end:.6g} s,"
        f" {arts.result.mvos} sweeps"
    )
    return 0


def _cmd_reference(args) -> int:
    config = load_config(args.config)
    key = reference_key(config)
    load_or_build_reference(config, cache_dir=args.cache_dir)
    print(f"reference cached: {Path(args.cache_dir) / f'ref-{key}.npz'}")
    return 0


def _cmd_dtmax(args) -> int:
    config = load_config(args.config)
    schemes = parse_scheme_list(args.schemes)
    rows, tolerance = dtmax_pipeline(
        config,
        schemes,
        metric=args.metric,
        tolerance=args.tolerance,
        cache_dir=args.cache_dir,
        dt_ceiling=args.dt_ceiling,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dtmax_csv(out, rows)
    if args.scan_trace:
        write_scan_csv(args.scan_trace, [row.result for row in rows])
    print(f"tolerance: {tolerance:.6e} ({args.metric})")
    for row in rows:
        print(
            f"{row.result.scheme}:{row.result.degree} dt_max = {row.result.dt_max:.6e} s"
            f" (N_op = {row.cost.n_op:.4g}/s, N_mem = {row.cost.n_mem:.4g})"
        )
    return 0


def _cmd_dispersion(args) -> int:
    config = load_config(args.config)
    schemes = parse_scheme_list(args.schemes)
    results = dispersion_pipeline(config, schemes, cache_dir=args.cache_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_dispersion_summary_csv(out_dir / "dispersion.csv", results)
    for scheme, degree, dt, comparison in results:
        deg = scheme_degree_column(scheme, degree)
        write_spectrum_csv(out_dir / f"spectrum_{scheme.value}_{deg}.csv", comparison)
        print(
            f"{scheme.value}:{deg} dt = {dt:.4e} s dispersion = "
            f"{comparison.dispersion_error:.4e} dissipation = {comparison.dissipation_error:.4e}"
        )
    return 0


def _cmd_report(args) -> int:
    rows = []
    try:
        with open(args.input, newline="") as fh:
            reader = csv.DictReader(fh)
            for line in reader:
                rows.append(
                    {
                        "scheme": line["scheme"],
                        "degree": int(line["degree"]),
                        "dt_max_s": float(line["dt_max_s"]),
                        "n_op_per_s": float(line["n_op_per_s"]),
                        "n_mem": float(line["n_mem"]),
                        "krylov_cost_excluded": line["krylov_cost_excluded"],
                    }
                )
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: cannot read dtmax CSV {args.input}: {exc}", file=sys.stderr)
        return 1
    if not rows:
        print("error: dtmax CSV holds no rows", file=sys.stderr)
        return 1
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "cost.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scheme", "degree", "dt_max_s", "n_op_per_s", "n_mem", "krylov_cost_excluded"]
        )
        for row in rows:
            writer.writerow(
                [
                    row["scheme"],
                    row["degree"],
                    format(row["dt_max_s"], ".17g"),
                    format(row["n_op_per_s"], ".17g"),
                    format(row["n_mem"], ".17g"),
                    row["krylov_cost_excluded"],
                ]
            )
    plot_dtmax_curves(
        [(r["scheme"], r["degree"], r["dt_max_s"]) for r in rows], out_dir / "dt_max.svg"
    )
    plot_nop_curves(
        [(r["scheme"], r["degree"], r["n_op_per_s"]) for r in rows], out_dir / "n_op.svg"
    )
    min_row = min(rows, key=lambda r: r["n_op_per_s"])
    notes = {
        "leapfrog_n_op_minimum": min_row["scheme"] == "leapfrog",
        "n_op_minimum_scheme": min_row["scheme"],
        "n_op_minimum_degree": min_row["degree"],
    }
    (out_dir / "report_notes.json").write_text(json.dumps(notes, indent=2) + "\n")
    print(f"cost table: {out_dir / 'cost.csv'}")
    print(f"figures: {out_dir / 'dt_max.svg'}, {out_dir / 'n_op.svg'}")
    print(
        "lowest sweep rate: "
        f"{min_row['scheme']}:{min_row['degree']} at {min_row['n_op_per_s']:.4g}/s"
    )
    return 0


# ---------------------------------------------------------------------------
# selftest


def _selftest() -> int:
    """Small oracle battery over the numerical core; prints ok/FAIL lines."""
    from .kernels import faber_expmv, faber_series, hork_lambda, krylov_expmv, pade_expm
    from .analysis import SignalTrace, dispersion_dissipation
    from .integrators import rk97_tableau
    from .stencils import d2_centered_weights, free_surface_rows

    failures = 0

    def check(name: str, fn) -> None:
        nonlocal failures
        try:
            fn()
        except Exception as exc:  # report and keep going
            failures += 1
            print(f"FAIL - {name}: {exc}")
        else:
            print(f"ok - {name}")

    def stencil_case():
        w = d2_centered_weights()
        xs = np.array(w.offsets_half) / 2.0
        for k in (0, 2, 4, 6):
            got = float(np.dot(w.weights, xs**k))
            want = float(k * (k - 1) * 0.0 ** max(k - 2, 0)) if k != 2 else 2.0
            if abs(got - want) > 1e-12:
                raise AssertionError(f"d2 on x^{k}: {got} != {want}")
        row = free_surface_rows("d2_u", 0)
        ys = np.arange(9, dtype=float)
        if abs(float(np.dot(row.weights, ys**2)) - 2.0) > 1e-7:
            raise AssertionError("surface d2 row misses y^2")

    def pade_case():
        a = np.diag([0.3, -1.2, 2.0])
        got = pade_expm(a)
        want = np.diag(np.exp(np.diag(a)))
        if not np.allclose(got, want, atol=1e-13):
            raise AssertionError("diagonal exponential mismatch")

    def krylov_case():
        rng = np.random.default_rng(7)
        a = rng.standard_normal((8, 8)) * 0.5
        v = rng.standard_normal(8)
        got = krylov_expmv(lambda x: a @ x, v, 1.0, 8)
        want = pade_expm(a) @ v
        if np.linalg.norm(got - want) > 1e-10 * np.linalg.norm(want):
            raise AssertionError("full-subspace projection mismatch")

    def faber_case():
        # rotation blocks with known frequencies, lightly damped
        a = np.zeros((8, 8))
        for i, w in enumerate((0.5, 1.1, 1.7, 2.0)):
            a[2 * i, 2 * i + 1] = w
            a[2 * i + 1, 2 * i] = -w
        a -= 0.05 * np.eye(8)
        v = np.cos(np.arange(8.0))
        series = faber_series(rho_imag=2.2, rho_real=0.2, dt=1.0, m=30)
        got = faber_expmv(lambda x: a @ x, v, 1.0, series)
        want = pade_expm(a) @ v
        if np.linalg.norm(got - want) > 1e-8 * np.linalg.norm(want):
            raise AssertionError("series approximation mismatch")

    def hork_case():
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            coeffs = hork_lambda(6)
        z = 0.31 + 0.22j
        got = sum(
            lam * (1 + z) ** i for i, lam in enumerate(coeffs.lambdas[:-1])
        ) + coeffs.lambdas[-1] * (1 + z) ** 6
        want = sum(z**k / math.factorial(k) for k in range(7))
        if abs(got - want) > 1e-12:
            raise AssertionError(f"stability polynomial mismatch: {got} vs {want}")

    def tableau_case():
        tab = rk97_tableau()
        if tab.stages != 9 or tab.order != 7:
            raise AssertionError("unexpected tableau shape")

    def dispersion_case():
        rng = np.random.default_rng(3)
        sig = rng.standard_normal(128)
        ref = SignalTrace(sig, 0.01)
        same = dispersion_dissipation(ref, SignalTrace(sig.copy(), 0.01))
        if same.dispersion_error != 0.0 or same.dissipation_error != 0.0:
            raise AssertionError("identical traces must give (0, 0)")
        scaled = dispersion_dissipation(ref, SignalTrace(0.5 * sig, 0.01))
        if abs(scaled.dissipation_error - math.log(2.0)) > 1e-12:
            raise AssertionError("scaled trace must give ln(1/alpha)")

    check("stencil rows differentiate monomials", stencil_case)
    check("dense exponential matches diagonal oracle", pade_case)
    check("krylov projection at full dimension", krylov_case)
    check("faber series on enclosed spectrum", faber_case)
    check("one-leg weights match the exponential Taylor sum", hork_case)
    check("9-stage tableau loads and validates", tableau_case)
    check("dispersion analyzer analytic cases", dispersion_case)
    if failures:
        print(f"{failures} check(s) failed")
    else:
        print("all checks passed")
    return 1 if failures else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "reference": _cmd_reference,
        "dtmax": _cmd_dtmax,
        "dispersion": _cmd_dispersion,
        "report": _cmd_report,
        "selftest": lambda _: _selftest(),
    }
    try:
        return handlers[args.command](args)
    except (ValueError, RuntimeError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
