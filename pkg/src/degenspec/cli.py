"""Command-line front end: ``degenspec {surface,solve,sweep,check-hypotheses}``.

Exit status: 0 pass, 2 configuration error, 3 no bound state, 4 acceptance
gate failed, 5 numerical resolution failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    calibrate_lambda_range, eigenvector_convergence, first_order_sweep, reduced_operator_check,
    second_order_sweep,
)
from .bs_solver import (
    BSContext, NeumannDivergenceError, NoBoundStateError, certify, direct_spectrum, solve_e,
)
from .config import (
    ConfigError, build_grid, build_potential, build_surface, build_symbol, load_config,
    derived_constants, resolved_echo, thread_cap,
)
from .persist import (
    OutputDir, OutputExistsError, csv_text, json_text, matrix_csv, potential_table_csv,
    quadrature_csv, solve_records_csv, spectrum_csv,
)
from .potentials import hypothesis_report
from .surface_ops import (
    GridResolutionError, SurfaceOperatorSet, assemble_VS, group_degenerate, surface_spectrum,
)

EXIT_OK, EXIT_CONFIG, EXIT_NO_BOUND, EXIT_GATE, EXIT_RESOLUTION = 0, 2, 3, 4, 5


class Failure(RuntimeError):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"coupling must be positive, got {text}")
    return value


def _index(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("index must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="degenspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"degenspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
        p.add_argument("--force", action="store_true", help="replace an existing output directory")

    p = sub.add_parser("surface", help="surface operator spectra and second-order operator")
    common(p)
    p = sub.add_parser("solve", help="one bound-state energy at a fixed coupling")
    common(p)
    p.add_argument("--lambda", dest="lam", type=_positive, metavar="X", help="coupling")
    p.add_argument("--index", type=_index, metavar="I", help="bound-state index (1 = ground)")
    p = sub.add_parser("sweep", help="coupling sweep with first/second-order checks")
    common(p)
    p.add_argument("--index", type=_index, metavar="I", help="bound-state index (1 = ground)")
    p = sub.add_parser("check-hypotheses", help="integrability and symbol hypotheses")
    common(p)
    return parser


# -- helpers ------------------------------------------------------------------

def _manifest(cfg, sym, command, grids, tolerances, started, out: OutputDir, status, code,
              grid=None) -> str:
    return json_text({
        "tool": "degenspec", "version": __version__, "command": command,
        "config": resolved_echo(cfg, sym, grid), "derived": derived_constants(sym),
        "grids": grids, "tolerances": tolerances,
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
        "status": status, "exit_code": code, "files": dict(sorted(out.files.items())),
    })


def _surface_summary(quad) -> dict:
    import hashlib
    h = hashlib.sha256()
    for arr in (quad.nodes, quad.weights, quad.gradnorms):
        h.update(np.ascontiguousarray(arr).tobytes())
    return {"nodes": quad.size, "measure": quad.measure, "fingerprint": h.hexdigest()[:16]}


def _hermiticity(M) -> float:
    M = np.asarray(M)
    scale = max(float(np.max(np.abs(M))), 1e-300)
    return float(np.max(np.abs(M - M.conj().T)) / scale)


# -- subcommands ----------------------------------------------------------------

def cmd_surface(args, cfg, out: OutputDir, started) -> int:
    sym, V = build_symbol(cfg), build_potential(cfg)
    with_ws = cfg["surface"]["with_ws"]
    if with_ws is None:
        with_ws = sym.r < 2
    quad = build_surface(cfg, sym)
    grid = build_grid(cfg, sym) if with_ws else None
    K = assemble_VS(quad, V)
    vals, vecs = surface_spectrum(K)
    k = min(cfg["surface"]["eigenvectors"], len(vals))
    grids = {"surface": _surface_summary(quad)}
    tol = {"vs_hermiticity": _hermiticity(K)}
    groups = group_degenerate(vals)
    report = {"multiplicities": [len(g) for g in groups],
              "multiplet_values": [float(np.mean(vals[g])) for g in groups],
              "multiplet_spread": [float(np.ptp(vals[g])) for g in groups],
              "negative_count": int(np.sum(vals < 0))}
    out.write("quadrature.csv", quadrature_csv(quad))
    out.write("potential_table.csv", potential_table_csv(V, np.linspace(0.0, 2.0 * sym.fermi_radius
                                                                         + 4.0, 121)))
    out.write("vs_matrix.csv", matrix_csv(K))
    out.write("vs_spectrum.csv", spectrum_csv(vals))
    out.write("vs_eigenvectors.csv", matrix_csv(vecs[:, :k]))
    if with_ws:
        ops = SurfaceOperatorSet.build(quad, V, sym, grid, cfg["solve"]["e_sequence"])
        info = ops.ws_info
        grids["momentum"] = grid.summary()
        out.write("ws_matrix.csv", matrix_csv(ops.WS))
        out.write("ws_spectrum.csv", spectrum_csv(np.linalg.eigvalsh(ops.WS)))
        out.write("ws_convergence.csv", csv_text(
            ("step", "e", "cauchy_residual"),
            ((j, e, res) for j, (e, res) in enumerate(zip(info.e_sequence[1:], info.residuals)))))
        tol["ws_hermiticity"] = _hermiticity(ops.WS)
        tol["ws_last_cauchy_residual"] = float(info.residuals[-1]) if len(info.residuals) else None
        report["ws_residuals_decreasing"] = bool(info.residuals_decreasing)
    out.write("surface_report.json", json_text(report))
    out.write("manifest.json", _manifest(cfg, sym, "surface", grids, tol, started, out, "ok", EXIT_OK,
                                         grid))
    return EXIT_OK


def _coupling(args, cfg) -> float:
    if args.lam is not None:
        return args.lam
    lams = cfg["solve"]["lambda_list"]
    if not lams:
        raise ConfigError("solve needs --lambda or a non-empty solve.lambda_list")
    return float(lams[0])


def cmd_solve(args, cfg, out: OutputDir, started) -> int:
    sym, V = build_symbol(cfg), build_potential(cfg)
    lam = _coupling(args, cfg)
    i = args.index or cfg["solve"]["index"]
    quad = build_surface(cfg, sym)
    grid = build_grid(cfg, sym)
    grids = {"surface": _surface_summary(quad), "momentum": grid.summary()}
    tol = {}
    attractive = V.is_attractive
    ctx = BSContext(sym, V, grid, lam, quad, "attractive" if attractive else "general")
    code, status = EXIT_OK, "ok"
    records, cross = [], []
    try:
        if attractive:
            a_vals, _ = surface_spectrum(assemble_VS(quad, V))
            a_i = float(a_vals[i - 1]) if len(a_vals) >= i else None
            rec = solve_e(ctx, i, a_S=a_i, tol=cfg["solve"]["bisection_tol"])
            records.append(rec)
            tol["bs_eigenvalue_residual"] = rec.bs_eigenvalue_residual
            if cfg["solve"]["cross_check"]:
                ev = direct_spectrum(ctx, max(i, cfg["solve"]["eigen_count"]))
                e_direct = -float(ev[i - 1])
                delta = abs(e_direct - rec.e) / rec.e
                cross.append((lam, i, rec.e, e_direct, delta))
                tol["direct_relative_delta"] = delta
            if cfg["solve"]["certify"]:
                cert = certify(ctx, rec)
                tol["refinement_relative_change"] = cert["relative_change"]
                grids["refined_fingerprint"] = cert["refined_grid"]
                if not cert["passes"]:
                    code, status = EXIT_RESOLUTION, "refinement-gate-failed"
        else:
            ev = direct_spectrum(ctx, max(i, cfg["solve"]["eigen_count"]))
            if ev[i - 1] >= -grid.e_min:
                raise NoBoundStateError(f"no bound state #{i} at lambda={lam:g} (direct spectrum)")
            from .bs_solver import SolveRecord
            records.append(SolveRecord(lam, i, -float(ev[i - 1]), float("nan"), (), grid.fingerprint(),
                                       sym.delta))
    except NoBoundStateError as exc:
        code, status = EXIT_NO_BOUND, "no-bound-state"
        print(f"degenspec: {exc}", file=sys.stderr)
    out.write("solve.csv", solve_records_csv(records, sym.r))
    if cross:
        out.write("cross_check.csv", csv_text(("lambda", "index", "e_bs", "e_direct", "relative_delta"),
                                              cross))
    out.write("manifest.json", _manifest(cfg, sym, "solve", grids, tol, started, out, status, code, grid))
    return code


def cmd_sweep(args, cfg, out: OutputDir, started) -> int:
    sym, V = build_symbol(cfg), build_potential(cfg)
    if not V.is_attractive or V.is_zero:
        raise ConfigError("sweep needs a non-zero attractive potential (V <= 0)")
    i = args.index or cfg["solve"]["index"]
    quad = build_surface(cfg, sym)
    grid = build_grid(cfg, sym)
    opts = cfg["sweep"]
    second = opts["second_order"] and sym.r < 2
    ops = SurfaceOperatorSet.build(quad, V, sym, grid, cfg["solve"]["e_sequence"], with_ws=second)
    if ops.a_vals[i - 1] >= 0:
        raise Failure(EXIT_NO_BOUND, f"surface eigenvalue #{i} is not negative; no weak-coupling bound state")
    ctx = BSContext(sym, V, grid, 1.0, quad)
    if cfg["solve"]["lambda_list"] is not None:
        lams = np.asarray(cfg["solve"]["lambda_list"], dtype=float)
    else:
        geo = cfg["solve"]["geometric"]
        lams = calibrate_lambda_range(ctx, geo["e_hi"], geo["e_lo"], i, geo["min_points"], geo["ratio"])
    report = first_order_sweep(ctx, lams, i, ops, workers=thread_cap())
    if second:
        second_order_sweep(ctx, lams, i, ops, first=report)
    if opts["reduced_operator"]:
        try:
            reduced_operator_check(ctx, report)
        except NeumannDivergenceError as exc:
            report.gates["reduced_operator"] = False
            report.meta["reduced_operator_error"] = str(exc)
    if opts["eigenvectors"]:
        eigenvector_convergence(ctx, report, ops)
    report.meta["hypotheses"] = hypothesis_report(V, sym).as_dict()
    report.meta["grid"] = grid.fingerprint()
    statuses = {row.status for row in report.rows}
    if "resolution" in statuses:
        code, status = EXIT_RESOLUTION, "resolution"
    elif "no-bound-state" in statuses:
        code, status = EXIT_NO_BOUND, "partial"
    elif not report.passes:
        code, status = EXIT_GATE, "gate-failed"
    else:
        code, status = EXIT_OK, "ok"
    formats = cfg["output"]["formats"]
    if "csv" in formats:
        out.write("sweep.csv", report.to_csv())
    if "json" in formats:
        out.write("sweep.json", report.to_json())
    out.write("sweep_plot.csv", report.plot_csv())
    solved = [rec for rec in report.records if not isinstance(rec, str)]
    out.write("solves.csv", solve_records_csv(solved, sym.r))
    grids = {"surface": _surface_summary(quad), "momentum": grid.summary()}
    tol = {"max_bs_residual": max((rec.bs_eigenvalue_residual for rec in solved), default=None),
           "vs_hermiticity": _hermiticity(ops.VS), "gates": report.gates}
    out.write("manifest.json", _manifest(cfg, sym, "sweep", grids, tol, started, out, status, code, grid))
    for name, ok in report.gates.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    return code


def cmd_check_hypotheses(args, cfg, out: OutputDir, started) -> int:
    sym, V = build_symbol(cfg), build_potential(cfg)
    rep = hypothesis_report(V, sym)
    grad_min = sym.check_gradient()
    growth = sym.growth_violation()
    data = {"potential": rep.as_dict(), "symbol": sym.as_dict(),
            "gradient_min_on_neighbourhood": grad_min, "growth_violation": growth,
            "passes": bool(rep.passes and grad_min > 0 and growth <= 0)}
    out.write("hypotheses.json", json_text(data))
    code = EXIT_OK if data["passes"] else EXIT_GATE
    out.write("manifest.json", _manifest(cfg, sym, "check-hypotheses", {}, {}, started, out,
                                         "ok" if code == 0 else "hypotheses-failed", code))
    return code


COMMANDS = {"surface": cmd_surface, "solve": cmd_solve, "sweep": cmd_sweep,
            "check-hypotheses": cmd_check_hypotheses}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    out = None
    try:
        cfg = load_config(args.config)
        thread_cap()
        target = args.out or cfg["output"]["directory"]
        if not target:
            raise ConfigError("no output directory: pass --out or set output.directory")
        if args.out is None and not Path(target).is_absolute():
            target = str(Path(cfg["_base_dir"]) / target)
        out = OutputDir(target, force=args.force)
        code = COMMANDS[args.command](args, cfg, out, started)
        out.commit()
        return code
    except (ConfigError, OutputExistsError) as exc:
        print(f"degenspec: configuration error:\n{exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except Failure as exc:
        print(f"degenspec: {exc}", file=sys.stderr)
        code = exc.code
    except NoBoundStateError as exc:
        print(f"degenspec: {exc}", file=sys.stderr)
        code = EXIT_NO_BOUND
    except (GridResolutionError, NeumannDivergenceError) as exc:
        print(f"degenspec: numerical resolution failure: {exc}", file=sys.stderr)
        code = EXIT_RESOLUTION
    if out is not None:
        out.abort()
    return code


if __name__ == "__main__":
    sys.exit(main())
