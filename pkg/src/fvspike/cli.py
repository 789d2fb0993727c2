"""Command-line front end: solve, d0, sweep, peaks, export.

Run configurations live in line-oriented ``key = value`` files with section
headers (JSON with the same section layout is also accepted).  Each solve
writes its artifacts plus a self-contained ``report.json`` whose echoed
config reproduces the run bit-for-bit on the same platform.

Exit codes: 0 converged, 1 usage or configuration error, 2 non-converged
(artifacts are still written).  ``--strict`` escalates unmet recipe
expectations to exit code 2.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .guess import GuessSpec, materialize_guess
from .mesh import Domain, GridField, build_mesh, field_json_header, read_field_csv, \
    write_field_csv
from .solver import ArmijoDamping, NewtonConfig, newton_solve
from .system import SolverParams

__all__ = ["RunConfig", "run_solve", "main"]

DEFAULT_OUTPUTS = ("grid_csv", "report_json", "contours_json", "peaks_csv")
_D0_NOTE = (
    "advisory only; the reference experiments quote d0 ~= 0.5 for q=5 on "
    "[-5,5]^2 while this closed form gives ~4.77 there (documented, "
    "unreconciled)"
)


class UsageError(ValueError):
    """Bad command line or configuration; maps to exit code 1."""


@dataclass(frozen=True)
class RunConfig:
    domain: Domain
    n_x: int
    n_y: int
    params: SolverParams
    guess: GuessSpec
    newton: NewtonConfig
    outputs: tuple = DEFAULT_OUTPUTS
    levels: tuple | None = None
    prominence: float = 1e-8
    expect: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(_load_config_sections(path))

    @classmethod
    def from_dict(cls, sec: dict) -> "RunConfig":
        try:
            dom = sec["domain"]
            domain = Domain(float(dom["x_lo"]), float(dom["x_hi"]),
                            float(dom["y_lo"]), float(dom["y_hi"]))
            grid = sec["grid"]
            if "n" in grid:
                n_x = n_y = int(grid["n"])
            else:
                n_x, n_y = int(grid["n_x"]), int(grid["n_y"])
            eq = sec["equation"]
            params = SolverParams(float(eq["d"]), float(eq["q"]))
            g = sec.get("guess", {"kind": "constant(1)"})
            clamp = float(g.get("clamp_min", 1e-8))
            guess = GuessSpec.parse(str(g.get("kind", "constant(1)")), clamp_min=clamp)
            newton = _newton_from_dict(sec.get("newton", {}))
            out = sec.get("output", {})
            outputs = tuple(_split_list(out.get("outputs"))) or DEFAULT_OUTPUTS
            for o in outputs:
                if o not in DEFAULT_OUTPUTS:
                    raise UsageError(f"unknown output kind {o!r}")
            levels = out.get("levels")
            if levels is not None:
                levels = tuple(float(v) for v in _split_list(levels))
            prominence = float(out.get("prominence", 1e-8))
            expect = dict(sec.get("expect", {}))
        except KeyError as exc:
            raise UsageError(f"config missing required key: {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"bad config value: {exc}") from None
        return cls(domain, n_x, n_y, params, guess, newton, outputs, levels,
                   prominence, expect)

    def to_dict(self) -> dict:
        d: dict = {
            "domain": {"x_lo": self.domain.x_lo, "x_hi": self.domain.x_hi,
                       "y_lo": self.domain.y_lo, "y_hi": self.domain.y_hi},
            "grid": {"n_x": self.n_x, "n_y": self.n_y},
            "equation": {"d": self.params.d, "q": self.params.q},
            "guess": {"kind": self.guess.describe(),
                      "clamp_min": self.guess.clamp_min},
            "newton": _newton_to_dict(self.newton),
            "output": {"outputs": ",".join(self.outputs),
                       "prominence": self.prominence},
        }
        if self.levels is not None:
            d["output"]["levels"] = ",".join(repr(v) for v in self.levels)
        if self.expect:
            d["expect"] = dict(self.expect)
        return d


def _split_list(text) -> list[str]:
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [part.strip() for part in str(text).split(",") if part.strip()]


def _newton_from_dict(sec: dict) -> NewtonConfig:
    damping_name = str(sec.get("damping", "armijo")).lower()
    if damping_name == "none":
        damping = None
    elif damping_name == "armijo":
        damping = ArmijoDamping(
            c=float(sec.get("armijo_c", 1e-4)),
            shrink=float(sec.get("armijo_shrink", 0.5)),
            min_step=float(sec.get("armijo_min_step", 2.0 ** -30)),
        )
    else:
        raise UsageError(f"damping must be 'armijo' or 'none', got {damping_name!r}")
    return NewtonConfig(
        tol_residual=float(sec.get("tol_residual", 1e-10)),
        tol_step=float(sec.get("tol_step", 1e-12)),
        max_iterations=int(sec.get("max_iterations", 200)),
        damping=damping,
    )


def _newton_to_dict(cfg: NewtonConfig) -> dict:
    d = {
        "tol_residual": cfg.tol_residual,
        "tol_step": cfg.tol_step,
        "max_iterations": cfg.max_iterations,
        "damping": "none" if cfg.damping is None else "armijo",
    }
    if cfg.damping is not None:
        d["armijo_c"] = cfg.damping.c
        d["armijo_shrink"] = cfg.damping.shrink
        d["armijo_min_step"] = cfg.damping.min_step
    return d


def _load_config_sections(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        data = json.loads(text)
        if "config" in data and "domain" not in data:
            data = data["config"]  # accept a report.json as a rerun config
        return data
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from None
    return {name: dict(parser.items(name)) for name in parser.sections()}


# ---------------------------------------------------------------------------
# Expectations

def _check_expectations(expect: dict, report, stats, peaks,
                        cell_width: float) -> list[dict]:
    """Evaluate property-level recipe expectations; returns one record each."""

    def as_bool(v) -> bool:
        return str(v).strip().lower() in ("1", "true", "yes", "on")

    maxima = [p for p in peaks if p.kind == "maximum"]
    minima = [p for p in peaks if p.kind == "minimum"]
    records = []

    def add(name, ok, observed, expected):
        records.append({"name": name, "ok": bool(ok),
                        "expected": expected, "observed": observed})

    for key, raw in expect.items():
        if key == "converged":
            add(key, report.converged == as_bool(raw), report.converged, as_bool(raw))
        elif key == "positive":
            add(key, report.positive == as_bool(raw), report.positive, as_bool(raw))
        elif key == "nonconstant":
            add(key, (not report.constant_solution) == as_bool(raw),
                not report.constant_solution, as_bool(raw))
        elif key == "min_maxima":
            add(key, len(maxima) >= int(raw), len(maxima), int(raw))
        elif key == "min_interior_maxima":
            got = sum(1 for p in maxima if p.location_class == "interior")
            add(key, got >= int(raw), got, int(raw))
        elif key == "min_minima_below_mean":
            got = sum(1 for p in minima if p.value < stats.mean)
            add(key, got >= int(raw), got, int(raw))
        elif key == "maxima":
            add(key, len(maxima) == int(raw), len(maxima), int(raw))
        elif key == "max_near":
            factor = float(expect.get("max_factor", 5.0))
            target = float(raw)
            ok = target / factor <= stats.max <= target * factor
            add(key, ok, stats.max, f"within x{factor:g} of {target:g}")
        elif key == "argmax_near":
            tx, ty = (float(v) for v in _split_list(raw))
            cells = float(expect.get("argmax_cells", 3))
            ax, ay = stats.argmax
            dist = max(abs(ax - tx), abs(ay - ty))
            add(key, dist <= cells * cell_width, (ax, ay), (tx, ty))
        elif key in ("max_factor", "argmax_cells"):
            continue
        else:
            raise UsageError(f"unknown expectation key {key!r}")
    return records


# ---------------------------------------------------------------------------
# Solve pipeline

def run_solve(config: RunConfig, out_dir, strict: bool = False,
              echo=print) -> tuple[dict, int]:
    """Materialize the guess, run Newton, post-process and export.

    Returns the report dictionary and the process exit code.
    """
    t0 = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    mesh = build_mesh(config.domain, config.n_x, config.n_y)
    x0 = materialize_guess(config.guess, mesh)
    report = newton_solve(mesh, config.params, x0, config.newton)

    sol = report.solution
    stats = analysis.solution_stats(sol)
    peaks = analysis.detect_peaks(sol, config.prominence)
    try:
        d0 = analysis.compute_d0(config.params.q, config.domain.area())
        d0_note = _D0_NOTE
    except ValueError as exc:
        d0 = None
        d0_note = str(exc)

    levels = config.levels
    if levels is None:
        vmin, vmax = stats.min, stats.max
        levels = tuple(np.linspace(vmin, vmax, 10)[1:-1])
    contours = analysis.marching_squares(sol, levels)

    artifacts = {}
    if "grid_csv" in config.outputs:
        p = out_dir / "solution.csv"
        write_field_csv(sol, p)
        artifacts["grid_csv"] = str(p)
    if "contours_json" in config.outputs:
        p = out_dir / "contours.json"
        analysis.write_contours_json(contours, p)
        artifacts["contours_json"] = str(p)
    if "peaks_csv" in config.outputs:
        p = out_dir / "peaks.csv"
        analysis.write_peaks_csv(peaks, p)
        artifacts["peaks_csv"] = str(p)

    expectations = _check_expectations(config.expect, report, stats, peaks,
                                       max(mesh.h_x, mesh.h_y))
    wall = time.perf_counter() - t0

    report_dict = {
        "config": config.to_dict(),
        "solve": report.summary_dict(),
        "d0": d0,
        "d0_note": d0_note,
        "mesh": field_json_header(mesh),
        "stats": stats.to_dict(),
        "peaks": [vars(p) for p in peaks],
        "expectations": expectations,
        "wall_time": wall,
        "artifacts": artifacts,
    }
    if "report_json" in config.outputs:
        p = out_dir / "report.json"
        with open(p, "w") as fh:
            json.dump(report_dict, fh, indent=2)
            fh.write("\n")
        artifacts["report_json"] = str(p)

    echo(f"converged={report.converged} iterations={report.iterations} "
         f"residual={report.final_residual:.3e} positive={report.positive} "
         f"constant={report.constant_solution}")
    echo(f"d0={d0!r} ({d0_note})")
    n_max = sum(1 for p in peaks if p.kind == "maximum")
    n_min = sum(1 for p in peaks if p.kind == "minimum")
    echo(f"max={stats.max:.6g} at {stats.argmax}  min={stats.min:.6g} "
         f"at {stats.argmin}  peaks: {n_max} maxima / {n_min} minima")
    failed = [r for r in expectations if not r["ok"]]
    for r in expectations:
        tag = "ok" if r["ok"] else ("FAIL" if strict else "warn")
        echo(f"expectation {r['name']}: expected {r['expected']}, "
             f"observed {r['observed']} [{tag}]")

    if report.failure:
        echo(f"solver failure: {report.failure}", file=sys.stderr) \
            if echo is print else echo(f"solver failure: {report.failure}")
    if not report.converged:
        return report_dict, 2
    if strict and failed:
        return report_dict, 2
    return report_dict, 0


# ---------------------------------------------------------------------------
# Subcommands

def _default_out() -> str:
    return os.environ.get("FVSPIKE_OUT", "fvspike_out")


def _cmd_solve(args) -> int:
    config = RunConfig.from_file(args.config)
    out_dir = args.out if args.out else _default_out()
    _, code = run_solve(config, out_dir, strict=args.strict)
    return code


def _cmd_d0(args) -> int:
    parts = _split_list(args.domain)
    if len(parts) != 4:
        raise UsageError(f"--domain expects x_lo,x_hi,y_lo,y_hi, got {args.domain!r}")
    domain = Domain(*(float(v) for v in parts))
    try:
        value = analysis.compute_d0(args.q, domain.area())
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"d0 = {value:.12g}")
    print(f"note: {_D0_NOTE}")
    return 0


def _cmd_sweep(args) -> int:
    values = [float(v) for v in _split_list(args.values)]
    if not values:
        raise UsageError("sweep needs at least one value")
    if any(not math.isfinite(v) for v in values):
        raise UsageError(f"sweep values must be finite, got {values}")
    if args.axis not in ("d", "q"):
        raise UsageError(f"--axis must be 'd' or 'q', got {args.axis!r}")
    base = RunConfig.from_file(args.config)
    out_root = Path(args.out if args.out else _default_out())
    out_root.mkdir(parents=True, exist_ok=True)

    def one(value: float):
        d = base.params.d if args.axis == "q" else value
        q = base.params.q if args.axis == "d" else value
        sub = RunConfig(base.domain, base.n_x, base.n_y, SolverParams(d, q),
                        base.guess, base.newton, base.outputs, base.levels,
                        base.prominence, base.expect)
        run_dir = out_root / f"{args.axis}_{value:.10g}"
        try:
            rep, code = run_solve(sub, run_dir, strict=args.strict,
                                  echo=lambda *a, **k: None)
            peaks = rep["peaks"]
            return {
                "value": value,
                "converged": rep["solve"]["converged"],
                "final_residual": rep["solve"]["final_residual"],
                "n_peaks_max": sum(1 for p in peaks if p["kind"] == "maximum"),
                "n_peaks_min": sum(1 for p in peaks if p["kind"] == "minimum"),
                "max": rep["stats"]["max"],
                "iterations": rep["solve"]["iterations"],
                "error": "",
                "code": code,
            }
        except Exception as exc:  # per-run failures must not kill the sweep
            return {
                "value": value, "converged": False, "final_residual": float("nan"),
                "n_peaks_max": 0, "n_peaks_min": 0, "max": float("nan"),
                "iterations": 0, "error": str(exc), "code": 2,
            }

    workers = max(1, int(args.parallel))
    if workers == 1:
        rows = [one(v) for v in values]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, values))

    summary = out_root / "summary.csv"
    header = ["value", "converged", "final_residual", "n_peaks_max",
              "n_peaks_min", "max", "iterations", "error"]
    with open(summary, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(r[h]) for h in header) + "\n")
    for r in rows:
        print(f"{args.axis}={r['value']:g}: converged={r['converged']} "
              f"max={r['max']:.6g} peaks={r['n_peaks_max']}/{r['n_peaks_min']}"
              + (f" error={r['error']}" if r["error"] else ""))
    print(f"summary written to {summary}")
    return 0 if all(r["code"] == 0 for r in rows) else 2


def _cmd_peaks(args) -> int:
    field_ = read_field_csv(args.infile)
    peaks = analysis.detect_peaks(field_, args.prominence)
    print("i,j,x,y,value,kind,location_class")
    for p in peaks:
        print(f"{p.i},{p.j},{p.x:.17g},{p.y:.17g},{p.value:.17g},{p.kind},"
              f"{p.location_class}")
    return 0


def _cmd_export(args) -> int:
    try:
        field_ = read_field_csv(args.infile)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read solution file: {exc}") from None
    out = Path(args.out) if args.out else None
    if args.format == "csv":
        out = out or Path(args.infile).with_suffix(".roundtrip.csv")
        write_field_csv(field_, out)
    elif args.format == "contour_json":
        out = out or Path(args.infile).with_suffix(".contours.json")
        vals = field_.values
        levels = tuple(np.linspace(vals.min(), vals.max(), 10)[1:-1])
        analysis.write_contours_json(analysis.marching_squares(field_, levels), out)
    elif args.format == "gnuplot_matrix":
        out = out or Path(args.infile).with_suffix(".dat")
        _write_gnuplot_matrix(field_, out)
    else:
        raise UsageError(f"unknown export format {args.format!r}")
    print(f"wrote {out}")
    return 0


def _write_gnuplot_matrix(field_: GridField, path) -> None:
    """Nonuniform-matrix layout: leading row of x centers, leading column of y."""
    mesh = field_.mesh
    grid = field_.as_grid()
    lines = [" ".join([str(mesh.n_x)] + [f"{x:.17g}" for x in mesh.x_centers])]
    for j in range(mesh.n_y):
        lines.append(" ".join([f"{mesh.y_centers[j]:.17g}"]
                              + [f"{v:.17g}" for v in grid[j]]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Entry point

class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # usage problems map to exit code 1, not 2
        raise UsageError(message)


def _build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="fvspike",
                             description="Finite-volume spike-solution solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--strict", action="store_true",
                   help="unmet expectations fail the run")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("d0", help="print the diffusion threshold")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--domain", required=True, help="x_lo,x_hi,y_lo,y_hi")
    p.set_defaults(func=_cmd_d0)

    p = sub.add_parser("sweep", help="solve over a list of d or q values")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=["d", "q"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("peaks", help="detect peaks in a grid CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--prominence", type=float, default=1e-8)
    p.set_defaults(func=_cmd_peaks)

    p = sub.add_parser("export", help="re-serialize a solution file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", required=True,
                   choices=["csv", "contour_json", "gnuplot_matrix"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
