"""Command-line front end: config ingestion, runs, convergence studies, output files.

Verbs::

    compact-wave run        --config run.yaml --out results/
    compact-wave converge   --config run.yaml --levels 4
    compact-wave stability  --config run.yaml
    compact-wave problems   [--json]

Exit codes: 0 success, 2 config error, 3 stability rejection, 4 divergence,
5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import problems
from .baseline import run_leapfrog
from .diagnostics import _dot
from .extensions import run_nonuniform_time, run_variable
from .grid import Grid, MeshError, TimeMesh, make_axis
from .problems import CatalogEntry
from .scheme import DivergenceError, RunReport, SchemeConfig, StabilityRejected, run
from .stability import certify, spectral_threshold_dt, sufficient_dt
from .stencil_ops import ConfigError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STABILITY = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5
THREADS_ENV = "COMPACT_WAVE_THREADS"
FLOAT_FMT = "%.16e"
METHODS = ("compact", "leapfrog")
SCHEME_KEYS = tuple(f.name for f in dataclasses.fields(SchemeConfig) if f.name not in ("speeds", "threads"))
LEDGER_COLUMNS = (
    "m",
    "t",
    "max_abs",
    "norm_h",
    "kinetic",
    "correction",
    "potential",
    "energy",
    "work",
    "law_residual",
    "err_l2",
    "err_energy",
)


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunSpec:
    """Everything needed to reproduce one run.

    ``problem`` is a catalog name or a mapping with keys ``u``, ``ndim`` and
    optionally ``speeds``, ``rho``, ``extents``, ``final_time``.
    """

    problem: str | dict = "standing-wave-1d"
    n: list[int] | None = None
    nodes: list[list[float]] | None = None
    mesh: str | None = None
    ratio: float | None = None
    final_time: float | None = None
    steps: int | None = None
    time_nodes: list[float] | None = None
    time_mesh: str | None = None
    time_ratio: float | None = None
    dt_fraction: float = 0.8
    method: str = "compact"
    scheme: dict = field(default_factory=dict)
    b_injection: float = 0.0
    snapshot_every: int = 0
    out: str = "out"
    threads: int = 1

    # -- config mapping ----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict | None) -> RunSpec:
        data = dict(data or {})
        spec = cls()
        allowed = {"problem", "grid", "time", "scheme", "method", "diagnostics", "output", "threads"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        if "problem" in data:
            p = data["problem"]
            if not isinstance(p, (str, dict)):
                raise ConfigError("config field 'problem' must be a name or a mapping")
            spec.problem = p
        grid = _section(data, "grid", {"n", "nodes", "mesh", "ratio"})
        if "n" in grid:
            n = grid["n"]
            spec.n = [_int("grid.n", c) for c in (n if isinstance(n, list) else [n])]
        if "nodes" in grid:
            spec.nodes = [[_float("grid.nodes", x) for x in ax] for ax in grid["nodes"]]
        spec.mesh = grid.get("mesh")
        if "ratio" in grid:
            spec.ratio = _float("grid.ratio", grid["ratio"])
        tsec = _section(data, "time", {"final_time", "steps", "nodes", "dt_fraction", "mesh", "ratio"})
        if "final_time" in tsec:
            spec.final_time = _float("time.final_time", tsec["final_time"])
        if tsec.get("steps") is not None:
            spec.steps = _int("time.steps", tsec["steps"])
        if "nodes" in tsec:
            spec.time_nodes = [_float("time.nodes", x) for x in tsec["nodes"]]
        if "dt_fraction" in tsec:
            spec.dt_fraction = _float("time.dt_fraction", tsec["dt_fraction"])
        spec.time_mesh = tsec.get("mesh")
        if "ratio" in tsec:
            spec.time_ratio = _float("time.ratio", tsec["ratio"])
        spec.scheme = _section(data, "scheme", set(SCHEME_KEYS))
        spec.method = str(data.get("method", "compact"))
        if spec.method not in METHODS:
            raise ConfigError(f"config field 'method' must be one of {METHODS}")
        diag = _section(data, "diagnostics", {"b_injection", "snapshot_every"})
        spec.b_injection = _float("diagnostics.b_injection", diag.get("b_injection", 0.0))
        spec.snapshot_every = _int("diagnostics.snapshot_every", diag.get("snapshot_every", 0))
        out = _section(data, "output", {"dir"})
        spec.out = str(out.get("dir", "out"))
        spec.threads = _int("threads", data.get("threads", 1))
        return spec

    def to_dict(self) -> dict:
        grid = {k: v for k, v in (("n", self.n), ("nodes", self.nodes), ("mesh", self.mesh), ("ratio", self.ratio)) if v is not None}
        tsec = {
            k: v
            for k, v in (
                ("final_time", self.final_time),
                ("steps", self.steps),
                ("nodes", self.time_nodes),
                ("mesh", self.time_mesh),
                ("ratio", self.time_ratio),
            )
            if v is not None
        }
        tsec["dt_fraction"] = self.dt_fraction
        return {
            "problem": self.problem,
            "grid": grid,
            "time": tsec,
            "scheme": dict(self.scheme),
            "method": self.method,
            "diagnostics": {"b_injection": self.b_injection, "snapshot_every": self.snapshot_every},
            "output": {"dir": self.out},
            "threads": self.threads,
        }

    # -- resolution ----------------------------------------------------------

    def entry(self) -> CatalogEntry:
        if isinstance(self.problem, str):
            e = problems.get(self.problem)
        else:
            p = dict(self.problem)
            unknown = set(p) - {"u", "ndim", "speeds", "rho", "extents", "final_time", "name"}
            if unknown or "u" not in p or "ndim" not in p:
                raise ConfigError("config field 'problem' needs 'u' and 'ndim' (plus speeds, rho, extents, final_time)")
            ndim = _int("problem.ndim", p["ndim"])
            e = CatalogEntry(
                name=str(p.get("name", "expression")),
                description="user-defined expression",
                u=str(p["u"]),
                ndim=ndim,
                speeds=tuple(p.get("speeds", [1.0] * ndim)),
                extents=tuple(float(x) for x in p.get("extents", [1.0] * ndim)),
                final_time=float(p.get("final_time", 1.0)),
                rho=None if p.get("rho") is None else str(p["rho"]),
            )
        changes = {}
        if self.mesh is not None:
            changes["mesh"] = self.mesh
        if self.ratio is not None:
            changes["ratio"] = self.ratio
        if self.final_time is not None:
            changes["final_time"] = self.final_time
        if self.time_mesh is not None:
            changes["time_mesh"] = self.time_mesh
        if self.time_ratio is not None:
            changes["time_ratio"] = self.time_ratio
        return dataclasses.replace(e, **changes)

    def counts(self, e: CatalogEntry) -> list[int]:
        if self.n is None:
            return [16] * e.ndim
        if len(self.n) == 1:
            return self.n * e.ndim
        return list(self.n)

    def grid(self, e: CatalogEntry, refine: int = 0) -> Grid:
        if self.nodes is not None:
            if refine:
                raise ConfigError("explicit node lists cannot be refined; use grid.n")
            if len(self.nodes) != e.ndim:
                raise ConfigError(f"grid.nodes needs {e.ndim} axes")
            return Grid([make_axis(ax) for ax in self.nodes])
        return e.grid([c * 2**refine for c in self.counts(e)])

    def threads_cap(self) -> int:
        return max(1, int(self.threads))


def _section(data: dict, name: str, keys: set) -> dict:
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    unknown = set(sec) - keys
    if unknown:
        raise ConfigError(f"unknown field(s) in '{name}': {', '.join(sorted(unknown))}")
    return dict(sec)


def _int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"config field '{name}' must be an integer, got {value!r}")
    return int(value)


def _float(name: str, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"config field '{name}' must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config field '{name}' must be a number, got {value!r}") from None


def load_config(path: str | os.PathLike) -> RunSpec:
    """Read a YAML run configuration; syntax errors report the line."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"cannot parse {path}{where}: {getattr(err, 'problem', err)}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunSpec.from_dict(data)


# ---------------------------------------------------------------------------
# resolved case


@dataclass
class Case:
    spec: RunSpec
    entry: CatalogEntry
    grid: Grid
    time_mesh: TimeMesh
    config: SchemeConfig
    variable: bool


def _speeds_for(e: CatalogEntry, grid: Grid, coeffs) -> tuple[float, ...]:
    if coeffs is not None:
        return coeffs.effective_speeds(grid)
    return tuple(float(s) for s in e.speeds)


def resolve(spec: RunSpec, refine: int = 0, threads: int | None = None, base_dt: float | None = None) -> Case:
    """Turn a RunSpec into grid, time mesh and scheme config (level ``refine`` of a study)."""
    e = spec.entry()
    problem, coeffs = e.build()
    grid = spec.grid(e, refine)
    speeds = _speeds_for(e, grid, coeffs)
    sch = dict(spec.scheme)
    try:
        config = SchemeConfig(speeds=speeds, threads=threads or spec.threads_cap(), **sch)
    except TypeError as err:
        raise ConfigError(f"invalid scheme settings: {err}") from None
    if spec.time_nodes is not None:
        if refine:
            raise ConfigError("explicit time nodes cannot be refined; use time.steps")
        tm = TimeMesh(np.asarray(spec.time_nodes))
    elif spec.steps is not None:
        M = spec.steps * 2**refine
        tm = TimeMesh.uniform_mesh(e.final_time, M) if e.time_mesh == "uniform" else _graded_time(e, M)
    else:
        dt = base_dt if base_dt is not None else spec.dt_fraction * sufficient_dt(grid, speeds, config.eps, config.eps0)
        tm = e.time_levels(dt / 2**refine if base_dt is not None else dt)
    return Case(spec, e, grid, tm, config, coeffs is not None)


def _graded_time(e: CatalogEntry, M: int) -> TimeMesh:
    return TimeMesh.graded(e.final_time, M, e.time_ratio ** (1.0 / M))


def _pinned_spec(case: Case) -> dict:
    """The RunSpec with the resolved step count, so re-running reproduces the run."""
    d = case.spec.to_dict()
    if case.spec.time_nodes is None:
        d["time"]["steps"] = case.time_mesh.count
        d["time"]["final_time"] = case.time_mesh.final_time
    return d


def execute(case: Case, callback=None, b_magnitude: float = 0.0) -> RunReport:
    problem, coeffs = case.entry.build()
    if b_magnitude:
        problem.b = [(lambda x, t, c=b_magnitude: c + 0.0 * x[0]) for _ in range(case.grid.ndim)]
    if case.spec.method == "leapfrog":
        return run_leapfrog(problem, case.grid, case.time_mesh, case.config)[1]
    if coeffs is not None:
        return run_variable(problem, case.grid, case.time_mesh, case.config, coeffs, callback)[1]
    if not case.time_mesh.uniform:
        return run_nonuniform_time(problem, case.grid, case.time_mesh, case.config, callback)[1]
    return run(problem, case.grid, case.time_mesh, case.config, callback)[1]


# ---------------------------------------------------------------------------
# outputs


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")


class SnapshotWriter:
    """Collects node-indexed rows ``m, t, i_0.., x_0.., value`` for selected levels."""

    def __init__(self, grid: Grid, every: int, final_level: int):
        self.grid = grid
        self.every = every
        self.final = final_level
        self.rows: list[dict] = []
        self.columns = ["m", "t"] + [f"i{k}" for k in range(grid.ndim)] + [f"x{k}" for k in range(grid.ndim)] + ["value"]

    def __call__(self, m: int, t: float, v: np.ndarray) -> None:
        if m != self.final and not (self.every and m % self.every == 0):
            return
        coords = [ax.nodes for ax in self.grid.axes]
        for idx in np.ndindex(*self.grid.shape):
            row = {"m": m, "t": float(t), "value": float(v[idx])}
            for k, i in enumerate(idx):
                row[f"i{k}"] = i
                row[f"x{k}"] = float(coords[k][i])
            self.rows.append(row)


def _ensure_dir(out: str | os.PathLike) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path


def run_case(spec: RunSpec, out: str | os.PathLike | None = None, threads: int | None = None) -> tuple[RunReport, dict]:
    """Execute a RunSpec and write ``ledger.csv``, ``snapshots.csv`` and ``summary.json``."""
    outdir = _ensure_dir(out or spec.out)
    case = resolve(spec, threads=threads)
    snaps = SnapshotWriter(case.grid, spec.snapshot_every, case.time_mesh.count)
    levels: list[np.ndarray] | None = [] if spec.b_injection else None

    def callback(m, t, v):
        snaps(m, t, v)
        if levels is not None:
            levels.append(v[case.grid.interior].copy())

    report = execute(case, callback)
    summary = report.summary()
    summary["config"] = _pinned_spec(case)
    summary["scheme_config"] = case.config.to_dict()
    summary["grid"] = {"shape": list(case.grid.shape), "uniform": case.grid.uniform}
    summary["time"] = {"steps": case.time_mesh.count, "uniform": case.time_mesh.uniform, "h_max": case.time_mesh.h_max}
    if spec.b_injection:
        pert = [0.0]
        it = iter(levels)

        def compare(m, t, v):
            ref = next(it)
            d = v[case.grid.interior] - ref
            pert[0] = max(pert[0], math.sqrt(_dot(case.grid, d, d)))

        execute(case, compare, b_magnitude=spec.b_injection)
        summary["b_injection"] = {"magnitude": spec.b_injection, "perturbation_norm": pert[0]}
    write_csv(outdir / "ledger.csv", [c for c in LEDGER_COLUMNS if any(c in r for r in report.rows)], report.rows)
    write_csv(outdir / "snapshots.csv", snaps.columns, snaps.rows)
    write_json(outdir / "summary.json", summary)
    return report, summary


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class ConvergenceStudy:
    """Joint refinement ``h -> h/2``, ``h_t -> h_t/2`` over ``levels`` levels."""

    spec: RunSpec
    levels: int = 4

    def __post_init__(self) -> None:
        if int(self.levels) < 3:
            raise ConfigError(f"a convergence study needs at least 3 levels, got {self.levels}")


@dataclass
class OrderTable:
    rows: list[dict]
    slope_energy: float
    slope_l2: float

    def to_dict(self) -> dict:
        return {"rows": self.rows, "slope_energy": self.slope_energy, "slope_l2": self.slope_l2}


def fitted_slope(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def run_convergence(study: ConvergenceStudy, threads: int | None = None) -> OrderTable:
    """Errors and observed orders over the refinement levels."""
    spec = study.spec
    base = resolve(spec, 0, threads)
    base_dt = base.time_mesh.h_max
    rows = []
    for level in range(study.levels):
        case = resolve(spec, level, threads, base_dt=None if spec.steps is not None else base_dt)
        if spec.steps is None and case.time_mesh.uniform and base.time_mesh.uniform:
            case.time_mesh = TimeMesh.uniform_mesh(base.time_mesh.final_time, base.time_mesh.count * 2**level)
        if spec.method == "compact" and not case.variable and case.config.enforce_stability:
            cert = certify(case.grid, case.config.speeds, case.time_mesh.h_max, case.config.eps, case.config.eps0)
            if not cert.ok:
                raise StabilityRejected(f"refinement level {level} violates the step conditions", cert)
        report = execute(case)
        if report.max_energy_error is None:
            raise ConfigError("convergence studies need an exact solution")
        h = max(ax.h_max for ax in case.grid.axes)
        rows.append(
            {
                "level": level,
                "n": case.grid.axes[0].count,
                "steps": case.time_mesh.count,
                "h": h,
                "ht": case.time_mesh.h_max,
                "err_energy": report.max_energy_error,
                "err_l2": report.max_l2_error,
            }
        )
    for prev, row in zip(rows, rows[1:]):
        row["order_energy"] = math.log2(prev["err_energy"] / row["err_energy"])
        row["order_l2"] = math.log2(prev["err_l2"] / row["err_l2"])
    hs = [r["h"] for r in rows]
    return OrderTable(
        rows,
        fitted_slope(hs, [r["err_energy"] for r in rows]),
        fitted_slope(hs, [r["err_l2"] for r in rows]),
    )


ORDER_COLUMNS = ("level", "n", "steps", "h", "ht", "err_energy", "err_l2", "order_energy", "order_l2")


# ---------------------------------------------------------------------------
# entry point


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compact-wave", description="Fourth-order compact wave-equation solver")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration (default: built-in standing-wave-1d)")
        p.add_argument("--problem", help="catalog problem name (overrides the config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help=f"thread cap (overrides ${THREADS_ENV})")
        p.add_argument("--enforce-stability", type=_bool, metavar="BOOL")

    common(sub.add_parser("run", help="run one case"))
    p = sub.add_parser("converge", help="convergence study under joint refinement")
    common(p)
    p.add_argument("--levels", type=int, default=4)
    common(sub.add_parser("stability", help="print the stability certificate"))
    p = sub.add_parser("problems", help="list built-in problems")
    p.add_argument("--json", action="store_true", help="machine-readable listing")
    return parser


def _thread_cap(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"${THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _spec_from_args(args) -> RunSpec:
    spec = load_config(args.config) if args.config else RunSpec()
    if args.problem:
        spec.problem = args.problem
    if args.enforce_stability is not None:
        spec.scheme["enforce_stability"] = args.enforce_stability
    if args.out:
        spec.out = args.out
    if args.threads is not None or os.environ.get(THREADS_ENV):
        spec.threads = _thread_cap(args.threads)
    return spec


def _list_problems(as_json: bool) -> None:
    items = problems.listing()
    if as_json:
        print(json.dumps(items, indent=2))
        return
    for it in items:
        print(f"{it['name']:<22} {it['ndim']}D  exact u: yes  u = {it['u']}")
        print(f"{'':<22}      f = {it['pde']['f']}")
    print(f"{len(items)} problems")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.verb == "problems":
            _list_problems(args.json)
            return EXIT_OK
        spec = _spec_from_args(args)
        if args.verb == "stability":
            case = resolve(spec)
            cert = certify(case.grid, case.config.speeds, case.time_mesh.h_max, case.config.eps, case.config.eps0)
            out = cert.to_dict()
            if case.grid.uniform:
                out["spectral_threshold_dt"] = spectral_threshold_dt(case.grid, case.config.speeds)
            print(json.dumps(_json_safe(out), indent=2, sort_keys=True))
            return EXIT_OK
        if args.verb == "run":
            report, summary = run_case(spec)
            print(f"{summary['problem']}: {summary['levels']} levels, max L2 error {summary['max_l2_error']}")
            return EXIT_OK
        if args.verb == "converge":
            outdir = _ensure_dir(spec.out)
            table = run_convergence(ConvergenceStudy(spec, args.levels))
            write_csv(outdir / "orders.csv", ORDER_COLUMNS, table.rows)
            write_json(outdir / "summary.json", {"config": spec.to_dict(), "levels": args.levels, **table.to_dict()})
            print(f"fitted slope: energy {table.slope_energy:.3f}, L2 {table.slope_l2:.3f}")
            return EXIT_OK
    except (ConfigError, MeshError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityRejected as err:
        print(f"stability rejected: {err}", file=sys.stderr)
        return EXIT_STABILITY
    except DivergenceError as err:
        print(f"diverged at step {err.step}: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
