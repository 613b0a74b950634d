"""Command line interface for the header multicast toolkit.

Subcommands:

``analyze``
    Evaluate the analytical failure-rate model over a parameter sweep and
    write one CSV row per configuration.

``simulate``
    Run the Monte Carlo protocol simulator over a sweep, one CSV row per
    configuration and seed.

``compare``
    Run both routes and report the gap per row.  Exits with status 2 when
    any valid, error-free row falls outside its tolerance band.

``fig7`` / ``fig8``
    Preset sweeps (failure rate versus channel error, and versus repetition
    depth for two trusted-set sizes) emitting analytical and simulated
    series side by side, plus a gnuplot script drawing both.

Sweeps come from a JSON config file (``--config``) or, for one-off points,
from the ``--V/--k/--P-bit`` flags.  Config layout::

    {
      "sweep": {"P_bit": [...], "k": [...], "V": [...], "U": null, "V_u": [1]},
      "fixed": {"b": 8000, "d": 10, "l_b": 640, "l_s": 512},
      "sim":   {"periods": 20000, "warmup": null, "seeds": "0..4"}
    }

Every sweep value may be a scalar or a list; ``U`` of ``null`` means
"match V".  Rows are emitted sorted by (V, U, V_u, k, P_bit, seed) and all
floats use a fixed 12-significant-digit format, so reruns are
byte-identical when ``--no-timestamp`` is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from itertools import product
from typing import Iterable, Sequence

from .analysis import TransitionModel, qos
from .codec import BLOCK_HEADER_BITS, SIGNATURE_BITS
from .errors import InsufficientBudget, InvalidParams
from .params import SystemParams
from .sim import SimConfig, SimReport, run, simulate_many

ANALYZE_COLUMNS = [
    "P_bit", "k", "V", "U", "V_u", "b", "d", "l_b", "l_s", "error",
    "s", "p_eb", "p_es", "p_s", "p_fail", "T", "phi", "valid",
]

SIMULATE_COLUMNS = [
    "P_bit", "k", "V", "U", "V_u", "b", "d", "l_b", "l_s", "error",
    "seed", "s", "periods", "warmup", "measured_periods",
    "phi_empirical", "ci95", "resync_count",
]

COMPARE_COLUMNS = [
    "P_bit", "k", "V", "U", "V_u", "b", "d", "l_b", "l_s", "error",
    "seed", "s", "periods", "warmup", "measured_periods",
    "phi", "valid", "phi_empirical", "ci95", "resync_count",
    "abs_err", "rel_err", "tolerance", "pass",
]


@dataclass(frozen=True)
class SweepPoint:
    """One fully resolved parameter combination from a sweep."""

    P_bit: float
    k: int
    V: int
    U: int
    V_u: int
    b: int
    d: int
    l_b: int
    l_s: int

    def sort_key(self) -> tuple:
        return (self.V, self.U, self.V_u, self.k, self.P_bit)

    def prefix(self) -> list[str]:
        return [
            _fmt(self.P_bit), str(self.k), str(self.V), str(self.U),
            str(self.V_u), str(self.b), str(self.d), str(self.l_b),
            str(self.l_s),
        ]


@dataclass(frozen=True)
class ComparePoint:
    """Gap between the analytical and the simulated failure rate."""

    abs_err: float
    rel_err: float
    tolerance: float
    passed: bool


def compare_point(
    model: TransitionModel,
    report: SimReport,
    rel_tol: float = 0.10,
    ci_mult: float = 3.0,
) -> ComparePoint:
    """Score one simulated run against the model prediction.

    The tolerance band is the wider of a relative margin around the
    analytical value and a multiple of the run's 95 percent confidence
    half-width, so tight low-variance runs are not failed on noise and
    noisy short runs are not failed on resolution.
    """
    abs_err = abs(report.phi_empirical - model.phi)
    if model.phi > 0:
        rel_err = abs_err / model.phi
    else:
        rel_err = 0.0 if abs_err == 0 else math.inf
    tolerance = max(rel_tol * model.phi, ci_mult * report.ci95)
    return ComparePoint(
        abs_err=abs_err,
        rel_err=rel_err,
        tolerance=tolerance,
        passed=abs_err <= tolerance,
    )


def _fmt(value: float) -> str:
    return format(value, ".12g")


def _as_list(value) -> list:
    if isinstance(value, list):
        return value
    return [value]


def parse_seeds(spec: str) -> list[int]:
    """Parse a seed spec: ``"7"``, ``"0..4"``, or ``"1,2,5"``."""
    spec = spec.strip()
    if not spec:
        raise ValueError("empty seed spec")
    seeds: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if ".." in part:
            lo_text, hi_text = part.split("..", 1)
            lo, hi = int(lo_text), int(hi_text)
            if hi < lo:
                raise ValueError(f"descending seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    return seeds


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    if not isinstance(doc, dict):
        raise ValueError("config root must be a JSON object")
    unknown = set(doc) - {"sweep", "fixed", "sim"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    sweep = doc.get("sweep", {})
    fixed = doc.get("fixed", {})
    sim = doc.get("sim", {})
    bad = set(sweep) - {"P_bit", "k", "V", "U", "V_u"}
    if bad:
        raise ValueError(f"unknown sweep keys: {sorted(bad)}")
    bad = set(fixed) - {"b", "d", "l_b", "l_s"}
    if bad:
        raise ValueError(f"unknown fixed keys: {sorted(bad)}")
    bad = set(sim) - {"periods", "warmup", "seeds"}
    if bad:
        raise ValueError(f"unknown sim keys: {sorted(bad)}")
    for key in ("P_bit", "V", "k"):
        if key not in sweep:
            raise ValueError(f"config sweep must set {key!r}")
    return doc


def expand_points(doc: dict) -> list[SweepPoint]:
    sweep = doc.get("sweep", {})
    fixed = doc.get("fixed", {})
    b = int(fixed.get("b", 8000))
    d = int(fixed.get("d", 10))
    l_b = int(fixed.get("l_b", BLOCK_HEADER_BITS))
    l_s = int(fixed.get("l_s", SIGNATURE_BITS))
    v_list = [int(v) for v in _as_list(sweep["V"])]
    u_list = _as_list(sweep.get("U", None))
    vu_list = [int(v) for v in _as_list(sweep.get("V_u", 1))]
    k_list = [int(k) for k in _as_list(sweep["k"])]
    pb_list = [float(p) for p in _as_list(sweep["P_bit"])]
    points = []
    for V, U_raw, V_u, k, P_bit in product(v_list, u_list, vu_list, k_list, pb_list):
        U = V if U_raw is None else int(U_raw)
        points.append(
            SweepPoint(P_bit=P_bit, k=k, V=V, U=U, V_u=V_u, b=b, d=d, l_b=l_b, l_s=l_s)
        )
    return points


def model_for_point(point: SweepPoint) -> tuple[TransitionModel | None, str]:
    """Evaluate the model, mapping parameter problems to CSV error codes."""
    if point.k > point.d:
        return None, "k_exceeds_d"
    try:
        params = SystemParams(
            V=point.V, U=point.U, b=point.b, k=point.k, d=point.d,
            l_b=point.l_b, l_s=point.l_s, P_bit=point.P_bit, V_u=point.V_u,
        )
    except InvalidParams:
        return None, "invalid_params"
    try:
        return qos(params), ""
    except InsufficientBudget:
        return None, "insufficient_budget"
    except InvalidParams:
        return None, "invalid_params"


def analyze_rows(points: Sequence[SweepPoint]) -> list[list[str]]:
    rows = []
    for point in sorted(points, key=SweepPoint.sort_key):
        model, error = model_for_point(point)
        if model is None:
            rows.append(point.prefix() + [error] + [""] * 8)
            continue
        rows.append(
            point.prefix()
            + [
                "", str(model.s), _fmt(model.p_eb), _fmt(model.p_es),
                _fmt(model.p_s), _fmt(model.p[0]), _fmt(model.T),
                _fmt(model.phi), "true" if model.valid else "false",
            ]
        )
    return rows


def _sim_jobs(
    points: Sequence[SweepPoint],
    seeds: Sequence[int],
    periods: int,
    warmup: int | None,
) -> tuple[list[tuple[SweepPoint, int | None, TransitionModel | None, str]], list[SimConfig]]:
    """Split a sweep into error rows and runnable simulator configs.

    Returns a flat task list (point, seed, model, error) in sorted order and
    the matching SimConfig list for the runnable subset.
    """
    tasks: list[tuple[SweepPoint, int | None, TransitionModel | None, str]] = []
    configs: list[SimConfig] = []
    for point in sorted(points, key=SweepPoint.sort_key):
        model, error = model_for_point(point)
        if model is None:
            tasks.append((point, None, None, error))
            continue
        for seed in seeds:
            tasks.append((point, seed, model, ""))
            configs.append(
                SimConfig(params=model.params, periods=periods, warmup=warmup, seed=seed)
            )
    return tasks, configs


def simulate_rows(
    points: Sequence[SweepPoint],
    seeds: Sequence[int],
    periods: int,
    warmup: int | None,
    jobs: int,
) -> list[list[str]]:
    tasks, configs = _sim_jobs(points, seeds, periods, warmup)
    reports = iter(simulate_many(configs, jobs=jobs))
    rows = []
    for point, seed, model, error in tasks:
        if model is None:
            rows.append(point.prefix() + [error] + [""] * 8)
            continue
        report = next(reports)
        rows.append(
            point.prefix()
            + [
                "", str(seed), str(report.s), str(report.periods),
                str(report.warmup), str(report.measured_periods),
                _fmt(report.phi_empirical), _fmt(report.ci95),
                str(report.resync_count),
            ]
        )
    return rows


def compare_rows(
    points: Sequence[SweepPoint],
    seeds: Sequence[int],
    periods: int,
    warmup: int | None,
    jobs: int,
    rel_tol: float,
    ci_mult: float,
) -> tuple[list[list[str]], bool]:
    """Build compare CSV rows; the flag reports a failed valid row."""
    tasks, configs = _sim_jobs(points, seeds, periods, warmup)
    reports = iter(simulate_many(configs, jobs=jobs))
    rows = []
    any_failed = False
    for point, seed, model, error in tasks:
        if model is None:
            rows.append(point.prefix() + [error] + [""] * 13)
            continue
        report = next(reports)
        gap = compare_point(model, report, rel_tol=rel_tol, ci_mult=ci_mult)
        if model.valid and not gap.passed:
            any_failed = True
        rows.append(
            point.prefix()
            + [
                "", str(seed), str(report.s), str(report.periods),
                str(report.warmup), str(report.measured_periods),
                _fmt(model.phi), "true" if model.valid else "false",
                _fmt(report.phi_empirical), _fmt(report.ci95),
                str(report.resync_count), _fmt(gap.abs_err),
                _fmt(gap.rel_err), _fmt(gap.tolerance),
                "true" if gap.passed else "false",
            ]
        )
    return rows, any_failed


def write_csv(
    out_path: str | None,
    columns: Sequence[str],
    rows: Iterable[Sequence[str]],
    timestamp: bool,
    command: str,
) -> None:
    if out_path is None or out_path == "-":
        _write_csv_stream(sys.stdout, columns, rows, timestamp, command)
        return
    with open(out_path, "w", encoding="utf-8", newline="") as handle:
        _write_csv_stream(handle, columns, rows, timestamp, command)


def _write_csv_stream(handle, columns, rows, timestamp, command) -> None:
    if timestamp:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        handle.write(f"# headercast {command} generated {stamp}\n")
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)


def fig7_points() -> list[SweepPoint]:
    """Failure rate versus channel error for three group sizes, two depths."""
    doc = {
        "sweep": {
            "V": [10, 20, 40],
            "U": None,
            "V_u": 1,
            "k": [2, 5],
            "P_bit": [round(i * 1e-4, 10) for i in range(1, 11)],
        },
        "fixed": {"b": 8000, "d": 10},
    }
    return expand_points(doc)


def fig8_points() -> list[SweepPoint]:
    """Failure rate versus repetition depth for two trusted-set sizes."""
    doc = {
        "sweep": {
            "V": 20,
            "U": None,
            "V_u": [1, 5],
            "k": list(range(1, 11)),
            "P_bit": 4e-4,
        },
        "fixed": {"b": 8000, "d": 10},
    }
    return expand_points(doc)


# Column positions in the compare CSV (1-based, for gnuplot).
_COL_P_BIT = COMPARE_COLUMNS.index("P_bit") + 1
_COL_K = COMPARE_COLUMNS.index("k") + 1
_COL_V = COMPARE_COLUMNS.index("V") + 1
_COL_V_U = COMPARE_COLUMNS.index("V_u") + 1
_COL_PHI = COMPARE_COLUMNS.index("phi") + 1
_COL_EMP = COMPARE_COLUMNS.index("phi_empirical") + 1


def _fig_script(csv_name: str, series: list[tuple[str, str]], x_col: int, xlabel: str, key: str) -> str:
    """A gnuplot script drawing the model as lines, the simulation as points."""
    lines = [
        "set datafile separator comma",
        "set logscale y",
        f'set xlabel "{xlabel}"',
        'set ylabel "expected failures per period"',
        f"set key {key}",
        "plot \\",
    ]
    plots = []
    for cond, title in series:
        x = f"({cond} ? column({x_col}) : NaN)"
        plots.append(
            f'  "{csv_name}" using {x}:(column({_COL_PHI}))'
            f' with lines title "{title} model"'
        )
        plots.append(
            f'  "{csv_name}" using {x}:(column({_COL_EMP}))'
            f' with points title "{title} simulated"'
        )
    lines.append(", \\\n".join(plots))
    lines.append("")
    return "\n".join(lines)


def _fig7_script(csv_name: str) -> str:
    series = [
        (f"column({_COL_V})=={V} && column({_COL_K})=={k}", f"V={V} k={k}")
        for V in (10, 20, 40)
        for k in (2, 5)
    ]
    return _fig_script(csv_name, series, _COL_P_BIT, "channel bit error probability", "bottom right")


def _fig8_script(csv_name: str) -> str:
    series = [
        (f"column({_COL_V_U})=={v_u}", f"trusted set size {v_u}")
        for v_u in (1, 5)
    ]
    return _fig_script(csv_name, series, _COL_K, "headers multicast per period (k)", "top left")


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits 1 on usage errors, keeping 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="headercast", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default=None, help="output CSV path (default stdout)")
        p.add_argument(
            "--no-timestamp", action="store_true",
            help="omit the generation-time comment line",
        )

    def add_sweep_source(p):
        p.add_argument("--config", default=None, help="JSON sweep config path")
        p.add_argument("--V", type=int, default=None, help="number of servers")
        p.add_argument("--U", type=int, default=None, help="number of clients (default V)")
        p.add_argument("--k", type=int, default=None, help="headers multicast per period")
        p.add_argument("--d", type=int, default=10, help="maximum tolerated lag")
        p.add_argument("--b", type=int, default=8000, help="per-period bit budget")
        p.add_argument("--V-u", dest="V_u", type=int, default=1, help="trusted servers per client")
        p.add_argument(
            "--P-bit", dest="P_bit", type=float, action="append", default=None,
            help="channel bit error probability (repeatable)",
        )

    def add_sim_flags(p):
        p.add_argument("--periods", type=int, default=None, help="simulated periods per run")
        p.add_argument("--warmup", type=int, default=None, help="periods discarded before measuring")
        p.add_argument("--seed", type=int, default=None, help="single simulation seed")
        p.add_argument("--seeds", default=None, help='seed spec: "7", "0..4", or "1,2,5"')
        p.add_argument("--jobs", type=int, default=1, help="parallel simulation processes")

    p_analyze = sub.add_parser("analyze", help="evaluate the analytical model over a sweep")
    add_sweep_source(p_analyze)
    add_common(p_analyze)

    p_sim = sub.add_parser("simulate", help="run the protocol simulator over a sweep")
    add_sweep_source(p_sim)
    add_sim_flags(p_sim)
    add_common(p_sim)

    p_cmp = sub.add_parser("compare", help="run both routes and score the gap")
    add_sweep_source(p_cmp)
    add_sim_flags(p_cmp)
    p_cmp.add_argument("--rel-tol", type=float, default=0.10, help="relative tolerance")
    p_cmp.add_argument("--ci-mult", type=float, default=3.0, help="confidence half-width multiplier")
    add_common(p_cmp)

    for name in ("fig7", "fig8"):
        p_fig = sub.add_parser(name, help=f"write the {name} preset sweep and gnuplot script")
        p_fig.add_argument("--out", default=f"{name}.csv", help="output CSV path")
        p_fig.add_argument("--gnuplot", default=None, help="gnuplot script path (default beside CSV)")
        add_sim_flags(p_fig)
        p_fig.add_argument("--no-timestamp", action="store_true")

    return parser


def _points_from_args(args) -> list[SweepPoint]:
    if args.config is not None:
        return expand_points(load_config(args.config))
    if args.V is None or args.k is None:
        raise ValueError("give --config, or at least --V and --k for a single point")
    doc = {
        "sweep": {
            "V": args.V,
            "U": args.U,
            "V_u": args.V_u,
            "k": args.k,
            "P_bit": args.P_bit if args.P_bit is not None else [4e-4],
        },
        "fixed": {"b": args.b, "d": args.d},
    }
    return expand_points(doc)


def _sim_settings_from_args(args) -> tuple[list[int], int, int | None]:
    doc = {}
    if getattr(args, "config", None) is not None:
        doc = load_config(args.config).get("sim", {})
    if args.seed is not None and args.seeds is not None:
        raise ValueError("give either --seed or --seeds, not both")
    if args.seed is not None:
        seeds = [args.seed]
    else:
        seeds_spec = args.seeds if args.seeds is not None else doc.get("seeds", "0")
        seeds = parse_seeds(str(seeds_spec))
    periods = args.periods if args.periods is not None else int(doc.get("periods", 20000))
    warmup = args.warmup if args.warmup is not None else doc.get("warmup", None)
    if warmup is not None:
        warmup = int(warmup)
    return seeds, periods, warmup


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            rows = analyze_rows(_points_from_args(args))
            write_csv(args.out, ANALYZE_COLUMNS, rows, not args.no_timestamp, "analyze")
            return 0
        if args.command == "simulate":
            points = _points_from_args(args)
            seeds, periods, warmup = _sim_settings_from_args(args)
            rows = simulate_rows(points, seeds, periods, warmup, args.jobs)
            write_csv(args.out, SIMULATE_COLUMNS, rows, not args.no_timestamp, "simulate")
            return 0
        if args.command == "compare":
            points = _points_from_args(args)
            seeds, periods, warmup = _sim_settings_from_args(args)
            rows, any_failed = compare_rows(
                points, seeds, periods, warmup, args.jobs, args.rel_tol, args.ci_mult
            )
            write_csv(args.out, COMPARE_COLUMNS, rows, not args.no_timestamp, "compare")
            return 2 if any_failed else 0
        if args.command in ("fig7", "fig8"):
            points = fig7_points() if args.command == "fig7" else fig8_points()
            seeds, periods, warmup = _sim_settings_from_args(args)
            rows, _ = compare_rows(points, seeds, periods, warmup, args.jobs, 0.10, 3.0)
            write_csv(args.out, COMPARE_COLUMNS, rows, not args.no_timestamp, args.command)
            gp_path = args.gnuplot
            if gp_path is None:
                base = args.out if args.out.endswith(".csv") else args.out + ".csv"
                gp_path = base[:-4] + ".gp"
            script = _fig7_script(args.out) if args.command == "fig7" else _fig8_script(args.out)
            with open(gp_path, "w", encoding="utf-8") as handle:
                handle.write(script)
            return 0
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"headercast: error: {exc}", file=sys.stderr)
        return 1
    return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
