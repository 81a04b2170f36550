"""Command-line entry point: simulate, calibrate, compare, monitor.

Exit codes: 0 success, 2 invalid configuration or input data, 3 estimate
dominated by capped runs, 4 calibration budget exhausted (partial result is
still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import arl, charts, config as cfgmod, report, study
from .config import ConfigFileError
from .datagen import Scenario
from .stats import statistic_sigma

logger = logging.getLogger("robust_spc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRUNCATED = 3
EXIT_BUDGET = 4


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_or_print(out: str | None, payload: bytes) -> None:
    if out is None or out == "-":
        sys.stdout.write(payload.decode())
    else:
        _atomic_write(Path(out), payload)


def _common(cfg, args):
    seed = args.seed if args.seed is not None else cfgmod.get(cfg, "seed", arl.DEFAULT_SEED, int)
    reps = args.replications or cfgmod.get(cfg, "replications", 10_000, int)
    workers = args.workers or cfgmod.get(cfg, "workers", 1, int)
    cap = cfgmod.get(cfg, "cap", arl.DEFAULT_CAP, int)
    if reps < 1:
        raise cfgmod.fail(cfg, "replications", "replications must be >= 1")
    if cap < 1:
        raise cfgmod.fail(cfg, "cap", "cap must be >= 1")
    return seed, reps, workers, cap


def _chart(cfg):
    if "chart" not in cfg:
        raise cfgmod.fail(cfg, None, "missing 'chart' section")
    return cfgmod.chart_config(cfg["chart"], cfg)


def _named_charts(cfg) -> dict:
    if "charts" not in cfg or not isinstance(cfg["charts"], dict) or not cfg["charts"]:
        raise cfgmod.fail(cfg, "charts", "'charts' must map chart names to chart sections")
    return {name: cfgmod.chart_config(section, cfg) for name, section in cfg["charts"].items()}


def _scenario(cfg, args=None) -> Scenario:
    section = cfg.get("scenario")
    if args is not None and getattr(args, "scenario", None):
        section = args.scenario
    scenario = cfgmod.scenario_config(section, cfg)
    if args is not None and getattr(args, "delta", None) is not None:
        scenario = scenario.with_shift(args.delta)
    return scenario


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = cfgmod.load(args.config)
    seed, reps, workers, cap = _common(cfg, args)
    chart = _chart(cfg)
    scenario = _scenario(cfg, args)
    lengths, truncated = arl.simulate_run_lengths(chart, scenario, reps, cap, seed, workers)
    summary = arl.summarize_run_lengths(lengths, truncated, cap, seed)
    doc = {
        "chart": charts.chart_to_dict(chart),
        "scenario": scenario.to_dict(),
        "summary": summary.to_dict(),
    }
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["arl", "std_error", "replications", "cap", "truncated_count", "master_seed"])
        w.writerow([repr(summary.arl), repr(summary.std_error), summary.replications,
                    summary.cap, summary.truncated_count, seed])
        payload = buf.getvalue().encode()
    elif args.format == "text":
        flag = " (lower bound)" if summary.lower_bound else ""
        payload = (
            f"{chart.family} delta={scenario.delta} theta={scenario.theta}: "
            f"ARL {summary.arl:.2f} +/- {summary.std_error:.2f}{flag} "
            f"[{reps} replications, seed {seed}]\n"
        ).encode()
    else:
        payload = (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    _write_or_print(args.out, payload)
    if args.run_lengths:
        _atomic_write(Path(args.run_lengths),
                      ("run_length,truncated\n" + "".join(
                          f"{int(v)},{int(t)}\n" for v, t in zip(lengths, truncated))).encode())
    if summary.truncated_count * 2 > summary.replications:
        logger.error("%d of %d runs hit the cap", summary.truncated_count, reps)
        return EXIT_TRUNCATED
    return EXIT_OK


# --------------------------------------------------------------------------
# calibrate


def _calibrate_single(cfg, args) -> int:
    seed, reps, workers, cap = _common(cfg, args)
    chart = _chart(cfg)
    scenario = _scenario(cfg)
    target = cfgmod.get(cfg, "target_arl0", 500.0, float)
    tolerance = cfgmod.get(cfg, "tolerance", 0.01, float)
    budget = cfgmod.get(cfg, "budget", 60, int)
    schedule = tuple(int(r) for r in cfg.get("schedule", arl.DEFAULT_SCHEDULE))
    parameter = cfg.get("parameter")
    ok = True
    record = {}
    if "h_table" in cfg:
        if not isinstance(chart, charts.SparksConfig):
            raise cfgmod.fail(cfg, "h_table", "h_table applies to sparks_acusum charts only")
        section = cfg["h_table"]
        grid = section.get("delta_grid", list(chart.h_grid)) if isinstance(section, dict) else None
        if grid is None:
            raise cfgmod.fail(cfg, "h_table", "h_table must be a mapping with delta_grid")
        try:
            table = arl.sparks_h_table(
                grid, target, tolerance, schedule, chart.statistic,
                scenario.subgroup_size, seed, workers, budget,
            )
        except arl.CalibrationError as exc:
            logger.error("%s", exc)
            return EXIT_BUDGET
        chart = charts.with_parameter(
            charts.with_parameter(chart, "h_grid", tuple(table["h_grid"])),
            "h_values", tuple(table["h_values"]),
        )
        record["h_table"] = table
        ok = ok and table["success"]
    if parameter is not None or "h_table" not in cfg:
        try:
            result = arl.calibrate_limit(
                chart, target, tolerance, parameter, scenario, schedule, budget, seed, workers, cap
            )
        except charts.ConfigError as exc:
            raise cfgmod.fail(cfg, "parameter", str(exc)) from None
        chart = result.config
        record["limit"] = result.to_dict()
        ok = ok and result.success
    doc = {k: v for k, v in cfg.items() if k not in ("chart", "calibration", "h_table", "parameter")}
    doc["chart"] = charts.chart_to_dict(chart)
    doc["calibration"] = record
    _write_or_print(args.out, cfgmod.dumps(doc).encode())
    return EXIT_OK if ok else EXIT_BUDGET


def _calibrate_study(cfg, args) -> int:
    seed, reps, workers, cap = _common(cfg, args)
    printed = _named_charts(cfg)
    scenario = _scenario(cfg)
    convention = cfgmod.get(cfg, "cusum_convention", "resolve", str)
    if convention not in ("resolve", "none", *arl.CONVENTIONS):
        raise cfgmod.fail(cfg, "cusum_convention", f"unknown convention {convention!r}")
    result = study.calibrate_study(
        printed,
        convention=convention,
        target_arl0=cfgmod.get(cfg, "target_arl0", 500.0, float),
        band=cfgmod.get(cfg, "recalibrate_band", 0.02, float),
        replications=reps,
        tolerance=cfgmod.get(cfg, "tolerance", 0.01, float),
        schedule=tuple(int(r) for r in cfg.get("schedule", arl.DEFAULT_SCHEDULE)),
        subgroup_size=scenario.subgroup_size,
        master_seed=seed,
        workers=workers,
    )
    doc = {k: v for k, v in cfg.items() if k not in ("charts", "calibration", "convention_report")}
    doc["cusum_convention"] = "none"
    doc["charts"] = {name: charts.chart_to_dict(c) for name, c in result.charts.items()}
    doc["calibration"] = result.records
    if result.convention is not None:
        doc["convention_report"] = {
            "chosen": result.convention.chosen,
            "arl0": result.convention.arl0,
            "scores": result.convention.scores,
            "within_10_percent": result.convention.within,
        }
    _write_or_print(args.out, cfgmod.dumps(doc).encode())
    ok = all(r.get("success", True) for r in result.records.values())
    return EXIT_OK if ok else EXIT_BUDGET


def cmd_calibrate(args) -> int:
    cfg = cfgmod.load(args.config)
    if "charts" in cfg:
        return _calibrate_study(cfg, args)
    return _calibrate_single(cfg, args)


# --------------------------------------------------------------------------
# compare


def _study_charts(cfg) -> dict:
    configs = _named_charts(cfg)
    convention = cfgmod.get(cfg, "cusum_convention", "none", str)
    if convention == "resolve":
        raise cfgmod.fail(cfg, "cusum_convention",
                          "run 'calibrate' first to resolve the CUSUM convention")
    if convention in arl.CONVENTIONS:
        n = _scenario(cfg).subgroup_size
        configs = {
            k: arl.apply_convention(v, convention, n) if isinstance(v, study.CUSUM_TYPES) else v
            for k, v in configs.items()
        }
    elif convention != "none":
        raise cfgmod.fail(cfg, "cusum_convention", f"unknown convention {convention!r}")
    return configs


def cmd_compare(args) -> int:
    cfg = cfgmod.load(args.config)
    seed, reps, workers, cap = _common(cfg, args)
    configs = _study_charts(cfg)
    scenarios = cfg.get("scenarios") or {}
    if not isinstance(scenarios, dict):
        raise cfgmod.fail(cfg, "scenarios", "'scenarios' must be a mapping")
    clean = cfgmod.scenario_config(scenarios.get("clean", "clean"), cfg)
    contaminated = cfgmod.scenario_config(scenarios.get("contaminated", "contaminated"), cfg)
    shifts = [float(s) for s in cfg.get("shifts", report.SHIFTS)]
    nominal = cfgmod.get(cfg, "target_arl0", 500.0, float)

    def progress(name, delta, summary):
        logger.info("%-18s delta=%.1f ARL=%.2f", name, delta, summary.arl)

    result = study.run_study(configs, clean, contaminated, shifts, reps, cap, seed, workers,
                             nominal, progress=progress)
    fmt = args.format
    ext = {"csv": "csv", "json": "json", "text": "txt"}[fmt]
    tables = {"clean": result.clean, "contaminated": result.contaminated, "rarl": result.rarl}
    if args.out:
        out = Path(args.out)
        for name, table in tables.items():
            _atomic_write(out / f"{name}.{ext}", report.emit(table, fmt))
        rows = ["table,chart,delta,value,reference,relative_difference,pass\n"]
        for tname, cells in result.comparisons.items():
            for c in cells:
                rows.append(
                    f"{tname},{c['chart']},{c['delta']!r},{c['value']!r},{c['reference']!r},"
                    f"{c['relative_difference']!r},{c['pass']}\n"
                )
        _atomic_write(out / "reference_comparison.csv", "".join(rows).encode())
    for table in tables.values():
        sys.stdout.write(report.render_text(table))
    sys.stdout.write(f"elapsed {result.seconds:.1f} s\n")
    bad = [c for t in tables.values() for r in t.cells for c in r if not c.usable]
    return EXIT_TRUNCATED if bad else EXIT_OK


# --------------------------------------------------------------------------
# monitor


def _read_observations(path: Path, n: int):
    groups: dict = {}
    order = []
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise ConfigFileError(exc.strerror or str(exc), str(path)) from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["subgroup_id", "value"]:
            raise ConfigFileError("expected header 'subgroup_id,value'", str(path), 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ConfigFileError(f"row {lineno}: expected 2 columns", str(path), lineno)
            sid = row[0].strip()
            try:
                value = float(row[1])
            except ValueError:
                raise ConfigFileError(f"row {lineno}: bad value {row[1]!r}", str(path), lineno) from None
            if not math.isfinite(value):
                raise ConfigFileError(f"row {lineno}: non-finite value", str(path), lineno)
            if sid not in groups:
                groups[sid] = []
                order.append(sid)
            groups[sid].append(value)
    for sid in order:
        if len(groups[sid]) != n:
            raise ConfigFileError(
                f"subgroup {sid!r} has {len(groups[sid])} observations, config expects {n}",
                str(path),
            )
    return order, groups


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def cmd_monitor(args) -> int:
    cfg = cfgmod.load(args.config)
    chart = _chart(cfg)
    n = cfgmod.get(cfg, "subgroup_size", _scenario(cfg).subgroup_size, int)
    process = cfg.get("process") or {}
    mean = float(process.get("mean", 0.0))
    sigma = float(process.get("sigma", 1.0))
    if not sigma > 0:
        raise cfgmod.fail(cfg, "process", "process sigma must be positive")
    data_path = args.data or cfg.get("data")
    if not data_path:
        raise cfgmod.fail(cfg, None, "no input data (use --data or a 'data' key)")
    path = Path(data_path)
    if not path.is_absolute() and not path.exists() and getattr(cfg, "path", None):
        path = Path(cfg.path).parent / path
    order, groups = _read_observations(path, n)
    scale = statistic_sigma(chart.statistic, n)
    state = charts.reset(chart)
    rows = []
    keys: list = []
    first = None
    for t, sid in enumerate(order, start=1):
        values = np.asarray(groups[sid])
        raw = float(values.mean() if chart.statistic == "mean" else np.median(values))
        u = ((raw - mean) / sigma) / scale
        outcome = charts.step(chart, state, u)
        state = outcome.state_after
        record = {"t": t, "subgroup_id": sid, "statistic": raw}
        record.update(outcome.trace)
        record["signal"] = bool(outcome.signal)
        for k in record:
            if k not in keys:
                keys.append(k)
        rows.append(record)
        if outcome.signal and first is None:
            first = t
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([r["subgroup_id"] if k == "subgroup_id" else _csv_cell(r[k]) if k in r else ""
                    for k in keys])
    if args.out:
        _atomic_write(Path(args.out), buf.getvalue().encode())
    else:
        sys.stdout.write(buf.getvalue())
    if first is None:
        print(f"no signal in {len(order)} inspections")
    else:
        print(f"first signal at inspection {first} (subgroup {order[first - 1]})")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-spc", description="Robust and adaptive control chart simulation"
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats=True):
        p.add_argument("--config", required=True, help="YAML config file or preset name")
        p.add_argument("--out", help="output path (directory for compare); stdout if omitted")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--replications", type=int)
        if formats:
            p.add_argument("--format", choices=("csv", "json", "text"), default="json")

    p = sub.add_parser("simulate", help="estimate the ARL of one chart in one scenario")
    common(p)
    p.add_argument("--scenario", help="scenario preset (clean, contaminated)")
    p.add_argument("--delta", type=float, help="override the scenario shift")
    p.add_argument("--run-lengths", help="also write per-replication run lengths (CSV)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="calibrate a chart (or a study) to a target ARL0")
    common(p, formats=False)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compare", help="clean, contaminated and relative-ARL tables")
    common(p)
    p.set_defaults(func=cmd_compare, format="text")
    p.set_defaults()

    p = sub.add_parser("monitor", help="apply a chart to observed subgroup data")
    common(p, formats=False)
    p.add_argument("--data", help="CSV with columns subgroup_id,value")
    p.set_defaults(func=cmd_monitor)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "compare" and not any(a.startswith("--format") for a in (argv or sys.argv[1:])):
        args.format = "text"
    try:
        return args.func(args)
    except ConfigFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
