"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 executor
results disagree.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    CONVERGENCE_BASELINE_N,
    DEFAULT_RISK_LEVELS,
    TimingBudget,
    convergence_rows,
    max_samples_within_budget,
    risk_curve,
    summarize,
)
from .backends import (
    ResultArrays,
    fit_timing_model,
    run_executor,
    run_parallel,
    run_sequential,
    timing_sweep,
    verify_consistency,
)
from .config import FIELDS, ConfigError, RunConfig, as_dict, build_config, load_file
from .sampling import draw_batch
from .svg import histogram_svg, risk_curve_svg

log = logging.getLogger("aebmc")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CONSISTENCY = 0, 1, 2, 3
TABLE_N = (1_000, 4_000, 8_000, 12_000, 25_000, 37_000, 65_000, 100_000, 150_000, 350_000)
MS_TO_KMH = 3.6


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with the I/O code
    def error(self, message):
        raise ConfigError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _worker_list(text: str) -> list[int]:
    out = []
    for item in (v.strip() for v in text.split(",")):
        if item == "max":
            out.append(os.cpu_count() or 1)
        elif item.isdigit() and int(item) >= 1:
            out.append(int(item))
        elif item:
            raise argparse.ArgumentTypeError(f"worker counts must be integers >= 1 or 'max', got {item!r}")
    # duplicate counts (e.g. 'max' on a small machine) add nothing
    return sorted(set(out))


def _config_parent() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    parent.add_argument("--config", metavar="PATH", help="YAML config file (flags override its values)")
    parent.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    groups = {}
    for f in FIELDS:
        if f.section not in groups:
            groups[f.section] = parent.add_argument_group(f"{f.section} settings")
        default = ",".join(f.default) if isinstance(f.default, tuple) else f.default
        names = [f"--{f.name.replace('_', '-')}"]
        if "_" in f.name:
            names.append(f"--{f.name}")
        groups[f.section].add_argument(
            *names, dest=f"{f.section}.{f.name}", default=None, metavar=f.name.upper(),
            help=f"{f.help} [{f.unit}] (default: {default})",
        )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    parser = _Parser(
        prog="aebmc",
        description="Monte Carlo stopping-distance and collision-risk evaluation for emergency braking.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("run", parents=[parent], help="simulate a batch; write summary, per-sample CSV, histogram")

    p = sub.add_parser("verify", parents=[parent], help="run both executors and require bit-identical results")
    p.add_argument("--compare-csv", metavar="PATH",
                   help="compare the sequential run against a results CSV instead of the parallel executor")
    p.add_argument("--worker-sweep", type=_worker_list, default=None, metavar="LIST",
                   help="comma-separated parallel worker counts to check against one sequential run; "
                        "'max' means all CPUs (default: the configured workers)")

    p = sub.add_parser("converge", parents=[parent], help="convergence table over nested sample counts")
    p.add_argument("--n-list", type=_int_list, default=list(TABLE_N),
                   help=f"comma-separated sample counts; must include {CONVERGENCE_BASELINE_N}")

    p = sub.add_parser("risk", parents=[parent], help="collision probability vs headway with safe-headway thresholds")
    p.add_argument("--risk-levels", type=_float_list, default=list(DEFAULT_RISK_LEVELS),
                   help="comma-separated risk levels in (0, 1) (default: 0.05,0.01,0.001)")
    p.add_argument("--headway-min", type=float, default=0.0, help="grid start [m] (default: 0)")
    p.add_argument("--headway-max", type=float, default=None,
                   help="grid end [m] (default: just past the largest stopping distance)")
    p.add_argument("--headway-step", type=float, default=0.5, help="grid spacing [m] (default: 0.5)")

    p = sub.add_parser("feasibility", parents=[parent], help="largest sample count within the latency budget")
    p.add_argument("--budget-total", type=float, default=700.0, help="total reaction budget [ms] (default: 700)")
    p.add_argument("--perception", type=float, default=120.0, help="perception latency [ms] (default: 120)")
    p.add_argument("--decision", type=float, default=50.0, help="decision latency [ms] (default: 50)")
    p.add_argument("--repeats", type=int, default=5, help="timed runs per candidate, median decides (default: 5)")
    p.add_argument("--n-cap", type=int, default=None, help="stop searching at this sample count")

    p = sub.add_parser("bench", parents=[parent], help="timing sweep and linear overhead/per-sample fit")
    p.add_argument("--bench-n", type=_int_list, default=[1_000, 10_000, 100_000],
                   help="comma-separated sample counts (default: 1000,10000,100000)")
    p.add_argument("--repeats", type=int, default=5, help="timed runs per point (default: 5)")
    return parser


def _resolve_config(args) -> RunConfig:
    file_values = load_file(args.config) if args.config else None
    flags = {}
    for f in FIELDS:
        value = getattr(args, f"{f.section}.{f.name}")
        if value is not None:
            flags.setdefault(f.section, {})[f.name] = value
    return build_config(file_values, flags)


# ---------------------------------------------------------------- writers


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.outputs.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _g17(x) -> str:
    return format(float(x), ".17g")


def _recorded_config(cfg: RunConfig) -> dict:
    # only what determines the numbers: no output location, no scheduling knobs
    d = as_dict(cfg)
    d["execution"] = {"executor": cfg.execution.executor, "samples": cfg.execution.samples}
    d["outputs"] = {"formats": list(cfg.outputs.formats)}
    return d


def _batch_and_report(cfg: RunConfig):
    batch = draw_batch(cfg.uncertainty, cfg.execution.samples, tau_nominal=cfg.geom.tau)
    if batch.clamped:
        log.warning("%d sampled values were floored to physical bounds: %s", batch.clamped, batch.clamp_counts)
    report = run_executor(cfg.execution.executor, batch, cfg.sim, cfg.geom, cfg.consts,
                          cfg.execution.workers, cfg.execution.chunk_size)
    return batch, report


# ---------------------------------------------------------------- commands


def cmd_run(cfg: RunConfig) -> int:
    batch, report = _batch_and_report(cfg)
    summary = summarize(report.results)
    out = _out_dir(cfg)
    fmts = cfg.outputs.formats
    if "json" in fmts:
        _write_json(out / "summary.json", {
            "config": _recorded_config(cfg),
            "summary": summary.to_dict(),
            "clamped_samples": batch.clamp_counts,
        })
    if "csv" in fmts:
        report.results.to_csv(out / "results.csv")
    if "svg" in fmts:
        _write_text(out / "histogram.svg", histogram_svg(summary.bin_edges, summary.counts,
                                                         title=f"Stopping-distance distribution (N={summary.n})"))
    v0 = cfg.uncertainty.v0_mean
    print(f"samples            {summary.n}")
    print(f"mean v0            {v0:.2f} m/s ({v0 * MS_TO_KMH:.1f} km/h)")
    print(f"mean D_stop        {summary.mean:.2f} m")
    print(f"sd D_stop          {summary.sd:.2f} m")
    print(f"range D_stop       {summary.min:.1f} .. {summary.max:.1f} m")
    print(f"horizon-terminated {summary.horizon_count}")
    print(f"{report.executor_id} wall time {report.wall_time:.3f} s (workers={report.worker_count})")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, compare_csv: str | None = None, worker_sweep=None) -> int:
    """Sequential reference against the parallel executor at each worker count (or against a file)."""
    batch = draw_batch(cfg.uncertainty, cfg.execution.samples, tau_nominal=cfg.geom.tau)
    seq = run_sequential(batch, cfg.sim, cfg.geom, cfg.consts)
    runs = []
    if compare_csv:
        other = ResultArrays.read_csv(compare_csv, cfg.sim.dt)
        if len(other) != len(seq.results):
            raise ConfigError(f"comparison has {len(other)} results, batch has {len(seq.results)}")
        runs.append(({"compared": f"file:{compare_csv}"}, verify_consistency(seq, other)))
    else:
        for workers in worker_sweep or [cfg.execution.workers]:
            par = run_parallel(batch, cfg.sim, cfg.geom, cfg.consts, workers, cfg.execution.chunk_size)
            runs.append(({"compared": "parallel", "worker_count": par.worker_count},
                         verify_consistency(seq, par)))
    passed = all(v.passed for _, v in runs)
    out = _out_dir(cfg)
    if "json" in cfg.outputs.formats:
        _write_json(out / "consistency.json", {
            "seed": cfg.uncertainty.seed, "n": batch.n, "reference": "sequential",
            "passed": passed,
            "max_abs_deviation_m": max(v.max_abs_deviation for _, v in runs),
            "bitwise_equal": all(v.bitwise_equal for _, v in runs),
            "runs": [{**label, **v.to_dict()} for label, v in runs],
        })
    for label, v in runs:
        target = label.get("worker_count", label["compared"])
        print(f"{'PASS' if v.passed else 'FAIL'} [{target}]: n={v.n} max |dD_stop| = "
              f"{v.max_abs_deviation:.6f} m, bitwise_equal={v.bitwise_equal}, mismatched={v.mismatched}")
    return EXIT_OK if passed else EXIT_CONSISTENCY


def cmd_converge(cfg: RunConfig, n_list) -> int:
    if CONVERGENCE_BASELINE_N not in n_list:
        raise ConfigError(f"n-list must include the baseline {CONVERGENCE_BASELINE_N}")
    if min(n_list) < 2:
        raise ConfigError("n-list entries must be >= 2")
    batch = draw_batch(cfg.uncertainty, max(n_list), tau_nominal=cfg.geom.tau)
    report = run_executor(cfg.execution.executor, batch, cfg.sim, cfg.geom, cfg.consts,
                          cfg.execution.workers, cfg.execution.chunk_size)
    rows = convergence_rows(report.results, n_list)
    out = _out_dir(cfg)
    if "csv" in cfg.outputs.formats:
        lines = ["n,mean_m,sd_m,delta_mean_m,delta_sd_m"]
        lines += [f"{r.n},{_g17(r.mean)},{_g17(r.sd)},{_g17(r.delta_mean)},{_g17(r.delta_sd)}" for r in rows]
        _write_text(out / "convergence.csv", "\n".join(lines) + "\n")
    if "json" in cfg.outputs.formats:
        _write_json(out / "convergence.json", {
            "baseline_n": CONVERGENCE_BASELINE_N, "seed": cfg.uncertainty.seed,
            "rows": [vars(r) for r in rows],
        })
    print(f"{'N':>9} {'mean (m)':>9} {'sd (m)':>8} {'dmean':>7} {'dsd':>7}")
    for r in rows:
        tag = "  (baseline)" if r.n == CONVERGENCE_BASELINE_N else ""
        print(f"{r.n:>9} {r.mean:9.2f} {r.sd:8.2f} {r.delta_mean:+7.2f} {r.delta_sd:+7.2f}{tag}")
    return EXIT_OK


def cmd_risk(cfg: RunConfig, risk_levels, headway_min=0.0, headway_max=None, headway_step=0.5) -> int:
    if not risk_levels or any(not 0 < r < 1 for r in risk_levels):
        raise ConfigError(f"risk-levels must lie in (0, 1), got {risk_levels}")
    if not headway_step > 0 or headway_min < 0:
        raise ConfigError("headway-step must be > 0 and headway-min >= 0")
    _, report = _batch_and_report(cfg)
    res = report.results
    if headway_max is None:
        headway_max = float(np.ceil(np.max(res.d_stop))) + headway_step
    if headway_max <= headway_min:
        raise ConfigError("headway-max must exceed headway-min")
    grid = headway_min + headway_step * np.arange(int(np.floor((headway_max - headway_min) / headway_step)) + 1)
    curve = risk_curve(res, grid, risk_levels)
    v_rel = cfg.uncertainty.v0_mean
    ttc = curve.ttc(v_rel)
    out = _out_dir(cfg)
    fmts = cfg.outputs.formats
    if "csv" in fmts:
        lines = ["headway_m,p_collision"]
        lines += [f"{_g17(h)},{_g17(p)}" for h, p in zip(curve.headways, curve.probabilities)]
        _write_text(out / "risk_curve.csv", "\n".join(lines) + "\n")
        lines = ["risk,min_safe_headway_m,ttc_s"]
        lines += [f"{_g17(r)},{_g17(h)},{_g17(ttc[r])}" for r, h in curve.thresholds.items()]
        _write_text(out / "risk_thresholds.csv", "\n".join(lines) + "\n")
    if "json" in fmts:
        _write_json(out / "risk.json", {
            "n": len(res), "seed": cfg.uncertainty.seed, "v_rel_m_s": v_rel,
            "thresholds": [{"risk": r, "min_safe_headway_m": h, "ttc_s": ttc[r]}
                           for r, h in curve.thresholds.items()],
        })
    if "svg" in fmts:
        # plotted from the CSV text values, so the figure cannot drift from the data
        hs = [float(_g17(h)) for h in curve.headways]
        ps = [float(_g17(p)) for p in curve.probabilities]
        _write_text(out / "risk_curve.svg", risk_curve_svg(hs, ps, curve.thresholds))
    print(f"N = {len(res)}, TTC at v_rel = {v_rel:.1f} m/s ({v_rel * MS_TO_KMH:.0f} km/h)")
    for r, h in curve.thresholds.items():
        print(f"  risk {r * 100:6.2f}%  min safe headway {h:7.1f} m  TTC {ttc[r]:5.2f} s")
    return EXIT_OK


def cmd_feasibility(cfg: RunConfig, budget_total=700.0, perception=120.0, decision=50.0,
                    repeats=5, n_cap=None) -> int:
    try:
        budget = TimingBudget(budget_total, perception, decision)
    except ValueError as exc:
        raise ConfigError(f"budget: {exc}") from None
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    report = max_samples_within_budget(budget, cfg.uncertainty, cfg.sim, cfg.geom, cfg.consts,
                                       cfg.execution.workers, cfg.execution.chunk_size,
                                       repeats=repeats, n_cap=n_cap)
    out = _out_dir(cfg)
    if "json" in cfg.outputs.formats:
        _write_json(out / "timing.json", report.to_dict())
    print(f"Monte Carlo budget {report.mc_budget:.0f} ms "
          f"({budget_total:.0f} - {perception:.0f} perception - {decision:.0f} decision)")
    print(f"max N within budget: {report.max_n_within_budget}"
          f"{' (search cap)' if report.capped else ''}; "
          f"meets N={CONVERGENCE_BASELINE_N} convergence threshold: {report.meets_convergence_threshold}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig, ns, repeats=5) -> int:
    if len(set(ns)) < 3:
        raise ConfigError("bench-n needs at least 3 distinct sample counts")
    batch = draw_batch(cfg.uncertainty, max(ns), tau_nominal=cfg.geom.tau)
    ex = cfg.execution
    points = timing_sweep(ex.executor, batch, ns, cfg.sim, cfg.geom, cfg.consts, ex.workers, ex.chunk_size,
                          repeats=repeats)
    overhead, per_sample = fit_timing_model(points)
    out = _out_dir(cfg)
    if "json" in cfg.outputs.formats:
        _write_json(out / "bench.json", {
            "executor_id": ex.executor, "worker_count": ex.workers, "chunk_size": ex.chunk_size,
            "points": [{"n": n, "median_wall_time_s": t} for n, t in points],
            "fit": {"t_overhead_s": overhead, "t_per_sample_s": per_sample, "weighting": "relative"},
            "fit_unweighted": dict(zip(("t_overhead_s", "t_per_sample_s"),
                                       fit_timing_model(points, relative=False))),
        })
    for n, t in points:
        print(f"N={n:>8}  {t * 1000:10.2f} ms  ({t / n * 1e6:7.2f} us/sample)")
    print(f"fit: t_overhead = {overhead * 1000:.3f} ms, t_per_sample = {per_sample * 1e6:.3f} us")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _resolve_config(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.compare_csv, args.worker_sweep)
        if args.command == "converge":
            return cmd_converge(cfg, args.n_list)
        if args.command == "risk":
            return cmd_risk(cfg, args.risk_levels, args.headway_min, args.headway_max, args.headway_step)
        if args.command == "feasibility":
            return cmd_feasibility(cfg, args.budget_total, args.perception, args.decision,
                                   args.repeats, args.n_cap)
        if args.command == "bench":
            return cmd_bench(cfg, args.bench_n, args.repeats)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
