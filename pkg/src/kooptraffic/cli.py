"""Command-line entry point.

Every subcommand writes CSV/JSON plot data into an output directory taken
from ``--out``, else ``$KOOPTRAFFIC_OUT``, else ``./kooptraffic-out``.
Exit status is 0 on success, 2 on invalid input and 1 on any other failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import load_scenario
from .control import (PhaseSchedule, delay_inputs, downsample_schedule, fit_queue_model,
                      initial_state, input_effect_rows, synth_phase_schedule,
                      what_if_reconstruct)
from .dmd import SnapshotMatrix, multi_step_reconstruct
from .errors import InsufficientDataError, ValidationError
from .io import bin_series, load_csv, rebin, write_csv, write_table
from .movements import EAST_WEST, LEGS, MOVEMENT_LABELS, leg_of
from .netstruct import compare_prediction_mse, detect_coupling
from .simgen import SimulationResult, simulate_corridor, simulate_intersection
from .stability import daily_heatmap, rolling_instability
from .timing import sliding_window_estimate

log = logging.getLogger("kooptraffic")

OUT_ENV = "KOOPTRAFFIC_OUT"
DEFAULT_OUT = "kooptraffic-out"


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _csv_list(text: str, kind=float) -> List:
    try:
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse list {text!r}") from None


def _lags(text: str) -> List[int]:
    if "-" in text and "," not in text:
        lo, hi = (int(x) for x in text.split("-", 1))
        return list(range(lo, hi + 1))
    return _csv_list(text, int)


def _write_json(path: Path, payload) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load(path: str, kind: str, dt: float) -> SnapshotMatrix:
    table = load_csv(path, kind)
    if len(table) == 0:
        raise ValidationError(f"{path}: no data rows")
    return bin_series(table, dt)


# simulate -----------------------------------------------------------------

def _write_intersection(res: SimulationResult, out: Path, dt: float, suffix: str = ""):
    flows = rebin(res.flows, dt, "sum") if dt != res.flows.dt else res.flows
    sched = downsample_schedule(res.schedule, dt) if dt != res.schedule.dt else res.schedule
    if suffix:
        flows = SnapshotMatrix(flows.values, flows.dt, tuple(l + suffix for l in flows.channel_labels))
        sched = sched.as_snapshot()
        sched = SnapshotMatrix(sched.values, sched.dt, tuple(l + suffix for l in sched.channel_labels))
    else:
        sched = sched.as_snapshot()
    write_csv(flows, out / f"flows{suffix}.csv", "flows")
    write_csv(sched, out / f"phases{suffix}.csv", "phases")


def cmd_simulate(args) -> int:
    scen = load_scenario(args.config, seed=args.seed, duration=args.duration)
    out = _out_dir(args)
    dt = scen.output_dt
    if scen.is_corridor:
        res = simulate_corridor(scen.config, scen.duration, scen.sim_dt)
        first, second = ((res.upstream, res.downstream) if scen.config.upstream_index == 1
                         else (res.downstream, res.upstream))
        _write_intersection(first, out, dt, "1")
        _write_intersection(second, out, dt, "2")
        q = rebin(res.stacked, dt, "last") if dt != res.stacked.dt else res.stacked
        write_csv(q, out / "queues.csv", "queues")
        cfgs = [scen.config.upstream, scen.config.downstream]
    else:
        res = simulate_intersection(scen.config, scen.duration, scen.sim_dt)
        _write_intersection(res, out, dt)
        legs = res.leg_queues()
        write_csv(rebin(legs, dt, "last") if dt != legs.dt else legs, out / "queues.csv", "queues")
        cfgs = [scen.config]
    truth = {
        "duration": scen.duration,
        "output_dt": dt,
        "intersections": [{
            "seed": c.seed,
            "plan": {"cycle": c.plan.cycle, "splits": list(c.plan.splits)},
            "plan_changes": [{"time": t, "cycle": p.cycle, "splits": list(p.splits)}
                             for t, p in c.plan_changes],
        } for c in cfgs],
    }
    _write_json(out / "truth.json", truth)
    log.info("wrote simulation outputs to %s", out)
    return 0


# timing -------------------------------------------------------------------

def cmd_timing(args) -> int:
    flows = _load(args.flows, "flows", args.dt)
    if args.start is not None or args.stop is not None:
        flows = flows.window(args.start or 0, args.stop or flows.n_steps)
    est = sliding_window_estimate(flows, window=args.window, stride=args.stride,
                                  expected_C=args.expected_cycle, h=args.h, rank=args.rank)
    out = _out_dir(args)
    report = {
        "cycle": est.plan.cycle,
        "cycle_estimate": est.cycle_estimate,
        "splits": dict(zip("abcd", est.plan.splits)),
        "sequence": [list(g) for g in est.plan.sequence],
        "survival": est.survival,
        "notes": list(est.plan.notes),
        "windows": [{"start": w.start, "cycle": w.cycle, "kept": w.kept,
                     "splits": list(w.splits) if w.splits else None, "reason": w.reason}
                    for w in est.windows],
    }
    _write_json(out / "timing.json", report)
    write_table(out / "angles.csv", ("movement", "angle_s"),
                sorted(est.angles.items(), key=lambda kv: MOVEMENT_LABELS.index(kv[0])
                       if kv[0] in MOVEMENT_LABELS else 99))
    print(f"cycle {est.plan.cycle:.1f}s  splits " +
          " ".join(f"{k}={v:.1f}" for k, v in zip("abcd", est.plan.splits)))
    return 0


# monitor ------------------------------------------------------------------

def cmd_monitor(args) -> int:
    queues = _load(args.queues, "queues", args.dt)
    if args.channels:
        queues = queues.select(_csv_list(args.channels, str))
    trace = rolling_instability(queues, window_N=args.window, h=args.h, rank=args.rank,
                                threshold=args.threshold, stride=args.stride, guard=args.guard)
    out = _out_dir(args)
    write_table(out / "monitor.csv", ("k", "timestamp", "lambda1_mag", "counter", "flag"),
                ((int(k), float(k * queues.dt), float(m), int(c), int(f))
                 for k, m, c, f in zip(trace.times, trace.lambda1_mag, trace.counter, trace.flags)))
    per_day = args.samples_per_day or int(round(86400 / queues.dt))
    heat = daily_heatmap(trace, per_day)
    cols = [f"slot{j}" for j in range(heat.shape[1])]
    write_table(out / "heatmap.csv", ["day"] + cols,
                ([d] + ["" if np.isnan(v) else int(v) for v in row] for d, row in enumerate(heat)))
    peak = int(trace.counter.max()) if len(trace) else 0
    print(f"{len(trace)} windows, max counter {peak}, {int(trace.flags.sum())} flagged")
    return 0


# whatif -------------------------------------------------------------------

def _schedule_from_phases(phases: SnapshotMatrix) -> PhaseSchedule:
    try:
        rows = [phases.channel_labels.index(m) for m in MOVEMENT_LABELS]
    except ValueError:
        raise ValidationError("phase file must contain all 12 movements") from None
    return PhaseSchedule(values=phases.values[rows].round().astype(np.int8), dt=phases.dt)


def cmd_whatif(args) -> int:
    queues = _load(args.queues, "queues", args.dt).select(LEGS)
    phases = _load(args.phases, "phases", args.dt)
    n = min(queues.n_steps, phases.n_steps)
    queues = queues.window(0, n)
    sched = _schedule_from_phases(phases.window(0, n))
    h = args.h
    model = fit_queue_model(queues, sched, h=h)
    ew = [i for i, l in enumerate(queues.channel_labels) if leg_of(l) in EAST_WEST]
    if args.start_index is not None:
        k0 = args.start_index
    else:
        total = queues.values[ew].sum(axis=0)
        k0 = int(np.argmin(np.abs(total - np.percentile(total, 75))))
    k0 = min(max(k0, h - 1), n - 1)
    x0 = queues.values[:, k0]
    horizon = args.horizon
    # Rollout under the recorded schedule, from the recorded history.
    avail = max(0, min(horizon, n - k0 - 1))
    recon = None
    if avail > 0:
        U = delay_inputs(sched.values[:, k0 - h + 1:], h, avail)
        recon = multi_step_reconstruct(model, initial_state(queues, h, k0 - h + 1), avail,
                                       inputs=U)[-queues.n_channels:]
    out = _out_dir(args)
    legs = queues.channel_labels
    for pct in _csv_list(args.green):
        synth = synth_phase_schedule(args.cycle, pct, queues.dt, horizon + h - 1)
        res = what_if_reconstruct(model, x0, synth, steps=horizon)
        header = ["step", "timestamp"]
        for l in legs:
            header += [f"{l}_original", f"{l}_reconstructed", f"{l}_modified", f"{l}_modified_raw"]
        rows = []
        for j in range(horizon):
            row = [j + 1, (k0 + j + 1) * queues.dt]
            for i in range(len(legs)):
                orig = queues.values[i, k0 + j + 1] if k0 + j + 1 < n else ""
                rec = max(recon[i, j], 0.0) if recon is not None and j < avail else ""
                row += [orig, rec, res.clamped[i, j], res.raw[i, j]]
            rows.append(row)
        write_table(out / f"whatif_{int(round(pct * 100)):03d}.csv", header, rows)
    eff = input_effect_rows(model, row_labels=legs)
    write_table(out / "effects.csv", ("leg", "input", "value", "sign"),
                ((r, c, eff.values[i, j], int(eff.signs[i, j]))
                 for i, r in enumerate(eff.row_labels) for j, c in enumerate(eff.col_labels)))
    print(f"fitted queue model (rank {model.rank_used}); start sample {k0}")
    return 0


# structure ----------------------------------------------------------------

def cmd_structure(args) -> int:
    series = [_load(p, "queues", args.dt) for p in args.queues]
    if len(series) == 1 and args.run_length:
        s = series[0]
        step = int(round(args.run_length / s.dt))
        if step < 2:
            raise ValidationError("run length shorter than two samples")
        runs = [(a, a + step) for a in range(0, s.n_steps - step + 1, step)]
        report = detect_coupling(s, h=args.h, runs=runs, bin_dt=args.bin, absolute=args.absolute)
    else:
        report = detect_coupling(series, h=args.h, bin_dt=args.bin, absolute=args.absolute)
    out = _out_dir(args)
    L = report.labels
    write_table(out / "structure.csv", ("row", "col", "value", "zscore"),
                ((L[i], L[j], report.matrix[i, j], report.zscores[i, j])
                 for i in range(len(L)) for j in range(len(L))))
    A = report.mean_operator
    write_table(out / "operator.csv", ["row"] + [f"c{j}" for j in range(A.shape[1])],
                ([i] + list(A[i]) for i in range(A.shape[0])))
    row, col, val = report.argmax_entry
    _write_json(out / "structure.json", {
        "argmax": {"row": row, "col": col, "value": val, "zscore": report.zscore(row, col)},
        "direction": f"{col} feeds {row}",
        "runs": len(report.per_run_argmax),
        "per_run_argmax": [list(p) for p in report.per_run_argmax],
        "relative_shift_residual": list(report.relative_shift_residuals),
    })
    print(f"strongest entry: {col} -> {row} ({val:.3f})")
    return 0


# benchmark ----------------------------------------------------------------

def _rank_policy(text: str):
    if text in ("none", "all"):
        return None
    if text == "hard-threshold":
        return text
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"bad DMD rank policy {text!r}") from None


def cmd_benchmark(args) -> int:
    queues = _load(args.queues, "queues", args.dt)
    if args.channels:
        queues = queues.select(_csv_list(args.channels, str))
    table = compare_prediction_mse(queues, _lags(args.lags), train_N=args.train,
                                   horizon=args.horizon, windows=args.windows,
                                   dmd_rank=_rank_policy(args.dmd_rank))
    out = _out_dir(args)
    write_table(out / "benchmark.csv", ("h", "dmd_mse", "var_mse"), table.rows())
    for h, d, v in table.rows():
        print(f"h={h:2d}  dmd {d:.4f}  var {v:.4f}")
    return 0


# parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kooptraffic",
                                description="Spectral analysis of signalized-intersection data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        return sp

    s = common(sub.add_parser("simulate", help="run a simulator scenario and write CSVs"))
    s.add_argument("config", help="JSON scenario file")
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float, help="seconds; overrides the file")
    s.set_defaults(func=cmd_simulate)

    s = common(sub.add_parser("timing", help="estimate cycle, splits and phase order"))
    s.add_argument("--flows", required=True)
    s.add_argument("--dt", type=float, default=10.0)
    s.add_argument("--window", type=int, default=360)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--expected-cycle", type=float)
    s.add_argument("--h", type=int, help="delays (default: two cycles)")
    s.add_argument("--rank", type=int, default=8)
    s.add_argument("--start", type=int, help="first sample to analyse")
    s.add_argument("--stop", type=int, help="sample after the last one to analyse")
    s.set_defaults(func=cmd_timing)

    s = common(sub.add_parser("monitor", help="rolling instability trace of queues"))
    s.add_argument("--queues", required=True)
    s.add_argument("--dt", type=float, default=10.0)
    s.add_argument("--channels", help="comma-separated legs to monitor (default all)")
    s.add_argument("--window", type=int, default=180)
    s.add_argument("--h", type=int, default=10)
    s.add_argument("--rank", type=int, default=10)
    s.add_argument("--threshold", type=int, default=30)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--guard", type=float, default=0.0)
    s.add_argument("--samples-per-day", type=int)
    s.set_defaults(func=cmd_monitor)

    s = common(sub.add_parser("whatif", help="queues under synthetic E-W green shares"))
    s.add_argument("--queues", required=True)
    s.add_argument("--phases", required=True)
    s.add_argument("--dt", type=float, default=10.0)
    s.add_argument("--h", type=int, default=12)
    s.add_argument("--cycle", type=float, default=120.0)
    s.add_argument("--green", default="0,0.2,0.8,1", help="comma-separated E-W green fractions")
    s.add_argument("--horizon", type=int, default=720)
    s.add_argument("--start-index", type=int)
    s.set_defaults(func=cmd_whatif)

    s = common(sub.add_parser("structure", help="coupling between two stacked intersections"))
    s.add_argument("--queues", required=True, nargs="+", help="one file per run, or one long file")
    s.add_argument("--dt", type=float, default=60.0, help="bin width used when reading")
    s.add_argument("--h", type=int, default=10)
    s.add_argument("--bin", type=float, default=60.0)
    s.add_argument("--run-length", type=float, default=7200.0,
                   help="seconds per run when a single file is given")
    s.add_argument("--absolute", action="store_true")
    s.set_defaults(func=cmd_structure)

    s = common(sub.add_parser("benchmark", help="DMD vs VAR forecast error"))
    s.add_argument("--queues", required=True)
    s.add_argument("--dt", type=float, default=1.0)
    s.add_argument("--channels")
    s.add_argument("--lags", default="2-10")
    s.add_argument("--train", type=int, default=1200)
    s.add_argument("--horizon", type=int, default=60)
    s.add_argument("--windows", type=int, default=20)
    s.add_argument("--dmd-rank", default="none", help="'none', an integer, or 'hard-threshold'")
    s.set_defaults(func=cmd_benchmark)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, InsufficientDataError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report, do not trace
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
