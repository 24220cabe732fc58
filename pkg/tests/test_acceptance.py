"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line through the ``criterion`` fixture;
the lines are repeated at the end of the pytest run.
"""

import numpy as np
import pytest

import test_properties as props
from kooptraffic.control import (downsample_schedule, fit_queue_model, synth_phase_schedule,
                                 what_if_reconstruct)
from kooptraffic.dmd import SnapshotMatrix, fit_dmd
from kooptraffic.errors import KoopTrafficError
from kooptraffic.io import rebin
from kooptraffic.netstruct import (compare_prediction_mse, detect_coupling,
                                   extract_companion_blocks, fit_delay_operator)
from kooptraffic.scenarios import (DAY, HOUR, INCIDENT_WINDOW, MORNING_PEAK, SCORED_HOURS,
                                   benchmark_day_config, corridor_config, fixed_plan_config,
                                   incident_day_config, week_config, week_truth,
                                   whatif_training_config)
from kooptraffic.simgen import simulate_corridor, simulate_intersection
from kooptraffic.stability import counter_to_duration, rolling_instability
from kooptraffic.timing import PLAN_120, estimate_cycle, sliding_window_estimate

EW_LEGS = [2, 3]  # leg order is NB, SB, EB, WB


def flows_10s(cfg, duration):
    return rebin(simulate_intersection(cfg, duration).flows, 10, "sum")


def test_ac1_exact_operator_recovery(criterion):
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((4, 4))
        A *= rng.uniform(0.5, 0.95) / np.max(np.abs(np.linalg.eigvals(A)))
        X = np.empty((4, 50))
        X[:, 0] = rng.standard_normal(4)
        for k in range(1, 50):
            X[:, k] = A @ X[:, k - 1]
        est = fit_dmd(X[:, :-1], X[:, 1:]).eigenvalues
        truth = np.linalg.eigvals(A)
        assert est.size == truth.size
        gap = max(np.min(np.abs(est - z)) for z in truth)
        gap = max(gap, max(np.min(np.abs(truth - z)) for z in est))
        worst = max(worst, gap)
    ok = worst < 1e-8
    criterion("AC1", ok, f"worst eigenvalue error {worst:.2e} over 10 systems (tol 1e-8)")
    assert ok


@pytest.mark.slow
def test_ac2_hourly_cycle_recovery(criterion):
    days = 7
    flows = flows_10s(week_config(), days * DAY)
    per_day = []
    for day in range(days):
        within1 = within3 = 0
        for hour in SCORED_HOURS:
            s0 = int((day * DAY + hour * HOUR) // 10)
            try:
                C = estimate_cycle(flows.window(s0, s0 + 360), h=30, rank=8)
            except KoopTrafficError:
                continue
            err = abs(C - week_truth(day, hour))
            within1 += err <= 1
            within3 += err <= 3
        per_day.append((within1, within3))
    n = len(SCORED_HOURS)
    ok = all(a >= 14 and b >= 15 for a, b in per_day[:5])
    detail = ", ".join(f"d{d}: {a}/{n} within 1 s, {b}/{n} within 3 s"
                       for d, (a, b) in enumerate(per_day))
    criterion("AC2", ok, detail)
    assert ok


def test_ac3_green_split_recovery(criterion):
    flows = flows_10s(fixed_plan_config(PLAN_120, seed=3), 4 * HOUR)
    est = sliding_window_estimate(flows, 360, stride=6, expected_C=120, rank=8)
    err = np.array(est.plan.splits) - np.array(PLAN_120.splits)
    ok = bool(np.all(np.abs(err) <= 7))
    criterion("AC3", ok, f"split errors {np.round(err, 2).tolist()} s (tol 7 s), "
                         f"{est.survival:.0%} of windows kept")
    assert ok


def test_ac4_phase_sequence_recovery(criterion):
    expected = tuple(tuple(g) for g in PLAN_120.sequence)
    hits = 0
    for seed in range(10):
        flows = flows_10s(fixed_plan_config(PLAN_120, seed=seed), 2 * HOUR)
        est = sliding_window_estimate(flows, 360, stride=30, expected_C=120, rank=8)
        hits += tuple(tuple(g) for g in est.plan.sequence) == expected
    ok = hits == 10
    criterion("AC4", ok, f"ring-and-barrier order recovered on {hits}/10 seeds")
    assert ok


def incident_check(seed):
    r = simulate_intersection(incident_day_config(seed), DAY)
    wb = r.leg_queues().select(("WB",))
    trace = rolling_instability(rebin(wb, 10, "last"), 180, h=10, rank=2, threshold=30, stride=1)
    end_s = trace.times * 10
    inc = (end_s >= INCIDENT_WINDOW[0]) & (end_s <= INCIDENT_WINDOW[1] + 1800)
    morning = (end_s >= MORNING_PEAK[0]) & (end_s <= MORNING_PEAK[1] + 1800)
    c = trace.counter
    j = int(np.argmax(np.where(inc, c, -1)))
    est = float(counter_to_duration(c[j], stride=1, dt=10.0))
    q = wb.values[0]
    start = int(INCIDENT_WINDOW[0])
    true = float(np.argmax(q[start:]))
    return int(c[inc].max()), int(c[morning].max()), est, true


def test_ac5_instability_detection(criterion):
    rows = [incident_check(seed) for seed in range(3)]
    ok = all(i >= 5 * m and abs(est - true) <= 0.2 * true for i, m, est, true in rows)
    detail = "; ".join(f"seed {s}: max counter {i} vs morning {m}, duration {est:.0f} s "
                       f"vs {true:.0f} s" for s, (i, m, est, true) in enumerate(rows))
    criterion("AC5", ok, detail)
    assert ok


def test_ac6_what_if_extremes(criterion):
    r = simulate_intersection(whatif_training_config(0), 2 * DAY)
    q = rebin(r.leg_queues(), 10, "last")
    model = fit_queue_model(q, downsample_schedule(r.schedule, 10), h=12)
    x0 = np.percentile(q.values, 75, axis=1)
    steps = 720
    runs = {}
    for f in (0.0, 0.2, 0.8, 1.0):
        sched = synth_phase_schedule(120, f, 10, steps + model.delays - 1)
        runs[f] = what_if_reconstruct(model, x0, sched).clamped[EW_LEGS]
    closed = runs[0.0]
    worst_drop = float(np.max(np.maximum.accumulate(closed, axis=1) - closed) / closed.max())
    tail = closed[:, -72:]
    drift = float(np.max((tail.max(axis=1) - tail.min(axis=1)) / tail[:, -1]))
    decay = float(np.max(runs[1.0][:, -1] / x0[EW_LEGS]))
    means = [float(runs[f].mean()) for f in (0.0, 0.2, 0.8, 1.0)]
    ok = (worst_drop <= 0.005 and drift <= 0.02 and decay < 0.05
          and all(b <= a for a, b in zip(means, means[1:])))
    criterion("AC6", ok, f"0% green: largest dip {worst_drop:.2%}, last-720 s drift {drift:.2%}; "
                         f"100% green: final/initial {decay:.3f}; "
                         f"means {np.round(means, 2).tolist()}")
    assert ok


def test_ac7_companion_structure(criterion):
    rng = np.random.default_rng(0)
    M, h = 4, 3
    coeffs = rng.standard_normal((h, M, M))
    comp = np.eye(M * h, k=M)
    while True:  # shrink until the recursion is stable so the data stay well scaled
        comp[-M:] = np.hstack(coeffs)
        if np.max(np.abs(np.linalg.eigvals(comp))) < 0.95:
            break
        coeffs *= 0.9
    X = np.zeros((M, 600))
    X[:, :h] = rng.standard_normal((M, h))
    for k in range(h, X.shape[1]):
        X[:, k] = sum(A @ X[:, k - h + i] for i, A in enumerate(coeffs)) + rng.standard_normal(M)
    exact = extract_companion_blocks(
        fit_delay_operator(SnapshotMatrix(X, 1.0, tuple("abcd")), h), h, M)

    r = simulate_intersection(benchmark_day_config(0), 6 * HOUR)
    q = rebin(r.leg_queues(), 10, "last")
    sim = extract_companion_blocks(fit_delay_operator(q, 10, rank=4 * 10), 10, 4)
    ok = exact.relative_residual < 1e-8 and sim.relative_residual < 0.05
    criterion("AC7", ok, f"relative shift residual {exact.relative_residual:.1e} on linear data "
                         f"(tol 1e-8), {sim.relative_residual:.1e} on simulator queues (tol 0.05)")
    assert ok


@pytest.mark.slow
def test_ac8_coupling_detection(criterion):
    trials, per_trial = 20, 20
    hits = false_alarms = 0
    for t in range(trials):
        seeds = range(t * per_trial, (t + 1) * per_trial)
        coupled = [simulate_corridor(corridor_config(s), 2 * HOUR).stacked for s in seeds]
        hits += detect_coupling(coupled, h=10).argmax_entry[:2] == ("SB2", "SB1")
        control = [simulate_corridor(corridor_config(s, coupled=False), 2 * HOUR).stacked
                   for s in seeds]
        rep = detect_coupling(control, h=10)
        i, j = np.unravel_index(int(np.argmax(rep.matrix)), rep.matrix.shape)
        false_alarms += bool(rep.cross_mask()[i, j] and rep.zscores[i, j] > 3)
    ok = hits >= 18 and false_alarms == 0
    criterion("AC8", ok, f"(SB2, SB1) is the argmax in {hits}/{trials} averaged trials; "
                         f"uncoupled control flagged a cross entry in {false_alarms}/{trials}")
    assert ok


def inversions(a):
    return int(np.sum(np.diff(a) > 0))


def test_ac9_dmd_versus_var(criterion):
    q = simulate_intersection(benchmark_day_config(0), DAY).leg_queues()
    tab = compare_prediction_mse(q, range(2, 11), train_N=1200, horizon=60, windows=20)
    d, v = tab.dmd_mse, tab.var_mse
    not_worse = int(np.sum(d <= v * (1 + 1e-9)))
    ok = inversions(d) <= 1 and inversions(v) <= 1 and not_worse > len(d) / 2
    criterion("AC9", ok, f"inversions DMD {inversions(d)}, VAR {inversions(v)}; "
                         f"DMD <= VAR at {not_worse}/{len(d)} lags; "
                         f"max relative gap {np.max(np.abs(d - v) / v):.1e}")
    assert ok


PROPERTY_TESTS = (props.test_conjugate_symmetry, props.test_gauge_invariance_of_splits,
                  props.test_sum_closure_and_range, props.test_binning_conservation,
                  props.test_simulator_conservation_and_bounds, props.test_simulator_reproducible)


def test_ac10_property_suites(criterion):
    failed = []
    for fn in PROPERTY_TESTS:
        try:
            fn()
        except Exception as exc:  # any falsifying example counts as a failure
            failed.append(f"{fn.__name__}: {type(exc).__name__}")
    cases = props.CASES.max_examples
    ok = not failed
    criterion("AC10", ok, f"{len(PROPERTY_TESTS) - len(failed)}/{len(PROPERTY_TESTS)} "
                          f"property suites pass at {cases} cases each"
                          + (f"; failed: {failed}" if failed else ""))
    assert ok
