"""Randomized invariants, at least 100 cases each."""

import cmath
import math

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kooptraffic.dmd import fit_dmd, hankel_augment
from kooptraffic.io import RawEventTable, bin_values
from kooptraffic.movements import MOVEMENT_LABELS, TIMED_LABELS
from kooptraffic.simgen import IntersectionConfig, simulate_intersection
from kooptraffic.timing import (TimingPlan, adjust_angles, estimate_green_splits,
                                mode_angles_to_seconds)

CASES = settings(max_examples=120, deadline=None,
                 suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
phase = st.floats(0, 2 * math.pi, allow_nan=False, exclude_max=True)
cycles = st.sampled_from([90.0, 100.0, 120.0, 150.0])


def circular_gap(x, y, C):
    d = abs(x - y) % C
    return min(d, C - d)


@CASES
@given(arrays(float, st.tuples(st.integers(2, 6), st.integers(8, 30)), elements=finite))
def test_conjugate_symmetry(X):
    assume(np.linalg.norm(X) > 1e-3)
    ev = fit_dmd(X[:, :-1], X[:, 1:]).eigenvalues
    scale = max(1.0, np.abs(ev).max())
    for z in ev:
        assert np.min(np.abs(ev - np.conj(z))) <= 1e-6 * scale


@st.composite
def mode_vectors(draw):
    mags = draw(st.lists(st.floats(0.1, 2.0), min_size=12, max_size=12))
    phases = draw(st.lists(phase, min_size=12, max_size=12))
    return np.array([m * cmath.exp(1j * p) for m, p in zip(mags, phases)])


def splits_of(psi, C):
    return estimate_green_splits(adjust_angles(mode_angles_to_seconds(psi, C)))


def away_from_half_cycle(psi, C):
    """Pair differences exactly at half a cycle are a measure-zero tie."""
    a = mode_angles_to_seconds(psi, C).alpha
    pairs = (("SBT", "NBT"), ("SBLT", "NBLT"), ("WBT", "EBT"), ("WBLT", "EBLT"))
    return all(abs(circular_gap(a[x], a[y], C) - C / 2) > 1e-6 for x, y in pairs)


@CASES
@given(mode_vectors(), phase, cycles)
def test_gauge_invariance_of_splits(psi, rotation, C):
    assume(away_from_half_cycle(psi, C))
    base = splits_of(psi, C).as_tuple()
    turned = splits_of(psi * cmath.exp(1j * rotation), C).as_tuple()
    for x, y in zip(base, turned):
        assert circular_gap(x, y, C) < 1e-6


@CASES
@given(mode_vectors(), cycles)
def test_sum_closure_and_range(psi, C):
    angles = mode_angles_to_seconds(psi, C)
    assert all(0 <= v < C for v in angles.alpha.values())
    s = splits_of(psi, C)
    assert math.isclose(s.sums["a+b"] + s.sums["c+d"], C, rel_tol=0, abs_tol=1e-9)
    assert math.isclose(s.sums["b+c"] + s.sums["d+a"], C, rel_tol=0, abs_tol=1e-9)
    assert all(0 <= v < C for v in s.as_tuple())


@CASES
@given(st.lists(st.floats(0, 5000, allow_nan=False), min_size=1, max_size=200),
       st.floats(0.5, 120), st.data())
def test_binning_conservation(times, dt, data):
    counts = data.draw(st.lists(st.integers(0, 5), min_size=len(times), max_size=len(times)))
    labels = data.draw(st.lists(st.sampled_from(TIMED_LABELS), min_size=len(times),
                                max_size=len(times)))
    order = np.argsort(times, kind="stable")
    table = RawEventTable("flows", np.asarray(times)[order], tuple(labels[i] for i in order),
                          np.asarray(counts, float)[order])
    out, _ = bin_values(table, dt)
    assert out.sum() == sum(counts)


@st.composite
def small_configs(draw):
    a = draw(st.integers(0, 40))
    b = draw(st.integers(0, 40))
    c = draw(st.integers(0, 40))
    d = draw(st.integers(1, 40))
    plan = TimingPlan.from_splits(a, b, c, d)
    rates = {m: draw(st.floats(0, 0.5)) for m in MOVEMENT_LABELS}
    return IntersectionConfig(plan=plan, arrival_rates=rates,
                              saturation_flow=draw(st.floats(0.1, 1.0)),
                              capacity=draw(st.floats(1, 50)), seed=draw(st.integers(0, 2**31)),
                              split_jitter=draw(st.sampled_from([0.0, 3.0])))


@CASES
@given(small_configs())
def test_simulator_conservation_and_bounds(cfg):
    r = simulate_intersection(cfg, 300)
    q = r.queues.values
    prev = np.hstack([np.zeros((12, 1)), q[:, :-1]])
    np.testing.assert_allclose(q, prev + r.arrivals - r.flows.values - r.dropped, atol=1e-9)
    assert q.min() >= 0 and q.max() <= cfg.capacity + 1e-9
    green = r.schedule.values.astype(bool)
    ew = np.array([m[:2] in ("EB", "WB") for m in MOVEMENT_LABELS])
    assert not (green[ew].any(axis=0) & green[~ew].any(axis=0)).any()


@CASES
@given(small_configs())
def test_simulator_reproducible(cfg):
    a = simulate_intersection(cfg, 200)
    b = simulate_intersection(cfg, 200)
    assert np.array_equal(a.queues.values, b.queues.values)
    assert np.array_equal(a.flows.values, b.flows.values)
    assert np.array_equal(a.schedule.values, b.schedule.values)


@CASES
@given(arrays(float, st.tuples(st.integers(1, 4), st.integers(12, 40)), elements=finite),
       st.integers(1, 5))
def test_hankel_shift_structure(X, h):
    emb = hankel_augment(X, h)
    M = X.shape[0]
    np.testing.assert_array_equal(emb.x2[:-M], emb.x1[M:])
    np.testing.assert_array_equal(emb.x1[:M], X[:, :X.shape[1] - h])
