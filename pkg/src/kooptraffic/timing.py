"""Signal-timing inference from the oscillatory Koopman mode of flow data.

The dominant oscillatory DMD eigenvalue gives the cycle length; the angles
of its mode, converted to seconds, give each movement's relative position in
the cycle.  From those, opposing-barrier and within-barrier differences give
the four green-splits ``(a, b, c, d)`` of a standard eight-phase
ring-and-barrier controller: ``a`` is the E-W left-turn phase, ``b`` the E-W
through phase, ``c`` and ``d`` the N-S left-turn and through phases.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dmd import DmdModel, SnapshotMatrix, fit_dmd, hankel_augment
from .errors import (InsufficientDataError, KoopTrafficError, NoEstimateError,
                     NoOscillationError, ValidationError)
from .movements import MOVEMENT_LABELS, TIMED_LABELS, leg_of

log = logging.getLogger(__name__)

EW_BARRIER = ("EBLT", "EBT", "WBLT", "WBT")
NS_BARRIER = ("NBLT", "NBT", "SBLT", "SBT")

# (first, second, opposing barrier) in the order the pairs are adjusted.
_ADJUST_PAIRS = (
    ("SBT", "NBT", EW_BARRIER),
    ("SBLT", "NBLT", EW_BARRIER),
    ("WBT", "EBT", NS_BARRIER),
    ("WBLT", "EBLT", NS_BARRIER),
)

PROTECTED_LT_NOTE = "assumed protected left turns precede through movements"


@dataclass(frozen=True)
class TimingPlan:
    """Fixed-time plan of an eight-phase ring-and-barrier controller.

    ``splits`` are the green lengths ``(a, b, c, d)`` in seconds: E-W left
    turns, E-W throughs, N-S left turns, N-S throughs, run in that order.
    """

    cycle: float
    splits: Tuple[float, float, float, float]
    sequence: Tuple[Tuple[str, ...], ...] = (
        ("EBLT", "WBLT"), ("EBT", "WBT"), ("NBLT", "SBLT"), ("NBT", "SBT"))
    barriers: Tuple[Tuple[str, ...], Tuple[str, ...]] = (EW_BARRIER, NS_BARRIER)
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        splits = tuple(float(s) for s in self.splits)
        if len(splits) != 4:
            raise ValidationError("a timing plan has exactly four splits")
        if any(s < 0 for s in splits):
            raise ValidationError(f"splits must be nonnegative, got {splits}")
        if not self.cycle > 0:
            raise ValidationError(f"cycle must be positive, got {self.cycle}")
        if not math.isclose(sum(splits), self.cycle, rel_tol=1e-6, abs_tol=1e-6):
            raise ValidationError(
                f"splits {splits} sum to {sum(splits)}, not the cycle {self.cycle}")
        object.__setattr__(self, "splits", splits)
        object.__setattr__(self, "cycle", float(self.cycle))

    @classmethod
    def from_splits(cls, a: float, b: float, c: float, d: float, **kw) -> "TimingPlan":
        return cls(cycle=a + b + c + d, splits=(a, b, c, d), **kw)

    def green_windows(self) -> Dict[str, Tuple[float, float]]:
        """Green interval ``[start, end)`` within the cycle for each movement.

        Right turns run with their leg's through movement.
        """
        a, b, c, d = self.splits
        bounds = {"EW_LT": (0.0, a), "EW_T": (a, a + b),
                  "NS_LT": (a + b, a + b + c), "NS_T": (a + b + c, a + b + c + d)}
        out = {}
        for label in MOVEMENT_LABELS:
            group = "EW" if leg_of(label) in ("EB", "WB") else "NS"
            key = group + ("_LT" if label.endswith("LT") else "_T")
            out[label] = bounds[key]
        return out


# Table I plans.
PLAN_150 = TimingPlan.from_splits(26, 53, 21, 50)
PLAN_120 = TimingPlan.from_splits(16, 30, 35, 39)


@dataclass(frozen=True)
class PhaseAngles:
    """Per-movement mode angles expressed in seconds of the cycle.

    Freshly converted angles lie in ``[0, cycle)``; after
    :func:`adjust_angles` (``adjusted=True``) individual values may sit one
    period below or above that range.
    """

    cycle: float
    alpha: Mapping[str, float]
    source_eigenvalue: complex = 0j
    ignored: frozenset = frozenset()
    undefined: frozenset = frozenset()
    adjusted: bool = False

    def __post_init__(self):
        if not self.cycle > 0:
            raise ValidationError("cycle must be positive")
        if not self.adjusted:
            for k, v in self.alpha.items():
                if not 0.0 <= v < self.cycle:
                    raise ValidationError(f"angle {k}={v} outside [0, {self.cycle})")
        object.__setattr__(self, "alpha", dict(self.alpha))

    def __getitem__(self, label: str) -> float:
        return self.alpha[label]


@dataclass(frozen=True)
class GreenSplits:
    a: float
    b: float
    c: float
    d: float
    sums: Mapping[str, float] = field(default_factory=dict)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


def _mod(x: float, C: float) -> float:
    r = math.fmod(x, C)
    if r < 0:
        r += C
    # fmod of a tiny negative can round up to C.
    return 0.0 if r >= C else r


def dominant_oscillatory_eigenvalue(model: DmdModel, n_channels: Optional[int] = None,
                                    imag_tol: float = 1e-9) -> Tuple[complex, np.ndarray]:
    """Oscillatory eigenvalue with the largest real part, and its mode.

    Of a conjugate pair, the member with positive imaginary part is
    returned.  ``n_channels`` restricts the mode to its first block of rows
    (the current-time block of a delay-embedded fit).
    """
    ev = model.eigenvalues
    cand = np.flatnonzero(ev.imag > imag_tol)
    if cand.size == 0:
        raise NoOscillationError("spectrum has no eigenvalue with nonzero imaginary part")
    j = cand[np.argmax(ev[cand].real)]
    mode = model.modes[:, j]
    if n_channels is not None:
        mode = mode[:n_channels]
    return complex(ev[j]), mode.copy()


def estimate_cycle_time(lam: complex, dt: float) -> float:
    """Cycle length ``2 pi dt / Im(ln lam)`` in seconds."""
    theta = abs(math.atan2(lam.imag, lam.real))
    if theta == 0.0:
        raise ZeroDivisionError("eigenvalue is real; no oscillation period")
    return 2 * math.pi * dt / theta


def mode_angles_to_seconds(psi, C: float, labels: Sequence[str] = MOVEMENT_LABELS,
                           rel_tol: float = 1e-9) -> PhaseAngles:
    """Convert mode-component angles to positions in ``[0, C)`` seconds.

    Components with negligible magnitude have no meaningful angle and are
    reported in ``undefined``; right turns are computed but listed in
    ``ignored``.
    """
    if not C > 0:
        raise ValidationError("cycle must be positive")
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size != len(labels):
        raise ValidationError(f"{psi.size} mode components for {len(labels)} labels")
    mags = np.abs(psi)
    scale = mags.max() if mags.size else 0.0
    alpha, undefined = {}, set()
    for label, z, mag in zip(labels, psi, mags):
        if scale == 0.0 or mag <= rel_tol * scale:
            undefined.add(label)
            continue
        alpha[label] = _mod(math.atan2(z.imag, z.real) * C / (2 * math.pi), C)
    ignored = frozenset(l for l in labels if l.endswith("RT"))
    return PhaseAngles(cycle=C, alpha=alpha, ignored=ignored, undefined=frozenset(undefined))


def _positive_count(alpha: Mapping[str, float], members: Sequence[str]) -> int:
    return sum(1 for m in members if alpha.get(m, 0.0) > 0)


def adjust_angles(angles: PhaseAngles, C: Optional[float] = None) -> PhaseAngles:
    """Resolve wrap-around between simultaneous opposing movements.

    For each pair (SBT/NBT, SBLT/NBLT, WBT/EBT, WBLT/EBLT) whose difference
    exceeds half a cycle, one member is moved by a period.  Which one depends
    on whether more than two of the opposing barrier's angles are positive.
    After adjustment every pair difference lies in ``(-C/2, C/2]``.
    """
    C = angles.cycle if C is None else float(C)
    alpha = dict(angles.alpha)
    for first, second, opposing in _ADJUST_PAIRS:
        if first not in alpha or second not in alpha:
            continue
        diff = alpha[first] - alpha[second]
        majority = _positive_count(alpha, opposing) > 2
        if diff > C / 2:
            if majority:
                alpha[first] = -_mod(-alpha[first], C)
                if alpha[first] - alpha[second] > C / 2:
                    alpha[first] -= C
            else:
                alpha[second] = _mod(alpha[second], C)
                if alpha[first] - alpha[second] > C / 2:
                    alpha[second] += C
        elif diff <= -C / 2:
            if majority:
                alpha[second] = -_mod(-alpha[second], C)
                if alpha[first] - alpha[second] <= -C / 2:
                    alpha[second] -= C
            else:
                alpha[first] = _mod(alpha[first], C)
                if alpha[first] - alpha[second] <= -C / 2:
                    alpha[first] += C
    return replace(angles, alpha=alpha, cycle=C, adjusted=True)


def infer_phase_sequence(angles: PhaseAngles, tol_frac: float = 0.05) -> List[Tuple[str, ...]]:
    """Order the timed movements by descending angle.

    Larger angles precede smaller ones.  Movements whose angles are within
    ``tol_frac * C`` of their neighbour are grouped as simultaneous.
    """
    items = [(angles.alpha[m], m) for m in TIMED_LABELS if m in angles.alpha]
    items.sort(key=lambda t: (-t[0], MOVEMENT_LABELS.index(t[1])))
    tol = tol_frac * angles.cycle
    groups: List[List[str]] = []
    prev = None
    for value, label in items:
        if prev is not None and prev - value <= tol:
            groups[-1].append(label)
        else:
            groups.append([label])
        prev = value
    return [tuple(sorted(g, key=MOVEMENT_LABELS.index)) for g in groups]


def canonical_rotation(sequence: Sequence[Tuple[str, ...]], anchor: str = "EBLT") -> List[Tuple[str, ...]]:
    """Rotate a cyclic phase sequence to start at the group holding ``anchor``.

    Only the relative order of phases is identifiable, so sequences are
    compared after this rotation.
    """
    seq = [tuple(g) for g in sequence]
    for i, g in enumerate(seq):
        if anchor in g:
            return seq[i:] + seq[:i]
    return seq


def estimate_green_splits(angles: PhaseAngles, C: Optional[float] = None) -> GreenSplits:
    """Green-split lengths ``(a, b, c, d)`` from adjusted movement angles.

    Assumes protected left turns precede the through movements, so the
    earlier (larger) angle of each simultaneous pair marks the phase.
    """
    C = angles.cycle if C is None else float(C)
    al = angles.alpha
    missing = [m for m in TIMED_LABELS if m not in al]
    if missing:
        raise InsufficientDataError(f"no angle for {', '.join(missing)}")

    # LTs from opposing barriers
    kappa = max(al["SBLT"], al["NBLT"]) - max(al["EBLT"], al["WBLT"])
    c_plus_d = _mod(kappa, C)
    a_plus_b = C - c_plus_d
    # Ts from opposing barriers
    kappa = max(al["SBT"], al["NBT"]) - max(al["EBT"], al["WBT"])
    b_plus_c = _mod(kappa, C)
    d_plus_a = C - b_plus_c
    # LT and T within each barrier
    a = _mod(max(al["EBLT"], al["WBLT"]) - min(al["EBT"], al["WBT"]), C)
    c = _mod(max(al["SBLT"], al["NBLT"]) - min(al["SBT"], al["NBT"]), C)
    b = _mod(a_plus_b - a, C)
    d = _mod(c_plus_d - c, C)
    sums = {"a+b": a_plus_b, "c+d": c_plus_d, "b+c": b_plus_c, "d+a": d_plus_a}
    return GreenSplits(a=a, b=b, c=c, d=d, sums=sums)


def delays_for_cycle(C: float, dt: float, cycles: int = 2) -> int:
    """Delay count spanning ``cycles`` whole cycles (24 for 120 s at 10 s)."""
    return max(2, int(round(cycles * C / dt)))


@dataclass(frozen=True)
class WindowEstimate:
    start: int
    cycle: float
    eigenvalue: complex
    kept: bool
    splits: Optional[Tuple[float, float, float, float]] = None
    sequence: Optional[Tuple[Tuple[str, ...], ...]] = None
    angles: Optional[Mapping[str, float]] = None
    reason: str = ""


@dataclass(frozen=True)
class TimingEstimate:
    plan: TimingPlan
    cycle_estimate: float
    windows: Tuple[WindowEstimate, ...]
    angles: Mapping[str, float]

    @property
    def survival(self) -> float:
        return sum(w.kept for w in self.windows) / max(1, len(self.windows))


@dataclass(frozen=True)
class WindowFit:
    eigenvalue: complex
    cycle: float
    angles: PhaseAngles


def fit_window(flows: np.ndarray, dt: float, h: int, rank: Optional[int] = None,
               labels: Sequence[str] = MOVEMENT_LABELS, demean: bool = True) -> WindowFit:
    """Run one delay-embedded DMD fit and convert its oscillatory mode to angles."""
    X = np.asarray(flows, dtype=float)
    if demean:
        X = X - X.mean(axis=1, keepdims=True)
    emb = hankel_augment(X, h)
    model = fit_dmd(emb.x1, emb.x2, rank=rank, dt=dt)
    lam, psi = dominant_oscillatory_eigenvalue(model, n_channels=X.shape[0])
    C = estimate_cycle_time(lam, dt)
    angles = mode_angles_to_seconds(psi, C, labels=labels)
    return WindowFit(eigenvalue=lam, cycle=C, angles=replace(angles, source_eigenvalue=lam))


def estimate_cycle(flows: SnapshotMatrix, h: int = 30, rank: Optional[int] = 8,
                   demean: bool = True) -> float:
    """Single-window cycle estimate for a flow series."""
    fit = fit_window(flows.values, flows.dt, h=h, rank=rank, labels=flows.channel_labels,
                     demean=demean)
    return fit.cycle


def sliding_window_estimate(flows: SnapshotMatrix, window: int = 360, stride: int = 1,
                            expected_C: Optional[float] = None, h: Optional[int] = None,
                            rank: Optional[int] = 8, demean: bool = True,
                            tol_frac: float = 0.05) -> TimingEstimate:
    """Average timing estimates over sliding windows of a flow series.

    Each window is delay-embedded with ``h`` spanning two cycles, fitted, and
    run through angle conversion, wrap adjustment and split estimation.
    Windows whose rounded cycle estimate differs from ``expected_C`` are
    discarded; the kept split estimates are averaged.
    """
    if window < 3 or window > flows.n_steps:
        raise InsufficientDataError(
            f"window of {window} samples does not fit a series of {flows.n_steps}")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    labels = flows.channel_labels
    if h is None:
        C0 = expected_C if expected_C is not None else estimate_cycle(
            flows.window(0, window), rank=rank, demean=demean)
        h = delays_for_cycle(C0, flows.dt)
    if h >= window:
        raise InsufficientDataError(f"delay count {h} too large for window {window}")

    results: List[WindowEstimate] = []
    for start in range(0, flows.n_steps - window + 1, stride):
        X = flows.values[:, start:start + window]
        try:
            fit = fit_window(X, flows.dt, h, rank=rank, labels=labels, demean=demean)
        except KoopTrafficError as exc:
            results.append(WindowEstimate(start, math.nan, 0j, False, reason=str(exc)))
            continue
        if expected_C is not None and round(fit.cycle) != round(expected_C):
            results.append(WindowEstimate(start, fit.cycle, fit.eigenvalue, False,
                                          reason="cycle mismatch"))
            continue
        adj = adjust_angles(fit.angles)
        try:
            splits = estimate_green_splits(adj)
        except InsufficientDataError as exc:
            results.append(WindowEstimate(start, fit.cycle, fit.eigenvalue, False, reason=str(exc)))
            continue
        seq = tuple(canonical_rotation(infer_phase_sequence(adj, tol_frac)))
        results.append(WindowEstimate(start, fit.cycle, fit.eigenvalue, True,
                                      splits=splits.as_tuple(), sequence=seq,
                                      angles=dict(fit.angles.alpha)))

    kept = [w for w in results if w.kept]
    if not kept:
        raise NoEstimateError(f"all {len(results)} windows were discarded")
    splits = np.mean([w.splits for w in kept], axis=0)
    cycles = np.array([w.cycle for w in kept])
    seq = Counter(w.sequence for w in kept).most_common(1)[0][0]
    mean_angles = _mean_angles([w.angles for w in kept], [w.cycle for w in kept])
    plan = TimingPlan(cycle=float(splits.sum()), splits=tuple(splits), sequence=seq,
                      notes=(PROTECTED_LT_NOTE,))
    return TimingEstimate(plan=plan, cycle_estimate=float(cycles.mean()),
                          windows=tuple(results), angles=mean_angles)


def _mean_angles(per_window: Sequence[Mapping[str, float]], cycles: Sequence[float]) -> Dict[str, float]:
    # Circular mean, relative to the cycle of each window.
    out = {}
    C = float(np.mean(cycles))
    keys = per_window[0].keys()
    for k in keys:
        z = np.mean([np.exp(2j * np.pi * w[k] / c) for w, c in zip(per_window, cycles) if k in w])
        out[k] = _mod(np.angle(z) * C / (2 * np.pi), C)
    return out
