"""Network structure from the delay-embedded operator, and a VAR benchmark.

For a delay-embedded state ``[x_k; ...; x_{k+h-1}]`` the fitted operator is
close to a block companion matrix: the top ``(h-1)M`` rows shift the history
and the last block row ``[A_1 ... A_h]`` carries the dynamics.  The newest
block ``A_h`` shows which channel's present value drives which channel's
next value, which exposes coupling between neighbouring intersections.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .dmd import DmdModel, SnapshotMatrix, fit_dmd, hankel_augment
from .errors import DimensionError, InsufficientDataError, ValidationError
from .io import rebin

CORRIDOR_CHANNELS = ("NB1", "SB1", "WB1", "EB1", "NB2", "SB2", "WB2", "EB2")


@dataclass(frozen=True)
class CompanionBlocks:
    """Last block row ``[A_1 ... A_h]`` of a delay operator plus the shift-pattern error."""

    blocks: Tuple[np.ndarray, ...]
    shift_residual: float
    operator_norm: float

    @property
    def h(self) -> int:
        return len(self.blocks)

    @property
    def relative_residual(self) -> float:
        return self.shift_residual / self.operator_norm if self.operator_norm else 0.0

    def last_row(self) -> np.ndarray:
        return np.hstack(self.blocks)


def companion_pattern(h: int, M: int) -> np.ndarray:
    """Top ``(h-1)M`` rows of an exact block companion matrix."""
    P = np.zeros(((h - 1) * M, h * M))
    P[:, M:] = np.eye((h - 1) * M)
    return P


def extract_companion_blocks(model: Union[DmdModel, np.ndarray], h: int, M: int) -> CompanionBlocks:
    """Split the last ``M`` rows of the operator into ``h`` blocks.

    Raises:
        DimensionError: operator is not ``hM`` square.
        StructureUnavailableError: the model did not materialize its operator.
    """
    A = model.operator if isinstance(model, DmdModel) else np.asarray(model, dtype=float)
    if h < 1 or M < 1:
        raise ValidationError("h and M must be positive")
    if A.shape != (h * M, h * M):
        raise DimensionError(f"operator of shape {A.shape} does not match h={h}, M={M}")
    A = A.real if np.iscomplexobj(A) else A
    last = A[-M:]
    blocks = tuple(last[:, i * M:(i + 1) * M].copy() for i in range(h))
    top = A[:-M]
    resid = float(np.linalg.norm(top - companion_pattern(h, M))) if h > 1 else 0.0
    return CompanionBlocks(blocks=blocks, shift_residual=resid,
                           operator_norm=float(np.linalg.norm(A)))


def fit_delay_operator(series: SnapshotMatrix, h: int, rank: Optional[int] = None,
                       threshold: Optional[float] = None) -> DmdModel:
    """DMD on the delay embedding of ``series`` with the full operator kept."""
    emb = hankel_augment(series, h)
    return fit_dmd(emb.x1, emb.x2, rank=rank, threshold=threshold, dt=series.dt,
                   materialize=True)


@dataclass(frozen=True)
class CouplingReport:
    """Run-averaged newest block with its strongest entry.

    ``argmax_entry`` is ``(row channel, column channel, value)``: the column
    channel's present queue feeds the row channel's next queue.
    """

    matrix: np.ndarray
    argmax_entry: Tuple[str, str, float]
    zscores: np.ndarray
    per_run_argmax: Tuple[Tuple[str, str], ...]
    labels: Tuple[str, ...]
    mean_operator: Optional[np.ndarray] = None
    relative_shift_residuals: Tuple[float, ...] = ()

    def zscore(self, row: str, col: str) -> float:
        return float(self.zscores[self.labels.index(row), self.labels.index(col)])

    def cross_mask(self, split: Optional[int] = None) -> np.ndarray:
        """True where row and column belong to different intersections."""
        n = len(self.labels)
        split = n // 2 if split is None else split
        side = np.arange(n) >= split
        return side[:, None] != side[None, :]


def offdiag_zscores(matrix: np.ndarray) -> np.ndarray:
    """Each entry's z-score against the distribution of off-diagonal entries."""
    off = matrix[~np.eye(matrix.shape[0], dtype=bool)]
    sd = off.std()
    if sd == 0:
        return np.zeros_like(matrix)
    return (matrix - off.mean()) / sd


def _argmax(matrix: np.ndarray, labels) -> Tuple[str, str, float]:
    i, j = np.unravel_index(int(np.argmax(matrix)), matrix.shape)
    return labels[i], labels[j], float(matrix[i, j])


def newest_block(series: SnapshotMatrix, h: int) -> np.ndarray:
    """Bottom-right ``M x M`` block of a delay operator keeping all ``M h`` modes."""
    return _full_fit(series, h)[1].blocks[-1]


def _full_fit(series: SnapshotMatrix, h: int):
    M = series.n_channels
    model = fit_delay_operator(series, h, rank=M * h)
    return model, extract_companion_blocks(model, h, M)


def detect_coupling(stacked: Union[SnapshotMatrix, Sequence[SnapshotMatrix]], h: int = 10,
                    runs: Optional[Sequence[Tuple[int, int]]] = None, bin_dt: float = 60.0,
                    absolute: bool = False) -> CouplingReport:
    """Average the newest operator block over runs and locate its largest entry.

    Args:
        stacked: 8-channel queues of two intersections, or a list of such
            runs.  Data on a finer step are re-binned to ``bin_dt``.
        h: delays.
        runs: optional ``(start, stop)`` sample ranges cutting a single
            series into runs.
        bin_dt: bin width in seconds.
        absolute: average the absolute values of the blocks.
    """
    series_list = list(stacked) if not isinstance(stacked, SnapshotMatrix) else [stacked]
    if runs is not None:
        if len(series_list) != 1:
            raise ValidationError("runs can only cut a single series")
        series_list = [series_list[0].window(a, b) for a, b in runs]
    if not series_list:
        raise InsufficientDataError("no runs to average")
    labels = series_list[0].channel_labels
    blocks = []
    ops = []
    resid = []
    for s in series_list:
        if s.n_channels < 8:
            raise DimensionError(f"coupling needs 8 stacked channels, got {s.n_channels}")
        if s.channel_labels != labels:
            raise ValidationError("runs have different channel labels")
        if s.dt < bin_dt:
            s = rebin(s, bin_dt, "last")
        if s.n_steps <= s.n_channels * h + h:
            raise InsufficientDataError(f"run of {s.n_steps} bins is too short for h={h}")
        model, comp = _full_fit(s, h)
        B = comp.blocks[-1]
        blocks.append(np.abs(B) if absolute else B)
        ops.append(model.operator.real)
        resid.append(comp.relative_residual)
    per_run = tuple(_argmax(B, labels)[:2] for B in blocks)
    avg = np.zeros_like(blocks[0])
    for B in blocks:
        avg += B
    avg /= len(blocks)
    return CouplingReport(matrix=avg, argmax_entry=_argmax(avg, labels),
                          zscores=offdiag_zscores(avg), per_run_argmax=per_run,
                          labels=tuple(labels), mean_operator=np.mean(ops, axis=0),
                          relative_shift_residuals=tuple(resid))


@dataclass(frozen=True)
class VarModel:
    """``x_{k+h} = sum_i A_i x_{k+i-1}``; ``coefficients[0]`` multiplies the oldest lag."""

    coefficients: Tuple[np.ndarray, ...]
    lag: int
    fit_residual: float

    def predict(self, history: np.ndarray, steps: int) -> np.ndarray:
        """Roll the recursion ``steps`` times from the last ``lag`` columns of ``history``."""
        hist = np.asarray(history, dtype=float)
        if hist.shape[1] < self.lag:
            raise DimensionError(f"need {self.lag} history columns, got {hist.shape[1]}")
        window = [hist[:, -self.lag + i] for i in range(self.lag)]
        W = np.hstack(self.coefficients)
        out = np.empty((hist.shape[0], steps))
        for k in range(steps):
            nxt = W @ np.concatenate(window)
            out[:, k] = nxt
            window = window[1:] + [nxt]
        return out


def fit_var(series: Union[SnapshotMatrix, np.ndarray], lag: int) -> VarModel:
    """Joint least-squares VAR coefficients (minimum norm if rank deficient)."""
    values = series.values if isinstance(series, SnapshotMatrix) else np.atleast_2d(series)
    M, N = values.shape
    if lag < 1:
        raise ValidationError("lag must be >= 1")
    if N <= lag * M + lag:
        raise InsufficientDataError(f"{N} samples are too few for lag {lag} with {M} channels")
    if not np.any(values):
        raise ValidationError("cannot fit a VAR to an all-zero series")
    emb = hankel_augment(values, lag)
    Z = emb.x1  # (lag*M) x (N-lag)
    Y = values[:, lag:]
    W = np.linalg.lstsq(Z.T, Y.T, rcond=None)[0].T
    resid = Y - W @ Z
    coeffs = tuple(W[:, i * M:(i + 1) * M].copy() for i in range(lag))
    return VarModel(coefficients=coeffs, lag=lag, fit_residual=float(np.mean(resid ** 2)))


def hard_threshold_rank(singular_values: np.ndarray, shape: Tuple[int, int]) -> int:
    """Rank kept by the optimal hard threshold for an unknown noise level.

    Uses the Gavish-Donoho approximation ``omega(beta) * median(s)``.
    """
    m, n = sorted(shape)
    beta = m / n
    omega = 0.56 * beta ** 3 - 0.95 * beta ** 2 + 1.82 * beta + 1.43
    cut = omega * np.median(singular_values)
    return max(1, int(np.sum(singular_values > cut)))


def _dmd_rank(x1: np.ndarray, policy) -> Optional[int]:
    if policy is None or isinstance(policy, int):
        return policy
    if policy == "hard-threshold":
        s = np.linalg.svd(x1, compute_uv=False)
        return hard_threshold_rank(s, x1.shape)
    raise ValidationError(f"unknown DMD rank policy {policy!r}")


def dmd_forecast(train: np.ndarray, h: int, steps: int, rank_policy=None) -> np.ndarray:
    """Fit a delay DMD on ``train`` and advance its last delay state ``steps`` times."""
    M = train.shape[0]
    emb = hankel_augment(train, h)
    model = fit_dmd(emb.x1, emb.x2, rank=_dmd_rank(emb.x1, rank_policy), materialize=True)
    A = model.operator.real
    state = train[:, -h:].T.ravel()
    out = np.empty((M, steps))
    for k in range(steps):
        state = A @ state
        out[:, k] = state[-M:]
    return out


@dataclass(frozen=True)
class PredictionTable:
    lags: Tuple[int, ...]
    dmd_mse: np.ndarray
    var_mse: np.ndarray
    window_starts: Tuple[int, ...]

    def rows(self):
        return [(h, float(d), float(v)) for h, d, v in zip(self.lags, self.dmd_mse, self.var_mse)]


def sample_window_starts(n_steps: int, span: int, windows: int) -> np.ndarray:
    """Evenly spaced start indices of ``windows`` spans inside ``n_steps`` samples."""
    last = n_steps - span
    if last < 0:
        raise InsufficientDataError(f"series of {n_steps} samples is shorter than one window ({span})")
    return np.unique(np.linspace(0, last, windows).round().astype(int))


def compare_prediction_mse(series: SnapshotMatrix, lags: Sequence[int], train_N: int = 1200,
                           horizon: int = 60, windows: int = 20,
                           dmd_rank=None) -> PredictionTable:
    """Average forecast MSE of delay DMD and VAR over evenly spaced windows.

    Each window trains both models on ``train_N`` samples and predicts the
    next ``horizon`` samples.  ``dmd_rank`` is an int cap, ``None`` (all
    modes kept) or ``"hard-threshold"``.  With all modes kept and a full
    row rank training matrix, the DMD forecast coincides with the VAR
    forecast up to round-off.
    """
    lags = tuple(int(h) for h in lags)
    if windows < 1:
        raise ValidationError("need at least one window")
    starts = sample_window_starts(series.n_steps, train_N + horizon, windows)
    if len(starts) < windows:
        raise InsufficientDataError("series too short for distinct windows")
    if horizon == 0:
        z = np.zeros(len(lags))
        return PredictionTable(lags, z, z.copy(), tuple(int(s) for s in starts))
    X = series.values
    dmd_err = np.zeros(len(lags))
    var_err = np.zeros(len(lags))
    for s in starts:
        train = X[:, s:s + train_N]
        truth = X[:, s + train_N:s + train_N + horizon]
        for i, h in enumerate(lags):
            dmd_err[i] += np.mean((dmd_forecast(train, h, horizon, dmd_rank) - truth) ** 2)
            var_err[i] += np.mean((fit_var(train, h).predict(train, horizon) - truth) ** 2)
    n = len(starts)
    return PredictionTable(lags, dmd_err / n, var_err / n, tuple(int(s) for s in starts))
