"""Dynamic mode decomposition, with and without exogenous inputs.

Snapshot data are stored column-per-time-step.  The fitted operator ``A``
minimizes ``||X2 - A X1||_F`` and is computed from a truncated SVD of ``X1``;
the DMDc variant stacks the inputs under the states and splits the solution
into state and input operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, RankZeroError, StructureUnavailableError, ValidationError

# Above this operator dimension only the reduced operator is kept.
MAX_MATERIALIZED_DIM = 3000


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SnapshotMatrix:
    """Measurement matrix with one column per time step.

    Attributes:
        values: ``(M, N)`` array, rows are spatial channels.
        dt: Seconds per column.
        channel_labels: One identifier per row.
    """

    values: np.ndarray
    dt: float
    channel_labels: Tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[np.newaxis, :]
        if values.ndim != 2:
            raise DimensionError("snapshot values must be a 2-D array")
        if values.shape[0] < 1 or values.shape[1] < 2:
            raise DimensionError(
                f"need at least one channel and two time steps, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("snapshot values must be finite")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        labels = tuple(str(c) for c in self.channel_labels)
        if len(labels) != values.shape[0]:
            raise DimensionError(
                f"{len(labels)} channel labels for {values.shape[0]} rows")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "channel_labels", labels)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def window(self, start: int, stop: int) -> "SnapshotMatrix":
        """Columns ``start:stop`` as a new matrix."""
        return SnapshotMatrix(self.values[:, start:stop], self.dt, self.channel_labels)

    def select(self, labels: Sequence[str]) -> "SnapshotMatrix":
        """Rows for ``labels``, in the given order."""
        idx = [self.channel_labels.index(c) for c in labels]
        return SnapshotMatrix(self.values[idx], self.dt, tuple(labels))


@dataclass(frozen=True)
class DelayEmbedded:
    """Pair of delay-embedded (Hankel) data matrices."""

    x1: np.ndarray
    x2: np.ndarray
    h: int
    base_channels: int


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    rank: int


@dataclass(frozen=True)
class DmdModel:
    """Fitted DMD operator and its spectrum.

    ``eigenvalues`` are sorted by descending real part, then descending
    imaginary part.  Column ``j`` of ``modes`` is the unit-norm mode of
    eigenvalue ``j``.
    """

    reduced_operator: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray
    rank_used: int
    dt: float
    svd_factors: SvdFactors
    residual: float
    n_rows: int
    _operator: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def has_operator(self) -> bool:
        return self._operator is not None

    @property
    def operator(self) -> np.ndarray:
        if self._operator is None:
            raise StructureUnavailableError(
                f"operator of dimension {self.n_rows} was not materialized "
                f"(limit {MAX_MATERIALIZED_DIM})")
        return self._operator

    def step(self, x: np.ndarray) -> np.ndarray:
        """Advance a state one step."""
        if self._operator is not None:
            return self._operator @ x
        U = self.svd_factors.U
        return U @ (self.reduced_operator @ (U.T @ x))


@dataclass(frozen=True)
class DmdcModel:
    """Fitted state and input operators of ``x' = A x + B u``."""

    state_operator: np.ndarray
    input_operator: np.ndarray
    rank_used: int
    dt: float
    input_labels: Tuple[str, ...] = ()
    delays: int = 1
    residual: float = 0.0

    def __post_init__(self):
        A = self.state_operator
        B = self.input_operator
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"state operator must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise DimensionError(
                f"input operator rows {B.shape} do not match state dimension {A.shape[0]}")

    @property
    def n_state(self) -> int:
        return self.state_operator.shape[0]

    @property
    def n_input(self) -> int:
        return self.input_operator.shape[1]

    @property
    def base_channels(self) -> int:
        return self.n_state // self.delays

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.state_operator @ x + self.input_operator @ u


def _values(series) -> np.ndarray:
    if isinstance(series, SnapshotMatrix):
        return series.values
    a = np.asarray(series, dtype=float)
    if a.ndim == 1:
        a = a[np.newaxis, :]
    return a


def build_snapshot_pair(series) -> Tuple[np.ndarray, np.ndarray]:
    """Split a series into time-shifted matrices ``X1 = x_1..x_{N-1}``, ``X2 = x_2..x_N``."""
    X = _values(series)
    if X.ndim != 2 or X.shape[1] < 2:
        raise DimensionError("need at least 2 snapshots to form a shifted pair")
    return X[:, :-1].copy(), X[:, 1:].copy()


def delay_stack(values: np.ndarray, h: int, n_cols: int) -> np.ndarray:
    """Stack ``h`` shifted copies: block row ``i`` holds columns ``i .. i+n_cols-1``."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[np.newaxis, :]
    if h < 1:
        raise ValidationError(f"delay count must be >= 1, got {h}")
    if h - 1 + n_cols > values.shape[1]:
        raise DimensionError(
            f"{values.shape[1]} columns cannot fill {h} blocks of {n_cols}")
    return np.vstack([values[:, i:i + n_cols] for i in range(h)])


def hankel_augment(series, h: int) -> DelayEmbedded:
    """Delay-embed a series with ``h`` time-shifted block rows.

    Returns ``hM x (N-h)`` matrices whose block row ``i`` holds samples
    shifted by ``i``; ``x2`` is ``x1`` advanced one step.
    """
    X = _values(series)
    h = int(h)
    if h < 1:
        raise ValidationError(f"delay count must be >= 1, got {h}")
    M, N = X.shape
    if h >= N:
        raise DimensionError(f"delay count {h} must be smaller than series length {N}")
    n_cols = N - h
    x1 = delay_stack(X[:, :-1], h, n_cols)
    x2 = delay_stack(X[:, 1:], h, n_cols)
    return DelayEmbedded(x1=x1, x2=x2, h=h, base_channels=M)


def default_threshold(shape: Tuple[int, int], smax: float) -> float:
    return max(shape) * np.finfo(float).eps * smax


def truncated_svd(X: np.ndarray, rank: Optional[int] = None,
                  threshold: Optional[float] = None) -> SvdFactors:
    """Thin SVD truncated to ``min(rank, #{s > threshold})`` terms.

    Args:
        X: Finite 2-D array.
        rank: Optional cap on the number of retained singular values.
        threshold: Absolute singular-value cutoff.  Defaults to
            ``max(X.shape) * eps * s_max``.

    Raises:
        RankZeroError: If no singular value exceeds the threshold.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("truncated_svd expects a 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValidationError("matrix has non-finite entries")
    if rank is not None and rank < 1:
        raise ValidationError(f"rank cap must be >= 1, got {rank}")
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        raise RankZeroError("matrix is identically zero")
    cutoff = default_threshold(X.shape, smax) if threshold is None else float(threshold)
    r = int(np.count_nonzero(s > cutoff))
    if rank is not None:
        r = min(r, int(rank))
    if r == 0:
        raise RankZeroError(f"no singular value above {cutoff:g}")
    return SvdFactors(U=U[:, :r], s=s[:r], V=Vh[:r].T, rank=r)


def sort_spectrum(eigvals: np.ndarray) -> np.ndarray:
    """Permutation ordering eigenvalues by descending real, then imaginary part."""
    return np.lexsort((-eigvals.imag, -eigvals.real))


def normalize_modes(modes: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Scale columns to unit norm with first significant entry real positive."""
    out = np.array(modes, dtype=complex)
    for j in range(out.shape[1]):
        col = out[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        col = col / norm
        mags = np.abs(col)
        first = int(np.argmax(mags > rel_tol * mags.max()))
        col = col * (np.conj(col[first]) / mags[first])
        out[:, j] = col
    return out


def fit_dmd(X1, X2, rank: Optional[int] = None, threshold: Optional[float] = None,
            dt: float = 1.0, materialize: Optional[bool] = None) -> DmdModel:
    """Least-squares DMD operator from a shifted snapshot pair.

    The reduced operator is ``U^T X2 V S^{-1}``; its eigenvectors lifted by
    ``U`` give the modes.  The full operator ``X2 V S^{-1} U^T`` is built when
    its dimension is at most ``MAX_MATERIALIZED_DIM`` (or when forced).
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if X1.ndim == 1:
        X1 = X1[np.newaxis, :]
    if X2.ndim == 1:
        X2 = X2[np.newaxis, :]
    if X1.shape != X2.shape:
        raise DimensionError(f"X1 {X1.shape} and X2 {X2.shape} differ")
    svd = truncated_svd(X1, rank=rank, threshold=threshold)
    U, s, V = svd.U, svd.s, svd.V
    X2V = X2 @ V
    W = X2V / s  # X2 V S^{-1}
    A_red = U.T @ W
    eigvals, eigvecs = np.linalg.eig(A_red)
    order = sort_spectrum(eigvals)
    eigvals = eigvals[order]
    modes = normalize_modes(U @ eigvecs[:, order])

    n = X1.shape[0]
    if materialize is None:
        materialize = n <= MAX_MATERIALIZED_DIM
    A = W @ U.T if materialize else None
    # A X1 = X2 V V^T, so the residual needs no full operator.
    residual = float(np.linalg.norm(X2 - X2V @ V.T))
    return DmdModel(
        reduced_operator=_frozen(A_red),
        eigenvalues=_frozen(eigvals),
        modes=_frozen(modes),
        rank_used=svd.rank,
        dt=float(dt),
        svd_factors=svd,
        residual=residual,
        n_rows=n,
        _operator=None if A is None else _frozen(A),
    )


def fit_dmdc(X1, X2, U_in, rank: Optional[int] = None, threshold: Optional[float] = 1e-10,
             dt: float = 1.0, input_labels: Sequence[str] = (), delays: int = 1) -> DmdcModel:
    """DMD with control: ``X2 ~ A X1 + B U_in`` via the SVD of ``[X1; U_in]``.

    The default absolute singular-value threshold is ``1e-10``; pass
    ``threshold=None`` for the relative machine-precision cutoff.
    """
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    U_in = np.atleast_2d(np.asarray(U_in, dtype=float))
    if X1.shape != X2.shape:
        raise DimensionError(f"X1 {X1.shape} and X2 {X2.shape} differ")
    if U_in.shape[1] != X1.shape[1]:
        raise DimensionError(
            f"input has {U_in.shape[1]} columns, states have {X1.shape[1]}")
    n = X1.shape[0]
    omega = np.vstack([X1, U_in])
    svd = truncated_svd(omega, rank=rank, threshold=threshold)
    W = (X2 @ svd.V) / svd.s
    A = W @ svd.U[:n].T
    B = W @ svd.U[n:].T
    residual = float(np.linalg.norm(X2 - A @ X1 - B @ U_in))
    return DmdcModel(
        state_operator=_frozen(A),
        input_operator=_frozen(B),
        rank_used=svd.rank,
        dt=float(dt),
        input_labels=tuple(input_labels),
        delays=int(delays),
        residual=residual,
    )


def multi_step_reconstruct(model: Union[DmdModel, DmdcModel], x1, steps: int,
                           inputs=None) -> np.ndarray:
    """Roll the fitted model forward from ``x1``.

    Returns the ``steps`` states ``x_2 .. x_{steps+1}`` as columns.  Inputs
    are required for a :class:`DmdcModel` and must supply at least ``steps``
    columns; column ``k`` drives the step from ``x_k`` to ``x_{k+1}``.
    """
    x = np.asarray(x1, dtype=float).ravel()
    steps = int(steps)
    if steps < 0:
        raise ValidationError("steps must be nonnegative")
    if isinstance(model, DmdcModel):
        if inputs is None:
            raise ValidationError("a DMDc model needs an input sequence")
        u = np.atleast_2d(np.asarray(inputs, dtype=float))
        if u.shape[0] != model.n_input:
            raise DimensionError(f"inputs have {u.shape[0]} rows, model expects {model.n_input}")
        if u.shape[1] < steps:
            raise DimensionError(f"{u.shape[1]} input columns for {steps} steps")
        if x.size != model.n_state:
            raise DimensionError(f"initial state has {x.size} entries, model expects {model.n_state}")
        out = np.empty((model.n_state, steps))
        for k in range(steps):
            x = model.step(x, u[:, k])
            out[:, k] = x
        return out
    if inputs is not None:
        raise ValidationError("inputs given for a model without an input operator")
    if x.size != model.n_rows:
        raise DimensionError(f"initial state has {x.size} entries, model expects {model.n_rows}")
    out = np.empty((model.n_rows, steps))
    for k in range(steps):
        x = model.step(x)
        out[:, k] = x
    return out


def spectral_radius(model_or_eigvals) -> Tuple[complex, float]:
    """Eigenvalue of largest modulus and its modulus.

    Ties go to the larger real part, then to the nonnegative imaginary part.
    """
    ev = model_or_eigvals.eigenvalues if isinstance(model_or_eigvals, DmdModel) \
        else np.asarray(model_or_eigvals, dtype=complex)
    ev = np.atleast_1d(ev)
    if ev.size == 0:
        raise ValidationError("empty spectrum")
    mags = np.abs(ev)
    top = mags.max()
    cand = np.flatnonzero(np.isclose(mags, top, rtol=1e-12, atol=0.0))
    best = max(cand, key=lambda i: (ev[i].real, ev[i].imag >= 0, ev[i].imag))
    return complex(ev[best]), float(mags[best])
