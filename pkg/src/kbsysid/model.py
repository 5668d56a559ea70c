"""Linear-regression data model of an FIR system with unknown initial conditions.

The output of an ``n``-tap FIR system driven by ``u`` is

    y_t = sum_{k=0}^{n-1} g_k u_{t-k} + v_t,   t = 0, ..., N-1,

so the first ``n - 1`` outputs depend on the input samples ``u_{-n+1}, ..., u_{-1}``
which were never recorded.  Throughout the package those samples are stored
oldest first in a vector called ``u_minus``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SizeError, UndefinedScoreError

__all__ = [
    "Dataset",
    "RegressorMatrix",
    "as_impulse_response",
    "build_regressor",
    "ic_regressor",
    "convolve",
    "fit_score",
]


def as_impulse_response(g) -> np.ndarray:
    """Validate and return ``g`` as a 1-d float array of length >= 2."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise SizeError(f"impulse response must be 1-d with length >= 2, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("impulse response contains non-finite entries")
    return g


@dataclass(frozen=True)
class Dataset:
    """An input/output record.

    Attributes
    ----------
    u_plus : ndarray, shape (N,)
        Measured input ``u_0 .. u_{N-1}``.
    y : ndarray, shape (N,)
        Measured output.
    n : int
        Length of the FIR model to identify.
    u_minus_true : ndarray, shape (n-1,), optional
        The true initial conditions, oldest first.  Only available in simulation.
    """

    u_plus: np.ndarray
    y: np.ndarray
    n: int
    u_minus_true: Optional[np.ndarray] = None

    def __post_init__(self):
        u_plus = np.asarray(self.u_plus, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "u_plus", u_plus)
        object.__setattr__(self, "y", y)
        if u_plus.ndim != 1 or y.ndim != 1 or u_plus.size != y.size:
            raise SizeError(f"u_plus and y must be 1-d of equal length, got {u_plus.shape} and {y.shape}")
        if self.n < 1:
            raise SizeError("n must be positive")
        if u_plus.size < self.n:
            raise SizeError(f"need N >= n, got N={u_plus.size}, n={self.n}")
        if self.u_minus_true is not None:
            u_minus = np.asarray(self.u_minus_true, dtype=float)
            if u_minus.shape != (self.n - 1,):
                raise SizeError(f"u_minus_true must have length n-1={self.n - 1}, got {u_minus.shape}")
            object.__setattr__(self, "u_minus_true", u_minus)

    @property
    def N(self) -> int:
        return self.u_plus.size


@dataclass(frozen=True)
class RegressorMatrix:
    """Toeplitz regressor ``U`` split as ``known_part + ic_part``."""

    entries: np.ndarray
    known_part: np.ndarray
    ic_part: np.ndarray

    @property
    def shape(self):
        return self.entries.shape


def _lag_index(N: int, n: int) -> np.ndarray:
    # time index t - k of entry (t, k)
    return np.arange(N)[:, None] - np.arange(n)[None, :]


def build_regressor(u_plus, u_minus, n: int) -> RegressorMatrix:
    """Build the ``N x n`` regressor with entry ``(t, k) = u_{t-k}``.

    ``u_minus`` holds ``u_{-n+1}, ..., u_{-1}`` (oldest first).  Entries that
    need a negative time index go to ``ic_part``, the rest to ``known_part``.
    """
    u_plus = np.asarray(u_plus, dtype=float)
    u_minus = np.asarray(u_minus, dtype=float)
    N = u_plus.size
    if u_plus.ndim != 1 or N < n:
        raise SizeError(f"u_plus must be 1-d with N >= n, got N={N}, n={n}")
    if u_minus.shape != (n - 1,):
        raise SizeError(f"u_minus must have length n-1={n - 1}, got {u_minus.shape}")
    u_full = np.concatenate([u_minus, u_plus])
    lag = _lag_index(N, n)
    entries = u_full[lag + n - 1]
    past = lag < 0
    known = np.where(past, 0.0, entries)
    ic = np.where(past, entries, 0.0)
    return RegressorMatrix(entries=entries, known_part=known, ic_part=ic)


def ic_regressor(g_hat, N: int) -> np.ndarray:
    """Matrix ``G`` with ``G @ u_minus == U_minus @ g_hat`` for every ``u_minus``.

    Row ``t``, column of ``u_{-j}`` holds ``g_{t+j}`` (zero when ``t + j >= n``);
    columns follow the oldest-first ordering of ``u_minus``.
    """
    g = as_impulse_response(g_hat)
    n = g.size
    if N < 1:
        raise SizeError("N must be positive")
    j = n - 1 - np.arange(n - 1)          # lag of each u_minus column
    idx = np.arange(N)[:, None] + j[None, :]
    valid = idx < n
    return np.where(valid, g[np.minimum(idx, n - 1)], 0.0)


def convolve(g, u_full) -> np.ndarray:
    """Output of the FIR ``g`` for input ``u_full = [u_minus, u_plus]``."""
    g = as_impulse_response(g)
    u_full = np.asarray(u_full, dtype=float)
    n = g.size
    if u_full.ndim != 1 or u_full.size < n:
        raise SizeError(f"u_full must be 1-d with length >= n={n}, got {u_full.shape}")
    return np.convolve(u_full, g, mode="valid")


def fit_score(g_true, g_est) -> float:
    """Percentage fit ``100 * (1 - |g - g_est| / |g - mean(g)|)``."""
    g_true = np.asarray(g_true, dtype=float)
    g_est = np.asarray(g_est, dtype=float)
    if g_true.shape != g_est.shape:
        raise SizeError(f"shape mismatch {g_true.shape} vs {g_est.shape}")
    denom = np.linalg.norm(g_true - g_true.mean())
    if denom == 0.0:
        raise UndefinedScoreError("fit score undefined for a constant true response")
    return float(100.0 * (1.0 - np.linalg.norm(g_true - g_est) / denom))
