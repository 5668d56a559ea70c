"""First-order stable spline (TC) kernel and its bidiagonal factorization.

The kernel ``K[i, j] = beta ** max(i, j)`` (1-based indices) factors as

    K = inv(Delta) @ diag(w) @ inv(Delta).T

with ``Delta`` the upper-bidiagonal discrete derivator and
``w = (beta - beta**2) * [1, beta, ..., beta**(n-2), beta**(n-1) / (1 - beta)]``.
Hence ``inv(K) = Delta.T @ diag(1 / w) @ Delta`` and ``logdet K = sum(log w)``,
which is what makes the EM hyperparameter updates O(n).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeError

__all__ = [
    "MAX_KERNEL_SIZE",
    "BETA_FLOOR",
    "Hyperparameters",
    "SplineFactorization",
    "kernel_matrix",
    "derivator",
    "factorization",
    "log_weights",
]

#: Largest impulse-response length for which dense kernels are built.
MAX_KERNEL_SIZE = 512

#: Smallest decay accepted by the weight formulas.
BETA_FLOOR = 1e-6


@dataclass(frozen=True)
class Hyperparameters:
    """Kernel scale ``lam``, decay ``beta`` and noise variance ``sigma2``."""

    lam: float
    beta: float
    sigma2: float

    def __post_init__(self):
        if not self.lam >= 0.0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.sigma2 > 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    def to_dict(self) -> dict:
        return {"lambda": float(self.lam), "beta": float(self.beta), "sigma2": float(self.sigma2)}


@dataclass(frozen=True)
class SplineFactorization:
    delta: np.ndarray
    w_diag: np.ndarray
    w_recip: np.ndarray


def _check_size(n: int, minimum: int = 2):
    if n < minimum:
        raise SizeError(f"n must be >= {minimum}, got {n}")
    if n > MAX_KERNEL_SIZE:
        raise SizeError(f"n={n} exceeds MAX_KERNEL_SIZE={MAX_KERNEL_SIZE}")


def kernel_matrix(beta: float, n: int) -> np.ndarray:
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    _check_size(n)
    idx = np.arange(1, n + 1)
    return float(beta) ** np.maximum.outer(idx, idx).astype(float)


def derivator(n: int) -> np.ndarray:
    """Upper-bidiagonal matrix with ``(D g)_i = g_i - g_{i+1}`` and ``(D g)_n = g_n``."""
    _check_size(n, minimum=1)
    return np.eye(n) - np.eye(n, k=1)


def log_weights(beta: float, n: int):
    """Return ``(log w, log(1/w))`` for the diagonal factor of the kernel.

    Computed in the log domain so that ``beta ** -(n-1)`` never overflows.
    """
    if not BETA_FLOOR <= beta < 1.0:
        raise ValueError(f"beta must lie in [{BETA_FLOOR}, 1), got {beta}")
    lb = np.log(beta)
    l1b = np.log1p(-beta)
    i = np.arange(1, n + 1, dtype=float)
    # w_i = (1 - beta) beta^i for i < n, w_n = beta^n
    log_w = l1b + i * lb
    log_w[-1] = n * lb
    return log_w, -log_w


def factorization(beta: float, n: int) -> SplineFactorization:
    _check_size(n)
    log_w, log_r = log_weights(beta, n)
    return SplineFactorization(delta=derivator(n), w_diag=np.exp(log_w), w_recip=np.exp(log_r))
