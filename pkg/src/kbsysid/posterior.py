"""Gaussian posterior of the impulse response and the marginal likelihood.

With ``g ~ N(0, lam K)`` and ``y = U g + v``, ``v ~ N(0, sigma2 I)``, all
quantities are computed in whitened coordinates ``g = L z`` where
``lam K = L L^T`` and ``L = inv(Delta) diag(sqrt(lam w))`` is upper triangular.
Then ``U L`` is a scaled cumulative sum of the columns of ``U`` and the only
matrix to factor is ``M = I + (U L)^T (U L) / sigma2``, whose eigenvalues are
all >= 1, so Cholesky never needs regularizing here.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DegenerateError, NumericalError, SizeError
from .kernel import Hyperparameters, log_weights
from .model import RegressorMatrix

__all__ = [
    "PosteriorMoments",
    "posterior_moments",
    "log_marginal_likelihood",
    "estimate_noise_variance",
    "robust_cholesky",
]

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PosteriorMoments:
    """Posterior mean ``g_hat``, covariance ``cov``, second moment and ``diag(D S D^T)``."""

    g_hat: np.ndarray
    cov: np.ndarray
    s_moment: np.ndarray
    d_diag: np.ndarray


def robust_cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``a``; retries once with ``1e-10 * trace/n`` jitter."""
    try:
        return linalg.cholesky(a, lower=True)
    except linalg.LinAlgError:
        n = a.shape[0]
        jitter = 1e-10 * max(np.trace(a) / n, np.finfo(float).tiny)
        log.warning("Cholesky failed (cond ~ %.3g); adding jitter %.3g", np.linalg.cond(a), jitter)
        try:
            return linalg.cholesky(a + jitter * np.eye(n), lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError(
                f"matrix not positive definite after jitter {jitter:.3g} (cond ~ {np.linalg.cond(a):.3g})"
            ) from exc


def _entries(U) -> np.ndarray:
    return U.entries if isinstance(U, RegressorMatrix) else np.asarray(U, dtype=float)


def _prior_factor(hp: Hyperparameters, n: int) -> np.ndarray:
    """Upper-triangular ``L`` with ``L L^T = lam K``."""
    if hp.lam == 0.0:
        return np.zeros((n, n))
    log_w, _ = log_weights(hp.beta, n)
    s = np.exp(0.5 * (np.log(hp.lam) + log_w))
    return np.triu(np.ones((n, n))) * s[None, :]


class _Whitened:
    """Shared factorization for one ``(y, U, hp)`` triple."""

    def __init__(self, y, U, hp: Hyperparameters):
        U = _entries(U)
        y = np.asarray(y, dtype=float)
        if U.ndim != 2 or y.shape != (U.shape[0],):
            raise SizeError(f"y has shape {y.shape}, U has shape {U.shape}")
        self.y, self.U, self.hp = y, U, hp
        n = U.shape[1]
        self.L = _prior_factor(hp, n)
        self.B = U @ self.L
        M = np.eye(n) + (self.B.T @ self.B) / hp.sigma2
        self.R = robust_cholesky(M)
        rhs = self.B.T @ y / hp.sigma2
        self.z = linalg.cho_solve((self.R, True), rhs)
        self.g_hat = self.L @ self.z

    def loglik(self) -> float:
        N = self.y.size
        resid = self.y - self.U @ self.g_hat
        quad = resid @ resid / self.hp.sigma2 + self.z @ self.z
        logdet = N * np.log(self.hp.sigma2) + 2.0 * np.sum(np.log(np.diag(self.R)))
        return float(-0.5 * quad - 0.5 * logdet - 0.5 * N * _LOG_2PI)

    def moments(self) -> PosteriorMoments:
        V = linalg.solve_triangular(self.R, self.L.T, lower=True)
        cov = V.T @ V
        cov = 0.5 * (cov + cov.T)
        s_moment = cov + np.outer(self.g_hat, self.g_hat)
        return PosteriorMoments(g_hat=self.g_hat, cov=cov, s_moment=s_moment, d_diag=derivative_moment(s_moment))


def derivative_moment(s_moment: np.ndarray) -> np.ndarray:
    """Diagonal of ``Delta S Delta^T``, clipped at zero."""
    ds = s_moment.copy()
    ds[:-1] -= s_moment[1:]
    d = np.diag(ds).copy()
    d[:-1] -= ds[:-1, 1:].diagonal()
    return np.maximum(d, 0.0)


def posterior_moments(y, U, hp: Hyperparameters) -> PosteriorMoments:
    """Posterior moments of ``g`` given ``y`` under the stable spline prior."""
    if not (hp.lam > 0.0 and 0.0 < hp.beta < 1.0):
        raise ValueError(f"posterior needs lam > 0 and 0 < beta < 1, got {hp}")
    return _Whitened(y, U, hp).moments()


def log_marginal_likelihood(y, U, hp: Hyperparameters) -> float:
    """``log N(y; 0, lam U K U^T + sigma2 I)``."""
    return _Whitened(y, U, hp).loglik()


def posterior_and_loglik(y, U, hp: Hyperparameters):
    """Posterior moments and log marginal likelihood from one factorization."""
    w = _Whitened(y, U, hp)
    return w.moments(), w.loglik()


def estimate_noise_variance(y, u_plus, n: int) -> float:
    """Residual variance of a least-squares FIR fit on the fully measured rows.

    Only rows ``t >= n - 1`` are used so that no initial condition enters the
    regression; the variance uses ``rows - n`` degrees of freedom.
    """
    y = np.asarray(y, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    N = u_plus.size
    rows = N - (n - 1)
    if y.shape != u_plus.shape or rows <= n:
        raise SizeError(f"need N - (n-1) > n rows for least squares, got N={N}, n={n}")
    lag = np.arange(n - 1, N)[:, None] - np.arange(n)[None, :]
    Phi = u_plus[lag]
    coef, _, rank, _ = np.linalg.lstsq(Phi, y[n - 1:], rcond=None)
    if rank < n:
        raise DegenerateError(f"regressor rank {rank} < n={n}; input not persistently exciting")
    resid = y[n - 1:] - Phi @ coef
    return float(resid @ resid / (rows - n))
