"""EM estimators of the stable spline hyperparameters and the initial conditions.

Every estimator alternates an E-step (posterior moments of ``g`` under the
current hyperparameters and initial conditions) with a closed-form M-step:

* the decay ``beta`` minimizes a scalar function of ``diag(Delta S Delta^T)``
  over a grid, refined by golden-section search;
* the scale ``lam`` is then the average of that diagonal weighted by ``1 / w``;
* when the initial conditions are free, they maximize a quadratic form whose
  coefficients come from the second moment ``S`` of ``g``.

Estimators differ only in how ``u_minus`` is treated: fixed (zeros, oracle,
conditional mean), dropped (truncation), free (model-less) or free with a
Gaussian prior given the measured input (joint).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg
from scipy import optimize, special
from scipy.special import logsumexp

from .arma import ArmaModel, CovMode, InputConditioning, condition_initial
from .errors import DegenerateError, SizeError
from .kernel import Hyperparameters, log_weights
from .model import Dataset, build_regressor, ic_regressor
from .posterior import PosteriorMoments, log_marginal_likelihood, posterior_and_loglik, robust_cholesky

__all__ = [
    "EmOptions",
    "QuadraticTerms",
    "EstimationResult",
    "quadratic_terms",
    "beta_objective",
    "beta_update",
    "lambda_update",
    "q2_objective",
    "modless_u_update",
    "joint_u_update",
    "run_modless",
    "run_condmean",
    "run_joint",
    "run_fixed_ic",
    "run_truncated",
]

log = logging.getLogger(__name__)

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class EmOptions:
    """Iteration control for the EM estimators.

    ``accelerate`` applies a safeguarded squared extrapolation of the EM map.
    ``ecme`` follows each M-step of the estimators that update ``u_minus``
    with a direct maximization of the marginal likelihood over
    ``(lam, beta)``; it never lowers the objective and removes most of the
    slow drift along flat directions of the model-less likelihood.
    ``init_lambda=None`` starts from the sample variance of ``y``;
    ``init_u_minus=None`` starts from zeros (model-less) or from the
    conditional mean (joint).
    """

    max_iters: int = 200
    rel_tol: float = 1e-6
    beta_grid: int = 500
    beta_range: tuple = (0.001, 0.999)
    refine_tol: float = 1e-6
    init_lambda: Optional[float] = None
    init_beta: float = 0.8
    init_u_minus: Optional[np.ndarray] = None
    accelerate: bool = True
    ecme: bool = True

    def __post_init__(self):
        lo, hi = self.beta_range
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < lo < hi < 1.0:
            raise ValueError(f"beta_range must satisfy 0 < lo < hi < 1, got {self.beta_range}")
        if not self.rel_tol > 0.0:
            raise ValueError("rel_tol must be positive")
        if self.beta_grid < 3:
            raise ValueError("beta_grid must be >= 3")

    def grid(self) -> np.ndarray:
        """Grid points log-spaced in ``1 - beta``, increasing in ``beta``."""
        lo, hi = self.beta_range
        one_minus = np.logspace(np.log10(1.0 - lo), np.log10(1.0 - hi), self.beta_grid)
        return 1.0 - one_minus


@dataclass(frozen=True)
class QuadraticTerms:
    """Expected complete log-likelihood in ``u_minus`` is ``-(u'Au)/(2 s2) + (u'b)/s2``."""

    a_mat: np.ndarray
    b_vec: np.ndarray


@dataclass
class EstimationResult:
    method: str
    g_hat: np.ndarray
    g_cov: np.ndarray
    u_minus_hat: Optional[np.ndarray]
    hp: Hyperparameters
    objective_trace: list = field(default_factory=list)
    iters: int = 0
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "g_hat": self.g_hat.tolist(),
            "u_minus_hat": None if self.u_minus_hat is None else self.u_minus_hat.tolist(),
            "hp": self.hp.to_dict(),
            "iters": self.iters,
            "converged": self.converged,
            "objective": self.objective,
        }


# ---------------------------------------------------------------------------
# M-step pieces


def quadratic_terms(s_moment, g_hat, u_plus, y, known_part=None) -> QuadraticTerms:
    """Coefficients of the expected complete log-likelihood in ``u_minus``.

    ``A[m, m'] = sum_t S[t + j, t + j']`` where ``j, j'`` are the lags of the
    two initial conditions, and ``b = G^T y - c`` with ``G = ic_regressor(g_hat)``
    and ``c[m] = sum_t (U_plus S)[t, t + j]``.  Neither the Kronecker product
    nor the selection operator mapping ``u_minus`` to ``vec(U_minus)`` is formed.
    """
    S = np.asarray(s_moment, dtype=float)
    y = np.asarray(y, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    n = S.shape[0]
    N = y.size
    if S.shape != (n, n) or u_plus.shape != (N,) or np.shape(g_hat) != (n,):
        raise SizeError("inconsistent shapes in quadratic_terms")
    if known_part is None:
        known_part = build_regressor(u_plus, np.zeros(n - 1), n).known_part

    # C[p, q] = sum_t S[p + t, q + t]: cumulative sums along diagonals, from the bottom right
    C = S.copy()
    for i in range(n - 2, -1, -1):
        C[i, :-1] += C[i + 1, 1:]
    lags = n - 1 - np.arange(n - 1)
    A = C[np.ix_(lags, lags)]

    P = known_part[: n - 1] @ S
    c = np.array([np.trace(P, offset=j) for j in lags])
    b = ic_regressor(g_hat, N).T @ y - c
    return QuadraticTerms(a_mat=0.5 * (A + A.T), b_vec=b)


def _log_f(d_diag: np.ndarray, betas: np.ndarray) -> np.ndarray:
    n = d_diag.size
    lb = np.log(betas)[:, None]
    expo = -np.arange(n, dtype=float)[None, :] * lb        # log beta^(1-i), i = 1..n
    expo = np.broadcast_to(expo, (betas.size, n)).copy()
    expo[:, -1] += np.log1p(-betas)
    return logsumexp(expo, b=np.broadcast_to(d_diag, expo.shape), axis=1)


def beta_objective(d_diag, betas) -> np.ndarray:
    """``n log f(beta) + n(n-1)/2 log beta - log(1 - beta)`` with
    ``f(beta) = sum_{i<n} d_i beta^(1-i) + d_n (1 - beta) beta^(1-n)``."""
    d = np.asarray(d_diag, dtype=float)
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    n = d.size
    return n * _log_f(d, betas) + 0.5 * n * (n - 1) * np.log(betas) - np.log1p(-betas)


def _golden_section(fun: Callable[[float], float], lo: float, hi: float, tol: float):
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fun(x1), fun(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fun(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def beta_update(d_diag, opts: Optional[EmOptions] = None, current: Optional[float] = None) -> float:
    """Decay minimizing :func:`beta_objective` over the grid, then refined.

    If ``current`` is given and scores better than the search result it is
    kept, so the M-step never decreases the surrogate.
    """
    opts = opts or EmOptions()
    d = np.asarray(d_diag, dtype=float)
    if np.any(d < 0.0):
        raise ValueError("d_diag must be nonnegative")
    if not np.any(d > 0.0):
        raise DegenerateError("all derivative moments are zero: impulse response estimate is identically zero")
    grid = opts.grid()
    q = beta_objective(d, grid)
    k = int(np.argmin(q))
    best, best_q = grid[k], q[k]
    if opts.refine_tol > 0:
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, grid.size - 1)]
        x, fx = _golden_section(lambda b: beta_objective(d, b)[0], lo, hi, opts.refine_tol)
        if fx < best_q:
            best, best_q = x, fx
    if current is not None and 0.0 < current < 1.0:
        if beta_objective(d, current)[0] < best_q:
            best = current
    return float(best)


def lambda_update(d_diag, beta: float) -> float:
    """``(1/n) sum_i d_i / w_i``, i.e. ``trace(inv(K_beta) S) / n``."""
    d = np.asarray(d_diag, dtype=float)
    if not np.any(d > 0.0):
        return 0.0
    _, log_r = log_weights(beta, d.size)
    return float(np.exp(logsumexp(log_r, b=d)) / d.size)


def q2_objective(d_diag, lam: float, beta: float) -> float:
    """Hyperparameter part of the E-step surrogate,
    ``-trace(inv(lam K) S)/2 - logdet(lam K)/2``."""
    d = np.asarray(d_diag, dtype=float)
    n = d.size
    log_w, log_r = log_weights(beta, n)
    trace = np.exp(logsumexp(log_r, b=d)) if np.any(d > 0) else 0.0
    return float(-0.5 * trace / lam - 0.5 * (n * np.log(lam) + log_w.sum()))


def modless_u_update(qt: QuadraticTerms) -> np.ndarray:
    """Unconstrained maximizer ``inv(A) b``."""
    chol = robust_cholesky(qt.a_mat)
    return linalg.cho_solve((chol, True), qt.b_vec)


def joint_u_update(qt: QuadraticTerms, sigma2: float, cond: InputConditioning, cond_chol=None) -> np.ndarray:
    """Maximizer of ``-(u'Au)/(2 s2) + (u'b)/s2 - (u - m)' inv(P) (u - m) / 2``.

    Written as ``m + L inv(I + L'AL/s2) L' (b - A m) / s2`` with ``P = L L'``,
    which stays well conditioned when ``P`` is nearly singular or huge.
    """
    L = robust_cholesky(cond.cov) if cond_chol is None else cond_chol
    A, b, m = qt.a_mat, qt.b_vec, cond.mean
    M = np.eye(m.size) + L.T @ A @ L / sigma2
    rhs = L.T @ (b - A @ m) / sigma2
    return m + L @ linalg.cho_solve((robust_cholesky(M), True), rhs)


# ---------------------------------------------------------------------------
# EM driver


def _rel_change(old, new) -> float:
    old = np.atleast_1d(old)
    new = np.atleast_1d(new)
    scale = np.max(np.abs(new))
    diff = np.max(np.abs(new - old)) if new.size else 0.0
    if diff == 0.0:
        return 0.0
    return float(diff / scale) if scale > 0 else np.inf


_MAX_BACKTRACK = 4


def _to_free(lam, beta, u):
    parts = [np.log(lam), np.log(beta) - np.log1p(-beta)]
    return np.concatenate([parts, u]) if u is not None else np.asarray(parts)


def _from_free(x, has_u, opts: EmOptions):
    lo, hi = opts.beta_range
    lam = float(np.exp(np.clip(x[0], -700.0, 700.0)))
    beta = float(np.clip(special.expit(x[1]), lo, hi))
    return lam, beta, (x[2:].copy() if has_u else None)


def _profile_rho(y, U, sigma2, lam, beta, opts: EmOptions):
    """Maximize the marginal likelihood over ``(lam, beta)`` with ``U`` fixed, starting from the EM values."""
    lo, hi = opts.beta_range

    def nll(x):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                hp = Hyperparameters(float(np.exp(x[0])), float(special.expit(x[1])), sigma2)
                val = -log_marginal_likelihood(y, U, hp)
        except (ArithmeticError, ValueError):
            return np.inf
        return val if np.isfinite(val) else np.inf

    x0 = np.array([np.log(lam), special.logit(beta)])
    bounds = [(x0[0] - 30.0, x0[0] + 30.0), (special.logit(lo), special.logit(hi))]
    res = optimize.minimize(nll, x0, method="L-BFGS-B", bounds=bounds, options={"maxiter": 20})
    if np.isfinite(res.fun) and res.fun < nll(x0):
        return float(np.exp(res.x[0])), float(special.expit(res.x[1]))
    return lam, beta


def _run_em(
    method: str,
    y: np.ndarray,
    n: int,
    sigma2: float,
    opts: EmOptions,
    regressor: Callable[[np.ndarray], np.ndarray],
    u0: Optional[np.ndarray],
    u_step: Optional[Callable[[PosteriorMoments, np.ndarray], np.ndarray]] = None,
    u_logprior: Optional[Callable[[np.ndarray], float]] = None,
) -> EstimationResult:
    lam = opts.init_lambda
    if lam is None:
        lam = float(np.var(y)) or 1.0
    has_u = u_step is not None

    def estep(theta):
        lam, beta, u = theta
        post, ll = posterior_and_loglik(y, regressor(u), Hyperparameters(lam, beta, sigma2))
        if u_logprior is not None:
            ll += u_logprior(u)
        return post, ll

    def mstep(theta, post):
        beta = beta_update(post.d_diag, opts, current=theta[1])
        lam = lambda_update(post.d_diag, beta)
        u = u_step(post, theta[2]) if has_u else theta[2]
        if opts.ecme and has_u:
            lam, beta = _profile_rho(y, regressor(u), sigma2, lam, beta, opts)
        return lam, beta, u

    def change(a, b):
        c = max(_rel_change(a[0], b[0]), _rel_change(a[1], b[1]))
        return max(c, _rel_change(a[2], b[2])) if has_u else c

    theta = (float(lam), float(opts.init_beta), u0)
    post, ll = estep(theta)
    trace = [ll]
    iters = 0
    converged = False
    while iters < opts.max_iters and not converged:
        # plain EM step
        theta1 = mstep(theta, post)
        post1, ll1 = estep(theta1)
        iters += 1
        trace.append(ll1)
        converged = change(theta, theta1) < opts.rel_tol
        if converged or iters >= opts.max_iters or not opts.accelerate:
            theta, post = theta1, post1
            continue
        theta2 = mstep(theta1, post1)
        post2, ll2 = estep(theta2)
        iters += 1
        trace.append(ll2)
        converged = change(theta1, theta2) < opts.rel_tol
        best = (theta2, post2)
        if not converged:
            # squared extrapolation of the EM map, kept only if it does not lose likelihood
            x0, x1, x2 = (_to_free(*t) for t in (theta, theta1, theta2))
            r = x1 - x0
            v = x2 - 2.0 * x1 + x0
            nv = np.linalg.norm(v)
            alpha = -np.linalg.norm(r) / nv if nv > 0 else -1.0
            # step length is halved towards the plain EM step until the likelihood does not drop
            for _ in range(_MAX_BACKTRACK):
                if alpha >= -1.0:
                    break
                try:
                    with np.errstate(over="ignore", invalid="ignore"):
                        theta3 = _from_free(x0 - 2.0 * alpha * r + alpha**2 * v, has_u, opts)
                        post3, ll3 = estep(theta3)
                    if not np.isfinite(ll3):
                        raise ArithmeticError("non-finite objective")
                except (ArithmeticError, ValueError):
                    ll3 = -np.inf
                if ll3 >= ll2:
                    best = (theta3, post3)
                    trace.append(ll3)
                    converged = change(theta2, theta3) < opts.rel_tol
                    break
                alpha = 0.5 * (alpha - 1.0)
        theta, post = best
    if not converged:
        log.info("%s: no convergence after %d iterations", method, iters)
    lam, beta, u = theta
    return EstimationResult(
        method=method,
        g_hat=post.g_hat,
        g_cov=post.cov,
        u_minus_hat=None if u is None else np.asarray(u, dtype=float),
        hp=Hyperparameters(lam, beta, sigma2),
        objective_trace=trace,
        iters=iters,
        converged=converged,
    )


def _setup(dataset: Dataset, n: Optional[int], opts: Optional[EmOptions]):
    n = dataset.n if n is None else n
    if dataset.N < n:
        raise SizeError(f"need N >= n, got N={dataset.N}, n={n}")
    return n, opts or EmOptions()


def run_fixed_ic(dataset: Dataset, u_minus_fixed, n: Optional[int] = None, sigma2: float = 1.0,
                 opts: Optional[EmOptions] = None, method: str = "fixed_ic") -> EstimationResult:
    """Empirical Bayes with the initial conditions held at ``u_minus_fixed``."""
    n, opts = _setup(dataset, n, opts)
    u_fixed = np.asarray(u_minus_fixed, dtype=float)
    U = build_regressor(dataset.u_plus, u_fixed, n).entries
    return _run_em(method, dataset.y, n, sigma2, opts, lambda _: U, u_fixed)


def run_truncated(dataset: Dataset, n: Optional[int] = None, sigma2: float = 1.0,
                  opts: Optional[EmOptions] = None) -> EstimationResult:
    """Empirical Bayes on the rows ``t >= n - 1``, which need no initial condition."""
    n, opts = _setup(dataset, n, opts)
    if dataset.N - (n - 1) < 1:
        raise SizeError("no rows left after truncation")
    U = build_regressor(dataset.u_plus, np.zeros(n - 1), n).known_part[n - 1:]
    y = dataset.y[n - 1:]
    return _run_em("trunc", y, n, sigma2, opts, lambda _: U, None)


def run_modless(dataset: Dataset, n: Optional[int] = None, sigma2: float = 1.0,
                opts: Optional[EmOptions] = None) -> EstimationResult:
    """Maximize the marginal likelihood jointly over hyperparameters and ``u_minus``."""
    n, opts = _setup(dataset, n, opts)
    u_plus, y = dataset.u_plus, dataset.y
    known = build_regressor(u_plus, np.zeros(n - 1), n).known_part
    u0 = np.zeros(n - 1) if opts.init_u_minus is None else np.asarray(opts.init_u_minus, dtype=float)

    def step(post, _u):
        return modless_u_update(quadratic_terms(post.s_moment, post.g_hat, u_plus, y, known))

    return _run_em("modless", y, n, sigma2, opts,
                   lambda u: build_regressor(u_plus, u, n).entries, u0, step)


def run_condmean(dataset: Dataset, model: ArmaModel, n: Optional[int] = None, sigma2: float = 1.0,
                 opts: Optional[EmOptions] = None, mode: CovMode = "stationary",
                 conditioning: Optional[InputConditioning] = None) -> EstimationResult:
    """Empirical Bayes with ``u_minus`` replaced by ``E[u_minus | u_plus]``."""
    n, opts = _setup(dataset, n, opts)
    cond = conditioning or condition_initial(dataset.u_plus, model, n, mode)
    return run_fixed_ic(dataset, cond.mean, n, sigma2, opts, method="mean")


def run_joint(dataset: Dataset, model: Optional[ArmaModel], n: Optional[int] = None, sigma2: float = 1.0,
              opts: Optional[EmOptions] = None, mode: CovMode = "stationary",
              conditioning: Optional[InputConditioning] = None) -> EstimationResult:
    """Maximize ``p(y | u_minus, u_plus; rho) p(u_minus | u_plus)`` over ``rho`` and ``u_minus``."""
    n, opts = _setup(dataset, n, opts)
    if conditioning is None:
        if model is None:
            raise ValueError("run_joint needs an ArmaModel or a precomputed conditioning")
        conditioning = condition_initial(dataset.u_plus, model, n, mode)
    u_plus, y = dataset.u_plus, dataset.y
    known = build_regressor(u_plus, np.zeros(n - 1), n).known_part
    L = robust_cholesky(conditioning.cov)
    m = n - 1
    log_norm = -np.sum(np.log(np.diag(L))) - 0.5 * m * np.log(2.0 * np.pi)

    def logprior(u):
        r = linalg.solve_triangular(L, u - conditioning.mean, lower=True)
        return float(-0.5 * r @ r + log_norm)

    def step(post, _u):
        qt = quadratic_terms(post.s_moment, post.g_hat, u_plus, y, known)
        return joint_u_update(qt, sigma2, conditioning, L)

    u0 = conditioning.mean.copy() if opts.init_u_minus is None else np.asarray(opts.init_u_minus, dtype=float)
    return _run_em("joint", y, n, sigma2, opts,
                   lambda u: build_regressor(u_plus, u, n).entries, u0, step, logprior)
