"""Known-spectrum ARMA input model.

    u_t + d_1 u_{t-1} + ... + d_p u_{t-p} = c_0 e_t + ... + c_p e_{t-p},   e_t ~ N(0, 1)

The stacked input ``u = [u_minus; u_plus]`` is jointly Gaussian, so the
missing initial conditions can be conditioned on the measured samples.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import linalg, signal

from .errors import NumericalError, SizeError
from .posterior import robust_cholesky

__all__ = ["ArmaModel", "InputConditioning", "simulate", "input_covariance", "condition_initial"]

CovMode = Literal["transient", "stationary"]

#: Relative magnitude below which the model's impulse response is truncated.
IMPULSE_TOL = 1e-12


@dataclass(frozen=True)
class ArmaModel:
    """AR coefficients ``d = [d_1..d_p]`` and MA coefficients ``c = [c_0..c_q]``."""

    d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "c", c)
        if c.size == 0 or c[0] == 0.0:
            raise ValueError("c_0 must be nonzero")
        if not self.is_stable():
            raise ValueError(f"AR polynomial has roots on or outside the unit circle: {self.poles()}")

    @property
    def ar_poly(self) -> np.ndarray:
        return np.concatenate([[1.0], self.d])

    def poles(self) -> np.ndarray:
        return np.roots(self.ar_poly) if self.d.size else np.zeros(0)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def impulse_response(self, length: int) -> np.ndarray:
        x = np.zeros(length)
        x[0] = 1.0
        return signal.lfilter(self.c, self.ar_poly, x)

    def to_json(self) -> str:
        return json.dumps({"d": self.d.tolist(), "c": self.c.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ArmaModel":
        obj = json.loads(text)
        return cls(d=obj.get("d", []), c=obj["c"])


@dataclass(frozen=True)
class InputConditioning:
    """Conditional law ``u_minus | u_plus ~ N(mean, cov)``."""

    mean: np.ndarray
    cov: np.ndarray


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def simulate(model: ArmaModel, length: int, burn_in: int = 1000, seed=None) -> np.ndarray:
    """Draw ``length`` samples after discarding ``burn_in`` samples of transient."""
    if burn_in < 0 or length < 0:
        raise SizeError("length and burn_in must be nonnegative")
    e = _rng(seed).standard_normal(burn_in + length)
    return signal.lfilter(model.c, model.ar_poly, e)[burn_in:]


def _stationary_impulse(model: ArmaModel) -> np.ndarray:
    length = 256
    while True:
        h = model.impulse_response(length)
        big = np.nonzero(np.abs(h) >= IMPULSE_TOL * np.max(np.abs(h)))[0]
        last = big[-1]
        # accept once the tail beyond the last significant sample is long enough to be sure
        if last < length // 2 or length >= 1 << 20:
            return h[: last + 1]
        length *= 2


def input_covariance(model: ArmaModel, size: int, mode: CovMode = "stationary") -> np.ndarray:
    """Covariance of ``size`` consecutive input samples.

    ``transient`` is the covariance of a process started at rest one sample
    before the window; ``stationary`` uses the autocovariance of the
    steady-state process.
    """
    if size < 1:
        raise SizeError("size must be positive")
    if mode == "transient":
        col_d = np.zeros(size)
        col_d[0] = 1.0
        k = min(model.d.size, size - 1)
        col_d[1 : k + 1] = model.d[:k]
        col_c = np.zeros(size)
        k = min(model.c.size, size)
        col_c[:k] = model.c[:k]
        I_plus_D = linalg.toeplitz(col_d, np.zeros(size))
        C = linalg.toeplitz(col_c, np.zeros(size))
        H = linalg.solve_triangular(I_plus_D, C, lower=True)
        return H @ H.T
    if mode == "stationary":
        h = _stationary_impulse(model)
        r = np.zeros(size)
        full = np.correlate(h, h, mode="full")[h.size - 1 :]
        k = min(size, full.size)
        r[:k] = full[:k]
        return linalg.toeplitz(r)
    raise ValueError(f"unknown covariance mode {mode!r}")


def condition_initial(u_plus, model: ArmaModel, n: int, mode: CovMode = "stationary") -> InputConditioning:
    """Gaussian conditioning of the ``n - 1`` initial conditions on ``u_plus``."""
    u_plus = np.asarray(u_plus, dtype=float)
    N = u_plus.size
    m = n - 1
    cov = input_covariance(model, m + N, mode)
    s_mm, s_mp, s_pp = cov[:m, :m], cov[:m, m:], cov[m:, m:]
    try:
        chol = robust_cholesky(s_pp)
    except NumericalError as exc:
        raise NumericalError(f"covariance of the measured input is singular: {exc}") from exc
    gain = linalg.cho_solve((chol, True), s_mp.T).T
    mean = gain @ u_plus
    cond = s_mm - gain @ s_mp.T
    cond = 0.5 * (cond + cond.T)
    return InputConditioning(mean=mean, cov=cond)
