"""Monte Carlo comparison of the initial-condition strategies.

Each run draws a random rational system, a random ARMA input filter, an
input trajectory and a noise trajectory, then hands the same data to every
configured estimator and records the fit of the estimated impulse response.
Runs are seeded from ``numpy.random.SeedSequence([seed, run_id])`` so any run
can be reproduced in isolation, in any order, in any process.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from . import em
from .arma import ArmaModel, condition_initial, simulate
from .model import Dataset, convolve, fit_score
from .posterior import estimate_noise_variance

__all__ = [
    "ESTIMATORS",
    "BenchmarkConfig",
    "RunRecord",
    "Scenario",
    "random_system",
    "random_arma",
    "noise_variance_for_snr",
    "make_scenario",
    "run_estimator",
    "run_single",
    "run_monte_carlo",
    "summarize",
]

log = logging.getLogger(__name__)

ESTIMATORS = ("zeros", "trunc", "modless", "mean", "joint", "oracle")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _conjugate_pairs(rng, count: int, magnitude) -> np.ndarray:
    r = rng.uniform(magnitude[0], magnitude[1], count)
    theta = rng.uniform(0.0, np.pi, count)
    z = r * np.exp(1j * theta)
    return np.concatenate([z, z.conj()])


def random_system(seed, order: int = 40, n: int = 100, pole_magnitude=(0.3, 0.95),
                  zero_magnitude=(0.0, 0.99)) -> np.ndarray:
    """First ``n`` impulse-response samples of a random stable rational system.

    Poles and zeros come in ``order / 2`` conjugate pairs with uniformly drawn
    magnitude and phase in ``[0, pi)``; numerator and denominator are monic,
    so ``g_0 = 1``.
    """
    if order % 2:
        raise ValueError(f"order must be even, got {order}")
    rng = _rng(seed)
    poles = _conjugate_pairs(rng, order // 2, pole_magnitude)
    zeros = _conjugate_pairs(rng, order // 2, zero_magnitude)
    a = np.real(np.poly(poles))
    b = np.real(np.poly(zeros))
    impulse = np.zeros(n)
    impulse[0] = 1.0
    return signal.lfilter(b, a, impulse)


def random_arma(seed, order: int = 8, pole_magnitude=(0.8, 0.95), zero_magnitude=(0.0, 0.95)) -> ArmaModel:
    """Random ARMA input filter with ``c_0 = 1``."""
    if order % 2:
        raise ValueError(f"order must be even, got {order}")
    rng = _rng(seed)
    poles = _conjugate_pairs(rng, order // 2, pole_magnitude)
    zeros = _conjugate_pairs(rng, order // 2, zero_magnitude)
    return ArmaModel(d=np.real(np.poly(poles))[1:], c=np.real(np.poly(zeros)))


def noise_variance_for_snr(y0, snr: float) -> float:
    """Noise variance giving ``var(y0) / sigma2 == snr``."""
    y0 = np.asarray(y0, dtype=float)
    if not snr > 0:
        raise ValueError("snr must be positive")
    v = float(np.var(y0))
    if v == 0.0:
        raise ValueError("noiseless output is constant; SNR undefined")
    return v / snr


@dataclass(frozen=True)
class BenchmarkConfig:
    runs: int = 50
    sample_sizes: tuple = (150, 400)
    n: int = 100
    system_order: int = 40
    arma_order: int = 8
    snr: float = 20.0
    seed: int = 0
    estimators: tuple = ESTIMATORS
    input_cov_mode: str = "stationary"
    parallel: int = 0
    burn_in: int = 1000
    estimate_noise: bool = False
    record_time: bool = False
    max_iters: int = 200
    rel_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(s) for s in self.sample_sizes))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if not self.sample_sizes or min(self.sample_sizes) < self.n:
            raise ValueError(f"all sample sizes must be >= n={self.n}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")
        if self.input_cov_mode not in ("transient", "stationary"):
            raise ValueError(f"input_cov_mode must be transient or stationary, got {self.input_cov_mode!r}")
        if self.estimate_noise and min(self.sample_sizes) - self.n + 1 <= self.n:
            raise ValueError("estimate_noise needs every sample size to exceed 2n - 1")
        if self.system_order % 2 or self.arma_order % 2:
            raise ValueError("system_order and arma_order must be even")

    @classmethod
    def from_dict(cls, obj: dict) -> "BenchmarkConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def full_scale(cls, **overrides) -> "BenchmarkConfig":
        """Full-size experiment: 200 runs at five sample sizes."""
        return cls(**{"runs": 200, "sample_sizes": (150, 200, 250, 300, 400), **overrides})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sample_sizes"] = list(self.sample_sizes)
        d["estimators"] = list(self.estimators)
        return d


@dataclass(frozen=True)
class RunRecord:
    run_id: int
    N: int
    estimator: str
    fit: float
    iters: int
    converged: bool
    wall_time: float = float("nan")


@dataclass
class Scenario:
    """One Monte Carlo draw, sliceable to any record length up to its maximum."""

    g: np.ndarray
    model: ArmaModel
    u_full: np.ndarray        # u_{-n+1} .. u_{N_max-1}
    noise: np.ndarray         # standard normal, length N_max
    snr: float
    seeds: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.g.size

    def noiseless(self, N: int) -> np.ndarray:
        return convolve(self.g, self.u_full[: self.n - 1 + N])

    def sigma2(self, N: int) -> float:
        return noise_variance_for_snr(self.noiseless(N), self.snr)

    def dataset(self, N: int) -> Dataset:
        n = self.n
        y = self.noiseless(N) + np.sqrt(self.sigma2(N)) * self.noise[:N]
        return Dataset(u_plus=self.u_full[n - 1 : n - 1 + N], y=y, n=n, u_minus_true=self.u_full[: n - 1])


def make_scenario(seed: int, run_id: int, n: int, N_max: int, system_order: int = 40,
                  arma_order: int = 8, snr: float = 20.0, burn_in: int = 1000) -> Scenario:
    ss = np.random.SeedSequence([int(seed), int(run_id)])
    s_sys, s_arma, s_input, s_noise = ss.spawn(4)
    g = random_system(np.random.default_rng(s_sys), system_order, n)
    model = random_arma(np.random.default_rng(s_arma), arma_order)
    u_full = simulate(model, n - 1 + N_max, burn_in, np.random.default_rng(s_input))
    noise = np.random.default_rng(s_noise).standard_normal(N_max)
    return Scenario(g=g, model=model, u_full=u_full, noise=noise, snr=snr,
                    seeds={"seed": int(seed), "run_id": int(run_id), "entropy": str(ss.entropy)})


def run_estimator(name: str, data: Dataset, sigma2: float, model: Optional[ArmaModel] = None,
                  opts: Optional[em.EmOptions] = None, mode: str = "stationary", conditioning=None):
    """Dispatch one estimator by its short name."""
    n = data.n
    if name == "zeros":
        return em.run_fixed_ic(data, np.zeros(n - 1), n, sigma2, opts, method="zeros")
    if name == "oracle":
        if data.u_minus_true is None:
            raise ValueError("oracle needs the true initial conditions")
        return em.run_fixed_ic(data, data.u_minus_true, n, sigma2, opts, method="oracle")
    if name == "trunc":
        return em.run_truncated(data, n, sigma2, opts)
    if name == "modless":
        return em.run_modless(data, n, sigma2, opts)
    if name in ("mean", "joint") and model is None and conditioning is None:
        raise ValueError(f"{name} needs an ARMA input model")
    if name == "mean":
        return em.run_condmean(data, model, n, sigma2, opts, mode, conditioning)
    if name == "joint":
        return em.run_joint(data, model, n, sigma2, opts, mode, conditioning)
    raise ValueError(f"unknown estimator {name!r}")


def run_single(config: BenchmarkConfig, run_id: int) -> list:
    """All records of one Monte Carlo run (every sample size and estimator)."""
    scen = make_scenario(config.seed, run_id, config.n, max(config.sample_sizes), config.system_order,
                         config.arma_order, config.snr, config.burn_in)
    opts = em.EmOptions(max_iters=config.max_iters, rel_tol=config.rel_tol)
    records = []
    for N in sorted(config.sample_sizes):
        data = scen.dataset(N)
        sigma2 = scen.sigma2(N)
        if config.estimate_noise:
            sigma2 = estimate_noise_variance(data.y, data.u_plus, data.n)
        cond = None
        for name in config.estimators:
            t0 = time.perf_counter()
            try:
                if name in ("mean", "joint") and cond is None:
                    cond = condition_initial(data.u_plus, scen.model, data.n, config.input_cov_mode)
                res = run_estimator(name, data, sigma2, scen.model, opts, config.input_cov_mode, cond)
                fit, iters, conv = fit_score(scen.g, res.g_hat), res.iters, res.converged
            except Exception as exc:  # one failing estimator must not sink the experiment
                log.warning("run %d N=%d %s failed: %s", run_id, N, name, exc)
                fit, iters, conv = float("nan"), 0, False
            wall = time.perf_counter() - t0 if config.record_time else float("nan")
            records.append(RunRecord(run_id, N, name, fit, iters, conv, wall))
    return records


def _sort_key(r: RunRecord):
    return (r.N, ESTIMATORS.index(r.estimator), r.run_id)


def summarize(records: Sequence[RunRecord]) -> dict:
    """Mean and standard error of the fit per ``(N, estimator)``.

    Sums are exactly rounded (``math.fsum``), so the result does not depend on
    record order.
    """
    groups: dict = {}
    for r in sorted(records, key=_sort_key):
        groups.setdefault((r.N, r.estimator), []).append(r)
    out = {}
    for (N, name), recs in groups.items():
        fits = [r.fit for r in recs if math.isfinite(r.fit)]
        k = len(fits)
        mean = math.fsum(fits) / k if k else float("nan")
        if k > 1:
            var = math.fsum((f - mean) ** 2 for f in fits) / (k - 1)
            stderr = math.sqrt(var / k)
        else:
            stderr = float("nan")
        out.setdefault(str(N), {})[name] = {
            "mean": mean,
            "stderr": stderr,
            "count": k,
            "failures": len(recs) - k,
            "converged": sum(r.converged for r in recs),
        }
    return out


def run_monte_carlo(config: BenchmarkConfig, parallel: Optional[int] = None, progress=None):
    """Run the whole experiment; returns ``(records, summary)``.

    ``parallel`` (or ``config.parallel``) sets the number of worker processes;
    0 means one per available core and 1 runs in-process.
    """
    workers = parallel if parallel is not None else config.parallel
    if not workers:
        workers = os.cpu_count() or 1
    run_ids = range(config.runs)
    fn = partial(run_single, config)
    records = []
    if workers == 1:
        for rid in run_ids:
            records.extend(fn(rid))
            if progress:
                progress(rid)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rid, recs in zip(run_ids, pool.map(fn, run_ids)):
                records.extend(recs)
                if progress:
                    progress(rid)
    records.sort(key=_sort_key)
    return records, summarize(records)
