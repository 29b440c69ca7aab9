"""Monte Carlo ruin probabilities and two sensitivity estimators that need no
Malliavin machinery (finite differences with common random numbers, and a
kernel-density oracle).

Everything reduces to the per-path supremum M = max_i (w_i - theta t_i):
ruin on the grid is exactly sigma*M > u, so one batch of suprema serves the
ruin estimate, both finite-difference branches, and the density estimator.
Paths are keyed by (seed, index) and reductions run over fixed-size index
blocks, so results are identical for any worker count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .fbm import ModelParams, TimeGrid, path_rng, sample_fbm_batch
from .parallel import map_blocks

__all__ = [
    "RuinEstimate",
    "SensitivityEstimate",
    "simulate_drifted_sups",
    "mc_ruin",
    "bm_closed_form",
    "bm_closed_form_dsigma",
    "finite_diff_sens",
    "kde_density_sens",
]


@dataclass(frozen=True)
class RuinEstimate:
    psi_hat: float
    se: float
    m: int
    n: int
    seed: int


@dataclass(frozen=True)
class SensitivityEstimate:
    value: float
    se: float
    method: str
    m: int
    n: int
    seed: int
    method_params: dict = field(default_factory=dict)


def _sup_block(args) -> np.ndarray:
    theta, H, T, n, seed, stream, lo, hi = args
    grid = TimeGrid(T, n)
    t = grid.nodes
    batch = sample_fbm_batch(grid, H, seed, np.arange(lo, hi), stream=stream)
    batch -= theta * t
    return batch.max(axis=1)


def simulate_drifted_sups(
    theta: float,
    H: float,
    T: float,
    m: int,
    n: int,
    seed: int,
    workers: int = 1,
    stream: int = 0,
) -> np.ndarray:
    """Per-path suprema max_i (W^H_{t_i} - theta t_i) for paths 0..m-1."""
    block = 2048
    tasks = [
        (theta, H, T, n, seed, stream, lo, min(lo + block, m)) for lo in range(0, m, block)
    ]
    parts = map_blocks(_sup_block, tasks, workers)
    return np.concatenate(parts)


def mc_ruin(
    params: ModelParams, T: float, m: int, n: int, seed: int, workers: int = 1
) -> RuinEstimate:
    """Monte Carlo estimate of P(inf X_t < 0 on the grid) = P(sigma*M > u).

    The strict inequality at the barrier follows the continuum event (the tie
    has probability zero there).  Binomial standard error attached.
    """
    if m < 1:
        raise ValueError("need at least one replication")
    M = simulate_drifted_sups(params.theta, params.H, T, m, n, seed, workers)
    psi = float(np.mean(params.sigma * M > params.u))
    se = math.sqrt(psi * (1.0 - psi) / m)
    return RuinEstimate(psi_hat=psi, se=se, m=m, n=n, seed=seed)


def bm_closed_form(params: ModelParams, T: float) -> float:
    """Reflection formula for the H=1/2 model (validation oracle).

    P(sup_{t<=T} (W_t - theta t) > a) = Phi((-a-theta T)/sqrt(T))
    + exp(-2 theta a) Phi((-a+theta T)/sqrt(T)) with a = u/sigma.  Validated
    against brute-force Monte Carlo before use as an oracle (see
    tests/test_ruin.py for the recorded run).
    """
    if params.H != 0.5:
        raise ValueError(f"closed form only valid at H=1/2, got H={params.H}")
    a = params.u / params.sigma
    rt = math.sqrt(T)
    return float(
        ndtr((-a - params.theta * T) / rt)
        + math.exp(-2.0 * params.theta * a) * ndtr((-a + params.theta * T) / rt)
    )


def bm_closed_form_dsigma(params: ModelParams, T: float) -> float:
    """d/d sigma of :func:`bm_closed_form` by the chain rule through a = u/sigma."""
    if params.H != 0.5:
        raise ValueError(f"closed form only valid at H=1/2, got H={params.H}")
    a = params.u / params.sigma
    rt = math.sqrt(T)
    x1 = (-a - params.theta * T) / rt
    x2 = (-a + params.theta * T) / rt
    phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    dpsi_da = (
        -phi(x1) / rt
        - 2.0 * params.theta * math.exp(-2.0 * params.theta * a) * ndtr(x2)
        - math.exp(-2.0 * params.theta * a) * phi(x2) / rt
    )
    return float(dpsi_da * (-params.u / params.sigma**2))


def finite_diff_sens(
    params: ModelParams,
    T: float,
    eps: float,
    scheme: str = "central",
    crn: bool = True,
    m: int = 10_000,
    n: int = 4096,
    seed: int = 0,
    workers: int = 1,
) -> SensitivityEstimate:
    """Finite-difference estimate of d Psi / d sigma.

    With common random numbers the same suprema serve both volatility levels:
    the central quotient counts paths with M in (u/(sigma+eps), u/(sigma-eps)]
    divided by 2 eps, which is nonnegative by construction and has far lower
    variance than independent draws.
    """
    if not (0.0 < eps < params.sigma):
        raise ValueError(f"require 0 < eps < sigma, got eps={eps}, sigma={params.sigma}")
    if scheme not in ("forward", "central"):
        raise ValueError(f"scheme must be 'forward' or 'central', got {scheme!r}")
    u, sig = params.u, params.sigma
    if crn:
        M = simulate_drifted_sups(params.theta, params.H, T, m, n, seed, workers)
        if scheme == "central":
            d = (
                (M > u / (sig + eps)).astype(float) - (M > u / (sig - eps)).astype(float)
            ) / (2.0 * eps)
        else:
            d = ((M > u / (sig + eps)).astype(float) - (M > u / sig).astype(float)) / eps
        value = float(np.mean(d))
        se = float(np.std(d, ddof=1) / math.sqrt(m)) if m > 1 else float("nan")
    else:
        M_plus = simulate_drifted_sups(params.theta, params.H, T, m, n, seed, workers, stream=1)
        ref_stream = 2 if scheme == "central" else 0
        M_ref = simulate_drifted_sups(
            params.theta, params.H, T, m, n, seed, workers, stream=ref_stream
        )
        width = 2.0 * eps if scheme == "central" else eps
        lo_thresh = u / (sig - eps) if scheme == "central" else u / sig
        p_plus = float(np.mean(M_plus > u / (sig + eps)))
        p_ref = float(np.mean(M_ref > lo_thresh))
        value = (p_plus - p_ref) / width
        se = math.sqrt(
            (p_plus * (1 - p_plus) + p_ref * (1 - p_ref)) / m
        ) / width
    return SensitivityEstimate(
        value=value,
        se=se,
        method=f"finite-diff-{scheme}",
        m=m,
        n=n,
        seed=seed,
        method_params={"eps": eps, "crn": crn},
    )


def kde_density_sens(
    params: ModelParams,
    T: float,
    m: int = 10_000,
    n: int = 4096,
    seed: int = 0,
    bandwidth: str = "silverman",
    workers: int = 1,
    n_boot: int = 200,
) -> SensitivityEstimate:
    """Density-based oracle: d Psi / d sigma = (u / sigma^2) f_M(u / sigma).

    Gaussian kernel density estimate of the supremum density at the ruin
    threshold, Silverman's rule bandwidth, bootstrap standard error.  Warns
    (and flags the result) if the evaluation point falls outside the sample
    range of M.
    """
    if bandwidth != "silverman":
        raise ValueError(f"unsupported bandwidth rule {bandwidth!r}")
    if m < 100:
        raise ValueError("kde needs a reasonably large sample (m >= 100)")
    M = simulate_drifted_sups(params.theta, params.H, T, m, n, seed, workers)
    x0 = params.u / params.sigma
    extrapolated = bool(x0 < M.min() or x0 > M.max())
    if extrapolated:
        warnings.warn(
            f"evaluation point u/sigma={x0:.4g} outside the sampled range of M", RuntimeWarning
        )
    sd = float(np.std(M, ddof=1))
    iqr = float(np.subtract(*np.percentile(M, [75, 25])))
    h = 0.9 * min(sd, iqr / 1.34) * m ** (-0.2)
    kern = np.exp(-0.5 * ((x0 - M) / h) ** 2) / (h * math.sqrt(2.0 * math.pi))
    scale = params.u / params.sigma**2
    value = scale * float(np.mean(kern))
    rng = path_rng(seed, 0, stream=999)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, m, size=m)
        boot[b] = scale * float(np.mean(kern[idx]))
    se = float(np.std(boot, ddof=1))
    return SensitivityEstimate(
        value=value,
        se=se,
        method="kde-density",
        m=m,
        n=n,
        seed=seed,
        method_params={"bandwidth": h, "rule": bandwidth, "extrapolated": extrapolated},
    )
