"""Bundled invariant suite behind the ``validate`` CLI command.

Each check returns a CheckResult; the suite is sized to finish in a few
minutes so CI systems can run the package's mathematical guarantees without
bespoke harnesses.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import fraccalc as fc
from . import sensitivity as sens
from .fbm import GridFunction, ModelParams, TimeGrid, covariance, sample_fbm
from .special import SeriesTolerance, gamma_fn, mu_p, v1_squared

__all__ = ["CheckResult", "run_all", "CHECKS"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _check_y_domination(seed: int) -> tuple[bool, str]:
    params = ModelParams(1.0, 1.0, 0.5, 0.6)
    cfg = sens.MalliavinConfig(r=8, m_exp=2)
    grid = TimeGrid(1.0, 256)
    worst = -math.inf
    fails = 0
    for k in range(1000):
        path = sample_fbm(grid, params.H, seed, index=k)
        _, Y = sens.y_process(path, params.theta, cfg)
        gap = np.abs(path.w - params.theta * grid.nodes) - Y.values
        worst = max(worst, float(gap.max()))
        if gap.max() > 1e-12:
            fails += 1
    return fails == 0, f"violations {fails}/1000 paths, worst slack gap {worst:.3e}"


def _check_ua_identity(seed: int) -> tuple[bool, str]:
    H = 0.6
    errs = {}
    for n in (512, 1024):
        grid = TimeGrid(1.0, n)
        t = grid.nodes
        psi = GridFunction(grid, 1.0 / (1.0 + np.exp(8.0 * (t - 0.5))))
        uA = fc.u_A_compose(psi, H)
        worst = 0.0
        for s_idx in (n // 4, n // 2, n):
            ind = np.zeros(n + 1)
            ind[: s_idx + 1] = 1.0
            lhs = fc.inner_product_H(GridFunction(grid, ind), uA, H)
            rhs = float(np.trapezoid(psi.values[: s_idx + 1], t[: s_idx + 1]))
            worst = max(worst, abs(lhs - rhs))
        errs[n] = worst
    ok = errs[512] < 1e-2 and errs[1024] < errs[512]
    return ok, f"defining-identity error {errs[512]:.2e} at n=2^9, {errs[1024]:.2e} at n=2^10"


def _check_frac_inversion(seed: int) -> tuple[bool, str]:
    grid = TimeGrid(1.0, 1024)
    f = GridFunction(grid, np.sin(2.0 * np.pi * grid.nodes) + 0.5 * grid.nodes)
    worst = 0.0
    for alpha in (0.2, 0.35):
        DI = fc.frac_derivative(fc.frac_integral(f, alpha), alpha)
        worst = max(worst, float(np.abs(DI.values[1:] - f.values[1:]).max()))
    return worst < 1e-3, f"sup error of D(I(f)) - f at n=2^10: {worst:.2e}"


def _check_kernel_isometry(seed: int) -> tuple[bool, str]:
    H = 0.65
    pts, wts = np.polynomial.legendre.leggauss(24)
    kpow = 1.0 / (2.0 - 2.0 * H)
    worst = 0.0
    for t in np.linspace(0.2, 1.0, 5):
        for s in np.linspace(0.2, 1.0, 5):
            m = min(t, s)
            zmax = m ** (2.0 - 2.0 * H)
            edges = np.linspace(0.0, zmax, 7)
            total = 0.0
            for a, b in zip(edges[:-1], edges[1:]):
                z = a + (b - a) * (pts + 1.0) / 2.0
                w = wts * (b - a) / 2.0
                r = z**kpow
                vals = np.array(
                    [
                        fc.kernel_K_H(t, rr, H) * fc.kernel_K_H(s, rr, H) * rr ** (2 * H - 1)
                        for rr in r
                    ]
                )
                total += float(np.sum(w * vals)) * kpow
            worst = max(worst, abs(total - covariance(t, s, H)))
    return worst < 1e-3, f"max |int K K - R_H| on 5x5 grid: {worst:.2e}"


def _check_skorokhod_duality(seed: int) -> tuple[bool, str]:
    H = 0.65
    grid = TimeGrid(1.0, 256)
    v = GridFunction(grid, np.sin(3.0 * grid.nodes) + 1.2)
    ind = np.zeros(grid.n + 1)
    ind[: grid.n // 2 + 1] = 1.0
    target = fc.inner_product_H(GridFunction(grid, ind), v, H)
    m = 10_000
    prods = np.empty(m)
    for k in range(m):
        path = sample_fbm(grid, H, seed, index=k)
        prods[k] = path.w[grid.n // 2] * sens.skorokhod_divergence(v, None, path, H)
    mean = float(np.mean(prods))
    se = float(np.std(prods, ddof=1) / math.sqrt(m))
    z = (mean - target) / se
    return abs(z) < 3.0, f"E[F delta(v)] = {mean:.4f} +/- {se:.4f} vs <DF,v>_H = {target:.4f} (z = {z:+.2f})"


def _check_factor_out(seed: int) -> tuple[bool, str]:
    H = 0.65
    grid = TimeGrid(1.0, 256)
    v = GridFunction(grid, np.cos(2.0 * grid.nodes) + 1.5)
    mid = grid.n // 2
    ind = np.zeros(grid.n + 1)
    ind[:mid] = 1.0  # D_s W_{T/2} = 1 on cells 0..mid-1
    worst = 0.0
    for k in range(50):
        path = sample_fbm(grid, H, seed + 1, index=k)
        F = path.w[mid]
        Fv = GridFunction(grid, F * v.values)
        DFv = np.outer(ind, v.values)  # D_s (F v_t) = 1_{[0,T/2]}(s) v_t
        lhs = sens.skorokhod_divergence(Fv, DFv, path, H)
        G = sens._increment_cov(grid.n, grid.dt, H)
        ip = float(ind[: grid.n] @ (G @ v.values[: grid.n]))
        rhs = F * sens.skorokhod_divergence(v, None, path, H) - ip
        worst = max(worst, abs(lhs - rhs))
    return worst < 1e-10, f"max |delta(Fv) - (F delta(v) - <DF,v>)| over 50 paths: {worst:.2e}"


def _check_v1_at_half(seed: int) -> tuple[bool, str]:
    diffs = []
    for p in (1.5, 2.0, 3.0):
        diffs.append(abs(v1_squared(p, 0.5).value - mu_p(p)))
    worst = max(diffs)
    return worst == 0.0, f"max |v1^2(p,1/2) - mu_p| over p in {{1.5,2,3}}: {worst:.1e}"


def _check_gamma_recurrence(seed: int) -> tuple[bool, str]:
    xs = np.linspace(0.1, 50.0, 500)
    worst = max(
        abs(gamma_fn(x + 1.0) - x * gamma_fn(x)) / gamma_fn(x + 1.0) for x in xs
    )
    return worst < 1e-12, f"max relative recurrence defect on [0.1, 50]: {worst:.2e}"


CHECKS = [
    ("y-domination", _check_y_domination),
    ("u_A-defining-identity", _check_ua_identity),
    ("fractional-inversion", _check_frac_inversion),
    ("kernel-isometry", _check_kernel_isometry),
    ("skorokhod-duality", _check_skorokhod_duality),
    ("divergence-factor-out", _check_factor_out),
    ("v1-reduces-to-mu-at-half", _check_v1_at_half),
    ("gamma-recurrence", _check_gamma_recurrence),
]


def run_all(seed: int = 20240901) -> list[CheckResult]:
    """Run every invariant check; returns one result per check."""
    results = []
    for name, fn in CHECKS:
        t0 = time.time()
        passed, detail = fn(seed)
        results.append(CheckResult(name, passed, detail, time.time() - t0))
    return results
