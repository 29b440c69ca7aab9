"""Exact sampling of fractional Brownian motion on uniform grids and the
drifted surplus process built on it.

The default sampler is circulant embedding of the stationary increment
sequence (exact in law, O(n log n) per path); a dense-Cholesky sampler is
kept both as a fallback when the circulant eigenvalues go negative and as an
independent oracle for tests.  Every path is keyed by (seed, index) through
``numpy.random.SeedSequence`` spawn keys, so replication is deterministic
and independent of worker count or evaluation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "TimeGrid",
    "GridFunction",
    "ModelParams",
    "SampledPath",
    "SamplerError",
    "covariance",
    "sample_fbm",
    "sample_fbm_batch",
    "surplus",
    "running_sup_drifted",
    "refine_path",
    "path_rng",
    "path_to_csv",
    "grid_function_to_csv",
    "read_surplus_csv",
    "read_grid_function_csv",
]


class SamplerError(RuntimeError):
    """Raised when neither circulant embedding nor regularised Cholesky can
    produce an exact Gaussian sample."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i*T/n, i = 0..n."""

    T: float
    n: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.n < 2:
            raise ValueError(f"need at least 2 steps, got n={self.n}")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)


@dataclass
class GridFunction:
    """Real values attached to the nodes of a TimeGrid.

    ``flags`` marks nodes whose value is an endpoint convention (stored from
    the adjacent half-node) rather than a converged node value.
    """

    grid: TimeGrid
    values: np.ndarray
    flags: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n + 1,):
            raise ValueError(
                f"values must have length n+1={self.grid.n + 1}, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridFunction values must be finite")


@dataclass(frozen=True)
class ModelParams:
    """Parameters (u, theta, sigma, H) of the surplus X_t = u + sigma*theta*t - sigma*W^H_t.

    The sensitivity pipeline requires H in (1/2, 1); the volatility CLT holds
    for H in (0, 3/4); the joint confidence-interval pipeline therefore runs
    on H in (1/2, 3/4).  Those range checks live with the consumers; here we
    only enforce the model-level invariants.
    """

    u: float
    theta: float
    sigma: float
    H: float

    def __post_init__(self) -> None:
        for name in ("u", "theta", "sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive, got {v}")
        if not (0.0 < self.H < 1.0):
            raise ValueError(f"Hurst index must lie in (0,1), got {self.H}")


@dataclass
class SampledPath:
    """An fBm sample on a grid: w[i] = W^H_{t_i}, w[0] = 0.

    Reproducible from (seed, index, grid, H, backend).
    """

    grid: TimeGrid
    H: float
    seed: int
    w: np.ndarray
    index: int = 0

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.grid.n + 1,):
            raise ValueError("path length must equal n+1")
        if self.w[0] != 0.0:
            raise ValueError("fBm paths start at 0")


def covariance(t, s, H: float):
    """fBm covariance R_H(t,s) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2."""
    if not (0.0 < H < 1.0):
        raise ValueError(f"Hurst index must lie in (0,1), got {H}")
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(t_arr < 0.0) or np.any(s_arr < 0.0):
        raise ValueError("covariance is defined for nonnegative times")
    out = 0.5 * (s_arr ** (2 * H) + t_arr ** (2 * H) - np.abs(t_arr - s_arr) ** (2 * H))
    if np.isscalar(t) and np.isscalar(s):
        return float(out)
    return out


def path_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator keyed by (seed, stream, index): deterministic and
    order-independent across workers."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def _fgn_circulant_eigs(n: int, H: float) -> np.ndarray:
    """Eigenvalues of the circulant embedding of the unit-spacing fGn covariance."""
    k = np.arange(0, n + 1, dtype=float)
    gamma = 0.5 * ((k + 1.0) ** (2 * H) + np.abs(k - 1.0) ** (2 * H) - 2.0 * k ** (2 * H))
    c = np.concatenate([gamma, gamma[-2:0:-1]])  # length 2n
    eig = np.fft.fft(c).real
    return eig


def _fgn_from_circulant(eig: np.ndarray, rng: np.random.Generator, n: int) -> np.ndarray:
    """One unit-spacing fGn sample of length n via Davies-Harte."""
    two_n = 2 * n
    draws = rng.standard_normal(two_n)
    xi = np.empty(two_n, dtype=complex)
    xi[0] = draws[0]
    xi[n] = draws[1]
    v1 = draws[2 : n + 1]
    v2 = draws[n + 1 : two_n]
    xi[1:n] = (v1 + 1j * v2) / math.sqrt(2.0)
    xi[n + 1 :] = np.conj(xi[n - 1 : 0 : -1])
    spec = np.sqrt(eig / two_n) * xi
    return np.fft.fft(spec)[:n].real


class _CholeskyFactor:
    """Cached lower-triangular factor of the fBm node covariance."""

    def __init__(self, grid: TimeGrid, H: float):
        t = grid.nodes[1:]
        R = covariance(t[:, None], t[None, :], H)
        scale = float(np.trace(R)) / grid.n
        last_err: Exception | None = None
        for ridge in (0.0, 1e-14, 1e-12, 1e-10):
            try:
                self.L = np.linalg.cholesky(R + ridge * scale * np.eye(grid.n))
                self.ridge = ridge
                return
            except np.linalg.LinAlgError as err:  # pragma: no cover - rare
                last_err = err
        raise SamplerError(
            f"Cholesky failed for n={grid.n}, H={H} even with ridge 1e-10*scale: {last_err}"
        )


_sampler_cache: dict[tuple, object] = {}


def _resolve_backend(backend: str, H: float, n: int) -> str:
    if backend == "auto":
        if H == 0.5:
            return "iid"
        eig = _circulant_eigs_cached(n, H)
        if float(eig.min()) >= -1e-9 * float(eig.max()):
            return "circulant"
        return "cholesky"
    return backend


def _circulant_eigs_cached(n: int, H: float) -> np.ndarray:
    key = ("eig", n, H)
    if key not in _sampler_cache:
        _sampler_cache[key] = _fgn_circulant_eigs(n, H)
    return _sampler_cache[key]


def _cholesky_cached(grid: TimeGrid, H: float) -> _CholeskyFactor:
    key = ("chol", grid.n, grid.T, H)
    if key not in _sampler_cache:
        _sampler_cache[key] = _CholeskyFactor(grid, H)
    return _sampler_cache[key]


def _sample_w(grid: TimeGrid, H: float, rng: np.random.Generator, backend: str) -> np.ndarray:
    n = grid.n
    w = np.empty(n + 1)
    w[0] = 0.0
    if backend == "iid":
        if H != 0.5:
            raise ValueError("iid backend is exact only at H = 1/2")
        inc = rng.standard_normal(n) * math.sqrt(grid.dt)
        np.cumsum(inc, out=w[1:])
    elif backend == "circulant":
        eig = _circulant_eigs_cached(n, H)
        if float(eig.min()) < -1e-9 * float(eig.max()):
            raise SamplerError(
                f"circulant embedding has negative eigenvalues for n={n}, H={H}; "
                "use backend='cholesky'"
            )
        fgn = _fgn_from_circulant(np.maximum(eig, 0.0), rng, n) * grid.dt**H
        np.cumsum(fgn, out=w[1:])
    elif backend == "cholesky":
        fac = _cholesky_cached(grid, H)
        w[1:] = fac.L @ rng.standard_normal(n)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return w


def sample_fbm(
    grid: TimeGrid, H: float, seed: int, index: int = 0, backend: str = "auto"
) -> SampledPath:
    """Draw one exact-in-law fBm path on ``grid``.

    The vector (W_{t_1}, ..., W_{t_n}) has covariance matrix [R_H(t_i, t_j)].
    Identical (seed, index, grid, H, backend) give bitwise-identical paths.
    """
    if not (0.0 < H < 1.0):
        raise ValueError(f"Hurst index must lie in (0,1), got {H}")
    resolved = _resolve_backend(backend, H, grid.n)
    rng = path_rng(seed, index)
    w = _sample_w(grid, H, rng, resolved)
    return SampledPath(grid=grid, H=H, seed=seed, w=w, index=index)


def sample_fbm_batch(
    grid: TimeGrid,
    H: float,
    seed: int,
    indices: np.ndarray,
    backend: str = "auto",
    stream: int = 0,
) -> np.ndarray:
    """Sample len(indices) paths into an array of shape (batch, n+1).

    Each row is the path that ``sample_fbm`` would produce for that index
    (stream 0), so batching never changes results.
    """
    resolved = _resolve_backend(backend, H, grid.n)
    out = np.empty((len(indices), grid.n + 1))
    for row, idx in enumerate(indices):
        rng = path_rng(seed, int(idx), stream)
        out[row] = _sample_w(grid, H, rng, resolved)
    return out


def surplus(path: SampledPath, params: ModelParams) -> GridFunction:
    """Surplus X_{t_i} = u + sigma*theta*t_i - sigma*w[i] on the path grid."""
    if path.H != params.H:
        raise ValueError(
            f"path Hurst index {path.H} does not match model Hurst index {params.H}"
        )
    t = path.grid.nodes
    x = params.u + params.sigma * params.theta * t - params.sigma * path.w
    return GridFunction(path.grid, x)


def running_sup_drifted(path: SampledPath, theta: float) -> tuple[float, int]:
    """Maximum of w[i] - theta*t_i over the grid and the first maximising index."""
    drifted = path.w - theta * path.grid.nodes
    idx = int(np.argmax(drifted))  # np.argmax returns the smallest maximiser
    return float(drifted[idx]), idx


def refine_path(path: SampledPath, seed: int) -> SampledPath:
    """Conditionally sample midpoints, returning the same path on a 2n grid.

    The coarse nodes are kept exactly, so grid suprema are nondecreasing
    under refinement; the new nodes follow the exact conditional Gaussian
    law given the coarse path.  O(n^3) setup: intended for nested-grid
    studies at moderate n.
    """
    grid = path.grid
    fine = TimeGrid(grid.T, 2 * grid.n)
    t = fine.nodes[1:]
    known = np.arange(1, 2 * grid.n + 1, 2)  # odd fine indices = new midpoints
    # fine indices 2,4,... are the old nodes 1..n
    old = np.arange(2, 2 * grid.n + 1, 2)
    R = covariance(t[:, None], t[None, :], path.H)
    iu = known - 1
    io = old - 1
    R_uo = R[np.ix_(iu, io)]
    R_oo = R[np.ix_(io, io)]
    R_uu = R[np.ix_(iu, iu)]
    solve = np.linalg.solve(R_oo, np.vstack([path.w[1:], R_uo]).T)
    mean = R_uo @ solve[:, 0]
    cov = R_uu - R_uo @ solve[:, 1:]
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    root = eigvecs * np.sqrt(np.maximum(eigvals, 0.0))
    rng = path_rng(seed, path.index, stream=101)
    new_vals = mean + root @ rng.standard_normal(len(mean))
    w = np.empty(2 * grid.n + 1)
    w[0] = 0.0
    w[old] = path.w[1:]
    w[known] = new_vals
    return SampledPath(grid=fine, H=path.H, seed=seed, w=w, index=path.index)


def path_to_csv(path: SampledPath, file, params: ModelParams | None = None) -> None:
    """Write a path as CSV with columns (t, w, x); x requires model params."""
    x = surplus(path, params).values if params is not None else None
    writer = csv.writer(file)
    writer.writerow(["t", "w", "x"])
    for i, t in enumerate(path.grid.nodes):
        row = [f"{t:.12g}", f"{path.w[i]:.12g}"]
        row.append(f"{x[i]:.12g}" if x is not None else "")
        writer.writerow(row)


def grid_function_to_csv(f: GridFunction, file) -> None:
    """Write a GridFunction as CSV with columns (t, value)."""
    writer = csv.writer(file)
    writer.writerow(["t", "value"])
    for t, v in zip(f.grid.nodes, f.values):
        writer.writerow([f"{t:.12g}", f"{v:.12g}"])


def _read_two_columns(file, names: tuple[str, str]) -> tuple[np.ndarray, np.ndarray]:
    reader = csv.reader(file)
    header = next(reader)
    header = [h.strip().lower() for h in header]
    try:
        i0, i1 = header.index(names[0]), header.index(names[1])
    except ValueError as err:
        raise ValueError(f"CSV must have columns {names}, got header {header}") from err
    t_vals, y_vals = [], []
    for row in reader:
        if not row:
            continue
        t_vals.append(float(row[i0]))
        y_vals.append(float(row[i1]))
    return np.asarray(t_vals), np.asarray(y_vals)


def _grid_from_times(t: np.ndarray) -> TimeGrid:
    if len(t) < 3:
        raise ValueError("need at least 3 observations (2 increments)")
    if t[0] != 0.0:
        raise ValueError(f"observations must start at t=0, got t[0]={t[0]}")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("observation times must be strictly increasing")
    if np.max(np.abs(dt - dt[0])) > 1e-8 * dt[0]:
        raise ValueError(
            "observation times are not uniformly spaced; the estimator requires a uniform grid"
        )
    return TimeGrid(float(t[-1]), len(t) - 1)


def read_surplus_csv(file) -> GridFunction:
    """Read observed surplus data as CSV (t, x) into a GridFunction.

    Rejects non-uniform spacing with a clear error.
    """
    t, x = _read_two_columns(file, ("t", "x"))
    return GridFunction(_grid_from_times(t), x)


def read_grid_function_csv(file) -> GridFunction:
    """Read a CSV (t, value) written by :func:`grid_function_to_csv`."""
    t, v = _read_two_columns(file, ("t", "value"))
    return GridFunction(_grid_from_times(t), v)
