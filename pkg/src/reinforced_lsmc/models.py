"""Seeded path simulation for the geometric Brownian and oil/gas models.

Randomness is split into fixed-size blocks of paths; block ``b`` draws from
``SeedSequence(seed, spawn_key=(b,))``. A path's values therefore depend only
on ``(seed, path index)`` and the block size, never on how many workers
simulate the blocks.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import _kernels

BLOCK_SIZE = 4096


@dataclass(frozen=True)
class PathSet:
    """``states[m, j, k]``: path ``m``, epoch ``j``, coordinate ``k``."""

    states: np.ndarray
    seed: int
    times: np.ndarray
    model: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.ndim != 3:
            raise ValueError("states must be an M x (J+1) x d array")
        if self.times.shape != (self.states.shape[1],):
            raise ValueError("time grid length does not match the number of epochs")
        self.states.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def at(self, j: int) -> np.ndarray:
        return self.states[:, j, :]

    def rows(self, start: int, stop: int) -> "PathSet":
        return PathSet(self.states[start:stop], self.seed, self.times, self.model, self.params)


@dataclass(frozen=True)
class GbmParams:
    d: int
    x0: float = 100.0
    r: float = 0.05
    delta: float = 0.1
    sigma: float = 0.2
    T: float = 1.0
    J: int = 9

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.x0 <= 0:
            raise ValueError("x0 must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.J < 1:
            raise ValueError("J must be at least 1")


@dataclass(frozen=True)
class OilGasParams:
    beta: float = 45.0
    alpha1: float = 0.25
    alpha2: float = 0.5
    sigma1: float = 0.2
    sigma2: float = 0.2
    rho_w: float = 0.6
    jump_intensity: float = 2.0
    mu1: float = 100.0
    mu2: float = 100.0
    eta1: float = 30.0
    eta2: float = 30.0
    rho_j: float = 0.6
    x0: tuple[float, float] = (100.0, 100.0)
    euler_steps: int = 365
    floor: bool = False

    def __post_init__(self):
        if not (0.0 <= self.rho_w <= 1.0 and 0.0 <= self.rho_j <= 1.0):
            raise ValueError("correlations must lie in [0, 1]")
        if self.jump_intensity < 0:
            raise ValueError("jump intensity must be nonnegative")
        if self.euler_steps < 1:
            raise ValueError("euler_steps must be at least 1")
        if len(self.x0) != 2:
            raise ValueError("x0 must have two coordinates")


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


def _run_blocks(func, M: int, workers: int, block_size: int):
    starts = list(range(0, M, block_size))
    jobs = [(b, s, min(s + block_size, M)) for b, s in enumerate(starts)]
    if workers <= 1 or len(jobs) == 1:
        return [func(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: func(*job), jobs))


# ---------------------------------------------------------------------------
# Geometric Brownian motion
# ---------------------------------------------------------------------------


def _gbm_block(params: GbmParams, seed: int, b: int, start: int, stop: int) -> np.ndarray:
    n = stop - start
    dt = params.T / params.J
    z = _block_rng(seed, b).standard_normal((n, params.J, params.d))
    drift = (params.r - params.delta - 0.5 * params.sigma**2) * dt
    log_inc = drift + params.sigma * math.sqrt(dt) * z
    out = np.empty((n, params.J + 1, params.d))
    out[:, 0, :] = params.x0
    out[:, 1:, :] = params.x0 * np.exp(np.cumsum(log_inc, axis=1))
    return out


def simulate_gbm(params: GbmParams, M: int, seed: int, workers: int = 1, block_size: int = BLOCK_SIZE) -> PathSet:
    """Exact log-normal sampling of ``d`` independent GBM coordinates on ``t_j = jT/J``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    blocks = _run_blocks(lambda b, s, e: _gbm_block(params, seed, b, s, e), M, workers, block_size)
    times = np.arange(params.J + 1) * (params.T / params.J)
    return PathSet(np.concatenate(blocks, axis=0), int(seed), times, "gbm", asdict(params))


# ---------------------------------------------------------------------------
# Oil/gas jump diffusion
# ---------------------------------------------------------------------------


def _oil_gas_coefs(params: OilGasParams) -> np.ndarray:
    dt = 1.0 / params.euler_steps
    p_jump = -math.expm1(-params.jump_intensity * dt)
    return np.array(
        [
            params.beta,
            params.alpha1,
            params.alpha2,
            params.sigma1,
            params.sigma2,
            params.rho_w,
            p_jump,
            params.mu1,
            params.mu2,
            params.eta1,
            params.eta2,
            params.rho_j,
            dt,
            1.0 if params.floor else 0.0,
        ]
    )


def _oil_gas_block(params: OilGasParams, stride: int, n_out: int, seed: int, b: int, start: int, stop: int):
    n = stop - start
    rng = _block_rng(seed, b)
    shocks = rng.standard_normal((n, params.euler_steps, 4))
    uniforms = rng.random((n, params.euler_steps))
    return _kernels.euler_oil_gas(np.asarray(params.x0, dtype=float), _oil_gas_coefs(params), shocks, uniforms, stride, n_out)


def simulate_oil_gas(
    params: OilGasParams,
    M: int,
    seed: int,
    stride: int = 1,
    horizon: int | None = None,
    workers: int = 1,
    block_size: int = 1024,
    return_jumps: bool = False,
):
    """Daily Euler scheme on [0, 1] with a shared Poisson jump signal.

    Each step applies drift and correlated diffusion; with probability
    ``1 - exp(-lambda dt)`` both prices are then replaced by a fresh jump
    level. Only every ``stride``-th state is stored (``stride=1`` keeps the
    fine grid); ``horizon`` caps the number of stored epochs after the
    initial state.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    max_h = params.euler_steps // stride
    if horizon is None:
        horizon = max_h
    if horizon > max_h:
        raise ValueError(f"stride {stride} x horizon {horizon} overruns {params.euler_steps} Euler steps")
    n_out = horizon + 1
    results = _run_blocks(
        lambda b, s, e: _oil_gas_block(params, stride, n_out, seed, b, s, e), M, workers, block_size
    )
    states = np.concatenate([r[0] for r in results], axis=0)
    times = np.arange(n_out) * float(stride)
    meta = asdict(params)
    meta["stride"] = stride
    paths = PathSet(states, int(seed), times, "oil_gas", meta)
    if return_jumps:
        return paths, np.concatenate([r[1] for r in results])
    return paths


def subsample(paths: PathSet, stride: int, horizon: int | None = None) -> PathSet:
    """Keep the initial state and every ``stride``-th state after it."""
    fine = paths.horizon
    if stride < 1:
        raise ValueError("stride must be at least 1")
    if horizon is None:
        horizon = fine // stride
    if stride * horizon > fine:
        raise ValueError(f"stride {stride} x horizon {horizon} overruns the {fine}-step grid")
    idx = np.arange(horizon + 1) * stride
    params = dict(paths.params)
    params["stride"] = params.get("stride", 1) * stride
    return PathSet(paths.states[:, idx, :].copy(), paths.seed, paths.times[idx], paths.model, params)


def stream_gbm(params: GbmParams, M: int, seed: int, block_size: int = BLOCK_SIZE) -> Iterator[PathSet]:
    """Yield the paths of ``simulate_gbm(params, M, seed)`` one block at a time."""
    times = np.arange(params.J + 1) * (params.T / params.J)
    for b, start in enumerate(range(0, M, block_size)):
        states = _gbm_block(params, seed, b, start, min(start + block_size, M))
        yield PathSet(states, int(seed), times, "gbm", asdict(params))


def stream_oil_gas(
    params: OilGasParams, M: int, seed: int, stride: int = 1, horizon: int | None = None, block_size: int = 1024
) -> Iterator[PathSet]:
    """Yield the paths of ``simulate_oil_gas(...)`` one block at a time."""
    horizon = params.euler_steps // stride if horizon is None else horizon
    if stride * horizon > params.euler_steps:
        raise ValueError(f"stride {stride} x horizon {horizon} overruns {params.euler_steps} Euler steps")
    times = np.arange(horizon + 1) * float(stride)
    meta = asdict(params)
    meta["stride"] = stride
    for b, start in enumerate(range(0, M, block_size)):
        states, _ = _oil_gas_block(params, stride, horizon + 1, seed, b, start, min(start + block_size, M))
        yield PathSet(states, int(seed), times, "oil_gas", meta)


# ---------------------------------------------------------------------------
# Import / export
# ---------------------------------------------------------------------------


def _header(paths: PathSet) -> dict:
    return {
        "model": paths.model,
        "seed": paths.seed,
        "params": paths.params,
        "shape": list(paths.states.shape),
        "times": paths.times.tolist(),
    }


def save_paths(paths: PathSet, path) -> Path:
    """Write a lossless ``.npz`` (binary) or a ``.csv`` with a JSON header line."""
    path = Path(path)
    header = json.dumps(_header(paths), sort_keys=True)
    if path.suffix == ".csv":
        M, n_epochs, d = paths.states.shape
        with path.open("w", newline="") as fh:
            fh.write("# " + header + "\n")
            writer = csv.writer(fh)
            writer.writerow(["path", "epoch"] + [f"x{k + 1}" for k in range(d)])
            for m in range(M):
                for j in range(n_epochs):
                    writer.writerow([m, j] + [repr(float(v)) for v in paths.states[m, j]])
        return path
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    np.savez(path, states=paths.states, times=paths.times, header=np.array(header))
    return path


def load_paths(path) -> PathSet:
    path = Path(path)
    if path.suffix == ".csv":
        with path.open() as fh:
            header = json.loads(fh.readline()[2:])
            rows = list(csv.reader(fh))[1:]
        M, n_epochs, d = header["shape"]
        states = np.array([[float(v) for v in row[2:]] for row in rows]).reshape(M, n_epochs, d)
    else:
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
            states = data["states"]
    return PathSet(states, header["seed"], np.asarray(header["times"], dtype=float), header["model"], header["params"])
