"""Greedy policies from a trained hierarchy and their lower-biased values."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .models import PathSet
from .problems import ControlProblem
from .solver import CostCounters, ValueHierarchy, continuation_vectors, eval_value


class SeedCollisionError(ValueError):
    """Test paths share their seed with the training paths."""


@dataclass
class LowerBoundReport:
    estimate: float
    half_width: float
    M_test: int
    y0: float
    level: int
    train_seed: int | None
    test_seed: int | None
    std: float
    wall_seconds: float
    counters: CostCounters = field(default_factory=CostCounters)

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "half_width": self.half_width,
            "M_test": self.M_test,
            "y0": self.y0,
            "level": self.level,
            "train_seed": self.train_seed,
            "test_seed": self.test_seed,
            "std": self.std,
            "wall_seconds": self.wall_seconds,
            "counters": self.counters.as_dict(),
        }


def greedy_action(h: ValueHierarchy, i: int, j: int, y: float, x) -> int:
    """``argmax_a H_j(a, y, x) + c^{(i)}_j(phi(a, y), x)``, first maximiser wins."""
    problem = h.problem
    X = np.asarray(x, dtype=float).reshape(1, -1)
    cont = continuation_vectors(h, i, j, X)
    yi = np.array([problem.control_index(y)])
    a_idx, _, _ = _kernels.rollout_step(problem.payoffs(j, X), cont, problem.next_index(j), problem.action_mask(j), yi)
    return problem.actions[int(a_idx[0])]


def _rollout(problem: ControlProblem, h: ValueHierarchy, level: int, states: np.ndarray, y0_idx: int, counters) -> np.ndarray:
    n = states.shape[0]
    J = problem.horizon
    y_idx = np.full(n, y0_idx, dtype=np.int64)
    total = np.zeros(n)
    for j in range(J + 1):
        Xj = states[:, j, :]
        cont = continuation_vectors(h, level, j, Xj, counters=counters)
        mask = problem.action_mask(j)
        a_idx, y_next, cash = _kernels.rollout_step(problem.payoffs(j, Xj), cont, problem.next_index(j), mask, y_idx)
        if not mask[y_idx, a_idx].all():
            raise AssertionError(f"greedy policy chose an inadmissible action at epoch {j}")
        total += cash
        y_idx = y_next
    return total


def lower_bound(
    problem: ControlProblem,
    h: ValueHierarchy,
    level: int,
    test: PathSet | Iterable[PathSet],
    y0: float,
    block_size: int = 8192,
) -> LowerBoundReport:
    """Mean discounted cash-flow of the greedy policy on independent paths.

    ``test`` is either a :class:`PathSet` or an iterable of blocks (see
    :func:`reinforced_lsmc.models.stream_gbm`). Blocks are accumulated in
    order with a pairwise mean/variance merge, so the result does not depend
    on how the work was scheduled. The half-width is three standard errors.
    """
    t0 = time.perf_counter()
    y0_idx = problem.control_index(y0)
    counters = CostCounters()
    blocks = [test] if isinstance(test, PathSet) else test
    n_tot, mean, m2 = 0, 0.0, 0.0
    test_seed = None
    for block in blocks:
        if h.train_seed is not None and block.seed == h.train_seed:
            raise SeedCollisionError(f"test seed {block.seed} equals the training seed")
        if block.horizon != problem.horizon:
            raise ValueError("test paths do not match the problem horizon")
        test_seed = block.seed
        for start in range(0, block.n_paths, block_size):
            chunk = block.states[start : start + block_size]
            totals = _rollout(problem, h, level, chunk, y0_idx, counters)
            n_b = totals.size
            mean_b = float(totals.mean())
            m2_b = float(((totals - mean_b) ** 2).sum())
            delta = mean_b - mean
            n_new = n_tot + n_b
            mean += delta * n_b / n_new
            m2 += m2_b + delta * delta * n_tot * n_b / n_new
            n_tot = n_new
    if n_tot == 0:
        raise ValueError("no test paths")
    std = math.sqrt(m2 / (n_tot - 1)) if n_tot > 1 else 0.0
    return LowerBoundReport(
        estimate=mean,
        half_width=3.0 * std / math.sqrt(n_tot),
        M_test=n_tot,
        y0=float(y0),
        level=level,
        train_seed=h.train_seed,
        test_seed=test_seed,
        std=std,
        wall_seconds=time.perf_counter() - t0,
        counters=counters,
    )


def value_readout(h: ValueHierarchy, level: int, y0: float, x0) -> float:
    """Regression estimate ``v^{(level)}_0(y0, x0)``.

    Not a bound in either direction; reported next to the lower bound as a
    consistency check only.
    """
    return eval_value(h, level, 0, y0, x0)
