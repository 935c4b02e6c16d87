"""Backward-induction solvers: standard regression and hierarchical reinforced
regression (variants A and B, plus the full-depth diagonal variant).

A trained :class:`ValueHierarchy` stores, for every computed cell
``(level i, epoch j)``, the basis coefficients ``gamma`` (K x |L|) and the
reinforcement weights (|L| x |L|, entry ``[z, y]`` multiplies
``v^{(i-1)}_{j+1}(z, x)`` in the continuation for control ``y``). Evaluation
works on whole batches of states and on full value vectors over the control
set, so each ``(level, epoch)`` vector is computed once per call.
"""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .basis import BasisFamily, build_basis
from .models import PathSet
from .problems import ControlProblem, problem_from_descriptor, reinforcement_sets
from .regression import Coefficients, lstsq

COMPUTED, SKIPPED, ALIASED = 0, 1, 2
ALGORITHMS = ("standard", "hrr_a", "hrr_b", "rr_diagonal")


@dataclass
class CostCounters:
    """Operation counts standing in for the simulation, feature-evaluation
    and elementary-operation costs of the algorithms.

    ``basis_evals`` counts scalar feature evaluations (rows x K);
    ``basis_expansions`` counts per-row inner products of a basis vector with
    one cell's coefficients; ``reinforcement_evals`` counts per-row value
    vectors evaluated to supply reinforcement columns (recursively).
    """

    path_simulations: int = 0
    basis_evals: int = 0
    basis_expansions: int = 0
    reinforcement_evals: int = 0
    value_vector_evals: int = 0
    lsq_solves: int = 0
    lsq_shapes: Counter = field(default_factory=Counter)

    def add_solve(self, rows: int, cols: int, n: int = 1) -> None:
        self.lsq_solves += n
        self.lsq_shapes[(rows, cols)] += n

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "lsq_shapes"}
        out["lsq_shapes"] = {f"{r}x{c}": n for (r, c), n in sorted(self.lsq_shapes.items())}
        return out


@dataclass
class Cell:
    level: int
    epoch: int
    gamma: np.ndarray
    weights: np.ndarray | None
    rss: np.ndarray
    rank: dict = field(default_factory=dict)


class SkippedCellError(LookupError):
    """Raised when evaluation touches a cell the solver deliberately skipped."""


@dataclass
class ValueHierarchy:
    problem: ControlProblem
    basis: BasisFamily
    reinforcement: dict[int, tuple[int, ...]]
    depth: int
    algorithm: str
    cells: dict = field(default_factory=dict)
    status: np.ndarray | None = None
    train_seed: int | None = None
    truncation: float | None = None
    counters: CostCounters = field(default_factory=CostCounters)
    train_seconds: float = 0.0
    training_values: dict = field(default_factory=dict)
    floor: float | None = None

    def __post_init__(self):
        if self.status is None:
            self.status = np.full((self.depth + 1, self.problem.horizon), SKIPPED, dtype=np.int8)

    @property
    def horizon(self) -> int:
        return self.problem.horizon

    def cell(self, i: int, j: int) -> Cell:
        if not 0 <= j < self.horizon:
            raise IndexError(f"no regression cell at epoch {j}")
        if i < 0:
            raise IndexError("negative level")
        if i > self.depth:
            raise IndexError(f"level {i} exceeds depth {self.depth}")
        state = self.status[i, j]
        if state == ALIASED:
            i = min(i, self.horizon - j)
            state = self.status[i, j]
        if state != COMPUTED:
            raise SkippedCellError(f"cell (level {i}, epoch {j}) was skipped during training")
        return self.cells[(i, j)]

    def is_computed(self, i: int, j: int) -> bool:
        try:
            self.cell(i, j)
        except (SkippedCellError, IndexError):
            return False
        return True

    def coefficients(self, i: int, j: int, y: float) -> Coefficients:
        """The ``K + R^y`` coefficient vector of ``c^{(i)}_j(y, .)``."""
        c = self.cell(i, j)
        yi = self.problem.control_index(y)
        values = c.gamma[:, yi]
        refs: tuple = ()
        if c.weights is not None:
            ly = self.reinforcement[yi]
            values = np.concatenate([values, c.weights[list(ly), yi]])
            refs = tuple((c.level - 1, j + 1, float(self.problem.controls[z])) for z in ly)
        return Coefficients(values=values, basis=self.basis.name, reinforcement=refs, rss=float(c.rss[yi]))


# ---------------------------------------------------------------------------
# Batched evaluation
# ---------------------------------------------------------------------------


def _expand(h: ValueHierarchy, cell: Cell, psi: np.ndarray, reinf: np.ndarray | None, counters) -> np.ndarray:
    out = psi @ cell.gamma
    if cell.weights is not None:
        out = out + reinf @ cell.weights
    if counters is not None:
        counters.basis_expansions += psi.shape[0]
    if h.truncation is not None:
        out = np.clip(out, -h.truncation, h.truncation)
    if h.floor is not None:
        out = np.maximum(out, h.floor)
    return out


def continuation_vectors(h: ValueHierarchy, i: int, j: int, X: np.ndarray, psi=None, counters=None) -> np.ndarray:
    """``c^{(i)}_j(y, x)`` for every control, as an (n, |L|) array."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if j >= h.horizon:
        return np.zeros((X.shape[0], h.problem.n_controls))
    cell = h.cell(i, j)
    if psi is None:
        psi = h.basis.evaluate(X)
        if counters is not None:
            counters.basis_evals += psi.size
    reinf = None
    if cell.weights is not None:
        reinf = value_vectors(h, cell.level - 1, j + 1, X, psi, counters)
        if counters is not None:
            counters.reinforcement_evals += X.shape[0]
    return _expand(h, cell, psi, reinf, counters)


def value_vectors(h: ValueHierarchy, i: int, j: int, X: np.ndarray, psi=None, counters=None) -> np.ndarray:
    """``v^{(i)}_j(y, x)`` for every control, as an (n, |L|) array."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if counters is not None:
        counters.value_vector_evals += X.shape[0]
    problem = h.problem
    if j == h.horizon:
        return problem.terminal_values(X)
    cont = continuation_vectors(h, i, j, X, psi, counters)
    values, _ = _kernels.bellman_max(problem.payoffs(j, X), cont, problem.next_index(j), problem.action_mask(j))
    return values


def eval_continuation(h: ValueHierarchy, i: int, j: int, y: float, x, counters=None) -> float:
    yi = h.problem.control_index(y)
    return float(continuation_vectors(h, i, j, np.asarray(x, dtype=float).reshape(1, -1), counters=counters)[0, yi])


def eval_value(h: ValueHierarchy, i: int, j: int, y: float, x, counters=None) -> float:
    yi = h.problem.control_index(y)
    return float(value_vectors(h, i, j, np.asarray(x, dtype=float).reshape(1, -1), counters=counters)[0, yi])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _check_inputs(problem: ControlProblem, train: PathSet, basis: BasisFamily) -> None:
    if problem.horizon < 1:
        raise ValueError("horizon must be at least 1")
    if train.horizon != problem.horizon:
        raise ValueError(f"paths have {train.horizon} steps, problem has horizon {problem.horizon}")
    if train.dim != problem.state_dim or basis.dim != problem.state_dim:
        raise ValueError("state dimension mismatch between problem, paths and basis")


def _fit_cell(h: ValueHierarchy, i: int, j: int, psi: np.ndarray, reinf, targets: np.ndarray, counters) -> Cell:
    """Regress every control's target on the (possibly reinforced) basis."""
    M, K = psi.shape
    n_ctrl = h.problem.n_controls
    gamma = np.zeros((K, n_ctrl))
    rss = np.zeros(n_ctrl)
    ranks: dict = {}
    if reinf is None:
        res = lstsq(psi, targets)
        gamma[:, :] = res.coef
        rss[:] = res.rss
        ranks[()] = res.rank
        counters.add_solve(M, K, n_ctrl)
        return Cell(i, j, gamma, None, rss, ranks)
    weights = np.zeros((n_ctrl, n_ctrl))
    groups: dict[tuple[int, ...], list[int]] = {}
    for yi in range(n_ctrl):
        groups.setdefault(tuple(h.reinforcement[yi]), []).append(yi)
    for ly, ys in groups.items():
        design = np.hstack([psi, reinf[:, list(ly)]]) if ly else psi
        res = lstsq(design, targets[:, ys])
        gamma[:, ys] = res.coef[:K]
        if ly:
            weights[np.ix_(list(ly), ys)] = res.coef[K:]
        rss[ys] = res.rss
        ranks[ly] = res.rank
        counters.add_solve(M, design.shape[1], len(ys))
    return Cell(i, j, gamma, weights, rss, ranks)


def _new_hierarchy(problem, basis, L_sets, depth, algorithm, train, truncation, floor="auto") -> ValueHierarchy:
    sets = reinforcement_sets(problem, L_sets) if not isinstance(L_sets, dict) or not all(
        isinstance(k, int) for k in L_sets
    ) else {int(k): tuple(v) for k, v in L_sets.items()}
    h = ValueHierarchy(problem, basis, sets, depth, algorithm, train_seed=train.seed, truncation=truncation)
    h.floor = problem.value_floor if floor == "auto" else floor
    h.counters.path_simulations = train.n_paths * (train.horizon + 1)
    return h


def _bellman(problem: ControlProblem, j: int, X: np.ndarray, cont: np.ndarray) -> np.ndarray:
    values, _ = _kernels.bellman_max(problem.payoffs(j, X), cont, problem.next_index(j), problem.action_mask(j))
    return values


def solve_hrr_b(
    problem: ControlProblem,
    train: PathSet,
    basis: BasisFamily,
    L_sets=None,
    depth: int = 1,
    *,
    share_triangle: bool = True,
    keep_targets: bool = False,
    truncation: float | None = None,
    floor: float | str | None = "auto",
    algorithm: str = "hrr_b",
) -> ValueHierarchy:
    """Hierarchical reinforced regression, variant B.

    Backward over epochs; at each epoch every level regresses the deepest
    level's next-epoch values, level ``i >= 1`` on the basis reinforced by
    ``v^{(i-1)}_{j+1}(y_k, .)`` for ``y_k`` in ``L^y``. Cells with
    ``i + j < depth`` never feed ``v^{(depth)}`` and are skipped; with
    ``share_triangle`` cells with ``i > J - j`` reuse level ``J - j``.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    _check_inputs(problem, train, basis)
    t0 = time.perf_counter()
    J = problem.horizon
    h = _new_hierarchy(problem, basis, L_sets, depth, algorithm, train, truncation, floor)
    counters = h.counters
    target = problem.terminal_values(train.at(J))
    for j in range(J - 1, -1, -1):
        Xj = train.at(j)
        psi = basis.evaluate(Xj)
        counters.basis_evals += psi.size
        top = min(depth, J - j) if share_triangle else depth
        next_target = None
        for i in range(depth + 1):
            if i + j < depth:
                h.status[i, j] = SKIPPED
                continue
            if share_triangle and i > J - j:
                h.status[i, j] = ALIASED
                continue
            reinf = None
            if i > 0:
                reinf = value_vectors(h, i - 1, j + 1, Xj, psi, counters)
                counters.reinforcement_evals += Xj.shape[0]
            cell = _fit_cell(h, i, j, psi, reinf, target, counters)
            h.cells[(i, j)] = cell
            h.status[i, j] = COMPUTED
            if i == top or keep_targets:
                values = _bellman(problem, j, Xj, _expand(h, cell, psi, reinf, counters))
                if keep_targets:
                    h.training_values[(i, j)] = values
                if i == top:
                    next_target = values
        target = next_target
    h.train_seconds = time.perf_counter() - t0
    return h


def solve_standard(problem: ControlProblem, train: PathSet, basis: BasisFamily, **kwargs) -> ValueHierarchy:
    """Tsitsiklis-van Roy regression on a fixed basis (depth 0)."""
    return solve_hrr_b(problem, train, basis, None, 0, algorithm="standard", **kwargs)


def solve_rr_diagonal(problem: ControlProblem, train: PathSet, basis: BasisFamily, L_sets=None, **kwargs) -> ValueHierarchy:
    """Full-depth reinforced regression: variant B with depth ``J``, where only
    the cells ``i = J - j`` are needed."""
    kwargs.setdefault("share_triangle", True)
    return solve_hrr_b(problem, train, basis, L_sets, problem.horizon, algorithm="rr_diagonal", **kwargs)


def _relative_change(new: ValueHierarchy, level: int, tiny: float = 1e-300) -> float:
    changes = []
    for j in range(new.horizon):
        if new.status[level, j] != COMPUTED:
            continue
        cur = new.cells[(level, j)].rss
        prev = new.cell(level - 1, j).rss
        for a, b in zip(cur, prev):
            if b <= tiny and a <= tiny:
                continue
            changes.append(abs(a - b) / max(b, tiny))
    return float(np.mean(changes)) if changes else 0.0


def solve_hrr_a(
    problem: ControlProblem,
    train: PathSet,
    basis: BasisFamily,
    L_sets=None,
    depth: int | None = None,
    theta: float | None = None,
    *,
    max_depth: int = 50,
    share_triangle: bool = True,
    keep_targets: bool = False,
    truncation: float | None = None,
    floor: float | str | None = "auto",
) -> ValueHierarchy:
    """Hierarchical reinforced regression, variant A.

    Level 0 is standard regression; each further level is a complete backward
    pass regressing its own next-epoch values on the basis reinforced by the
    previous level. Stops after ``depth`` levels, or, when ``depth`` is None,
    once the mean relative change of the residual sums of squares drops below
    ``theta`` (default ``1e-3``) or ``max_depth`` is reached.
    """
    _check_inputs(problem, train, basis)
    if depth is None and theta is None:
        theta = 1e-3
    limit = depth if depth is not None else max_depth
    if limit < 0:
        raise ValueError("depth must be nonnegative")
    t0 = time.perf_counter()
    J = problem.horizon
    h = _new_hierarchy(problem, basis, L_sets, limit, "hrr_a", train, truncation, floor)
    counters = h.counters
    terminal = problem.terminal_values(train.at(J))
    prev_vals: list = [None] * (J + 1)
    reached = 0
    for i in range(limit + 1):
        cur_vals: list = [None] * (J + 1)
        cur_vals[J] = terminal
        for j in range(J - 1, -1, -1):
            if share_triangle and i > J - j:
                h.status[i, j] = ALIASED
                cur_vals[j] = prev_vals[j]
                continue
            Xj = train.at(j)
            psi = basis.evaluate(Xj)
            counters.basis_evals += psi.size
            reinf = None
            if i > 0:
                reinf = value_vectors(h, i - 1, j + 1, Xj, psi, counters)
                counters.reinforcement_evals += Xj.shape[0]
            cell = _fit_cell(h, i, j, psi, reinf, cur_vals[j + 1], counters)
            h.cells[(i, j)] = cell
            h.status[i, j] = COMPUTED
            cur_vals[j] = _bellman(problem, j, Xj, _expand(h, cell, psi, reinf, counters))
            if keep_targets:
                h.training_values[(i, j)] = cur_vals[j]
        prev_vals = cur_vals
        reached = i
        if depth is None and i >= 1 and _relative_change(h, i) < theta:
            break
    if reached < limit:
        h.status = h.status[: reached + 1].copy()
        h.depth = reached
    h.train_seconds = time.perf_counter() - t0
    return h


def solve(problem, train, basis, algorithm: str, depth: int = 0, L_sets=None, theta=None, **kwargs) -> ValueHierarchy:
    """Dispatch on the algorithm tag."""
    if algorithm == "standard":
        return solve_standard(problem, train, basis, **kwargs)
    if algorithm == "hrr_b":
        return solve_hrr_b(problem, train, basis, L_sets, depth, **kwargs)
    if algorithm == "hrr_a":
        return solve_hrr_a(problem, train, basis, L_sets, None if theta is not None else depth, theta, **kwargs)
    if algorithm == "rr_diagonal":
        return solve_rr_diagonal(problem, train, basis, L_sets, **kwargs)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def cost_counters(h: ValueHierarchy) -> CostCounters:
    return h.counters


def truncation_level(problem: ControlProblem) -> float:
    """``W = J * C_H`` for the optional truncation of continuation values."""
    if problem.cash_bound is None:
        raise ValueError("truncation needs the problem's cash bound C_H")
    return problem.horizon * problem.cash_bound


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def save_hierarchy(h: ValueHierarchy, path) -> Path:
    """Self-describing ``.npz``: JSON header plus one array pair per cell."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    header = {
        "problem": h.problem.describe(),
        "cash_bound": h.problem.cash_bound,
        "basis": h.basis.recipe or {"family": h.basis.name, "d": h.basis.dim},
        "reinforcement": {str(k): list(v) for k, v in h.reinforcement.items()},
        "depth": h.depth,
        "algorithm": h.algorithm,
        "train_seed": h.train_seed,
        "truncation": h.truncation,
        "floor": h.floor,
        "cells": [[i, j] for (i, j) in sorted(h.cells)],
    }
    arrays = {"status": h.status}
    for (i, j), c in h.cells.items():
        arrays[f"gamma_{i}_{j}"] = c.gamma
        arrays[f"rss_{i}_{j}"] = c.rss
        if c.weights is not None:
            arrays[f"weights_{i}_{j}"] = c.weights
    np.savez(path, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_hierarchy(path) -> ValueHierarchy:
    with np.load(Path(path)) as data:
        header = json.loads(str(data["header"]))
        problem = problem_from_descriptor(header["problem"], header.get("cash_bound"))
        recipe = header["basis"]
        basis = build_basis(recipe["family"], recipe["d"], recipe.get("strike"))
        sets = {int(k): tuple(v) for k, v in header["reinforcement"].items()}
        h = ValueHierarchy(
            problem,
            basis,
            sets,
            header["depth"],
            header["algorithm"],
            status=data["status"].copy(),
            train_seed=header["train_seed"],
            truncation=header["truncation"],
            floor=header.get("floor"),
        )
        for i, j in header["cells"]:
            w = f"weights_{i}_{j}"
            h.cells[(i, j)] = Cell(
                i, j, data[f"gamma_{i}_{j}"].copy(), data[w].copy() if w in data.files else None, data[f"rss_{i}_{j}"].copy()
            )
    return h
