"""Discrete-time control problems with finite action and control sets.

A problem is described by a horizon ``J``, an ordered control set, an ordered
action set, admissibility ``K_j(y, x)``, the control update ``phi(a, y)`` and
cash-flows ``H_j(a, y, x)`` with discounting already applied.

Scalar methods (``admissible``, ``transition``, ``cash_flow``,
``terminal_value``) speak in control *values*. The solver works on control
*indices* through the vectorised tables ``action_mask``, ``next_index`` and
``payoffs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

Payoff = Callable[[np.ndarray], np.ndarray]


class ConfigurationError(ValueError):
    """Raised for problem specifications that violate the control setting."""


class ControlProblem:
    """Base class; subclasses fill in admissibility, transition and cash-flow."""

    horizon: int
    state_dim: int
    controls: np.ndarray
    actions: tuple[int, ...]
    cash_bound: float | None = None
    # known lower bound of every value function; regression estimates below it are raised to it
    value_floor: float | None = None

    # -- hooks for subclasses (index based) --------------------------------

    def _admissible(self, j: int, yi: int) -> tuple[int, ...]:
        raise NotImplementedError

    def _next(self, j: int, a: int, yi: int) -> int:
        raise NotImplementedError

    def payoffs(self, j: int, X: np.ndarray) -> np.ndarray:
        """Cash-flows ``H_j(a, y, x)`` as an (n, |L|, |K|) array."""
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    # -- control bookkeeping ------------------------------------------------

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def control_index(self, y: float) -> int:
        hits = np.flatnonzero(np.isclose(self.controls, y, rtol=0.0, atol=1e-12))
        if hits.size == 0:
            raise ConfigurationError(f"control {y!r} is not in {self.controls.tolist()}")
        return int(hits[0])

    def _check_epoch(self, j: int) -> None:
        if not 0 <= j <= self.horizon:
            raise ConfigurationError(f"epoch {j} outside 0..{self.horizon}")

    # -- scalar interface ---------------------------------------------------

    def admissible(self, j: int, y: float, x=None) -> tuple[int, ...]:
        self._check_epoch(j)
        return self._admissible(j, self.control_index(y))

    def transition(self, j: int, a: int, y: float) -> float:
        yi = self.control_index(y)
        if a not in self._admissible(min(j, self.horizon), yi):
            raise ConfigurationError(f"action {a} not admissible at epoch {j}, control {y}")
        return float(self.controls[self._next(j, a, yi)])

    def cash_flow(self, j: int, a: int, y: float, x) -> float:
        self._check_epoch(j)
        yi = self.control_index(y)
        ai = self.actions.index(a)
        X = np.asarray(x, dtype=float).reshape(1, -1)
        return float(self.payoffs(j, X)[0, yi, ai])

    def terminal_value(self, y: float, x) -> float:
        X = np.asarray(x, dtype=float).reshape(1, -1)
        return float(self.terminal_values(X)[0, self.control_index(y)])

    # -- vectorised tables --------------------------------------------------

    def _tables(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        cache = self.__dict__.setdefault("_table_cache", {})
        if j not in cache:
            mask = np.zeros((self.n_controls, self.n_actions), dtype=bool)
            table = np.full((self.n_controls, self.n_actions), -1, dtype=np.int64)
            for yi in range(self.n_controls):
                for a in self._admissible(j, yi):
                    ai = self.actions.index(a)
                    mask[yi, ai] = True
                    table[yi, ai] = self._next(j + 1, a, yi)
            if not mask.any(axis=1).all():
                raise ConfigurationError(f"empty admissible set at epoch {j}")
            mask.setflags(write=False)
            table.setflags(write=False)
            cache[j] = (mask, table)
        return cache[j]

    def action_mask(self, j: int) -> np.ndarray:
        """(|L|, |K|) boolean admissibility table at epoch ``j``."""
        return self._tables(j)[0]

    def next_index(self, j: int) -> np.ndarray:
        """(|L|, |K|) control index after each admissible action; -1 elsewhere."""
        return self._tables(j)[1]

    def terminal_values(self, X: np.ndarray) -> np.ndarray:
        """``v_J(y, x) = max_{a in K_J(y, x)} H_J(a, y, x)`` as (n, |L|)."""
        J = self.horizon
        payoff = self.payoffs(J, X)
        masked = np.where(self.action_mask(J)[None], payoff, -np.inf)
        return masked.max(axis=2)

    def check_cash_bound(self, X: np.ndarray) -> bool:
        """True when every sampled ``|H_j|`` stays below ``cash_bound``."""
        if self.cash_bound is None:
            raise ConfigurationError("cash_bound is not configured")
        worst = max(float(np.abs(self.payoffs(j, X)).max()) for j in range(self.horizon + 1))
        return worst <= self.cash_bound


# ---------------------------------------------------------------------------
# Single and multiple stopping
# ---------------------------------------------------------------------------


def max_call_payoff(strike: float) -> Payoff:
    """``g(x) = (max_k x_k - C)_+`` evaluated row-wise."""

    def g(X: np.ndarray) -> np.ndarray:
        return np.maximum(np.max(X, axis=1) - strike, 0.0)

    g.strike = strike  # type: ignore[attr-defined]
    return g


def zero_payoff(X: np.ndarray) -> np.ndarray:
    return np.zeros(X.shape[0])


@dataclass(frozen=True)
class StoppingSpec:
    """Bermudan stopping with ``rights`` exercise rights, at most one per date.

    ``payoff`` must be vectorised over rows and nonnegative; cash-flows are
    ``a * g(x) * exp(-r t_j)`` with ``t_j = j * maturity / horizon``.
    """

    horizon: int
    maturity: float
    rate: float
    state_dim: int
    rights: int = 1
    strike: float | None = 100.0
    payoff: Payoff | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if self.rights < 1:
            raise ConfigurationError("rights must be at least 1")
        if self.maturity <= 0:
            raise ConfigurationError("maturity must be positive")


class StoppingProblem(ControlProblem):
    def __init__(self, spec: StoppingSpec, cash_bound: float | None = None):
        self.spec = spec
        self.horizon = spec.horizon
        self.state_dim = spec.state_dim
        self.controls = np.arange(spec.rights + 1, dtype=float)
        self.actions = (0, 1)
        self.cash_bound = cash_bound
        if spec.payoff is not None:
            self.payoff = spec.payoff
        elif spec.strike is not None:
            self.payoff = max_call_payoff(spec.strike)
        else:
            raise ConfigurationError("stopping problem needs a payoff or a strike")
        self._dt = spec.maturity / spec.horizon
        # nonnegative payoffs give nonnegative values
        self.value_floor = 0.0

    def exercise_time(self, j: int) -> float:
        return j * self._dt

    def discount(self, j: int) -> float:
        return math.exp(-self.spec.rate * self.exercise_time(j))

    def _admissible(self, j, yi):
        return (0, 1) if self.controls[yi] >= 1 else (0,)

    def _next(self, j, a, yi):
        return max(yi - a, 0)

    def payoffs(self, j, X):
        X = np.asarray(X, dtype=float)
        g = self.payoff(X) * self.discount(j)
        out = np.zeros((X.shape[0], self.n_controls, 2))
        out[:, :, 1] = g[:, None]
        return out

    def describe(self):
        s = self.spec
        return {
            "type": "multi_stop" if s.rights > 1 else "max_call",
            "horizon": s.horizon,
            "maturity": s.maturity,
            "rate": s.rate,
            "state_dim": s.state_dim,
            "rights": s.rights,
            "strike": s.strike,
        }


# ---------------------------------------------------------------------------
# Gas storage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GasStorageSpec:
    """Storage with fill levels ``{0, 1/N, ..., 1}`` traded every ``stride_days``.

    Cash-flow ``-a * (1/N) * x[1] * exp(-r * j * stride_days / 365)``; no
    trading at ``j = 0``.
    """

    horizon: int = 52
    levels: int = 8
    stride_days: int = 7
    rate: float = 0.1
    initial_fill: float = 0.5

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if self.levels < 1:
            raise ConfigurationError("levels must be at least 1")
        k = self.initial_fill * self.levels
        if abs(k - round(k)) > 1e-9 or not 0 <= k <= self.levels:
            raise ConfigurationError(f"initial_fill {self.initial_fill} is not a multiple of 1/{self.levels}")

    @property
    def granularity(self) -> float:
        return 1.0 / self.levels


class GasStorageProblem(ControlProblem):
    def __init__(self, spec: GasStorageSpec, cash_bound: float | None = None):
        self.spec = spec
        self.horizon = spec.horizon
        self.state_dim = 2
        self.controls = np.arange(spec.levels + 1) / spec.levels
        self.actions = (-1, 0, 1)
        self.cash_bound = cash_bound

    def _admissible(self, j, yi):
        if j == 0:
            return (0,)
        if yi == 0:
            return (0, 1)
        if yi == self.spec.levels:
            return (-1, 0)
        return (-1, 0, 1)

    def _next(self, j, a, yi):
        return min(max(yi + a, 0), self.spec.levels)

    def payoffs(self, j, X):
        X = np.asarray(X, dtype=float)
        s = self.spec
        disc = math.exp(-s.rate * j * (s.stride_days / 365.0))
        unit = s.granularity * X[:, 1] * disc
        out = np.empty((X.shape[0], self.n_controls, 3))
        out[:, :, 0] = unit[:, None]
        out[:, :, 1] = 0.0
        out[:, :, 2] = -unit[:, None]
        return out

    def describe(self):
        s = self.spec
        return {
            "type": "gas_storage",
            "horizon": s.horizon,
            "levels": s.levels,
            "stride_days": s.stride_days,
            "rate": s.rate,
            "initial_fill": s.initial_fill,
        }


def default_reinforcement(problem: ControlProblem) -> dict[int, tuple[int, ...]]:
    """Default reinforcement sets ``L^y`` as control indices.

    Stopping problems reinforce with every nonzero number of rights; gas
    storage with the value function at the initial fill level only.
    """
    if isinstance(problem, GasStorageProblem):
        base = (problem.control_index(problem.spec.initial_fill),)
    else:
        base = tuple(range(1, problem.n_controls))
    return {yi: base for yi in range(problem.n_controls)}


def reinforcement_sets(problem: ControlProblem, policy) -> dict[int, tuple[int, ...]]:
    """Resolve an ``L^y`` policy: ``"default"``, ``"all"``, ``"self"``, a list
    of control values shared by every ``y``, or an explicit ``{y: [...]}``."""
    n = problem.n_controls
    if policy is None or policy == "default":
        return default_reinforcement(problem)
    if policy == "all":
        return {yi: tuple(range(n)) for yi in range(n)}
    if policy == "self":
        return {yi: (yi,) for yi in range(n)}
    if isinstance(policy, dict):
        sets = {}
        for y, values in policy.items():
            sets[problem.control_index(float(y))] = tuple(sorted({problem.control_index(v) for v in values}))
        for yi in range(n):
            sets.setdefault(yi, ())
        return sets
    if isinstance(policy, (list, tuple)):
        shared = tuple(sorted({problem.control_index(float(v)) for v in policy}))
        return {yi: shared for yi in range(n)}
    raise ConfigurationError(f"unknown reinforcement policy {policy!r}")


def problem_from_descriptor(desc: dict, cash_bound: float | None = None) -> ControlProblem:
    """Rebuild a problem from :meth:`ControlProblem.describe` output."""
    kind = desc.get("type")
    if kind in ("max_call", "multi_stop"):
        spec = StoppingSpec(
            horizon=int(desc["horizon"]),
            maturity=float(desc["maturity"]),
            rate=float(desc["rate"]),
            state_dim=int(desc["state_dim"]),
            rights=int(desc.get("rights", 1)),
            strike=desc.get("strike"),
        )
        return StoppingProblem(spec, cash_bound)
    if kind == "gas_storage":
        spec = GasStorageSpec(
            horizon=int(desc["horizon"]),
            levels=int(desc["levels"]),
            stride_days=int(desc["stride_days"]),
            rate=float(desc["rate"]),
            initial_fill=float(desc["initial_fill"]),
        )
        return GasStorageProblem(spec, cash_bound)
    raise ConfigurationError(f"unknown problem type {kind!r}")


def admissible_actions(problem: ControlProblem, j: int, y: float, x=None) -> tuple[int, ...]:
    """``K_j(y, x)`` in the fixed action order."""
    return problem.admissible(j, y, x)


def transition(problem: ControlProblem, j: int, a: int, y: float) -> float:
    """``phi_{j+1}(a, y)``; rejects inadmissible actions."""
    return problem.transition(j, a, y)


def cash_flow(problem: ControlProblem, j: int, a: int, y: float, x) -> float:
    """Discounted ``H_j(a, y, x)``."""
    return problem.cash_flow(j, a, y, x)


def terminal_value(problem: ControlProblem, y: float, x) -> float:
    """``v_J(y, x)``, the best admissible cash-flow at the last epoch."""
    return problem.terminal_value(y, x)
