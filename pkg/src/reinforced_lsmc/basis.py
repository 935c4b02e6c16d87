"""Regression basis families and design-matrix assembly.

The max-call families are polynomials in the order statistics of the state
(``f_1 >= f_2 >= ... >= f_d``), so every feature is invariant under
permutations of the coordinates. The gas families are plain monomials in the
oil price ``x1`` and the gas price ``x2``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .problems import max_call_payoff


def sorted_features(x: np.ndarray) -> np.ndarray:
    """Coordinates in nonincreasing order; works row-wise on 2-D input."""
    x = np.asarray(x, dtype=float)
    return -np.sort(-x, axis=-1)


@dataclass(frozen=True)
class BasisFamily:
    """Ordered scalar features on the state space.

    ``evaluator`` maps an (n, d) array to the (n, K) feature matrix; the
    per-feature names fix the column order.
    """

    name: str
    names: tuple[str, ...]
    evaluator: Callable[[np.ndarray], np.ndarray]
    dim: int
    recipe: dict = field(default_factory=dict, compare=False)

    @property
    def size(self) -> int:
        return len(self.names)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.dim:
            raise ValueError(f"basis {self.name} expects {self.dim} coordinates, got {X.shape[1]}")
        return self.evaluator(X)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)[0]


def _sorted_monomials(d: int, max_degree: int) -> list[tuple[int, ...]]:
    terms: list[tuple[int, ...]] = [()]
    for deg in range(1, max_degree + 1):
        terms.extend(itertools.combinations_with_replacement(range(d), deg))
    return terms


def _psi(d: int, degree: int, payoff=None) -> BasisFamily:
    terms = _sorted_monomials(d, degree)
    names = ["1" if not t else "*".join(f"f{i + 1}" for i in t) for t in terms]
    if payoff is not None:
        names.append("g")

    def evaluate(X: np.ndarray) -> np.ndarray:
        f = sorted_features(X)
        cols = np.empty((X.shape[0], len(names)))
        for c, t in enumerate(terms):
            if not t:
                cols[:, c] = 1.0
            elif len(t) == 1:
                cols[:, c] = f[:, t[0]]
            else:
                cols[:, c] = np.prod(f[:, list(t)], axis=1)
        if payoff is not None:
            cols[:, -1] = payoff(X)
        return cols

    label = {1: "psi1", 2: "psi2", 3: "psi3"}[degree] + ("g" if payoff is not None else "")
    return BasisFamily(label, tuple(names), evaluate, d)


def _gas_poly(degree: int, both: bool) -> BasisFamily:
    if both:
        exps = [(p, q) for total in range(degree + 1) for p in range(total, -1, -1) for q in [total - p]]
        label = f"P{degree}(X1,X2)"
    else:
        exps = [(0, q) for q in range(degree + 1)]
        label = f"P{degree}(X2)"
    names = tuple("1" if p == q == 0 else "*".join(["x1"] * p + ["x2"] * q) for p, q in exps)

    def evaluate(X: np.ndarray) -> np.ndarray:
        x1 = X[:, 0]
        x2 = X[:, 1]
        return np.stack([x1**p * x2**q for p, q in exps], axis=1)

    return BasisFamily(label, names, evaluate, 2)


_GAS_NAME = re.compile(r"^p(\d+)\((x1,x2|x2)\)$|^p(\d+)_(x1x2|x2)$")


def build_basis(family: str, d: int = 2, strike: float | None = None, payoff=None) -> BasisFamily:
    """Construct a named family.

    Accepted names: ``psi1``, ``psi1g``, ``psi2``, ``psi3`` (max-call families,
    ``psi1g`` needs ``strike`` or ``payoff``), and ``P<i>(X2)`` /
    ``P<i>(X1,X2)`` (also spelled ``p<i>_x2`` / ``p<i>_x1x2``) for the gas
    problem.
    """
    key = family.strip().lower().replace(" ", "").replace("ψ", "psi").replace(",g", "g").replace("_g", "g")
    recipe = {"family": family, "d": d, "strike": strike}
    if key in ("psi1", "psi2", "psi3"):
        out = _psi(d, int(key[-1]))
    elif key == "psi1g":
        if payoff is None:
            if strike is None:
                raise ValueError("psi1g needs the payoff strike")
            payoff = max_call_payoff(strike)
        out = _psi(d, 1, payoff)
    else:
        m = _GAS_NAME.match(key)
        if not m:
            raise ValueError(f"unknown basis family {family!r}")
        degree = int(m.group(1) or m.group(3))
        both = (m.group(2) or m.group(4)) in ("x1,x2", "x1x2")
        if d != 2:
            raise ValueError("gas polynomial families live on a 2-dimensional state")
        out = _gas_poly(degree, both)
    return BasisFamily(out.name, out.names, out.evaluator, out.dim, recipe)


def design_matrix(basis: BasisFamily, states: np.ndarray, reinforced: Sequence[np.ndarray] | np.ndarray | None = None) -> np.ndarray:
    """``[psi_1(x) ... psi_K(x), r_1 ... r_R]`` row by row."""
    psi = basis.evaluate(states)
    if reinforced is None or len(reinforced) == 0:
        return psi
    extra = np.column_stack([np.asarray(col, dtype=float) for col in reinforced]) if not isinstance(reinforced, np.ndarray) else np.asarray(reinforced, dtype=float)
    if extra.ndim == 1:
        extra = extra[:, None]
    if extra.shape[0] != psi.shape[0]:
        raise ValueError(f"reinforcement columns have {extra.shape[0]} rows, states have {psi.shape[0]}")
    return np.hstack([psi, extra])


def expected_size(family: str, d: int) -> int:
    """Closed-form cardinality of a family."""
    key = family.lower()
    if key == "psi1":
        return d + 1
    if key == "psi1g":
        return d + 2
    if key == "psi2":
        return (d * d + 3 * d + 2) // 2
    if key == "psi3":
        return (d**3 + 6 * d * d + 11 * d + 6) // 6
    raise ValueError(family)
