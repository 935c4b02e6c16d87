"""Time the numba kernels against their numpy twins.

Usage::

    python3 benchmarks/bench_kernels.py [--paths 100000] [--repeat 5]

Each kernel is called once to trigger compilation before timing. The best of
``--repeat`` runs is reported together with a check that both paths agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from reinforced_lsmc import _kernels
from reinforced_lsmc.models import OilGasParams, _oil_gas_coefs
from reinforced_lsmc.problems import GasStorageProblem, GasStorageSpec


def _inputs(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    problem = GasStorageProblem(GasStorageSpec())
    X = 100.0 + 20.0 * rng.standard_normal((n, 2))
    payoff = problem.payoffs(10, X)
    cont = rng.standard_normal((n, problem.n_controls)) * 10.0
    y_idx = rng.integers(0, problem.n_controls, n)
    return payoff, cont, problem.next_index(10), problem.action_mask(10), y_idx


def _best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=100_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    n = args.paths

    payoff, cont, nxt, mask, y_idx = _inputs(n)
    params = OilGasParams()
    coefs = _oil_gas_coefs(params)
    m = max(n // 20, 1)
    rng = np.random.default_rng(1)
    shocks = rng.standard_normal((m, params.euler_steps, 4))
    uniforms = rng.random((m, params.euler_steps))
    x0 = np.asarray(params.x0)

    cases = {
        "bellman_max": (
            lambda: _kernels.bellman_max_numba(payoff, cont, nxt, mask),
            lambda: _kernels.bellman_max_numpy(payoff, cont, nxt, mask),
        ),
        "rollout_step": (
            lambda: _kernels.rollout_step_numba(payoff, cont, nxt, mask, y_idx),
            lambda: _kernels.rollout_step_numpy(payoff, cont, nxt, mask, y_idx),
        ),
        f"euler_oil_gas ({m} paths)": (
            lambda: _kernels.euler_oil_gas_numba(x0, coefs, shocks, uniforms, 7, 53),
            lambda: _kernels.euler_oil_gas_numpy(x0, tuple(coefs), shocks, uniforms, 7, 53),
        ),
    }
    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}  agree")
    for name, (fast, slow) in cases.items():
        a, b = fast(), slow()
        agree = all(np.allclose(x, y, rtol=1e-12, atol=1e-12) for x, y in zip(a, b))
        t_fast = _best(fast, args.repeat) * 1e3
        t_slow = _best(slow, args.repeat) * 1e3
        print(f"{name:<28}{t_fast:>12.2f}{t_slow:>12.2f}{t_slow / t_fast:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
