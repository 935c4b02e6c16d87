"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The numba versions are used when numba imports cleanly and the environment
variable ``RLSMC_DISABLE_NUMBA`` is unset (or ``0``). Both paths consume the
same pre-drawn random numbers and produce the same results, so switching the
flag never changes a reported number beyond floating point reassociation in
the Euler stepper (which both paths perform in the same order).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False


def numba_enabled() -> bool:
    flag = os.environ.get("RLSMC_DISABLE_NUMBA", "0").strip().lower()
    return NUMBA_AVAILABLE and flag in ("", "0", "false", "no")


def _njit(func):
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# ---------------------------------------------------------------------------
# Bellman maximum over admissible actions
# ---------------------------------------------------------------------------


def bellman_max_numpy(payoff, cont, next_idx, mask):
    """Vectorised ``max_a H(a, y, x) + c(phi(a, y), x)`` for every control.

    Args:
        payoff: (n, L, K) cash-flows ``H_j(a, y, x)``.
        cont: (n, L) continuation values indexed by the *post-action* control.
        next_idx: (L, K) index of ``phi(a, y)``; only read where ``mask`` holds.
        mask: (L, K) admissibility.

    Returns:
        ``(values, argmax)`` of shapes (n, L); ``argmax`` indexes the action
        ordering and resolves ties towards the first admissible action.
    """
    safe_next = np.where(mask, next_idx, 0)
    q = payoff + cont[:, safe_next]
    q = np.where(mask[None, :, :], q, -np.inf)
    arg = np.argmax(q, axis=2)
    values = np.take_along_axis(q, arg[:, :, None], axis=2)[:, :, 0]
    return values, arg


@_njit
def bellman_max_numba(payoff, cont, next_idx, mask):
    n, n_ctrl, n_act = payoff.shape
    values = np.empty((n, n_ctrl))
    arg = np.zeros((n, n_ctrl), dtype=np.int64)
    for m in range(n):
        for y in range(n_ctrl):
            best = -np.inf
            best_a = 0
            found = False
            for a in range(n_act):
                if not mask[y, a]:
                    continue
                q = payoff[m, y, a] + cont[m, next_idx[y, a]]
                if not found or q > best:
                    best = q
                    best_a = a
                    found = True
            values[m, y] = best
            arg[m, y] = best_a
    return values, arg


def bellman_max(payoff, cont, next_idx, mask):
    if numba_enabled():
        return bellman_max_numba(
            np.ascontiguousarray(payoff, dtype=np.float64),
            np.ascontiguousarray(cont, dtype=np.float64),
            np.ascontiguousarray(next_idx, dtype=np.int64),
            np.ascontiguousarray(mask, dtype=np.bool_),
        )
    return bellman_max_numpy(payoff, cont, next_idx, mask)


# ---------------------------------------------------------------------------
# One step of a greedy policy rollout
# ---------------------------------------------------------------------------


def rollout_step_numpy(payoff, cont, next_idx, mask, y_idx):
    """Greedy action for each path given its current control index.

    Returns ``(action_idx, next_y_idx, cash)``, each of length n.
    """
    rows = np.arange(payoff.shape[0])
    path_payoff = payoff[rows, y_idx, :]  # (n, K)
    path_mask = mask[y_idx, :]  # (n, K)
    path_next = np.where(path_mask, next_idx[y_idx, :], 0)
    q = path_payoff + np.take_along_axis(cont, path_next, axis=1)
    q = np.where(path_mask, q, -np.inf)
    a = np.argmax(q, axis=1)
    cash = path_payoff[rows, a]
    return a, path_next[rows, a], cash


@_njit
def rollout_step_numba(payoff, cont, next_idx, mask, y_idx):
    n, _, n_act = payoff.shape
    actions = np.zeros(n, dtype=np.int64)
    new_y = np.zeros(n, dtype=np.int64)
    cash = np.zeros(n)
    for m in range(n):
        y = y_idx[m]
        best = -np.inf
        best_a = -1
        for a in range(n_act):
            if not mask[y, a]:
                continue
            q = payoff[m, y, a] + cont[m, next_idx[y, a]]
            if best_a < 0 or q > best:
                best = q
                best_a = a
        actions[m] = best_a
        new_y[m] = next_idx[y, best_a]
        cash[m] = payoff[m, y, best_a]
    return actions, new_y, cash


def rollout_step(payoff, cont, next_idx, mask, y_idx):
    if numba_enabled():
        return rollout_step_numba(
            np.ascontiguousarray(payoff, dtype=np.float64),
            np.ascontiguousarray(cont, dtype=np.float64),
            np.ascontiguousarray(next_idx, dtype=np.int64),
            np.ascontiguousarray(mask, dtype=np.bool_),
            np.ascontiguousarray(y_idx, dtype=np.int64),
        )
    return rollout_step_numpy(payoff, cont, next_idx, mask, y_idx)


# ---------------------------------------------------------------------------
# Euler scheme for the mean-reverting oil/gas jump diffusion
# ---------------------------------------------------------------------------
#
# coefs = (beta, alpha1, alpha2, sigma1, sigma2, rho_w, jump_prob,
#          mu1, mu2, eta1, eta2, rho_j, dt, floor)
# shocks[..., 0:2] drive the Brownian increments, shocks[..., 2:4] the jump
# levels; uniforms decide whether the shared Poisson signal fires.


def euler_oil_gas_numpy(x0, coefs, shocks, uniforms, stride, n_out):
    (beta, a1, a2, s1, s2, rho_w, p_jump, mu1, mu2, eta1, eta2, rho_j, dt, floor) = coefs
    n, n_steps, _ = shocks.shape
    sq_dt = np.sqrt(dt)
    c_w = np.sqrt(1.0 - rho_w * rho_w)
    c_j = np.sqrt(1.0 - rho_j * rho_j)
    out = np.empty((n, n_out, 2))
    x1 = np.full(n, x0[0], dtype=np.float64)
    x2 = np.full(n, x0[1], dtype=np.float64)
    out[:, 0, 0] = x1
    out[:, 0, 1] = x2
    counts = np.zeros(n, dtype=np.int64)
    k = 1
    for s in range(n_steps):
        z1 = shocks[:, s, 0]
        z2 = rho_w * shocks[:, s, 0] + c_w * shocks[:, s, 1]
        n1 = x1 + a1 * (beta - x1) * dt + s1 * x1 * sq_dt * z1
        n2 = x2 + a2 * (x1 - x2) * dt + s2 * x2 * sq_dt * z2
        jump = uniforms[:, s] < p_jump
        j1 = mu1 + eta1 * shocks[:, s, 2]
        j2 = mu2 + eta2 * (rho_j * shocks[:, s, 2] + c_j * shocks[:, s, 3])
        x1 = np.where(jump, j1, n1)
        x2 = np.where(jump, j2, n2)
        if floor:
            x1 = np.maximum(x1, 0.0)
            x2 = np.maximum(x2, 0.0)
        counts += jump
        if (s + 1) % stride == 0 and k < n_out:
            out[:, k, 0] = x1
            out[:, k, 1] = x2
            k += 1
    return out, counts


@_njit
def euler_oil_gas_numba(x0, coefs, shocks, uniforms, stride, n_out):
    beta = coefs[0]
    a1 = coefs[1]
    a2 = coefs[2]
    s1 = coefs[3]
    s2 = coefs[4]
    rho_w = coefs[5]
    p_jump = coefs[6]
    mu1 = coefs[7]
    mu2 = coefs[8]
    eta1 = coefs[9]
    eta2 = coefs[10]
    rho_j = coefs[11]
    dt = coefs[12]
    floor = coefs[13] != 0.0
    n, n_steps, _ = shocks.shape
    sq_dt = np.sqrt(dt)
    c_w = np.sqrt(1.0 - rho_w * rho_w)
    c_j = np.sqrt(1.0 - rho_j * rho_j)
    out = np.empty((n, n_out, 2))
    counts = np.zeros(n, dtype=np.int64)
    for m in range(n):
        x1 = x0[0]
        x2 = x0[1]
        out[m, 0, 0] = x1
        out[m, 0, 1] = x2
        k = 1
        for s in range(n_steps):
            z1 = shocks[m, s, 0]
            z2 = rho_w * shocks[m, s, 0] + c_w * shocks[m, s, 1]
            n1 = x1 + a1 * (beta - x1) * dt + s1 * x1 * sq_dt * z1
            n2 = x2 + a2 * (x1 - x2) * dt + s2 * x2 * sq_dt * z2
            if uniforms[m, s] < p_jump:
                x1 = mu1 + eta1 * shocks[m, s, 2]
                x2 = mu2 + eta2 * (rho_j * shocks[m, s, 2] + c_j * shocks[m, s, 3])
                counts[m] += 1
            else:
                x1 = n1
                x2 = n2
            if floor:
                x1 = max(x1, 0.0)
                x2 = max(x2, 0.0)
            if (s + 1) % stride == 0 and k < n_out:
                out[m, k, 0] = x1
                out[m, k, 1] = x2
                k += 1
    return out, counts


def euler_oil_gas(x0, coefs, shocks, uniforms, stride, n_out):
    if numba_enabled():
        return euler_oil_gas_numba(
            np.asarray(x0, dtype=np.float64),
            np.asarray(coefs, dtype=np.float64),
            np.ascontiguousarray(shocks),
            np.ascontiguousarray(uniforms),
            int(stride),
            int(n_out),
        )
    return euler_oil_gas_numpy(x0, tuple(coefs), shocks, uniforms, int(stride), int(n_out))
