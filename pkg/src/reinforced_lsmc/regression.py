"""Linear least squares with a minimum-norm fallback, and value truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Coefficients:
    """Fitted coefficients for one regression target.

    ``values[:K]`` weight the plain basis, ``values[K:]`` the reinforcement
    columns listed in ``reinforcement`` as ``(level, epoch, control)``.
    """

    values: np.ndarray
    basis: str = ""
    reinforcement: tuple[tuple[int, int, float], ...] = ()
    rss: float = float("nan")
    rank: int = 0


@dataclass(frozen=True)
class LstsqResult:
    coef: np.ndarray  # (p,) or (p, t)
    rss: np.ndarray  # (t,) residual sums of squares
    rank: int


def lstsq(design: np.ndarray, targets: np.ndarray, ridge: float = 0.0) -> LstsqResult:
    """Least squares for one or several right-hand sides.

    Columns are equilibrated to unit norm before an SVD-based solve with a
    relative singular-value cutoff of ``1e-10``. When the equilibrated design
    is rank deficient, the solve is repeated on the raw design so that the
    returned coefficients are the minimum-norm minimiser in the original
    parametrisation.
    """
    A = np.asarray(design, dtype=float)
    b = np.asarray(targets, dtype=float)
    if A.ndim != 2:
        raise ValueError("design must be a 2-D array")
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"design has {A.shape[0]} rows, targets have {b.shape[0]}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError("design must have at least one row and one column")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite values in least-squares inputs")
    single = b.ndim == 1
    B = b[:, None] if single else b
    p = A.shape[1]
    if ridge > 0.0:
        A_fit = np.vstack([A, np.sqrt(ridge) * np.eye(p)])
        B_fit = np.vstack([B, np.zeros((p, B.shape[1]))])
    else:
        A_fit, B_fit = A, B

    norms = np.linalg.norm(A_fit, axis=0)
    scale = np.where(norms > 0.0, norms, 1.0)
    coef_s, _, rank, _ = np.linalg.lstsq(A_fit / scale, B_fit, rcond=RANK_RTOL)
    if rank == p:
        coef = coef_s / scale[:, None]
    else:
        coef, _, rank, _ = np.linalg.lstsq(A_fit, B_fit, rcond=RANK_RTOL)
    resid = B - A @ coef
    rss = np.einsum("ij,ij->j", resid, resid)
    return LstsqResult(coef[:, 0] if single else coef, rss, int(rank))


def fit_least_squares(design: np.ndarray, targets: np.ndarray, ridge: float = 0.0) -> Coefficients:
    """Single-target convenience wrapper returning :class:`Coefficients`."""
    res = lstsq(design, np.asarray(targets, dtype=float).reshape(-1), ridge=ridge)
    return Coefficients(values=res.coef, rss=float(res.rss[0]), rank=res.rank)


def truncate(value, W: float):
    """Clip to ``[-W, W]``; scalars in, scalars out."""
    if W <= 0:
        raise ValueError("truncation level must be positive")
    out = np.clip(value, -W, W)
    return float(out) if np.ndim(out) == 0 else out
