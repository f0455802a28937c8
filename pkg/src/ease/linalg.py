"""Deterministic numerical primitives shared by the estimators.

Reductions that feed reported numbers go through :func:`exact_sum`, an
ordered Neumaier-compensated sum, so results are bit-stable for a fixed input
and agree between the compiled and numpy backends.
Linear systems are solved by orthogonal decompositions with an explicit
rank tolerance rather than by forming and inverting normal equations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _backend

from .errors import (
    AsymmetricMatrixError,
    IllConditionedError,
    NumericalError,
    RankDeficientError,
)

RANK_TOL = 1e-10
MAX_CONDITION = 1e12


def augment(x: np.ndarray) -> np.ndarray:
    """Prepend an intercept column: rows become (1, x')."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.column_stack([np.ones(x.shape[0]), x])


def exact_sum(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Compensated sum along ``axis``, adding entries in index order."""
    a = np.asarray(a, dtype=float)
    a = np.moveaxis(a, axis, 0)
    shape = a.shape[1:]
    flat = np.ascontiguousarray(a.reshape(a.shape[0], -1))
    return np.asarray(_backend.colsum(flat)).reshape(shape)


def exact_mean(a: np.ndarray, axis: int = 0) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return exact_sum(a, axis) / a.shape[axis]


@dataclass(frozen=True)
class GramMatrix:
    matrix: np.ndarray
    source: str
    count: int


def assemble_gram(x: np.ndarray, source: str = "labeled", *, augmented: bool = False) -> GramMatrix:
    """Average of outer products of the augmented rows.

    ``x`` holds raw covariates unless ``augmented`` is true.
    """
    design = np.asarray(x, dtype=float) if augmented else augment(x)
    if design.shape[0] < 1:
        raise ValueError("need at least one row")
    outer = design[:, :, None] * design[:, None, :]
    g = exact_mean(outer, axis=0)
    g = 0.5 * (g + g.T)
    return GramMatrix(g, source, design.shape[0])


def check_symmetric(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise AsymmetricMatrixError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > tol * scale:
        raise AsymmetricMatrixError("matrix is not symmetric")
    return a


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first non-negligible entry of each is positive."""
    v = np.array(vectors, dtype=float, copy=True)
    for j in range(v.shape[1]):
        col = v[:, j]
        big = np.abs(col) > 1e-10 * max(np.max(np.abs(col)), 1e-300)
        if big.any() and col[np.argmax(big)] < 0:
            v[:, j] = -col
    return v


def sym_eigen(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and sign-fixed orthonormal eigenvectors."""
    a = check_symmetric(a)
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    order = np.argsort(vals, kind="stable")[::-1]
    return vals[order], fix_signs(vecs[:, order])


def lstsq(design: np.ndarray, target: np.ndarray, names=None) -> np.ndarray:
    """Least-squares coefficients via column-pivoted QR.

    Raises
    ------
    RankDeficientError
        If the design has numerical rank below its column count; the
        offending (pivoted-out) columns are named in the message.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    n, k = design.shape
    if n < k:
        raise RankDeficientError(f"{n} rows cannot identify {k} coefficients")
    q, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOL * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < k:
        bad = sorted(int(j) for j in piv[rank:])
        labels = [names[j] if names is not None else f"column {j}" for j in bad]
        raise RankDeficientError(
            "design is rank deficient; collinear: " + ", ".join(map(str, labels)), bad
        )
    coef_piv = scipy.linalg.solve_triangular(r, q.T @ target)
    coef = np.empty_like(coef_piv)
    coef[piv] = coef_piv
    return coef


def check_normal_equations(design, target, coef, tol: float = 1e-8) -> float:
    """Relative residual of X'(t - X coef) = 0; raise if it exceeds ``tol``."""
    fitted = design @ coef
    resid = design.T @ (target - fitted)
    scale = np.linalg.norm(design) * (np.linalg.norm(target) + np.linalg.norm(fitted))
    rel = float(np.linalg.norm(resid) / scale) if scale > 0 else 0.0
    if rel > tol:
        raise NumericalError(f"normal equations violated (relative residual {rel:.3e})")
    return rel


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a symmetric positive-definite system by Cholesky factorisation."""
    a = check_symmetric(a)
    b = np.asarray(b, dtype=float)
    vals = np.linalg.eigvalsh(a)
    if vals[0] <= 0 or vals[-1] / vals[0] > MAX_CONDITION:
        cond = np.inf if vals[0] <= 0 else vals[-1] / vals[0]
        raise IllConditionedError(f"condition estimate {cond:.3e} exceeds {MAX_CONDITION:.0e}")
    x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), b)
    resid = np.linalg.norm(a @ x - b)
    if resid > 1e-10 * max(np.linalg.norm(b), 1e-300) * max(1.0, vals[-1] / vals[0]) ** 0.5:
        raise IllConditionedError(f"residual {resid:.3e} after solve")
    return x
