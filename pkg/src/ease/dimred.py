"""Projection matrices for the smoothing step: identity, PCA, SIR and SS-SIR.

SIR works on covariates standardised by the inverse square root of their
covariance; the returned basis maps raw covariates to the r sliced-inverse
directions, so ``P.T @ cov @ P = I_r`` for the covariance used to build it.
SS-SIR enriches every slice with unlabeled rows whose outcome is imputed
from the nearest labeled neighbour.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigError, DegenerateSlicingError, NumericalError
from .linalg import check_symmetric, exact_mean, exact_sum, fix_signs, sym_eigen

ORIGINS = ("identity", "pca", "sir", "ss-sir", "user")


@dataclass(frozen=True)
class ProjectionBasis:
    matrix: np.ndarray
    origin: str = "user"
    slices_h: int | None = None
    per_fold: int | None = None
    eigenvalues: np.ndarray | None = field(default=None, repr=False)
    warnings: tuple = ()

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim == 1:
            m = m.reshape(-1, 1)
        if self.origin not in ORIGINS:
            raise ConfigError(f"unknown projection origin {self.origin!r}")
        if not np.all(np.isfinite(m)):
            raise NumericalError("projection matrix has non-finite entries")
        sv = np.linalg.svd(m, compute_uv=False)
        if m.shape[1] > m.shape[0] or sv.size == 0 or sv[-1] <= 1e-10 * sv[0]:
            raise NumericalError(f"projection of shape {m.shape} is not of full column rank")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def r(self) -> int:
        return self.matrix.shape[1]

    def project(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "origin": self.origin,
            "slices_h": self.slices_h,
            "per_fold": self.per_fold,
            "eigenvalues": None if self.eigenvalues is None else list(map(float, self.eigenvalues)),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ProjectionBasis":
        d = json.loads(text)
        ev = d.get("eigenvalues")
        return cls(
            np.array(d["matrix"]),
            d["origin"],
            d.get("slices_h"),
            d.get("per_fold"),
            None if ev is None else np.array(ev),
            tuple(d.get("warnings", ())),
        )


def identity_basis(p: int) -> ProjectionBasis:
    return ProjectionBasis(np.eye(p), "identity")


@dataclass(frozen=True)
class SliceScheme:
    mode: str = "equal-width"
    h_slices: int = 100

    def __post_init__(self):
        if self.mode not in ("equal-width", "equal-count"):
            raise ConfigError(f"unknown slicing mode {self.mode!r}")

    def assign(self, y) -> np.ndarray:
        """Slice label in 0..H-1 for every outcome."""
        y = np.asarray(y, dtype=float)
        H = self.h_slices
        if H < 2:
            raise DegenerateSlicingError(f"need at least 2 slices, got H={H}")
        if self.mode == "equal-width":
            lo, hi = float(np.min(y)), float(np.max(y))
            if not hi > lo:
                return np.zeros(len(y), dtype=np.int64)
            width = (hi - lo) / H
            return np.clip(np.floor((y - lo) / width), 0, H - 1).astype(np.int64)
        order = np.argsort(y, kind="stable")
        labels = np.empty(len(y), dtype=np.int64)
        for h, chunk in enumerate(np.array_split(order, H)):
            labels[chunk] = h
        return labels


def matrix_inv_sqrt(sigma, eigen_floor: float | None = None) -> np.ndarray:
    """Symmetric inverse square root with eigenvalues clamped below at ``eigen_floor``.

    The default floor is 1e-10 times the largest eigenvalue.
    """
    sigma = check_symmetric(sigma)
    vals, vecs = sym_eigen(sigma)
    if eigen_floor is None:
        eigen_floor = 1e-10 * max(vals[0], 0.0)
    if not eigen_floor > 0:
        raise NumericalError("covariance has no positive eigenvalue")
    clamped = np.maximum(vals, eigen_floor)
    return (vecs * clamped ** -0.5) @ vecs.T


def _moments(x):
    mu = exact_mean(x, axis=0)
    xc = x - mu
    cov = exact_mean(xc[:, :, None] * xc[:, None, :], axis=0)
    return mu, 0.5 * (cov + cov.T)


def _slice_directions(z_lab, labels, z_extra, extra_labels, r, H, origin, root):
    """Leading eigenvectors of sum_h p_h m_h m_h' mapped back through ``root``.

    Slice proportions come from the labeled rows only; slice means pool the
    labeled rows with any extra (imputed) rows.
    """
    n, p = z_lab.shape
    counts = np.bincount(labels, minlength=H)
    nonempty = np.flatnonzero(counts)
    if nonempty.size < r + 1:
        raise DegenerateSlicingError(
            f"only {nonempty.size} non-empty slices; need at least r+1 = {r + 1}"
        )
    M = np.zeros((p, p))
    terms = []
    for h in nonempty:
        members = z_lab[labels == h]
        if z_extra is not None and z_extra.shape[0]:
            members = np.vstack([members, z_extra[extra_labels == h]])
        mean_h = exact_mean(members, axis=0)
        terms.append((counts[h] / n) * np.outer(mean_h, mean_h))
    M = exact_sum(np.array(terms), axis=0)
    vals, vecs = sym_eigen(0.5 * (M + M.T))
    notes = ()
    if vals[r - 1] <= 1e-10 * max(vals[0], 1e-300):
        notes = (f"slice-mean matrix has rank below r={r}; trailing directions are noise",)
        warnings.warn(notes[0], RuntimeWarning, stacklevel=3)
    basis = fix_signs(root @ vecs[:, :r])
    return ProjectionBasis(basis, origin, H, None, vals[:r].copy(), notes)


def sir_directions(x, y, r: int, scheme: SliceScheme = SliceScheme()) -> ProjectionBasis:
    """Sliced inverse regression on one labeled sample."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    if not 1 <= r <= p:
        raise ConfigError(f"r must lie in 1..{p}, got {r}")
    if n < r + 2:
        raise DegenerateSlicingError(f"{n} rows are too few for r={r}")
    labels = scheme.assign(y)
    mu, cov = _moments(x)
    root = matrix_inv_sqrt(cov)
    z = (x - mu) @ root
    return _slice_directions(z, labels, None, None, r, scheme.h_slices, "sir", root)


def ss_sir_directions(x, y, unlabeled_x, r: int, scheme: SliceScheme = SliceScheme()) -> ProjectionBasis:
    """Semi-supervised SIR.

    Moments are estimated from labeled and unlabeled rows together. Each
    unlabeled row takes the outcome of its nearest labeled row in the
    standardised space (ties go to the lower labeled index) and joins that
    outcome's slice when the slice means are formed.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(unlabeled_x, dtype=float).reshape(-1, x.shape[1])
    n, p = x.shape
    if not 1 <= r <= p:
        raise ConfigError(f"r must lie in 1..{p}, got {r}")
    if n < r + 2:
        raise DegenerateSlicingError(f"{n} rows are too few for r={r}")
    labels = scheme.assign(y)
    if u.shape[0] == 0:
        mu, cov = _moments(x)
        root = matrix_inv_sqrt(cov)
        z = (x - mu) @ root
        basis = _slice_directions(z, labels, None, None, r, scheme.h_slices, "ss-sir", root)
        return basis
    mu, cov = _moments(np.vstack([x, u]))
    root = matrix_inv_sqrt(cov)
    z = np.ascontiguousarray((x - mu) @ root)
    zu = np.ascontiguousarray((u - mu) @ root)
    nearest = np.asarray(_backend.nearest_index(z, zu))
    extra_labels = labels[nearest]
    return _slice_directions(z, labels, zu, extra_labels, r, scheme.h_slices, "ss-sir", root)


def impute_nearest(x, y, unlabeled_x):
    """Outcome of the nearest labeled row for each unlabeled row (raw space)."""
    x = np.ascontiguousarray(x, dtype=float)
    u = np.ascontiguousarray(unlabeled_x, dtype=float)
    return np.asarray(y)[np.asarray(_backend.nearest_index(x, u))]


def pca_directions(x, r: int) -> ProjectionBasis:
    """Top-r principal directions of the covariance of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < r + 1:
        raise NumericalError(f"{x.shape[0]} rows cannot support r={r} principal directions")
    _, cov = _moments(x)
    vals, vecs = sym_eigen(cov)
    if vals[r - 1] <= 1e-10 * max(vals[0], 1e-300):
        raise NumericalError(f"covariance rank is below r={r}")
    return ProjectionBasis(vecs[:, :r], "pca", None, None, vals[:r].copy())


@dataclass(frozen=True)
class DimredPolicy:
    """How each fold builds its projection.

    ``method`` is one of identity, pca, sir, ss-sir, user; ``matrix`` is
    required for user.
    """

    method: str = "sir"
    r: int = 2
    scheme: SliceScheme = SliceScheme()
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.method not in ORIGINS:
            raise ConfigError(f"unknown dimension reduction {self.method!r}")
        if self.method == "user" and self.matrix is None:
            raise ConfigError("a user projection needs a matrix")

    def build(self, x, y, unlabeled_x, fold=None) -> ProjectionBasis:
        p = np.asarray(x).shape[1]
        if self.method == "identity":
            return identity_basis(p)
        if self.method == "user":
            return ProjectionBasis(self.matrix, "user")
        if self.method == "pca":
            return pca_directions(np.vstack([x, unlabeled_x]), self.r)
        if self.method == "sir":
            b = sir_directions(x, y, self.r, self.scheme)
        else:
            b = ss_sir_directions(x, y, unlabeled_x, self.r, self.scheme)
        return ProjectionBasis(b.matrix, b.origin, b.slices_h, fold, b.eigenvalues, b.warnings)
