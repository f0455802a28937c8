"""Fold-wise conditional-mean estimators used for imputation.

Two smoothers are provided: local-constant kernel smoothing over projected
covariates, and Gaussian-RBF kernel ridge regression with an unpenalised
intercept. Both expose ``predict(x)`` on raw covariate rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FoldAssignment, SemiSupervisedDataset
from .dimred import DimredPolicy, ProjectionBasis, identity_basis, matrix_inv_sqrt
from .errors import ConfigError, SingularSystemError
from .kernels import BandwidthChoice, KernelSpec, nadaraya_watson, select_bandwidth
from .linalg import exact_mean

TRIM = 1e-8


def child_seed(seed, *keys) -> int:
    """Deterministic 32-bit seed for a named sub-task."""
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *keys]).generate_state(1)[0])


class LocalConstantFit:
    """Nadaraya-Watson smoother over whitened projected coordinates.

    The projected training coordinates are centred and whitened by the
    symmetric inverse square root of their covariance, so one scalar
    bandwidth applies to every direction and predictions are invariant to
    rotations of the projection.
    """

    method = "local-constant-ks"

    def __init__(self, x, y, projection: ProjectionBasis, spec: KernelSpec, h: float,
                 bandwidth: BandwidthChoice | None = None):
        x = np.asarray(x, dtype=float)
        self.train_y = np.ascontiguousarray(y, dtype=float)
        if self.train_y.size == 0:
            raise ConfigError("cannot fit a smoother on an empty fold")
        if not h > 0:
            raise ConfigError(f"bandwidth must be positive, got {h}")
        self.projection = projection
        self.spec = spec.with_dim(projection.r)
        self.h = float(h)
        self.bandwidth = bandwidth
        zt, self.center, self.whitener = _whiten(projection.project(x))
        self.train_z = np.ascontiguousarray(zt)
        n, r = self.train_z.shape
        self.trim_floor = TRIM / (n * self.h ** r)

    def transform(self, x) -> np.ndarray:
        z = (self.projection.project(np.atleast_2d(x)) - self.center) @ self.whitener
        return np.ascontiguousarray(z)

    def predict(self, x) -> np.ndarray:
        pred, _ = nadaraya_watson(self.train_z, self.train_y, self.transform(x), self.h, self.spec, TRIM)
        return pred

    def predict_with_mask(self, x):
        return nadaraya_watson(self.train_z, self.train_y, self.transform(x), self.h, self.spec, TRIM)

    @property
    def hyperparams(self) -> dict:
        return {"h": self.h}


def _whiten(z):
    center = exact_mean(z, axis=0)
    zc = z - center
    if z.shape[0] < 2:
        return zc, center, np.eye(z.shape[1])
    cov = exact_mean(zc[:, :, None] * zc[:, None, :], axis=0)
    if not np.max(np.diag(cov)) > 0:
        return zc, center, np.eye(z.shape[1])
    w = matrix_inv_sqrt(0.5 * (cov + cov.T))
    return zc @ w, center, w


def fit_local_constant(x, y, projection: ProjectionBasis | None = None, spec: KernelSpec = KernelSpec(),
                       h: float | None = None, grid=None, cv_folds: int = 5, seed=0) -> LocalConstantFit:
    """Fit the local-constant smoother; h is chosen by CV over ``grid`` when not given."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if projection is None:
        projection = identity_basis(x.shape[1])
    choice = None
    if h is None:
        zt, _, _ = _whiten(projection.project(x))
        choice = select_bandwidth(zt, y, spec.with_dim(projection.r), grid, cv_folds, seed)
        h = choice.h
    return LocalConstantFit(x, y, projection, spec, h, choice)


def rbf_gram(a, b, gamma: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


def median_sq_distance(x) -> float:
    x = np.asarray(x, dtype=float)
    d2 = (x * x).sum(1)[:, None] + (x * x).sum(1)[None, :] - 2.0 * x @ x.T
    iu = np.triu_indices(x.shape[0], 1)
    med = float(np.median(np.maximum(d2[iu], 0.0))) if iu[0].size else 1.0
    return med if med > 0 else 1.0


class KernelRidgeFit:
    """predict(x) = intercept + sum_i coef_i exp(-gamma ||x - x_i||^2)."""

    method = "kernel-ridge"

    def __init__(self, x, coef, intercept, gamma, penalty, cv_error=None):
        self.train_x = np.asarray(x, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)
        self.gamma = float(gamma)
        self.penalty = float(penalty)
        self.cv_error = cv_error
        self.projection = identity_basis(self.train_x.shape[1])

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], 2048):
            out[start:start + 2048] = self.intercept + rbf_gram(x[start:start + 2048], self.train_x, self.gamma) @ self.coef
        return out

    @property
    def hyperparams(self) -> dict:
        return {"penalty": self.penalty, "radial_scale": self.gamma}


def _ridge_solve(vals, vecs, y, lam):
    """Coefficients of the intercept-augmented ridge system from an eigendecomposition."""
    denom = vals + lam
    if np.min(denom) <= 1e-12 * max(np.max(np.abs(vals)), 1.0):
        raise SingularSystemError("regularised Gram system is singular (duplicate rows with zero penalty?)")
    d = 1.0 / denom
    ones_t = vecs.T.sum(axis=1)
    y_t = vecs.T @ y
    a1 = vecs @ (d * ones_t)
    ay = vecs @ (d * y_t)
    s = a1.sum()
    intercept = ay.sum() / s
    coef = ay - intercept * a1
    return coef, intercept, d, a1, s, ones_t


def _loo_error(vals, vecs, y, lam):
    coef, intercept, d, a1, s, ones_t = _ridge_solve(vals, vecs, y, lam)
    fitted = intercept + vecs @ (vals * (vecs.T @ coef))
    shrink = vals * d
    s_diag = (vecs * vecs) @ shrink
    s_one = vecs @ (shrink * ones_t)
    h_diag = s_diag + (1.0 - s_one) * a1 / s
    lever = 1.0 - h_diag
    if np.any(lever <= 1e-12):
        return np.inf
    return float(np.mean(((y - fitted) / lever) ** 2))


def ridge_grids(x, n: int):
    lams = n * np.geomspace(1e-4, 1e2, 8)
    gammas = np.array([0.25, 0.5, 1.0, 2.0, 4.0]) / median_sq_distance(x)
    return lams, gammas


def fit_kernel_ridge(x, y, penalty: float | None = None, radial_scale: float | None = None,
                     penalties=None, radial_scales=None) -> KernelRidgeFit:
    """Kernel ridge regression with a Gaussian RBF kernel and free intercept.

    Minimises ||y - a - K c||^2 + penalty * c'Kc. Unsupplied tuning
    parameters are chosen by exact leave-one-out least-squares CV over
    the default grids (ties go to the larger penalty).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ConfigError("cannot fit a smoother on an empty fold")
    if penalty is not None and penalty < 0:
        raise ConfigError("ridge penalty must be non-negative")
    if radial_scale is not None and not radial_scale > 0:
        raise ConfigError("radial scale must be positive")
    default_l, default_g = ridge_grids(x, len(y))
    lams = [penalty] if penalty is not None else (penalties if penalties is not None else default_l)
    gammas = [radial_scale] if radial_scale is not None else (radial_scales if radial_scales is not None else default_g)
    if len(lams) == 1 and len(gammas) == 1:
        vals, vecs = np.linalg.eigh(rbf_gram(x, x, gammas[0]))
        coef, intercept, *_ = _ridge_solve(vals, vecs, y, lams[0])
        return KernelRidgeFit(x, coef, intercept, gammas[0], lams[0])
    scores = []
    decomps = []
    for gi, g in enumerate(gammas):
        decomps.append(np.linalg.eigh(rbf_gram(x, x, g)))
        for lam in lams:
            try:
                err = _loo_error(*decomps[gi], y, lam)
            except SingularSystemError:
                continue
            scores.append((err, lam, gi))
    finite = [s for s in scores if np.isfinite(s[0])]
    if not finite:
        raise SingularSystemError("no kernel ridge tuning value produced a usable fit")
    best_err = min(s[0] for s in finite)
    ties = [s for s in finite if s[0] <= best_err * (1 + 1e-12)]
    err, lam, gi = max(ties, key=lambda s: (s[1], -s[2]))
    g = gammas[gi]
    coef, intercept, *_ = _ridge_solve(*decomps[gi], y, lam)
    return KernelRidgeFit(x, coef, intercept, g, lam, err)


class FunctionSmoother:
    """Wrap a callable x -> values as a smoother (test and injection seam)."""

    method = "function"

    def __init__(self, fn, projection: ProjectionBasis | None = None):
        self.fn = fn
        self.projection = projection

    def predict(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float).reshape(-1)

    @property
    def hyperparams(self) -> dict:
        return {}


@dataclass(frozen=True)
class SmootherPolicy:
    """Smoother choice and tuning for the fold fits.

    method: ``ks`` (local-constant kernel smoothing) or ``km`` (kernel ridge).
    Unset tuning parameters are chosen by least-squares CV.
    """

    method: str = "ks"
    kernel: KernelSpec = KernelSpec()
    bandwidth: float | None = None
    grid: tuple | None = None
    cv_folds: int = 5
    penalty: float | None = None
    radial_scale: float | None = None

    def __post_init__(self):
        if self.method not in ("ks", "km"):
            raise ConfigError(f"unknown smoother {self.method!r}")

    def fit(self, x, y, projection: ProjectionBasis, seed=0):
        if self.method == "ks":
            grid = None if self.grid is None else np.asarray(self.grid, dtype=float)
            return fit_local_constant(x, y, projection, self.kernel, self.bandwidth, grid, self.cv_folds, seed)
        return fit_kernel_ridge(x, y, self.penalty, self.radial_scale)


def fit_fold_smoothers(dataset: SemiSupervisedDataset, folds: FoldAssignment,
                       smoother: SmootherPolicy = SmootherPolicy(),
                       dimred: DimredPolicy = DimredPolicy(), seed=0) -> list:
    """Fit one smoother per fold, each trained on the rows outside that fold.

    For K=1 the single fit uses every labeled row. Kernel ridge always uses
    the identity projection.
    """
    fits = []
    for k in range(1, folds.k_folds + 1):
        train = folds.training(k)
        if train.size == 0:
            raise ConfigError(f"fold {k} leaves no training rows")
        x, y = dataset.labeled_x[train], dataset.labeled_y[train]
        if smoother.method == "km":
            proj = identity_basis(dataset.p)
        else:
            proj = dimred.build(x, y, dataset.unlabeled_x, fold=k)
        fits.append(smoother.fit(x, y, proj, seed=child_seed(seed, 1, k)))
    return fits
