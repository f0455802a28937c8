"""Point estimators of the least-squares target: OLS, full non-parametric
imputation, SNP imputation (smooth, refit, impute) and the EASE combination.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import FoldAssignment, SemiSupervisedDataset, partition_folds
from .dimred import DimredPolicy, identity_basis
from .errors import ConfigError, DataError
from .kernels import KernelSpec
from .linalg import assemble_gram, augment, check_normal_equations, lstsq
from .smoothing import (
    FunctionSmoother,
    LocalConstantFit,
    SmootherPolicy,
    child_seed,
    fit_fold_smoothers,
)


@dataclass
class ThetaEstimate:
    """Coefficient vector (intercept first) with the Gram matrices it used."""

    theta: np.ndarray
    method: str
    gram_labeled: np.ndarray | None = field(default=None, repr=False)
    gram_unlabeled: np.ndarray | None = field(default=None, repr=False)
    provenance: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.theta) - 1

    def predict(self, x) -> np.ndarray:
        return augment(x) @ self.theta

    def to_dict(self) -> dict:
        return {"method": self.method, "theta": [float(v) for v in self.theta], "provenance": self.provenance}


@dataclass
class RefitCoefficients:
    eta: np.ndarray
    per_fold_eta: list | None = None


def _names(dataset: SemiSupervisedDataset):
    return ["(Intercept)", *dataset.columns]


def fit_ols(dataset: SemiSupervisedDataset) -> ThetaEstimate:
    """Ordinary least squares on the labeled rows."""
    dataset.check_estimable()
    design = augment(dataset.labeled_x)
    theta = lstsq(design, dataset.labeled_y, _names(dataset))
    check_normal_equations(design, dataset.labeled_y, theta)
    gl = assemble_gram(design, "labeled", augmented=True).matrix
    return ThetaEstimate(theta, "ols", gl, None, {"n": dataset.n})


def _fit_on_unlabeled(dataset, imputed, method, provenance):
    if dataset.big_n < dataset.p + 1:
        raise DataError(f"{dataset.big_n} unlabeled rows cannot identify {dataset.p + 1} coefficients")
    design = augment(dataset.unlabeled_x)
    theta = lstsq(design, imputed, _names(dataset))
    check_normal_equations(design, imputed, theta)
    gu = assemble_gram(design, "unlabeled", augmented=True).matrix
    gl = assemble_gram(dataset.labeled_x, "labeled").matrix
    return ThetaEstimate(theta, method, gl, gu, provenance)


def fit_np(dataset: SemiSupervisedDataset, spec: KernelSpec | None = None, h: float | None = None,
           bandwidth_scale: float = 1.0, m_hat=None) -> ThetaEstimate:
    """Regress the fully non-parametric imputations on the unlabeled covariates.

    The imputation is a p-dimensional local-constant fit on all labeled rows
    with the under-smoothed default bandwidth ``bandwidth_scale * n^(-1/(q+p))``
    on the whitened scale. ``m_hat`` replaces the smoother by any callable.
    """
    dataset.check_estimable()
    p = dataset.p
    if spec is None:
        q = min(6, 2 * (p // 2 + 1))
        spec = KernelSpec("gaussian" if q == 2 else "gaussian-higher-order", q, p)
    if m_hat is None:
        if spec.order <= p:
            warnings.warn(
                f"kernel order q={spec.order} does not exceed p={p}; the non-parametric "
                "imputation estimator is not guaranteed to be root-n consistent",
                RuntimeWarning,
                stacklevel=2,
            )
        if h is None:
            h = bandwidth_scale * dataset.n ** (-1.0 / (spec.order + p))
        fit = LocalConstantFit(dataset.labeled_x, dataset.labeled_y, identity_basis(p), spec, h)
        m_hat = fit.predict
        prov = {"kernel": spec.family, "order": spec.order, "h": float(h)}
    else:
        prov = {"kernel": "injected"}
    imputed = np.asarray(m_hat(dataset.unlabeled_x), dtype=float).reshape(-1)
    return _fit_on_unlabeled(dataset, imputed, "np", prov)


def cross_fitted_offsets(x, fits, folds: FoldAssignment) -> np.ndarray:
    """m_k(X_i) for every labeled row i, using the fit of the fold containing i."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape[0])
    for k in range(1, folds.k_folds + 1):
        idx = folds.indices(k)
        if idx.size:
            out[idx] = fits[k - 1].predict(x[idx])
    return out


def refit_eta(dataset: SemiSupervisedDataset, fits, folds: FoldAssignment,
              offsets: np.ndarray | None = None) -> RefitCoefficients:
    """Least-squares fit of Y - m_k(X) on the augmented covariates (cross-fitted offsets)."""
    dataset.check_estimable()
    if offsets is None:
        offsets = cross_fitted_offsets(dataset.labeled_x, fits, folds)
    design = augment(dataset.labeled_x)
    target = dataset.labeled_y - offsets
    eta = lstsq(design, target, _names(dataset))
    check_normal_equations(design, target, eta)
    return RefitCoefficients(eta)


@dataclass
class ImputationModel:
    """mu(x) = mean_k m_k(x) + (1, x')eta."""

    fits: list
    eta: RefitCoefficients
    folds: FoldAssignment
    offsets: np.ndarray | None = field(default=None, repr=False)
    unlabeled_mu: np.ndarray | None = field(default=None, repr=False)

    def smooth(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        total = np.zeros(x.shape[0])
        for fit in self.fits:
            total += fit.predict(x)
        return total / len(self.fits)

    def __call__(self, x) -> np.ndarray:
        return impute_mu(self, x)


def impute_mu(model: ImputationModel, x) -> np.ndarray:
    """SNP imputation at the given covariate rows."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return model.smooth(x) + augment(x) @ model.eta.eta


def as_smoothers(smoothers, k_folds: int) -> list:
    """Normalise an injected smoother (callable, fit, or list of either) to K fits."""
    if not isinstance(smoothers, (list, tuple)):
        smoothers = [smoothers] * k_folds
    if len(smoothers) != k_folds:
        raise ConfigError(f"{len(smoothers)} smoothers supplied for {k_folds} folds")
    return [s if hasattr(s, "predict") else FunctionSmoother(s) for s in smoothers]


def fit_snp(dataset: SemiSupervisedDataset, smoother: SmootherPolicy = SmootherPolicy(),
            dimred: DimredPolicy = DimredPolicy(), k_folds: int = 5, seed=0,
            smoothers=None, folds: FoldAssignment | None = None):
    """SNP-imputation estimator.

    Fits fold smoothers on L minus each fold, refits the linear offset model
    on cross-fitted residuals, imputes the unlabeled rows, and regresses the
    imputations on the unlabeled covariates only.

    Returns
    -------
    (ThetaEstimate, ImputationModel)
    """
    dataset.check_estimable()
    if folds is None:
        folds = partition_folds(dataset.n, k_folds, child_seed(seed, 0))
    k_folds = folds.k_folds
    if k_folds == 1:
        warnings.warn(
            "K=1 uses in-sample residuals: the kernel-smoothing version needs a kernel of "
            "order q > r/2 and can be noticeably biased in finite samples; prefer K >= 2",
            RuntimeWarning,
            stacklevel=2,
        )
    if smoothers is None:
        fits = fit_fold_smoothers(dataset, folds, smoother, dimred, seed)
        prov = {"smoother": smoother.method, "dimred": dimred.method if smoother.method == "ks" else "identity"}
    else:
        fits = as_smoothers(smoothers, k_folds)
        prov = {"smoother": "injected"}
    offsets = cross_fitted_offsets(dataset.labeled_x, fits, folds)
    eta = refit_eta(dataset, fits, folds, offsets)
    model = ImputationModel(fits, eta, folds, offsets)
    imputed = impute_mu(model, dataset.unlabeled_x)
    model.unlabeled_mu = imputed
    prov.update({"k_folds": k_folds, "seed": None if seed is None else int(seed),
                 "hyperparams": [f.hyperparams for f in fits]})
    est = _fit_on_unlabeled(dataset, imputed, "snp", prov)
    return est, model


def combine_ease(ols: ThetaEstimate, snp: ThetaEstimate, delta) -> ThetaEstimate:
    """theta_ols + diag(delta) (theta_snp - theta_ols), coordinate-wise."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if not (len(ols.theta) == len(snp.theta) == len(delta)):
        raise ConfigError(
            f"dimension mismatch: ols {len(ols.theta)}, snp {len(snp.theta)}, delta {len(delta)}"
        )
    theta = ols.theta + delta * (snp.theta - ols.theta)
    prov = dict(snp.provenance)
    prov["delta"] = [float(d) for d in delta]
    return ThetaEstimate(theta, "ease", ols.gram_labeled, snp.gram_unlabeled, prov)
