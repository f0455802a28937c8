"""Influence-function based inference for OLS, SNP and EASE.

Residuals for the SNP influence function use doubly cross-validated refit
coefficients: the coefficients applied to rows of fold k are estimated
without fold k's score block.

Standard errors optionally add the finite-N variance of the unlabeled
average that defines the SNP estimator, delta^2 N^-1 diag(Sigma_U). It
vanishes as n/N -> 0, where the asymptotic formula alone is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import FoldAssignment, SemiSupervisedDataset
from .errors import NumericalError, UnsupportedInferenceError
from .estimators import ImputationModel, ThetaEstimate, cross_fitted_offsets
from .linalg import assemble_gram, augment, check_normal_equations, lstsq, solve_spd


def double_cv_eta(dataset: SemiSupervisedDataset, fits, folds: FoldAssignment,
                  offsets: np.ndarray | None = None) -> list[np.ndarray]:
    """eta^k solving sum over k' != k of the fold-k' offset score equations."""
    if folds.k_folds < 2:
        raise UnsupportedInferenceError("double cross-validation needs at least two folds")
    if offsets is None:
        offsets = cross_fitted_offsets(dataset.labeled_x, fits, folds)
    design = augment(dataset.labeled_x)
    target = dataset.labeled_y - offsets
    etas = []
    for k in range(1, folds.k_folds + 1):
        keep = folds.membership != k
        eta = lstsq(design[keep], target[keep])
        check_normal_equations(design[keep], target[keep], eta)
        etas.append(eta)
    return etas


@dataclass
class InfluenceEstimates:
    psi0: np.ndarray
    psi_snp: np.ndarray
    gamma_hat: np.ndarray = field(repr=False)
    per_fold_eta: list = field(default_factory=list, repr=False)
    phi_unlabeled: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.psi0.shape[0]


def _gamma(dataset, gamma_choice):
    if gamma_choice == "labeled":
        return assemble_gram(dataset.labeled_x, "labeled").matrix
    if gamma_choice == "unlabeled":
        if dataset.big_n == 0:
            raise NumericalError("no unlabeled rows to estimate the Gram matrix")
        return assemble_gram(dataset.unlabeled_x, "unlabeled").matrix
    raise ValueError(f"unknown gamma choice {gamma_choice!r}")


def estimate_influences(dataset: SemiSupervisedDataset, model: ImputationModel | None,
                        theta_ols: ThetaEstimate, gamma_choice: str = "unlabeled",
                        etas=None) -> InfluenceEstimates:
    """Estimated influence-function rows of OLS and of the SNP estimator.

    Row i in fold k uses mu_k(X_i) = m_k(X_i) + (1, X_i')eta^k. With
    ``model=None`` only the OLS rows are formed (``psi_snp`` copies them).
    ``phi_unlabeled`` holds Gamma^-1 (1, U_j')'(mu(U_j) - (1, U_j')theta_snp)
    for the unlabeled rows; these have mean zero by construction.
    """
    design = augment(dataset.labeled_x)
    gamma_hat = _gamma(dataset, gamma_choice)
    resid0 = dataset.labeled_y - design @ theta_ols.theta
    psi0 = solve_spd(gamma_hat, (design * resid0[:, None]).T).T
    if model is None:
        return InfluenceEstimates(psi0, psi0.copy(), gamma_hat, [])
    folds = model.folds
    offsets = model.offsets
    if offsets is None:
        offsets = cross_fitted_offsets(dataset.labeled_x, model.fits, folds)
    if etas is None:
        etas = double_cv_eta(dataset, model.fits, folds, offsets)
    eta_rows = np.array(etas)[folds.membership - 1]
    mu_k = offsets + np.einsum("ij,ij->i", design, eta_rows)
    resid = dataset.labeled_y - mu_k
    psi = solve_spd(gamma_hat, (design * resid[:, None]).T).T
    model.eta.per_fold_eta = list(etas)
    phi = None
    if dataset.big_n > 0:
        du = augment(dataset.unlabeled_x)
        mu_u = model.unlabeled_mu
        if mu_u is None or len(mu_u) != dataset.big_n:
            mu_u = model(dataset.unlabeled_x)
        theta_snp = lstsq(du, mu_u)
        phi = solve_spd(gamma_hat, (du * (mu_u - du @ theta_snp)[:, None]).T).T
    return InfluenceEstimates(psi0, psi, gamma_hat, list(etas), phi)


def estimate_sigma(psi) -> np.ndarray:
    """Uncentred second-moment matrix n^-1 sum_i psi_i psi_i'."""
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    s = psi.T @ psi / psi.shape[0]
    return 0.5 * (s + s.T)


def estimate_delta(psi0, psi_snp, epsilon_n: float | None = None) -> np.ndarray:
    """Per-coordinate combination weights sigma_12 / (sigma_22 + epsilon_n).

    sigma_12 = -mean(psi0 * (psi - psi0)), sigma_22 = mean((psi - psi0)^2);
    epsilon_n defaults to n^(-1/4).
    """
    psi0 = np.atleast_2d(np.asarray(psi0, dtype=float))
    psi_snp = np.atleast_2d(np.asarray(psi_snp, dtype=float))
    if psi0.shape != psi_snp.shape:
        raise ValueError(f"shape mismatch {psi0.shape} vs {psi_snp.shape}")
    n = psi0.shape[0]
    if epsilon_n is None:
        epsilon_n = default_epsilon(n)
    diff = psi_snp - psi0
    s12 = -np.mean(psi0 * diff, axis=0)
    s22 = np.mean(diff * diff, axis=0)
    return s12 / (s22 + epsilon_n)


def default_epsilon(n: int) -> float:
    return float(n) ** -0.25


@dataclass
class CovarianceReport:
    theta: np.ndarray
    sigma_mu: np.ndarray
    sigma_ease: np.ndarray
    delta: np.ndarray
    epsilon_n: float
    se: np.ndarray
    ci: np.ndarray
    level: float
    z: float
    sigma_unlabeled: np.ndarray | None = None
    big_n: int = 0

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "se": self.se.tolist(),
            "ci": self.ci.tolist(),
            "level": self.level,
            "z": self.z,
            "delta": self.delta.tolist(),
            "epsilon_n": self.epsilon_n,
            "sigma_mu": self.sigma_mu.tolist(),
            "sigma_ease": self.sigma_ease.tolist(),
            "sigma_unlabeled": None if self.sigma_unlabeled is None else self.sigma_unlabeled.tolist(),
            "big_n": self.big_n,
        }


def _check_psd(s, name):
    vals = np.linalg.eigvalsh(s)
    if vals[0] < -1e-10 * max(np.trace(s), 1e-300):
        raise NumericalError(f"{name} is not positive semi-definite (min eigenvalue {vals[0]:.3e})")


def confidence_report(theta: ThetaEstimate | np.ndarray, influences: InfluenceEstimates, delta,
                      level: float = 0.95, epsilon_n: float | None = None,
                      finite_n: bool = True) -> CovarianceReport:
    """Standard errors and Wald intervals from the combined influence rows.

    The combined rows are psi0 + diag(delta)(psi_snp - psi0): delta = 0 gives
    OLS inference, delta = 1 the SNP estimator's, estimated delta EASE's.
    With ``finite_n`` (and unlabeled rows available) the variance also gets
    delta^2 diag(Sigma_U) / N from the unlabeled average.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    theta = np.asarray(getattr(theta, "theta", theta), dtype=float)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), theta.shape).copy()
    n = influences.n
    psi_e = influences.psi0 + (influences.psi_snp - influences.psi0) * delta
    sigma_mu = estimate_sigma(influences.psi_snp)
    sigma_ease = estimate_sigma(psi_e)
    _check_psd(sigma_mu, "sigma_mu")
    _check_psd(sigma_ease, "sigma_ease")
    var = np.clip(np.diag(sigma_ease), 0.0, None) / n
    sigma_u, big_n = None, 0
    if finite_n and influences.phi_unlabeled is not None:
        sigma_u = estimate_sigma(influences.phi_unlabeled)
        big_n = influences.phi_unlabeled.shape[0]
        var = var + delta ** 2 * np.clip(np.diag(sigma_u), 0.0, None) / big_n
    se = np.sqrt(var)
    z = float(norm.ppf(0.5 + level / 2))
    ci = np.column_stack([theta - z * se, theta + z * se])
    eps = default_epsilon(n) if epsilon_n is None else float(epsilon_n)
    return CovarianceReport(theta, sigma_mu, sigma_ease, delta, eps, se, ci, level, z, sigma_u, big_n)


@dataclass
class EaseFit:
    """Everything produced by one end-to-end EASE fit."""

    ols: ThetaEstimate
    snp: ThetaEstimate
    ease: ThetaEstimate
    model: ImputationModel
    influences: InfluenceEstimates
    delta: np.ndarray
    reports: dict


def fit_ease(dataset: SemiSupervisedDataset, smoother=None, dimred=None, k_folds: int = 5, seed=0,
             level: float = 0.95, gamma_choice: str = "unlabeled", epsilon_n: float | None = None,
             smoothers=None, folds=None, finite_n: bool = True) -> EaseFit:
    """OLS, SNP and EASE estimates with influence-function inference for all three."""
    from .estimators import combine_ease, fit_ols, fit_snp
    from .smoothing import SmootherPolicy
    from .dimred import DimredPolicy

    smoother = smoother or SmootherPolicy()
    dimred = dimred or DimredPolicy()
    ols = fit_ols(dataset)
    snp, model = fit_snp(dataset, smoother, dimred, k_folds, seed, smoothers=smoothers, folds=folds)
    infl = estimate_influences(dataset, model, ols, gamma_choice)
    eps = default_epsilon(dataset.n) if epsilon_n is None else epsilon_n
    delta = estimate_delta(infl.psi0, infl.psi_snp, eps)
    ease = combine_ease(ols, snp, delta)
    p1 = dataset.p + 1
    reports = {
        "ols": confidence_report(ols, infl, np.zeros(p1), level, eps, finite_n),
        "snp": confidence_report(snp, infl, np.ones(p1), level, eps, finite_n),
        "ease": confidence_report(ease, infl, delta, level, eps, finite_n),
    }
    return EaseFit(ols, snp, ease, model, infl, delta, reports)
