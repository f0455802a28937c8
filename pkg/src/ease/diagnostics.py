"""Labeled-versus-unlabeled covariate comparisons for judging MCAR plausibility."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import mannwhitneyu, norm, ttest_ind

from .data import SemiSupervisedDataset
from .errors import ConfigError, DataError
from .linalg import augment

MAX_ITER = 50
SCORE_TOL = 1e-8
DIVERGENCE_NORM = 1e3
PROB_FLOOR = 1e-8
COLUMNS = ("covariate", "labeled_mean", "labeled_sd", "unlabeled_mean", "unlabeled_sd",
           "p_ttest", "p_wilcoxon", "p_ps")


@dataclass
class LogisticFit:
    coef: np.ndarray
    se: np.ndarray
    pvalues: np.ndarray
    converged: bool
    separation: bool
    iterations: int


def fit_logistic(design, target) -> LogisticFit:
    """Logistic regression by iteratively reweighted least squares with Wald p-values.

    Stops when the mean score norm drops below 1e-8 (at most 50 steps). A
    coefficient norm above 1e3, or fitted probabilities within 1e-8 of 0 or 1
    at convergence, is reported as separation.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    m, k = design.shape
    beta = np.zeros(k)
    converged = separation = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        prob = expit(design @ beta)
        w = prob * (1 - prob)
        score = design.T @ (target - prob)
        if np.linalg.norm(score) / m < SCORE_TOL:
            converged = True
            break
        info = design.T @ (design * w[:, None])
        try:
            beta = beta + np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            separation = True
            break
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > DIVERGENCE_NORM:
            separation = True
            break
    if converged:
        prob = expit(design @ beta)
        separation = bool(np.any((prob < PROB_FLOOR) | (prob > 1 - PROB_FLOOR)))
    nan = np.full(k, np.nan)
    if separation or not converged:
        return LogisticFit(beta, nan, nan.copy(), False, separation, it)
    prob = expit(design @ beta)
    info = design.T @ (design * (prob * (1 - prob))[:, None])
    se = np.sqrt(np.diag(np.linalg.inv(info)))
    pvals = 2 * norm.sf(np.abs(beta / se))
    return LogisticFit(beta, se, pvals, True, False, it)


@dataclass
class McarReport:
    rows: list
    separation: bool = False
    converged: bool = True
    transformed: tuple = ()
    notes: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        rows = [{c: (None if isinstance(r[c], float) and not np.isfinite(r[c]) else r[c]) for c in COLUMNS}
                for r in self.rows]
        return {"rows": rows, "separation": self.separation, "converged": self.converged,
                "transformed": list(self.transformed), "notes": list(self.notes)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def row(self, name) -> dict:
        for r in self.rows:
            if r["covariate"] == name:
                return r
        raise KeyError(name)


def _fmt(v):
    if isinstance(v, float):
        return "NA" if not np.isfinite(v) else format(v, ".6g")
    return str(v)


def mcar_tests(dataset: SemiSupervisedDataset, log1p_cols=()) -> McarReport:
    """Per-covariate Welch t, Wilcoxon rank-sum and joint propensity-model Wald tests.

    Columns named in ``log1p_cols`` are transformed by log(1 + x) first.
    All p-values are two-sided. A covariate with zero pooled variance gets
    undefined (NaN) p-values and is left out of the propensity model.
    """
    if dataset.n < 2 or dataset.big_n < 2:
        raise DataError("diagnostics need at least two labeled and two unlabeled rows")
    lab = np.array(dataset.labeled_x, dtype=float)
    unl = np.array(dataset.unlabeled_x, dtype=float)
    cols = list(dataset.columns)
    for name in log1p_cols:
        if name not in cols:
            raise ConfigError(f"log1p column {name!r} is not a covariate")
        j = cols.index(name)
        if min(lab[:, j].min(), unl[:, j].min()) <= -1:
            raise DataError(f"column {name!r} has values <= -1; log1p is undefined")
        lab[:, j] = np.log1p(lab[:, j])
        unl[:, j] = np.log1p(unl[:, j])
    pooled = np.vstack([lab, unl])
    varying = np.array([np.ptp(pooled[:, j]) > 0 for j in range(pooled.shape[1])])
    rows = []
    for j, name in enumerate(cols):
        a, b = lab[:, j], unl[:, j]
        row = {"covariate": name, "labeled_mean": float(a.mean()), "labeled_sd": float(a.std(ddof=1)),
               "unlabeled_mean": float(b.mean()), "unlabeled_sd": float(b.std(ddof=1)),
               "p_ttest": np.nan, "p_wilcoxon": np.nan, "p_ps": np.nan}
        if varying[j]:
            if a.var() + b.var() > 0:
                row["p_ttest"] = float(ttest_ind(a, b, equal_var=False).pvalue)
            else:
                row["p_ttest"] = 0.0
            row["p_wilcoxon"] = float(
                mannwhitneyu(a, b, use_continuity=True, alternative="two-sided", method="asymptotic").pvalue
            )
        rows.append(row)
    target = np.r_[np.ones(len(lab)), np.zeros(len(unl))]
    fit = fit_logistic(augment(pooled[:, varying]), target)
    notes = []
    if fit.separation:
        notes.append("propensity model diverged (separation); its p-values are undefined")
    elif not fit.converged:
        notes.append("propensity model did not converge; its p-values are undefined")
    intercept = {"covariate": "(Intercept)", "labeled_mean": np.nan, "labeled_sd": np.nan,
                 "unlabeled_mean": np.nan, "unlabeled_sd": np.nan, "p_ttest": np.nan,
                 "p_wilcoxon": np.nan, "p_ps": float(fit.pvalues[0])}
    for row, pv in zip([r for r, v in zip(rows, varying) if v], fit.pvalues[1:]):
        row["p_ps"] = float(pv)
    return McarReport([intercept, *rows], fit.separation, fit.converged, tuple(log1p_cols), notes)
