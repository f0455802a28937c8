import json

import numpy as np
import pytest
from scipy.stats import kstest

from ease.data import SemiSupervisedDataset
from ease.diagnostics import fit_logistic, mcar_tests
from ease.errors import ConfigError, DataError
from ease.linalg import augment


def _ds(lab, unl, names=None):
    lab, unl = np.asarray(lab, float), np.asarray(unl, float)
    return SemiSupervisedDataset(np.zeros(len(lab)), lab, unl, names or ())


def test_identical_samples():
    x = np.random.default_rng(0).standard_normal((40, 2))
    rep = mcar_tests(_ds(x, x))
    for name in ("x1", "x2"):
        row = rep.row(name)
        assert row["p_ttest"] == pytest.approx(1.0)
        assert row["p_wilcoxon"] == pytest.approx(1.0)
        assert row["p_ps"] == pytest.approx(1.0, abs=1e-6)


def test_shifted_samples_detected():
    rng = np.random.default_rng(1)
    rep = mcar_tests(_ds(rng.standard_normal((200, 1)), rng.standard_normal((400, 1)) + 1.0))
    row = rep.row("x1")
    assert row["p_ttest"] < 1e-3 and row["p_wilcoxon"] < 1e-3 and row["p_ps"] < 1e-3


def test_null_pvalues_uniform():
    pt, pw, pp = [], [], []
    for s in range(200):
        rng = np.random.default_rng(100 + s)
        row = mcar_tests(_ds(rng.standard_normal((60, 1)), rng.standard_normal((120, 1)))).row("x1")
        pt.append(row["p_ttest"])
        pw.append(row["p_wilcoxon"])
        pp.append(row["p_ps"])
    for p in (pt, pw, pp):
        assert kstest(p, "uniform").statistic < 0.12


def test_swap_symmetry():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((50, 2)), rng.standard_normal((70, 2)) + 0.2
    r1, r2 = mcar_tests(_ds(a, b)), mcar_tests(_ds(b, a))
    for name in ("x1", "x2"):
        for col in ("p_ttest", "p_wilcoxon", "p_ps"):
            assert r1.row(name)[col] == pytest.approx(r2.row(name)[col], rel=1e-8)


def test_wilcoxon_monotone_invariance():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((50, 1)), rng.standard_normal((60, 1)) + 0.3
    p1 = mcar_tests(_ds(a, b)).row("x1")["p_wilcoxon"]
    p2 = mcar_tests(_ds(np.exp(a), np.exp(b))).row("x1")["p_wilcoxon"]
    assert p1 == pytest.approx(p2, rel=1e-12)


def test_intercept_row_and_columns():
    rng = np.random.default_rng(4)
    rep = mcar_tests(_ds(rng.standard_normal((30, 2)), rng.standard_normal((40, 2)), ("age", "dose")))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "covariate,labeled_mean,labeled_sd,unlabeled_mean,unlabeled_sd,p_ttest,p_wilcoxon,p_ps"
    assert lines[1].startswith("(Intercept),NA,NA,NA,NA,NA,NA,")
    assert [r["covariate"] for r in rep.rows] == ["(Intercept)", "age", "dose"]
    doc = json.loads(rep.to_json())
    assert doc["rows"][0]["labeled_mean"] is None


def test_separation_flagged():
    lab = np.linspace(1, 2, 20)[:, None]
    unl = np.linspace(-2, -1, 20)[:, None]
    rep = mcar_tests(_ds(lab, unl))
    assert rep.separation and rep.notes
    assert np.isnan(rep.row("x1")["p_ps"])
    assert rep.row("x1")["p_ttest"] < 1e-6


def test_constant_covariate_has_undefined_pvalues():
    rng = np.random.default_rng(5)
    lab = np.column_stack([np.ones(30), rng.standard_normal(30)])
    unl = np.column_stack([np.ones(40), rng.standard_normal(40)])
    row = mcar_tests(_ds(lab, unl)).row("x1")
    assert np.isnan(row["p_ttest"]) and np.isnan(row["p_wilcoxon"]) and np.isnan(row["p_ps"])


def test_log1p_transform():
    rng = np.random.default_rng(6)
    a, b = rng.exponential(size=(40, 1)), rng.exponential(size=(50, 1))
    rep = mcar_tests(_ds(a, b), log1p_cols=("x1",))
    assert rep.row("x1")["labeled_mean"] == pytest.approx(np.log1p(a).mean())
    assert rep.transformed == ("x1",)
    with pytest.raises(ConfigError):
        mcar_tests(_ds(a, b), log1p_cols=("nope",))
    with pytest.raises(DataError):
        mcar_tests(_ds(a - 5, b), log1p_cols=("x1",))


def test_logistic_matches_known_solution():
    # balanced symmetric design: MLE slope solves a one-dimensional score equation
    x = np.array([-2.0, -1.0, -1.0, 1.0, 1.0, 2.0, 0.5, -0.5])
    t = np.array([0, 0, 1, 0, 1, 1, 1, 0.0])
    fit = fit_logistic(augment(x[:, None]), t)
    assert fit.converged
    prob = 1 / (1 + np.exp(-augment(x[:, None]) @ fit.coef))
    np.testing.assert_allclose(augment(x[:, None]).T @ (t - prob), 0, atol=1e-7)
