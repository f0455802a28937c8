import numpy as np
import pytest

from conftest import make_dataset
from ease.data import FoldAssignment, SemiSupervisedDataset, partition_folds
from ease.dimred import DimredPolicy
from ease.errors import UnsupportedInferenceError
from ease.estimators import ImputationModel, RefitCoefficients, fit_ols
from ease.inference import (
    InfluenceEstimates,
    confidence_report,
    default_epsilon,
    double_cv_eta,
    estimate_delta,
    estimate_influences,
    estimate_sigma,
    fit_ease,
)
from ease.linalg import augment
from ease.smoothing import FunctionSmoother, SmootherPolicy


def _ls_oracle(d, t):
    a = d.T @ d
    n = a.shape[0]
    cof = np.empty_like(a)
    for i in range(n):
        for j in range(n):
            cof[i, j] = (-1) ** (i + j) * np.linalg.det(np.delete(np.delete(a, i, 0), j, 1))
    return cof.T @ (d.T @ t) / np.linalg.det(a)


def _tiny(seed=0, n=9, big_n=12, p=1):
    rng = np.random.default_rng(seed)
    return SemiSupervisedDataset(rng.standard_normal(n), rng.standard_normal((n, p)), rng.standard_normal((big_n, p)))


def test_double_cv_zero_offsets_are_fold_ols():
    ds = _tiny()
    folds = FoldAssignment(3, np.array([1, 2, 3] * 3))
    zero = [FunctionSmoother(lambda x: np.zeros(len(x)))] * 3
    d = augment(ds.labeled_x)
    for k, eta in enumerate(double_cv_eta(ds, zero, folds), start=1):
        keep = folds.membership != k
        np.testing.assert_allclose(eta, _ls_oracle(d[keep], ds.labeled_y[keep]), atol=1e-9)


def test_double_cv_rejects_single_fold():
    ds = _tiny()
    with pytest.raises(UnsupportedInferenceError):
        double_cv_eta(ds, [FunctionSmoother(np.sin)], FoldAssignment(1, np.ones(9, dtype=int)))


def test_double_cv_with_offsets_oracle():
    ds = _tiny(1)
    folds = FoldAssignment(3, np.array([1, 1, 1, 2, 2, 2, 3, 3, 3]))
    fits = [FunctionSmoother(lambda x, c=c: c * x[:, 0] ** 2) for c in (0.5, 1.0, -1.0)]
    x = ds.labeled_x[:, 0]
    offsets = np.array([(0.5, 1.0, -1.0)[k - 1] for k in folds.membership]) * x ** 2
    d = augment(ds.labeled_x)
    etas = double_cv_eta(ds, fits, folds)
    for k in range(3):
        keep = folds.membership != k + 1
        np.testing.assert_allclose(etas[k], _ls_oracle(d[keep], (ds.labeled_y - offsets)[keep]), atol=1e-9)


def test_influences_ols_injection_equal_psi0():
    ds = make_dataset(50, 200, 2, seed=1)
    ols = fit_ols(ds)
    folds = partition_folds(ds.n, 5, 0)
    fits = [FunctionSmoother(lambda x: augment(x) @ ols.theta)] * 5
    eta = RefitCoefficients(np.zeros(3))
    etas = [np.zeros(3)] * 5
    infl = estimate_influences(ds, ImputationModel(fits, eta, folds), ols, etas=etas)
    np.testing.assert_allclose(infl.psi_snp, infl.psi0, atol=1e-12)
    np.testing.assert_allclose(estimate_delta(infl.psi0, infl.psi_snp), 0, atol=1e-12)


def test_influences_labeled_gamma_has_zero_mean_psi0():
    ds = make_dataset(50, 200, 2, seed=2)
    infl = estimate_influences(ds, None, fit_ols(ds), gamma_choice="labeled")
    np.testing.assert_allclose(infl.psi0.mean(axis=0), 0, atol=1e-12)


def test_influences_six_point_oracle():
    ds = _tiny(3, n=6, big_n=5)
    folds = FoldAssignment(2, np.array([1, 2, 1, 2, 1, 2]))
    fits = [FunctionSmoother(lambda x: np.cos(x[:, 0])), FunctionSmoother(lambda x: x[:, 0] ** 3)]
    ols = fit_ols(ds)
    model = ImputationModel(fits, RefitCoefficients(np.zeros(2)), folds)
    infl = estimate_influences(ds, model, ols)
    gamma = sum(np.outer(v, v) for v in augment(ds.unlabeled_x)) / 5
    ginv = np.linalg.inv(gamma)
    d = augment(ds.labeled_x)
    x, y = ds.labeled_x[:, 0], ds.labeled_y
    off = np.where(folds.membership == 1, np.cos(x), x ** 3)
    for i in range(6):
        k = folds.membership[i]
        keep = folds.membership != k
        eta_k = _ls_oracle(d[keep], (y - off)[keep])
        np.testing.assert_allclose(infl.psi_snp[i], ginv @ d[i] * (y[i] - off[i] - d[i] @ eta_k), atol=1e-9)
        np.testing.assert_allclose(infl.psi0[i], ginv @ d[i] * (y[i] - d[i] @ ols.theta), atol=1e-9)


def test_sigma_examples():
    np.testing.assert_array_equal(estimate_sigma(np.zeros((4, 3))), np.zeros((3, 3)))
    np.testing.assert_allclose(estimate_sigma([[1.0, 2.0]]), [[1, 2], [2, 4]])
    psi = np.random.default_rng(4).standard_normal((5, 3))
    loop = sum(np.outer(r, r) for r in psi) / 5
    np.testing.assert_allclose(estimate_sigma(psi), loop, atol=1e-12)


def test_delta_examples():
    psi0 = np.ones((2, 1))
    np.testing.assert_allclose(estimate_delta(psi0, psi0), [0.0])
    np.testing.assert_allclose(estimate_delta(psi0, 2 * psi0), [-1 / (1 + 2 ** -0.25)], atol=1e-12)
    np.testing.assert_allclose(estimate_delta(psi0, np.zeros((2, 1)), epsilon_n=0.0), [1.0])
    assert default_epsilon(16) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        estimate_delta(np.ones((2, 1)), np.ones((3, 1)))


def _report_inputs(seed=5):
    ds = make_dataset(80, 300, 2, seed=seed, fn=lambda a: a[:, 0] ** 2 + a[:, 1])
    return ds, fit_ease(ds, SmootherPolicy("ks"), DimredPolicy("identity"), 5, seed)


def test_report_z_and_interval():
    _, fit = _report_inputs()
    rep = fit.reports["ease"]
    assert rep.z == pytest.approx(1.959964, abs=1e-6)
    np.testing.assert_allclose(rep.ci[:, 1] - rep.ci[:, 0], 2 * rep.z * rep.se, atol=1e-12)
    assert confidence_report(fit.ols, fit.influences, 0.0, level=0.9).z == pytest.approx(1.644854, abs=1e-6)


def test_zero_delta_gives_ols_sigma():
    _, fit = _report_inputs()
    np.testing.assert_allclose(fit.reports["ols"].sigma_ease, estimate_sigma(fit.influences.psi0), atol=1e-14)
    np.testing.assert_allclose(fit.reports["snp"].sigma_ease, estimate_sigma(fit.influences.psi_snp), atol=1e-14)


def test_injected_equal_influences_give_ols():
    psi = np.random.default_rng(6).standard_normal((40, 3))
    infl = InfluenceEstimates(psi, psi.copy(), np.eye(3))
    delta = estimate_delta(infl.psi0, infl.psi_snp)
    np.testing.assert_array_equal(delta, 0)
    rep = confidence_report(np.zeros(3), infl, delta)
    np.testing.assert_allclose(rep.sigma_ease, estimate_sigma(psi), atol=1e-14)


def test_sigma_psd_and_scale_invariance():
    ds, fit = _report_inputs(7)
    for rep in fit.reports.values():
        assert np.linalg.eigvalsh(rep.sigma_ease)[0] >= -1e-10 * np.trace(rep.sigma_ease)
    scaled = SemiSupervisedDataset(3 * ds.labeled_y, ds.labeled_x, ds.unlabeled_x)
    fit2 = fit_ease(scaled, SmootherPolicy("ks"), DimredPolicy("identity"), 5, 7)
    # delta is not scale free since epsilon_n is absolute; the fixed-delta reports are
    for name in ("ols", "snp"):
        np.testing.assert_allclose(fit2.reports[name].theta, 3 * fit.reports[name].theta, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(fit2.reports[name].se, 3 * fit.reports[name].se, rtol=1e-8)


def test_fit_ease_combination_identity():
    _, fit = _report_inputs(8)
    np.testing.assert_allclose(fit.ease.theta, fit.ols.theta + fit.delta * (fit.snp.theta - fit.ols.theta), atol=1e-14)


def test_delta_scaling_identity():
    rng = np.random.default_rng(9)
    psi0, psi = rng.standard_normal((30, 3)), rng.standard_normal((30, 3))
    eps = 0.3
    for c in (0.5, 2.0, 8.0):
        np.testing.assert_array_equal(estimate_delta(c * psi0, c * psi, c * c * eps), estimate_delta(psi0, psi, eps))


def test_double_cv_identical_folds_share_eta():
    rng = np.random.default_rng(10)
    bx, by = rng.standard_normal((4, 2)), rng.standard_normal(4)
    ds = SemiSupervisedDataset(np.tile(by, 3), np.tile(bx, (3, 1)), rng.standard_normal((5, 2)))
    folds = FoldAssignment(3, np.repeat([1, 2, 3], 4))
    etas = double_cv_eta(ds, [FunctionSmoother(lambda x: np.cos(x[:, 1]))] * 3, folds)
    np.testing.assert_allclose(etas[1], etas[0], atol=1e-12)
    np.testing.assert_allclose(etas[2], etas[0], atol=1e-12)


def test_delta_orthogonal_hand_instance():
    psi0 = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    diff = np.array([[1.0], [1.0], [-1.0], [-1.0]])
    np.testing.assert_array_equal(estimate_delta(psi0, psi0 + diff), [0.0])


def test_finite_n_term_matches_formula():
    ds, fit = _report_inputs(11)
    phi = fit.influences.phi_unlabeled
    assert phi.shape == (ds.big_n, ds.p + 1)
    np.testing.assert_allclose(phi.mean(axis=0), 0, atol=1e-10 * np.abs(phi).max())
    rep = fit.reports["ease"]
    var = np.diag(rep.sigma_ease) / ds.n + fit.delta ** 2 * np.diag(estimate_sigma(phi)) / ds.big_n
    np.testing.assert_allclose(rep.se, np.sqrt(var), rtol=1e-12)
    plain = confidence_report(fit.ease, fit.influences, fit.delta, finite_n=False)
    np.testing.assert_allclose(plain.se, np.sqrt(np.diag(rep.sigma_ease) / ds.n), rtol=1e-12)
    np.testing.assert_array_equal(fit.reports["ols"].se, confidence_report(fit.ols, fit.influences, 0.0,
                                                                           finite_n=False).se)


def test_finite_n_term_oracle():
    ds = _tiny(12, n=8, big_n=6)
    folds = FoldAssignment(2, np.array([1, 2] * 4))
    fits = [FunctionSmoother(lambda x: x[:, 0] ** 2), FunctionSmoother(lambda x: np.abs(x[:, 0]))]
    eta = RefitCoefficients(np.array([0.1, -0.2]))
    infl = estimate_influences(ds, ImputationModel(fits, eta, folds), fit_ols(ds))
    u = ds.unlabeled_x[:, 0]
    mu = 0.5 * (u ** 2 + np.abs(u)) + 0.1 - 0.2 * u
    du = augment(ds.unlabeled_x)
    theta = _ls_oracle(du, mu)
    ginv = np.linalg.inv(sum(np.outer(v, v) for v in du) / 6)
    for j in range(6):
        np.testing.assert_allclose(infl.phi_unlabeled[j], ginv @ du[j] * (mu[j] - du[j] @ theta), atol=1e-9)
