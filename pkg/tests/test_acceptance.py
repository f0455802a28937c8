"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line.

EASE_ACCEPT_TIER=smoke runs the Monte-Carlo criteria with R=100 (criterion 1
tolerances widened to 35%); the default full tier uses R=500. Setting
EASE_ACCEPT_CACHE to a directory stores Monte-Carlo summaries there, keyed by
configuration and a hash of the package source.
"""
import hashlib
import os
import pickle
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

import ease
from ease.cli import main
from ease.data import FoldAssignment, SemiSupervisedDataset, partition_folds
from ease.dimred import SliceScheme, sir_directions, ss_sir_directions
from ease.estimators import combine_ease, fit_ols, fit_snp, refit_eta
from ease.inference import InfluenceEstimates, double_cv_eta, estimate_delta, estimate_influences, estimate_sigma
from ease.kernels import KernelSpec, univariate
from ease.linalg import augment
from ease.simulation import DgpSpec, default_groups, generate_data, monte_carlo
from ease.dimred import DimredPolicy
from ease.smoothing import FunctionSmoother, SmootherPolicy

from conftest import record_acceptance

TIER = os.environ.get("EASE_ACCEPT_TIER", "full")
REPS = 100 if TIER == "smoke" else 500
TABLE1_TOL = 0.35 if TIER == "smoke" else None
MASTER_SEED = 1
P10_ROSTER = ("ols", "snp-ks-sir", "ease-ks-sir", "snp-km", "ease-km")
P2_ROSTER = ("ols", "snp-ks", "ease-ks", "snp-km", "ease-km")

_cache = {}


def _source_hash():
    h = hashlib.sha256()
    for f in sorted(Path(ease.__file__).parent.glob("*.py*")):
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


def mc(model, p=10, nl_param=None):
    key = (model, p, nl_param, REPS)
    if key in _cache:
        return _cache[key]
    spec = DgpSpec(model, p, 1, nl_param)
    groups = default_groups()
    if p == 2:
        groups = {g: groups[g] for g in ("ks", "km")}
    roster = P2_ROSTER if p == 2 else P10_ROSTER
    disk = os.environ.get("EASE_ACCEPT_CACHE")
    path = None
    if disk:
        path = Path(disk) / f"{model}-p{p}-{nl_param}-R{REPS}-{_source_hash()}.pkl"
        if path.exists():
            _cache[key] = pickle.loads(path.read_bytes())
            return _cache[key]
    summary = monte_carlo(spec, roster, 500, 10000, 5, REPS, MASTER_SEED, jobs=os.cpu_count() or 1,
                          groups=groups)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(pickle.dumps(summary))
    _cache[key] = summary
    return summary


def _check(number, title, checks):
    """checks: list of (label, ok, detail). Records one line and asserts all."""
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{'ok' if c[1] else 'FAIL'} {c[0]}: {c[2]}" for c in checks)
    line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} -- {detail}"
    record_acceptance(line)
    print(line)
    assert ok, line


def _within(value, target, tol):
    return abs(value - target) <= tol * target


@pytest.mark.slow
def test_criterion_1_efficiency_targets():
    checks = []
    for model, name, target, tol in (("nl1c", "snp-ks-sir", 4.481, 0.20), ("nl1c", "ease-km", 5.543, 0.20),
                                     ("nl2c", "snp-ks-sir", 2.683, 0.25)):
        tol = TABLE1_TOL or tol
        re = mc(model).re(name)
        checks.append((f"{model} RE({name})={re:.3f} target {target}+-{tol:.0%}", _within(re, target, tol),
                       f"R={mc(model).used}"))
    _check(1, f"relative efficiency targets, R={REPS}", checks)


@pytest.mark.slow
def test_criterion_2_linear_adaptivity():
    s = mc("linear")
    checks = []
    for name in ("ease-ks-sir", "ease-km"):
        re = s.re(name)
        checks.append((f"RE({name})", 0.93 <= re <= 1.05, f"{re:.3f} in [0.93, 1.05]"))
    _check(2, f"EASE safe under the linear model, R={REPS}", checks)


@pytest.mark.slow
def test_criterion_3_inference_quality():
    checks = []
    for model, bias_tol in (("linear", 0.03), ("nl2c", 0.05)):
        s = mc(model)
        for name in ("ease-ks-sir", "ease-km"):
            covp, bias, ase, ese = s.covp(name), s.bias(name), s.ase(name), s.ese(name)
            checks.append((f"{model} {name} CovP", bool(np.all((covp >= 0.90) & (covp <= 0.98))),
                           f"range [{covp.min():.3f}, {covp.max():.3f}]"))
            checks.append((f"{model} {name} |bias|", bool(np.all(np.abs(bias) <= bias_tol)),
                           f"max {np.abs(bias).max():.4f} <= {bias_tol}"))
            rel = np.abs(ase - ese) / ese
            checks.append((f"{model} {name} |ASE-ESE|/ESE", bool(np.all(rel <= 0.25)), f"max {rel.max():.3f}"))
    _check(3, f"inference quality, R={REPS}", checks)


@pytest.mark.slow
def test_criterion_4_p2_efficiency():
    nlq = mc("p2-nlq", 2, 1.0)
    lin = mc("p2-linear", 2)
    re = nlq.re("snp-ks")
    checks = [(f"NL-Q gamma=1 RE(snp-ks)={re:.3f}", _within(re, 4.096, 0.20), "target 4.096+-20%")]
    for name in ("snp-ks", "ease-ks", "snp-km", "ease-km"):
        r = lin.re(name)
        checks.append((f"linear RE({name})", 0.85 <= r <= 1.05, f"{r:.3f} in [0.85, 1.05]"))
    _check(4, f"p=2 efficiency, R={REPS}", checks)


def test_criterion_5_exact_identities():
    rng = np.random.default_rng(0)
    x, u = rng.standard_normal((80, 3)), rng.standard_normal((400, 3))
    y = x[:, 0] + x[:, 1] * x[:, 2] + rng.standard_normal(80)
    ds = SemiSupervisedDataset(y, x, u)
    checks = []
    folds = partition_folds(80, 5, 0)
    _, model = fit_snp(ds, SmootherPolicy("ks"), DimredPolicy("sir", 2, SliceScheme("equal-width", 10)), 5, 0)
    d = augment(x)
    resid = y - model.offsets - d @ model.eta.eta
    orth = np.abs(d.T @ resid).max() / (np.linalg.norm(d) * np.linalg.norm(y))
    checks.append(("refit orthogonality", orth <= 1e-8, f"{orth:.1e}"))
    zero = [FunctionSmoother(lambda a: np.zeros(len(a)))] * 5
    ols = fit_ols(ds)
    gap = np.abs(refit_eta(ds, zero, folds).eta - ols.theta).max()
    checks.append(("zero offsets give OLS", gap <= 1e-10, f"{gap:.1e}"))
    ols_fit = [FunctionSmoother(lambda a: augment(a) @ ols.theta)] * 5
    gap = np.abs(refit_eta(ds, ols_fit, folds).eta).max()
    checks.append(("OLS offsets give zero", gap <= 1e-10, f"{gap:.1e}"))
    snp, model = fit_snp(ds, smoothers=lambda a: augment(a) @ ols.theta, folds=folds)
    infl = estimate_influences(ds, model, ols)
    delta = estimate_delta(infl.psi0, infl.psi_snp)
    ease_est = combine_ease(ols, snp, delta)
    gap = max(np.abs(snp.theta - ols.theta).max(), np.abs(ease_est.theta - ols.theta).max())
    checks.append(("degenerate imputation gives OLS", gap <= 1e-8, f"{gap:.1e}"))
    sc = SliceScheme("equal-width", 10)
    a, b = sir_directions(x, y, 2, sc), ss_sir_directions(x, y, np.empty((0, 3)), 2, sc)
    checks.append(("SS-SIR with empty U equals SIR", np.array_equal(a.matrix, b.matrix), "bitwise"))
    same = InfluenceEstimates(infl.psi0, infl.psi0.copy(), infl.gamma_hat)
    dz = estimate_delta(same.psi0, same.psi_snp)
    checks.append(("delta = 0 for equal influences", np.all(dz == 0), str(dz.tolist())))
    _check(5, "exact algebraic identities", checks)


def _ls(d, t):
    a = d.T @ d
    k = a.shape[0]
    cof = np.array([[(-1) ** (i + j) * np.linalg.det(np.delete(np.delete(a, i, 0), j, 1)) for j in range(k)]
                    for i in range(k)])
    return cof.T @ (d.T @ t) / np.linalg.det(a)


def test_criterion_6_tiny_oracles():
    rng = np.random.default_rng(1)
    x, y, u = rng.standard_normal((9, 2)), rng.standard_normal(9), rng.standard_normal((7, 2))
    ds = SemiSupervisedDataset(y, x, u)
    d = augment(x)
    checks = []
    gap = np.abs(fit_ols(ds).theta - _ls(d, y)).max()
    checks.append(("OLS", gap <= 1e-9, f"{gap:.1e}"))
    folds = FoldAssignment(3, np.array([1, 2, 3, 1, 2, 3, 1, 2, 3]))
    fns = [lambda a: np.sin(a[:, 0]), lambda a: a[:, 1] ** 2, lambda a: a[:, 0] * a[:, 1]]
    fits = [FunctionSmoother(f) for f in fns]
    off = np.array([fns[k - 1](x[i:i + 1])[0] for i, k in enumerate(folds.membership)])
    gap = np.abs(refit_eta(ds, fits, folds).eta - _ls(d, y - off)).max()
    checks.append(("refit_eta", gap <= 1e-9, f"{gap:.1e}"))
    etas = double_cv_eta(ds, fits, folds)
    gap = max(np.abs(etas[k] - _ls(d[folds.membership != k + 1], (y - off)[folds.membership != k + 1])).max()
              for k in range(3))
    checks.append(("double_cv_eta", gap <= 1e-9, f"{gap:.1e}"))
    psi = rng.standard_normal((6, 3))
    loop = np.zeros((3, 3))
    for row in psi:
        for i in range(3):
            for j in range(3):
                loop[i, j] += row[i] * row[j] / 6
    gap = np.abs(estimate_sigma(psi) - loop).max()
    checks.append(("estimate_sigma", gap <= 1e-9, f"{gap:.1e}"))
    psi2 = rng.standard_normal((6, 3))
    eps = 6 ** -0.25
    oracle = [-sum(psi[i, j] * (psi2[i, j] - psi[i, j]) for i in range(6)) / 6
              / (sum((psi2[i, j] - psi[i, j]) ** 2 for i in range(6)) / 6 + eps) for j in range(3)]
    gap = np.abs(estimate_delta(psi, psi2) - oracle).max()
    checks.append(("estimate_delta", gap <= 1e-9, f"{gap:.1e}"))
    _check(6, "tiny-instance oracles", checks)


def test_criterion_7_kernel_moments():
    checks = []
    for q in (2, 4):
        spec = KernelSpec("gaussian" if q == 2 else "gaussian-higher-order", q)
        mom = [quad(lambda t: t ** j * float(univariate(spec, t)), -40, 40, limit=200, epsabs=1e-12)[0]
               for j in range(q + 1)]
        ok = abs(mom[0] - 1) <= 1e-6 and all(abs(m) <= 1e-6 for m in mom[1:q]) and abs(mom[q]) > 1e-3
        checks.append((f"q={q}", ok, "moments " + ", ".join(f"{m:.2e}" for m in mom)))
    _check(7, "kernel calculus by quadrature", checks)


def test_criterion_8_direction_recovery():
    sc = SliceScheme("equal-width", 100)
    sir_ok, ss_wins = 0, 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((5000, 2))
        y = x[:, 0].copy()
        u = rng.standard_normal((10000, 2))
        v = sir_directions(x, y, 1, sc).matrix[:, 0]
        w = ss_sir_directions(x, y, u, 1, sc).matrix[:, 0]
        c_sir = abs(v[0]) / np.linalg.norm(v)
        c_ss = abs(w[0]) / np.linalg.norm(w)
        sir_ok += c_sir > 0.95
        ss_wins += c_ss >= c_sir
    _check(8, "direction recovery", [("SIR |cos| > 0.95", sir_ok >= 9, f"{sir_ok}/10 seeds"),
                                     ("SS-SIR >= SIR", ss_wins >= 8, f"{ss_wins}/10 paired seeds")])


def test_criterion_9_determinism(tmp_path, capsys):
    ds = generate_data(DgpSpec("nl2c", 4), 100, 500, 0)
    data = tmp_path / "d.csv"
    with open(data, "w") as fh:
        fh.write("y,x1,x2,x3,x4\n")
        for yi, xi in zip(ds.labeled_y, ds.labeled_x):
            fh.write(",".join(repr(float(v)) for v in (yi, *xi)) + "\n")
        for xi in ds.unlabeled_x:
            fh.write("," + ",".join(repr(float(v)) for v in xi) + "\n")
    checks = []
    for cmd in (["fit", "--smoother", "km", "--dimred", "identity"], ["predict"], ["diagnose"]):
        outs = []
        for i in range(2):
            out = tmp_path / f"{cmd[0]}{i}"
            assert main([cmd[0], "--labeled", str(data), *cmd[1:], "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        checks.append((cmd[0], outs[0] == outs[1], "rerun byte-identical"))
    sims = []
    for jobs in ("1", "2", "1"):
        out = tmp_path / f"sim{len(sims)}"
        assert main(["simulate", "--model", "p2-nli", "--p", "2", "--reps", "4", "--n", "100", "--big-n", "400",
                     "--method", "ols,np,snp-ks-sir,ease-ks-sir,snp-km,ease-km", "--mc-size", "10000",
                     "--jobs", jobs, "--out", str(out)]) == 0
        sims.append(b"".join((out / f).read_bytes() for f in ("summary.json", "table1.csv", "table2.csv",
                                                              "seeds.csv")))
    checks.append(("simulate --jobs 1/2/1", sims[0] == sims[1] == sims[2], "byte-identical"))
    capsys.readouterr()
    _check(9, "determinism across reruns and --jobs", checks)


# spec examples that share the Monte-Carlo runs above (no criterion line)

@pytest.mark.slow
def test_example_linear_efficiency_bands():
    s = mc("linear")
    assert abs(s.re("snp-ks-sir") - 0.895) <= 0.15
    assert abs(s.re("ease-ks-sir") - 0.983) <= 0.05


@pytest.mark.slow
@pytest.mark.parametrize("name", ["ols", "ease-ks-sir", "ease-km"])
def test_example_linear_coverage_band(name):
    covp = mc("linear").covp(name)
    assert np.all((covp >= 0.92) & (covp <= 0.97)), covp
