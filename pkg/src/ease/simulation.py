"""Simulation designs, true-parameter computation and the Monte-Carlo driver."""
from __future__ import annotations

import csv
import io
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import SemiSupervisedDataset, partition_folds
from .dimred import DimredPolicy
from .errors import ConfigError, DataError, EaseError
from .estimators import fit_np, fit_ols
from .inference import confidence_report, estimate_influences, fit_ease
from .linalg import augment, solve_spd
from .smoothing import SmootherPolicy, child_seed

MODELS = ("linear", "nl1c", "nl2c", "nl3c", "p2-linear", "p2-nli", "p2-nlq")
NL_PARAMS = {"p2-nli": (0.5, 1.0), "p2-nlq": (0.3, 1.0)}
THETA_SEED = 20170501
MC_SIZE = 2_000_000
MC_CHUNK = 200_000


@dataclass(frozen=True)
class DgpSpec:
    """Covariates N(0, I_p) truncated to [-box, box]^p; Y = m(X) + N(0, noise_sd^2)."""

    model: str = "linear"
    p: int = 10
    setting: int = 1
    nl_param: float | None = None
    noise_sd: float = 1.0
    box: float = 5.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.model.startswith("p2"):
            if self.p != 2:
                raise ConfigError(f"model {self.model} is defined for p=2 only")
            if self.model in NL_PARAMS:
                if self.nl_param is None:
                    object.__setattr__(self, "nl_param", NL_PARAMS[self.model][1])
                if self.nl_param not in NL_PARAMS[self.model]:
                    raise ConfigError(
                        f"{self.model} parameter must be one of {NL_PARAMS[self.model]}, got {self.nl_param}"
                    )
        else:
            if self.setting not in (1, 2):
                raise ConfigError(f"setting must be 1 or 2, got {self.setting}")
            if self.p < 2 or self.p % 2:
                raise ConfigError(f"p must be a positive even number, got {self.p}")
        if not self.noise_sd >= 0 or not self.box > 0:
            raise ConfigError("noise_sd must be non-negative and box positive")

    @property
    def b(self) -> np.ndarray:
        if self.model.startswith("p2"):
            return np.ones(2)
        half = self.p // 2
        if self.setting == 1:
            return np.r_[np.ones(half), np.zeros(half)]
        return np.ones(self.p)

    @property
    def delta(self) -> np.ndarray:
        half = self.p // 2
        return np.r_[np.zeros(half), np.ones(half)]

    @property
    def omega(self) -> np.ndarray:
        return (np.arange(self.p) % 2 == 0).astype(float)

    def mean_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.p:
            raise DataError(f"expected {self.p} covariates, got {x.shape[1]}")
        s = x @ self.b
        if self.model in ("linear", "p2-linear"):
            return s
        if self.model == "nl1c":
            return s + s * s
        if self.model == "p2-nli":
            return s + self.nl_param * x[:, 0] * x[:, 1]
        if self.model == "p2-nlq":
            return s + self.nl_param * (x[:, 0] ** 2 + x[:, 1] ** 2)
        out = s * (1.0 + x @ self.delta)
        if self.model == "nl3c":
            out = out + (x @ self.omega) ** 2
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def draw_covariates(spec: DgpSpec, size: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Truncated standard normal rows by redrawing out-of-box rows; returns (rows, redraws)."""
    x = rng.standard_normal((size, spec.p))
    redraws = 0
    bad = np.flatnonzero(np.any(np.abs(x) > spec.box, axis=1))
    while bad.size:
        redraws += bad.size
        x[bad] = rng.standard_normal((bad.size, spec.p))
        bad = bad[np.any(np.abs(x[bad]) > spec.box, axis=1)]
    return x, redraws


def generate_data(spec: DgpSpec, n: int = 500, big_n: int = 10000, seed=0) -> SemiSupervisedDataset:
    """One labeled sample of size n and one unlabeled sample of size N."""
    if n < 1 or big_n < 1:
        raise ConfigError("n and N must be positive")
    rng = np.random.default_rng(seed)
    x, _ = draw_covariates(spec, n, rng)
    y = spec.mean_function(x) + spec.noise_sd * rng.standard_normal(n)
    u, _ = draw_covariates(spec, big_n, rng)
    return SemiSupervisedDataset(y, x, u, tuple(f"x{j + 1}" for j in range(spec.p)))


def true_theta(spec: DgpSpec, mc_size: int = MC_SIZE, seed=THETA_SEED):
    """Least-squares projection of the noiseless m(X) on (1, X) by Monte Carlo.

    Draws are processed in chunks (two passes over the same stream), so
    memory stays bounded for large ``mc_size``. Returns (theta0, mc_standard_error).
    """
    if mc_size < 10_000:
        raise ConfigError("mc_size must be at least 10000")
    sizes = [min(MC_CHUNK, mc_size - s) for s in range(0, mc_size, MC_CHUNK)]

    def chunks():
        rng = np.random.default_rng(seed)
        for size in sizes:
            x, _ = draw_covariates(spec, size, rng)
            yield augment(x), spec.mean_function(x)

    k = spec.p + 1
    gram, cross = np.zeros((k, k)), np.zeros(k)
    for design, target in chunks():
        gram += design.T @ design
        cross += design.T @ target
    gram /= mc_size
    theta = solve_spd(gram, cross / mc_size)
    second = np.zeros(k)
    for design, target in chunks():
        psi = solve_spd(gram, (design * (target - design @ theta)[:, None]).T).T
        second += np.sum(psi * psi, axis=0)
    return theta, np.sqrt(second / mc_size / mc_size)


# name -> (smoother, dimred); SNP and EASE of the same group share every fit
def default_groups(r: int = 2, slices: int = 100) -> dict:
    from .dimred import SliceScheme

    scheme = SliceScheme("equal-width", slices)
    return {
        "ks-sir": (SmootherPolicy("ks"), DimredPolicy("sir", r, scheme)),
        "ks-sssir": (SmootherPolicy("ks"), DimredPolicy("ss-sir", r, scheme)),
        "ks": (SmootherPolicy("ks"), DimredPolicy("identity")),
        "km": (SmootherPolicy("km"), DimredPolicy("identity")),
    }


def roster_names(groups=None) -> tuple:
    groups = default_groups() if groups is None else groups
    names = ["ols", "np"]
    for g in groups:
        names += [f"snp-{g}", f"ease-{g}"]
    return tuple(names)


def _check_roster(roster, groups):
    valid = roster_names(groups)
    roster = tuple(roster)
    if not roster:
        raise ConfigError("empty estimator roster")
    for name in roster:
        if name not in valid:
            raise ConfigError(f"unknown estimator {name!r}; choose from {', '.join(valid)}")
    return roster


def run_replication(spec: DgpSpec, roster, n: int = 500, big_n: int = 10000, k_folds: int = 5, seed=0,
                    groups=None, level: float = 0.95, smoothers=None) -> dict:
    """Fit every roster estimator on one simulated dataset.

    Returns ``{name: {"theta": array, "se": array}}``; an estimator that fails
    gets ``{"error": reason}`` instead. ``smoothers`` injects fixed fold
    smoothers (callables) into every SNP group.
    """
    groups = default_groups() if groups is None else groups
    roster = _check_roster(roster, groups)
    data = generate_data(spec, n, big_n, child_seed(seed, 7))
    out = {}
    try:
        ols = fit_ols(data)
        ols_rep = confidence_report(ols, estimate_influences(data, None, ols), 0.0, level)
        ols_result = {"theta": ols.theta, "se": ols_rep.se}
    except EaseError as exc:
        ols_result = {"error": f"{type(exc).__name__}: {exc}"}
    if "ols" in roster:
        out["ols"] = ols_result
    if "np" in roster:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                est = fit_np(data)
            out["np"] = {"theta": est.theta, "se": np.full(spec.p + 1, np.nan)}
        except EaseError as exc:
            out["np"] = {"error": f"{type(exc).__name__}: {exc}"}
    folds = partition_folds(data.n, k_folds, child_seed(seed, 0))
    for g, (smoother, dimred) in groups.items():
        wanted = [m for m in (f"snp-{g}", f"ease-{g}") if m in roster]
        if not wanted:
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fit = fit_ease(data, smoother, dimred, k_folds, seed, level, smoothers=smoothers, folds=folds)
            results = {
                f"snp-{g}": {"theta": fit.snp.theta, "se": fit.reports["snp"].se},
                f"ease-{g}": {"theta": fit.ease.theta, "se": fit.reports["ease"].se, "delta": fit.delta},
            }
        except (EaseError, np.linalg.LinAlgError) as exc:
            msg = {"error": f"{type(exc).__name__}: {exc}"}
            results = {m: msg for m in wanted}
        for m in wanted:
            out[m] = results[m]
    return out


def replication_seed(master_seed, rep: int) -> int:
    return child_seed(master_seed, 2, rep)


def coordinate_labels(p: int) -> list[str]:
    return ["alpha0", *[f"beta0{j}" for j in range(1, p + 1)]]


@dataclass
class McSummary:
    spec: DgpSpec
    roster: tuple
    reps: int
    theta0: np.ndarray
    theta0_se: np.ndarray
    estimates: dict = field(repr=False)
    ses: dict = field(repr=False)
    seeds: list = field(repr=False)
    excluded: list = field(default_factory=list)
    failures: dict = field(default_factory=dict, repr=False)
    level: float = 0.95
    config: dict = field(default_factory=dict)

    @property
    def used(self) -> int:
        return self.reps - len(self.excluded)

    def bias(self, name):
        return self.estimates[name].mean(axis=0) - self.theta0

    def ese(self, name):
        return self.estimates[name].std(axis=0, ddof=1)

    def ase(self, name):
        return self.ses[name].mean(axis=0)

    def covp(self, name):
        from scipy.stats import norm

        z = norm.ppf(0.5 + self.level / 2)
        est, se = self.estimates[name], self.ses[name]
        if np.all(np.isnan(se)):
            return np.full(est.shape[1], np.nan)
        return np.mean(np.abs(est - self.theta0) <= z * se, axis=0)

    def mse(self, name) -> float:
        return float(np.mean(np.sum((self.estimates[name] - self.theta0) ** 2, axis=1)))

    def re(self, name) -> float:
        return self.mse("ols") / self.mse(name)

    def table1_rows(self):
        return [
            {"estimator": m, "reps": self.used, "excluded": len(self.excluded), "mse": self.mse(m), "re": self.re(m)}
            for m in self.roster
        ]

    def table2_rows(self):
        labels = coordinate_labels(self.spec.p)
        rows = []
        for m in self.roster:
            b, e, a, c = self.bias(m), self.ese(m), self.ase(m), self.covp(m)
            for j, lab in enumerate(labels):
                rows.append({"estimator": m, "coordinate": lab, "theta0": self.theta0[j], "bias": b[j],
                             "ese": e[j], "ase": a[j], "covp": c[j]})
        return rows

    def table1_csv(self) -> str:
        return _csv(self.table1_rows(), ["estimator", "reps", "excluded", "mse", "re"])

    def table2_csv(self) -> str:
        return _csv(self.table2_rows(), ["estimator", "coordinate", "theta0", "bias", "ese", "ase", "covp"])

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "roster": list(self.roster),
            "reps": self.reps,
            "excluded": list(self.excluded),
            "failures": self.failures,
            "theta0": _floats(self.theta0),
            "theta0_se": _floats(self.theta0_se),
            "level": self.level,
            "table1": [{k: _num(v) for k, v in r.items()} for r in self.table1_rows()],
            "table2": [{k: _num(v) for k, v in r.items()} for r in self.table2_rows()],
            "seeds": list(self.seeds),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _num(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _floats(a):
    return [_num(v) for v in np.asarray(a, dtype=float)]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "NA" if not np.isfinite(v) else format(float(v), ".10g")
    return str(v)


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _replicate(args):
    spec, roster, n, big_n, k_folds, seed, groups, level = args
    return run_replication(spec, roster, n, big_n, k_folds, seed, groups, level)


def monte_carlo(spec: DgpSpec, roster, n: int = 500, big_n: int = 10000, k_folds: int = 5, reps: int = 500,
                master_seed=0, jobs: int = 1, groups=None, level: float = 0.95, mc_size: int = MC_SIZE,
                progress=None) -> McSummary:
    """Repeat ``run_replication`` with indexed seeds and summarise.

    OLS is always fitted because relative efficiencies are measured against
    it. Replications where any roster estimator failed are excluded from the
    summary and counted. Results do not depend on ``jobs``.
    """
    if reps < 2:
        raise ConfigError("reps must be at least 2")
    groups = default_groups() if groups is None else groups
    roster = _check_roster(roster, groups)
    if "ols" not in roster:
        roster = ("ols", *roster)
    seeds = [replication_seed(master_seed, r) for r in range(reps)]
    tasks = [(spec, roster, n, big_n, k_folds, s, groups, level) for s in seeds]
    if jobs is None or jobs < 1:
        jobs = os.cpu_count() or 1
    results = []
    if jobs == 1:
        for i, t in enumerate(tasks):
            results.append(_replicate(t))
            if progress:
                progress(i + 1, reps)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, res in enumerate(pool.map(_replicate, tasks, chunksize=max(1, reps // (4 * jobs)))):
                results.append(res)
                if progress:
                    progress(i + 1, reps)
    excluded, failures = [], {}
    for i, res in enumerate(results):
        bad = {m: res[m]["error"] for m in roster if "error" in res[m]}
        if bad:
            excluded.append(i)
            failures[str(i)] = bad
    keep = [i for i in range(reps) if i not in set(excluded)]
    if len(keep) < 2:
        raise EaseError(f"only {len(keep)} replications succeeded")
    estimates = {m: np.array([results[i][m]["theta"] for i in keep]) for m in roster}
    ses = {m: np.array([results[i][m]["se"] for i in keep]) for m in roster}
    theta0, theta0_se = true_theta(spec, mc_size)
    config = {"n": n, "big_n": big_n, "k_folds": k_folds, "reps": reps, "master_seed": int(master_seed),
              "mc_size": mc_size, "theta_seed": THETA_SEED}
    return McSummary(spec, roster, reps, theta0, theta0_se, estimates, ses, seeds, excluded, failures, level, config)


@dataclass(frozen=True)
class PredictorConfig:
    """What to fit and how to predict in ``prediction_error_cv``.

    method: ols | snp | ease (linear predictors) ; predictor: linear | m | mu,
    where m is the fold-averaged smoother and mu the full SNP imputation.
    """

    method: str = "ols"
    predictor: str = "linear"
    smoother: SmootherPolicy = SmootherPolicy()
    dimred: DimredPolicy = DimredPolicy()
    k_folds: int = 5

    def __post_init__(self):
        if self.method not in ("ols", "snp", "ease"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.predictor not in ("linear", "m", "mu"):
            raise ConfigError(f"unknown predictor {self.predictor!r}")
        if self.method == "ols" and self.predictor != "linear":
            raise ConfigError("OLS provides only a linear predictor")


def prediction_error_cv(dataset: SemiSupervisedDataset, config: PredictorConfig = PredictorConfig(),
                        holdout: int = 5, reps: int = 10, seed=0) -> float:
    """Mean squared prediction error over ``reps`` random labeled holdouts of size ``holdout``.

    Each fit uses the remaining labeled rows and all unlabeled rows.
    """
    if not 1 <= holdout < dataset.n:
        raise ConfigError(f"holdout size must lie in 1..{dataset.n - 1}, got {holdout}")
    errors = []
    for r in range(reps):
        rng = np.random.default_rng(child_seed(seed, 3, r))
        test = np.sort(rng.choice(dataset.n, holdout, replace=False))
        train = np.setdiff1d(np.arange(dataset.n), test)
        sub = dataset.with_labeled(train)
        xt, yt = dataset.labeled_x[test], dataset.labeled_y[test]
        if config.method == "ols":
            pred = fit_ols(sub).predict(xt)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fit = fit_ease(sub, config.smoother, config.dimred, config.k_folds, child_seed(seed, 4, r))
            if config.predictor == "m":
                pred = fit.model.smooth(xt)
            elif config.predictor == "mu":
                pred = fit.model(xt)
            else:
                pred = (fit.snp if config.method == "snp" else fit.ease).predict(xt)
        errors.append((yt - pred) ** 2)
    return float(np.mean(np.concatenate(errors)))
