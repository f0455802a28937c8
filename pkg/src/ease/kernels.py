"""Product kernels (including higher-order Gaussian kernels) and CV bandwidth choice."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigError, NoValidBandwidthError

FAMILIES = ("gaussian", "gaussian-higher-order", "epanechnikov")

# Gaussian-based kernels of order q: phi(u) times an even polynomial chosen so
# that moments 1..q-1 vanish.
_GAUSS_POLY = {
    2: (1.0,),
    4: (1.5, -0.5),
    6: (15 / 8, -10 / 8, 1 / 8),
}


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    order: int = 2
    dim: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}")
        q = self.order
        if q < 2 or q % 2:
            raise ConfigError(f"kernel order must be an even integer >= 2, got {q}")
        if self.family == "epanechnikov" and q != 2:
            raise ConfigError("the Epanechnikov kernel is second order only")
        if self.family.startswith("gaussian") and q not in _GAUSS_POLY:
            raise ConfigError(f"Gaussian kernels are available for q in (2, 4, 6), got {q}")
        if self.family == "gaussian-higher-order" and q < 4:
            raise ConfigError("gaussian-higher-order needs q >= 4")
        if self.dim < 1:
            raise ConfigError("kernel dimension must be positive")

    @property
    def code(self) -> int:
        return _backend.EPANECHNIKOV if self.family == "epanechnikov" else _backend.GAUSSIAN

    def with_dim(self, dim: int) -> "KernelSpec":
        return KernelSpec(self.family, self.order, dim)


def univariate(spec: KernelSpec, u) -> np.ndarray:
    """One tensor factor of the product kernel, evaluated elementwise."""
    u = np.asarray(u, dtype=float)
    if spec.family == "epanechnikov":
        return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)
    phi = np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)
    u2 = u * u
    poly = sum(c * u2 ** i for i, c in enumerate(_GAUSS_POLY[spec.order]))
    return phi * poly


def kernel_eval(spec: KernelSpec, z) -> float:
    """K(z) for a length-r point: the product of univariate factors."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.ndim != 1 or z.shape[0] != spec.dim:
        raise ConfigError(f"kernel of dimension {spec.dim} evaluated at a point of shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("kernel argument must be finite")
    return float(np.prod(univariate(spec, z)))


def default_grid(n: int, spec: KernelSpec, points: int = 13, span: float = 4.0) -> np.ndarray:
    """Geometric grid centred on the optimal order n^(-1/(2q+r)), spanning x[1/span, span]."""
    centre = n ** (-1.0 / (2 * spec.order + spec.dim))
    return centre * span ** np.linspace(-1.0, 1.0, points)


def nadaraya_watson(train_z, train_y, query_z, h, spec: KernelSpec, trim: float = 1e-8):
    """Local-constant predictions with nearest-neighbour fallback.

    Where the raw kernel mass sum_i K((z - z_i)/h) falls below ``trim``
    (equivalently, the density estimate falls below trim / (n h^r)) the
    prediction is the outcome of the nearest training point.

    Returns predictions and a boolean mask of trimmed rows.
    """
    train_z = np.ascontiguousarray(train_z, dtype=float)
    query_z = np.ascontiguousarray(query_z, dtype=float)
    train_y = np.ascontiguousarray(train_y, dtype=float)
    num, den = _backend.nw_sums(train_z, train_y, query_z, float(h), spec.code, spec.order)
    num = np.asarray(num)
    den = np.asarray(den)
    trimmed = ~(den >= trim)
    pred = np.empty_like(num)
    ok = ~trimmed
    pred[ok] = num[ok] / den[ok]
    if trimmed.any():
        idx = _backend.nearest_index(train_z, np.ascontiguousarray(query_z[trimmed]))
        pred[trimmed] = train_y[np.asarray(idx)]
    return pred, trimmed


@dataclass(frozen=True)
class BandwidthChoice:
    h: float
    cv_error: float
    grid: np.ndarray = field(repr=False)
    errors: np.ndarray = field(repr=False)


def cv_errors(z, y, spec: KernelSpec, grid, cv_folds: int = 5, seed=0) -> np.ndarray:
    """K-fold least-squares CV error of the local-constant smoother at each h."""
    from .data import partition_folds

    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = partition_folds(len(y), cv_folds, seed)
    sq = np.zeros((len(grid), len(y)))
    for k in range(1, cv_folds + 1):
        test = folds.indices(k)
        train = folds.training(k)
        for g, h in enumerate(grid):
            pred, _ = nadaraya_watson(z[train], y[train], z[test], h, spec)
            sq[g, test] = (y[test] - pred) ** 2
    return sq.mean(axis=1)


def select_bandwidth(z, y, spec: KernelSpec, grid=None, cv_folds: int = 5, seed=0) -> BandwidthChoice:
    """Pick h from ``grid`` by least-squares cross-validation.

    ``z`` are the already projected and whitened smoothing coordinates.
    Ties (within rounding) go to the largest h; the grid is sorted first so
    the answer does not depend on its ordering.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float).reshape(len(y), -1)
    if grid is None:
        grid = default_grid(len(y), spec.with_dim(z.shape[1]))
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0 or np.any(grid <= 0):
        raise ConfigError("bandwidth grid must be non-empty and positive")
    if len(y) < cv_folds:
        raise ConfigError(f"{len(y)} points cannot support {cv_folds}-fold CV")
    errs = cv_errors(z, y, spec, grid, cv_folds, seed)
    finite = np.isfinite(errs)
    if not finite.any():
        raise NoValidBandwidthError("no grid bandwidth produced a finite CV error")
    best = np.min(errs[finite])
    tol = 1e-10 * best + 1e-14 * float(np.mean(y * y))
    winners = np.flatnonzero(finite & (errs <= best + tol))
    g = winners[-1]
    return BandwidthChoice(float(grid[g]), float(errs[g]), grid, errs)
