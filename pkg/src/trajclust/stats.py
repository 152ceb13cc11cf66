"""Statistical primitives for cluster characterization.

Conventions fixed here and used everywhere else:

* quantiles interpolate linearly between order statistics (numpy's
  default scheme), so median/IQR values are reproducible;
* the rank test is Kruskal-Wallis with the ties correction and a
  chi-square reference distribution on k-1 degrees of freedom;
* contingency tables are tested with the Pearson chi-square statistic,
  either against the chi-square distribution or by a seeded Monte Carlo
  permutation of the level assignments (margins preserved);
* logistic regressions are fit by iteratively reweighted least squares
  with Wald standard errors from the observed information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy
from scipy.stats import chi2, norm, rankdata

from .errors import (
    ConvergenceError,
    DegenerateTableError,
    FitError,
    SeparationError,
    ValidationError,
)


def quantile(values, q: float) -> float:
    """Linear-interpolation quantile (the package-wide convention)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValidationError("quantile of an empty sample")
    return float(np.quantile(arr, q))


@dataclass
class GroupQuartiles:
    n: int
    median: float
    q1: float
    q3: float


@dataclass
class NumericSummary:
    overall: GroupQuartiles
    per_group: dict[int, GroupQuartiles]


def _quartiles(arr) -> GroupQuartiles:
    return GroupQuartiles(
        n=int(arr.size),
        median=quantile(arr, 0.5),
        q1=quantile(arr, 0.25),
        q3=quantile(arr, 0.75),
    )


def numeric_summary(values, groups=None) -> NumericSummary:
    """Median and IQR overall and, when groups are given, per group."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValidationError("numeric_summary of an empty sample")
    per_group: dict[int, GroupQuartiles] = {}
    if groups is not None:
        groups = np.asarray(groups)
        if groups.shape != arr.shape:
            raise ValidationError("values and groups must have the same length")
        for g in np.unique(groups):
            sub = arr[groups == g]
            if sub.size == 0:
                raise ValidationError(f"group {g} is empty")
            per_group[int(g)] = _quartiles(sub)
    return NumericSummary(overall=_quartiles(arr), per_group=per_group)


@dataclass
class RankTestResult:
    statistic: float
    df: int
    p_value: float


def kruskal_wallis(groups) -> RankTestResult:
    """Kruskal-Wallis rank test with ties correction.

    When every observation is identical the statistic is defined as 0
    (p = 1) rather than 0/0.
    """
    samples = [np.asarray(g, dtype=float) for g in groups]
    if len(samples) < 2:
        raise ValidationError("kruskal_wallis needs at least two groups")
    for g in samples:
        if g.size == 0:
            raise ValidationError("kruskal_wallis groups must be non-empty")
    pooled = np.concatenate(samples)
    n = pooled.size
    ranks = rankdata(pooled)  # average ranks on ties
    h = 0.0
    start = 0
    for g in samples:
        r = ranks[start : start + g.size]
        h += r.sum() ** 2 / g.size
        start += g.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(((counts**3 - counts).sum()))
    denom = 1.0 - tie_term / (n**3 - n)
    if denom <= 0.0:
        h = 0.0  # all observations identical
    else:
        h /= denom
    df = len(samples) - 1
    return RankTestResult(statistic=float(h), df=df, p_value=float(chi2.sf(h, df)))


@dataclass
class AssociationResult:
    statistic: float
    df: int
    p_value: float
    mode: str
    replicates: int = 0


def _pearson_chi2(table: np.ndarray) -> float:
    total = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / total
    return float(((table - expected) ** 2 / expected).sum())


def association_test(
    table,
    mode: str = "chi_square",
    replicates: int = 10_000,
    rng=None,
) -> AssociationResult:
    """Pearson chi-square test of a levels x groups contingency table.

    mode="chi_square" uses the asymptotic chi-square distribution with
    (R-1)(C-1) degrees of freedom. mode="monte_carlo" permutes the level
    assignments against the group assignments (which preserves both
    margins) and reports p = (1 + #{chi2_sim >= chi2_obs}) / (replicates + 1).
    """
    table = np.asarray(table, dtype=np.int64)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ValidationError("association_test needs a table of at least 2x2")
    if np.any(table < 0):
        raise ValidationError("contingency counts must be >= 0")
    row_sums = table.sum(axis=1)
    col_sums = table.sum(axis=0)
    if np.any(row_sums == 0):
        empty = np.flatnonzero(row_sums == 0).tolist()
        raise DegenerateTableError(f"empty row margin at index {empty}")
    if np.any(col_sums == 0):
        empty = np.flatnonzero(col_sums == 0).tolist()
        raise DegenerateTableError(f"empty column margin at index {empty}")

    observed = _pearson_chi2(table)
    df = (table.shape[0] - 1) * (table.shape[1] - 1)
    if mode == "chi_square":
        return AssociationResult(
            statistic=observed, df=df, p_value=float(chi2.sf(observed, df)), mode=mode
        )
    if mode != "monte_carlo":
        raise ValidationError(f"unknown association mode {mode!r}")
    if replicates < 1:
        raise ValidationError("replicates must be >= 1")
    generator = np.random.default_rng(rng)

    n = int(table.sum())
    n_rows, n_cols = table.shape
    rows = np.repeat(np.arange(n_rows), row_sums)  # level per observation
    cols = np.repeat(np.arange(n_cols), col_sums)  # group per observation
    expected = np.outer(row_sums, col_sums) / n

    hits = 0
    batch = max(1, min(replicates, 4_000_000 // max(n, 1)))
    done = 0
    while done < replicates:
        b = min(batch, replicates - done)
        perm = np.tile(rows, (b, 1))
        perm = generator.permuted(perm, axis=1)
        combined = perm * n_cols + cols[None, :]
        counts = np.zeros((b, n_rows * n_cols), dtype=np.int64)
        offsets = (np.arange(b) * (n_rows * n_cols))[:, None]
        flat = np.bincount(
            (combined + offsets).ravel(), minlength=b * n_rows * n_cols
        )
        counts = flat.reshape(b, n_rows, n_cols)
        stats = (((counts - expected) ** 2) / expected).sum(axis=(1, 2))
        hits += int((stats >= observed - 1e-12).sum())
        done += b
    p = (1.0 + hits) / (replicates + 1.0)
    return AssociationResult(
        statistic=observed, df=df, p_value=float(p), mode=mode, replicates=replicates
    )


@dataclass
class LogisticFit:
    coef: np.ndarray
    se: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    deviance: float
    n_iter: int
    converged: bool
    score: np.ndarray  # gradient of the log-likelihood at the estimate


def fit_logistic(
    X,
    y,
    max_iter: int = 25,
    tol: float = 1e-8,
    separation_bound: float = 15.0,
) -> LogisticFit:
    """Logistic regression by iteratively reweighted least squares.

    The caller supplies the full design matrix (include a constant column
    for an intercept). Iteration stops when the deviance changes by less
    than ``tol``. Diverging coefficients (any |beta| above
    ``separation_bound``) raise :class:`SeparationError`; failure to
    converge raises :class:`ConvergenceError`. No penalization is applied.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValidationError("X must be 2-dimensional")
    n, p = X.shape
    if y.shape != (n,):
        raise ValidationError("y must have one response per design row")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("y must be binary 0/1")
    if n < p:
        raise FitError(f"more parameters ({p}) than observations ({n})")
    if np.linalg.matrix_rank(X) < p:
        raise FitError("design matrix is rank deficient")

    beta = np.zeros(p)
    deviance = np.inf
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        eta = X @ beta
        mu = expit(eta)
        weights = mu * (1.0 - mu)
        info = X.T @ (X * weights[:, None])
        score = X.T @ (y - mu)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise SeparationError(
                "information matrix is singular (separated or degenerate fit)"
            ) from None
        beta = beta + step
        mu = expit(X @ beta)
        new_deviance = float(-2.0 * (xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)).sum())
        if abs(deviance - new_deviance) < tol:
            deviance = new_deviance
            converged = True
            break
        deviance = new_deviance

    if np.any(np.abs(beta) > separation_bound):
        raise SeparationError(
            f"coefficients diverged beyond |beta| > {separation_bound}; "
            "the data are (quasi-)separated"
        )
    if not converged:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")

    mu = expit(X @ beta)
    weights = mu * (1.0 - mu)
    info = X.T @ (X * weights[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SeparationError("information matrix is singular at the estimate") from None
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = beta / se
    p_values = 2.0 * norm.sf(np.abs(z))
    return LogisticFit(
        coef=beta,
        se=se,
        z_values=z,
        p_values=p_values,
        deviance=deviance,
        n_iter=n_iter,
        converged=converged,
        score=X.T @ (y - mu),
    )


@dataclass
class DensityCurve:
    ages: np.ndarray
    scaled: np.ndarray  # maximum rescaled to 1
    bandwidth: float
    point_mass: bool = False


def density_curve(values, grid_size: int = 512, bandwidth_floor: float = 0.5) -> DensityCurve:
    """Gaussian kernel density of onset ages, rescaled to a unit maximum.

    The bandwidth follows the usual rule of thumb
    0.9 * min(sd, IQR/1.34) * n^(-1/5); degenerate samples (zero spread)
    fall back to the floor. A single observation is returned as a point
    mass marker instead of a curve.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValidationError("density of an empty sample")
    if arr.size == 1:
        return DensityCurve(
            ages=arr.copy(), scaled=np.array([1.0]), bandwidth=0.0, point_mass=True
        )
    sd = float(arr.std(ddof=1))
    iqr = quantile(arr, 0.75) - quantile(arr, 0.25)
    spread = min(sd, iqr / 1.34)
    if spread <= 0.0:
        spread = sd
    h = 0.9 * spread * arr.size ** (-0.2)
    if not h > 0.0:
        h = bandwidth_floor
    lo, hi = arr.min() - 3.0 * h, arr.max() + 3.0 * h
    ages = np.linspace(lo, hi, grid_size)
    dens = np.zeros(grid_size)
    chunk = max(1, 2_000_000 // grid_size)
    inv = 1.0 / (2.0 * h * h)
    for s in range(0, arr.size, chunk):
        block = arr[s : s + chunk]
        dens += np.exp(-((ages[None, :] - block[:, None]) ** 2) * inv).sum(axis=0)
    peak = dens.max()
    return DensityCurve(ages=ages, scaled=dens / peak, bandwidth=float(h))
