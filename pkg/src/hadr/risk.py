"""Closed-form disclosure-risk measures for sanitized frequency tables.

The attack event on a cell with size n, counts (n_1, ..., n_K), and noisy
release (n_1 + E_1, ..., n_K + E_K) is that the presence support
{k : n_k + E_k >= 0.5} collapses to a single category that actually occurs
in the cell. Two disjoint routes contribute:

* component 1 ("stays homogeneous"): the cell is homogeneous at k and the
  noise keeps exactly {k} present;
* component 2 ("becomes homogeneous"): the cell is heterogeneous and the
  noise suppresses every occupied category but one.

With cdf(t) = Pr(E < t) and sf(t) = 1 - cdf(t), the per-cell probability
that a count n stays present is sf(0.5 - n), that a zero count stays
absent is cdf(0.5), and that a count of 1 disappears is cdf(-0.5).

Several measures differ only in what is averaged over:

* local: the observed counts are held fixed; the formula
  sum_{k in support} sf(0.5 - n_k) prod_{t != k} cdf(0.5 - n_t)
  is exact for the event probability.
* expected: counts are redrawn from Multinomial(n, p) with p the plug-in
  cell proportions; evaluated by the two-term expression whose first term
  is exact and whose second term covers only the extreme heterogeneous
  configuration {n-1, 1, 0, ...} at single-sequence probability. The
  second term is NOT a proven bound over all heterogeneous
  configurations; see mc.upper_bound_findings for the empirical check.
* shrinkage: p is additionally integrated over a Dirichlet(alpha) prior,
  turning the moment sums into Gamma-function ratios.
* global: the cell size is integrated over a size model (Poisson or
  negative binomial), summing the shrinkage integrand over n >= 1.
* global variant: like global but with the degenerate prior that makes
  every draw homogeneous, leaving only component 1.

All Gamma and Beta ratios are evaluated in log space and exponentiated
last. Series over cell sizes are truncated once the remaining size mass
drops below TAIL_MASS, with a hard cap of MAX_SERIES_TERMS terms.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .estimation import CellSizeModel
from .mechanisms import PrivacyParams, noise_model
from .special import log_beta, log_gamma
from .tabulation import FrequencyTable, classify_cell

TAIL_MASS = 1e-12
MAX_SERIES_TERMS = 10**6

MEASURES = ("local", "expected", "shrinkage", "global", "global_variant")


class RiskValue(NamedTuple):
    """Total risk and its two scenario components (value = sum of both)."""

    value: float
    scenario1: float
    scenario8: float
    truncated_at: int | None = None


class LocalRisk(NamedTuple):
    """Single-cell local risk; exact is True on the homogeneous branch."""

    value: float
    scenario1: float
    scenario8: float
    exact: bool


def _check_alpha(alpha) -> np.ndarray:
    arr = np.asarray(alpha, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("alpha must be a vector with at least 2 entries")
    if not np.all(arr > 0):
        raise ValueError("alpha entries must be positive")
    return arr


def _check_sizes(sizes) -> np.ndarray:
    arr = np.asarray(sizes)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("sizes must be a non-empty vector")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValueError("cell sizes must be integers")
        arr = arr.astype(np.int64)
    if not np.all(arr >= 1):
        raise ValueError("cell sizes must be >= 1")
    return arr.astype(np.int64)


def _tail_factors(nm, n_categories: int, n: np.ndarray):
    """Noise factors shared by every measure.

    Returns (t1_factor, t2_factor) where t1_factor[i] multiplies the
    component-1 moment of size n[i] and t2_factor[i] (already masked to
    n >= 2) multiplies the component-2 moment.
    """
    stay_absent = nm.cdf(0.5)
    drop_one = nm.cdf(-0.5)
    stay_present = nm.sf(0.5 - n)
    keep_majority = nm.sf(1.5 - n)
    t1 = stay_absent ** (n_categories - 1) * stay_present
    t2 = np.where(n >= 2, keep_majority * drop_one * stay_absent ** (n_categories - 2), 0.0)
    return t1, t2


def _plugin_moments(counts: np.ndarray, n: np.ndarray):
    phat = counts / n[:, None]
    m1 = (phat ** n[:, None]).sum(axis=1)
    m2 = (phat ** (n[:, None] - 1) * (1.0 - phat)).sum(axis=1)
    return m1, m2


def _dirichlet_moments(n: np.ndarray, alpha: np.ndarray):
    """Dirichlet-averaged moment sums as Gamma ratios, in log space.

    m1(n) = sum_k Gamma(a0) Gamma(alpha_k + n) / (Gamma(a0 + n) Gamma(alpha_k))
    m2(n) = Gamma(a0) sum_k Gamma(n + alpha_k - 1) (a0 - alpha_k)
            / (Gamma(alpha_k) Gamma(n + a0))
    """
    a0 = float(alpha.sum())
    nf = n.astype(float)
    base = log_gamma(a0) - log_gamma(a0 + nf)
    lg_alpha = log_gamma(alpha)
    m1 = np.exp(
        base[:, None] + log_gamma(alpha[None, :] + nf[:, None]) - lg_alpha[None, :]
    ).sum(axis=1)
    m2 = (
        (a0 - alpha[None, :])
        * np.exp(base[:, None] + log_gamma(nf[:, None] + alpha[None, :] - 1.0) - lg_alpha[None, :])
    ).sum(axis=1)
    return m1, m2


def _risk_from_cells(t1: np.ndarray, t2: np.ndarray) -> RiskValue:
    c1 = float(np.mean(t1))
    c2 = float(np.mean(t2))
    return RiskValue(value=float(np.mean(t1 + t2)), scenario1=c1, scenario8=c2)


def local_risk(cell, params: PrivacyParams) -> LocalRisk:
    """Event probability for one cell with fixed observed counts.

    Accepts a CellRecord or a counts vector. The value is the exact
    probability (over the noise alone) that the sanitized support collapses
    onto a single occupied category: the disjoint union over occupied k of
    "count k stays present, every other count drops below threshold". On a
    homogeneous cell that IS the disclosure probability (exact=True); on a
    heterogeneous cell it upper-bounds the fraction of records actually
    disclosed, since only the collapsed-to category's records leak.
    """
    arr = np.asarray(cell.counts if hasattr(cell, "counts") else cell)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("counts must be a vector with at least 2 categories")
    if not np.all(arr >= 0) or arr.sum() < 1:
        raise ValueError("counts must be non-negative with at least one record")
    arr = arr.astype(np.int64)
    nm = noise_model(params)
    stay = nm.sf(0.5 - arr.astype(float))
    gone = nm.cdf(0.5 - arr.astype(float))
    support = np.nonzero(arr >= 1)[0]
    total = 0.0
    for k in support:
        others = np.delete(gone, k)
        total += float(stay[k]) * float(np.prod(others))
    if support.size == 1:
        return LocalRisk(value=total, scenario1=total, scenario8=0.0, exact=True)
    return LocalRisk(value=total, scenario1=0.0, scenario8=total, exact=False)


def average_local_risk(table: FrequencyTable, params: PrivacyParams) -> RiskValue:
    """Cell average of the exact local event probability."""
    nm = noise_model(params)
    counts = table.counts_matrix().astype(float)
    stay = nm.sf(0.5 - counts)
    gone = nm.cdf(0.5 - counts)
    m, k = counts.shape
    vals = np.zeros(m)
    for j in range(k):
        others = np.prod(np.delete(gone, j, axis=1), axis=1)
        vals += np.where(counts[:, j] >= 1, stay[:, j] * others, 0.0)
    homog = (counts >= 1).sum(axis=1) == 1
    return RiskValue(
        value=float(np.mean(vals)),
        scenario1=float(np.mean(np.where(homog, vals, 0.0))),
        scenario8=float(np.mean(np.where(homog, 0.0, vals))),
    )


def expected_risk(table: FrequencyTable, params: PrivacyParams) -> RiskValue:
    """Two-term expected measure with plug-in cell proportions, general K."""
    nm = noise_model(params)
    counts = table.counts_matrix()
    n = table.sizes()
    m1, m2 = _plugin_moments(counts.astype(float), n.astype(float))
    f1, f2 = _tail_factors(nm, table.n_categories, n.astype(float))
    return _risk_from_cells(m1 * f1, m2 * f2)


def expected_risk_cells(table: FrequencyTable, params: PrivacyParams) -> np.ndarray:
    """Per-cell two-term expected values, before averaging over cells."""
    nm = noise_model(params)
    counts = table.counts_matrix()
    n = table.sizes()
    m1, m2 = _plugin_moments(counts.astype(float), n.astype(float))
    f1, f2 = _tail_factors(nm, table.n_categories, n.astype(float))
    return m1 * f1 + m2 * f2


def expected_risk_k2(table: FrequencyTable, params: PrivacyParams) -> RiskValue:
    """Printed two-category form of the expected measure."""
    if table.n_categories != 2:
        raise ValueError("expected_risk_k2 requires exactly 2 categories")
    nm = noise_model(params)
    counts = table.counts_matrix().astype(float)
    n = table.sizes().astype(float)
    p = counts[:, 0] / n
    q = counts[:, 1] / n
    stay_absent = nm.cdf(0.5)
    drop_one = nm.cdf(-0.5)
    t1 = (p**n + q**n) * stay_absent * nm.sf(0.5 - n)
    t2 = np.where(
        n >= 2,
        (p ** (n - 1) * q + q ** (n - 1) * p) * nm.sf(1.5 - n) * drop_one,
        0.0,
    )
    return _risk_from_cells(t1, t2)


def homogeneous_risk(table: FrequencyTable, params: PrivacyParams) -> RiskValue:
    """Exact average risk for an all-homogeneous table.

    Every cell's value is the probability that its single occupied
    category stays present while the other K - 1 stay absent; the average
    lies strictly between 2**-K and 1.
    """
    for cell in table.cells:
        if not classify_cell(cell).homogeneous:
            raise ValueError(f"cell {cell.key!r} is heterogeneous")
    nm = noise_model(params)
    n = table.sizes().astype(float)
    t1 = nm.cdf(0.5) ** (table.n_categories - 1) * nm.sf(0.5 - n)
    return RiskValue(value=float(np.mean(t1)), scenario1=float(np.mean(t1)), scenario8=0.0)


def shrinkage_risk(sizes, alpha, params: PrivacyParams) -> RiskValue:
    """Expected measure with Dirichlet(alpha)-averaged proportions."""
    n = _check_sizes(sizes)
    alpha = _check_alpha(alpha)
    nm = noise_model(params)
    m1, m2 = _dirichlet_moments(n, alpha)
    f1, f2 = _tail_factors(nm, alpha.size, n.astype(float))
    return _risk_from_cells(m1 * f1, m2 * f2)


def shrinkage_risk_k2(sizes, alpha, params: PrivacyParams) -> RiskValue:
    """Printed two-category shrinkage form via Beta-function ratios."""
    n = _check_sizes(sizes).astype(float)
    alpha = _check_alpha(alpha)
    if alpha.size != 2:
        raise ValueError("shrinkage_risk_k2 requires exactly 2 categories")
    a1, a2 = float(alpha[0]), float(alpha[1])
    log_b0 = log_beta(a1, a2)
    nm = noise_model(params)
    b1 = np.exp(log_beta(n + a1, a2) - log_b0) + np.exp(log_beta(a1, n + a2) - log_b0)
    t1 = b1 * nm.cdf(0.5) * nm.sf(0.5 - n)
    b2 = np.exp(log_beta(a1 + n - 1, a2 + 1) - log_b0) + np.exp(
        log_beta(a1 + 1, n + a2 - 1) - log_b0
    )
    t2 = np.where(n >= 2, b2 * nm.sf(1.5 - n) * nm.cdf(-0.5), 0.0)
    return _risk_from_cells(t1, t2)


def _series_weights(size_model: CellSizeModel, zero_truncated: bool):
    """Sizes 1..N covering all but TAIL_MASS of the model's mass."""
    n_max = size_model.tail_quantile(TAIL_MASS)
    if n_max > MAX_SERIES_TERMS:
        raise ValueError(
            f"size-model series needs {n_max} terms, exceeding the cap of {MAX_SERIES_TERMS}"
        )
    n = np.arange(1, n_max + 1, dtype=np.int64)
    w = size_model.pmf(n)
    if zero_truncated:
        w = w / (1.0 - size_model.zero_mass())
    return n, w


def global_risk(
    alpha,
    size_model: CellSizeModel,
    params: PrivacyParams,
    *,
    zero_truncated: bool = False,
) -> RiskValue:
    """Shrinkage measure integrated over the cell-size model.

    The series runs over n >= 1 with the model's raw probabilities by
    default; with ``zero_truncated=True`` the weights are renormalized by
    the mass on n >= 1, matching a sampler that rejects empty cells.
    """
    alpha = _check_alpha(alpha)
    nm = noise_model(params)
    n, w = _series_weights(size_model, zero_truncated)
    m1, m2 = _dirichlet_moments(n, alpha)
    f1, f2 = _tail_factors(nm, alpha.size, n.astype(float))
    c1 = float(np.sum(w * m1 * f1))
    c2 = float(np.sum(w * m2 * f2))
    return RiskValue(value=c1 + c2, scenario1=c1, scenario8=c2, truncated_at=int(n[-1]))


def global_risk_k2(
    alpha,
    size_model: CellSizeModel,
    params: PrivacyParams,
    *,
    zero_truncated: bool = False,
) -> RiskValue:
    """Printed two-category global form via Beta-function ratios."""
    alpha = _check_alpha(alpha)
    if alpha.size != 2:
        raise ValueError("global_risk_k2 requires exactly 2 categories")
    n, w = _series_weights(size_model, zero_truncated)
    nf = n.astype(float)
    a1, a2 = float(alpha[0]), float(alpha[1])
    log_b0 = log_beta(a1, a2)
    nm = noise_model(params)
    b1 = np.exp(log_beta(nf + a1, a2) - log_b0) + np.exp(log_beta(a1, nf + a2) - log_b0)
    t1 = b1 * nm.cdf(0.5) * nm.sf(0.5 - nf)
    b2 = np.exp(log_beta(a1 + nf - 1, a2 + 1) - log_b0) + np.exp(
        log_beta(a1 + 1, nf + a2 - 1) - log_b0
    )
    t2 = np.where(nf >= 2, b2 * nm.sf(1.5 - nf) * nm.cdf(-0.5), 0.0)
    c1 = float(np.sum(w * t1))
    c2 = float(np.sum(w * t2))
    return RiskValue(value=c1 + c2, scenario1=c1, scenario8=c2, truncated_at=int(n[-1]))


def global_risk_variant(
    size_model: CellSizeModel,
    params: PrivacyParams,
    n_categories: int,
    *,
    zero_truncated: bool = False,
) -> RiskValue:
    """Global measure under the degenerate always-homogeneous prior.

    Only component 1 survives: every drawn cell has all n records on one
    category, so the value is the size-weighted sum of
    cdf(0.5)**(K-1) * sf(0.5 - n).
    """
    if n_categories < 2:
        raise ValueError("n_categories must be at least 2")
    nm = noise_model(params)
    n, w = _series_weights(size_model, zero_truncated)
    t1 = nm.cdf(0.5) ** (n_categories - 1) * nm.sf(0.5 - n.astype(float))
    c1 = float(np.sum(w * t1))
    return RiskValue(value=c1, scenario1=c1, scenario8=0.0, truncated_at=int(n[-1]))


def scenario8_peak_epsilon(n) -> float:
    """Epsilon maximizing the become-homogeneous noise factor for size n.

    The factor (1 - 0.5 e^{eps (1.5 - n)}) e^{-0.5 eps} has its interior
    maximum at ln(n - 1) / (n - 1.5) for n > 2; at n = 2 it is monotone
    decreasing in eps and has no interior peak.
    """
    n = float(n)
    if n <= 2:
        raise ValueError("the factor has no interior maximum for n <= 2")
    return math.log(n - 1.0) / (n - 1.5)


@dataclass(frozen=True)
class RiskPoint:
    epsilon: float
    delta: float | None
    mechanism: str
    measure: str
    value: float
    scenario1: float
    scenario8: float


def evaluate_measure(
    measure: str,
    params: PrivacyParams,
    *,
    table: FrequencyTable | None = None,
    alpha=None,
    size_model: CellSizeModel | None = None,
    n_categories: int | None = None,
    zero_truncated: bool = False,
) -> RiskValue:
    """Dispatch a measure name to its closed form."""
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    if measure == "local":
        if table is None:
            raise ValueError("measure 'local' requires a table")
        return average_local_risk(table, params)
    if measure == "expected":
        if table is None:
            raise ValueError("measure 'expected' requires a table")
        return expected_risk(table, params)
    if measure == "shrinkage":
        if table is None or alpha is None:
            raise ValueError("measure 'shrinkage' requires a table and alpha")
        return shrinkage_risk(table.sizes(), alpha, params)
    if measure == "global":
        if alpha is None or size_model is None:
            raise ValueError("measure 'global' requires alpha and a size model")
        return global_risk(alpha, size_model, params, zero_truncated=zero_truncated)
    if size_model is None or n_categories is None:
        raise ValueError("measure 'global_variant' requires a size model and n_categories")
    return global_risk_variant(size_model, params, n_categories, zero_truncated=zero_truncated)


def risk_curve(
    measure: str,
    params_list,
    *,
    table: FrequencyTable | None = None,
    alpha=None,
    size_model: CellSizeModel | None = None,
    n_categories: int | None = None,
    zero_truncated: bool = False,
    threads: int = 1,
) -> list[RiskPoint]:
    """Evaluate one measure across a list of privacy settings.

    Rows come back sorted by (epsilon, delta). Evaluation may fan out over
    a thread pool; results are assembled in sorted order either way.
    """
    ordered = sorted(
        params_list, key=lambda p: (p.epsilon, -1.0 if p.delta is None else p.delta)
    )

    def one(params: PrivacyParams) -> RiskPoint:
        rv = evaluate_measure(
            measure,
            params,
            table=table,
            alpha=alpha,
            size_model=size_model,
            n_categories=n_categories,
            zero_truncated=zero_truncated,
        )
        return RiskPoint(
            epsilon=params.epsilon,
            delta=params.delta,
            mechanism=params.mechanism,
            measure=measure,
            value=rv.value,
            scenario1=rv.scenario1,
            scenario8=rv.scenario8,
        )

    if threads > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, ordered))
    return [one(p) for p in ordered]


def _fmt12(x: float) -> str:
    return format(float(x), ".12g")


def curve_to_csv(points) -> str:
    lines = ["epsilon,delta,mechanism,measure,value,scenario1_component,scenario8_component"]
    for p in points:
        delta = "" if p.delta is None else _fmt12(p.delta)
        lines.append(
            ",".join(
                [
                    _fmt12(p.epsilon),
                    delta,
                    p.mechanism,
                    p.measure,
                    _fmt12(p.value),
                    _fmt12(p.scenario1),
                    _fmt12(p.scenario8),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_curve_csv(points, path) -> None:
    with open(path, "w") as fh:
        fh.write(curve_to_csv(points))


@dataclass(frozen=True)
class InversionResult:
    epsilon: float
    risk: float
    target: float
    measure: str
    mechanism: str
    delta: float | None


def invert_epsilon(
    measure: str,
    target: float,
    mechanism: str,
    *,
    delta: float | None = None,
    sensitivity: float = 1.0,
    table: FrequencyTable | None = None,
    alpha=None,
    size_model: CellSizeModel | None = None,
    n_categories: int | None = None,
    zero_truncated: bool = False,
    lo: float = 1e-4,
    hi: float = 1e4,
    grid: int = 200,
    tol: float = 1e-6,
) -> InversionResult:
    """Largest epsilon whose whole prefix keeps the risk at or below target.

    A log grid locates the last crossing (the first grid point whose risk
    exceeds the target, scanning upward); bisection then shrinks the
    bracket below ``tol``. Curves are scanned rather than assumed
    monotone, so a non-monotone mixed-table curve still gets its last safe
    prefix. Raises with both asymptote values when the target is outside
    the achievable range.
    """
    if not 0 < target < 1:
        raise ValueError("target risk must be in (0, 1)")
    if mechanism == "gaussian_adp":
        hi = min(hi, 1.0 - 1e-9)  # calibration domain ends at epsilon = 1
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi for the epsilon search range")

    def value_at(eps: float) -> float:
        params = PrivacyParams(mechanism, eps, delta, sensitivity)
        return evaluate_measure(
            measure,
            params,
            table=table,
            alpha=alpha,
            size_model=size_model,
            n_categories=n_categories,
            zero_truncated=zero_truncated,
        ).value

    grid_eps = np.geomspace(lo, hi, grid)
    values = [value_at(float(e)) for e in grid_eps]
    if values[0] > target:
        raise ValueError(
            f"target {target:g} is below the achievable floor: risk at epsilon={lo:g} "
            f"is already {values[0]:.6g}"
        )
    exceed = next((i for i, v in enumerate(values) if v > target), None)
    if exceed is None:
        raise ValueError(
            f"target {target:g} is never exceeded on the search range: risk at "
            f"epsilon={hi:g} is {values[-1]:.6g} (ceiling) and at epsilon={lo:g} "
            f"is {values[0]:.6g} (floor)"
        )
    lo_eps = float(grid_eps[exceed - 1])
    hi_eps = float(grid_eps[exceed])
    for _ in range(200):
        if hi_eps - lo_eps <= tol:
            break
        mid = math.sqrt(lo_eps * hi_eps)
        if value_at(mid) <= target:
            lo_eps = mid
        else:
            hi_eps = mid
    return InversionResult(
        epsilon=lo_eps,
        risk=value_at(lo_eps),
        target=target,
        measure=measure,
        mechanism=mechanism,
        delta=delta,
    )
