"""Hyperparameter estimation for the shrinkage and global risk measures.

Two pieces get fitted from an observed table:

* a Dirichlet concentration vector for the within-cell category mix,
  by method of moments on the per-category dispersion across cells;
* a cell-size model (Poisson or negative binomial) for the global
  measure's series over sizes.

The Dirichlet estimator treats each category k separately. With pooled
proportion p_k and squared deviations s2_k = sum_i (n_ik - n_i p_k)^2,
a Dirichlet-multinomial with concentration A0 satisfies

    E[s2_k] = p_k (1 - p_k) (A0 N + Q) / (A0 + 1),

where N = sum_i n_i and Q = sum_i n_i^2. Inverting for A0 category by
category gives one implied concentration per category; their spread is
reported as a model-fit diagnostic, and alpha_k = p_k * A0^(k) is the
estimate. Plugging the estimate back reproduces each s2_k exactly, which
the tests assert as an invariant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.optimize import brentq

from .tabulation import FrequencyTable

SIZE_FAMILIES = ("poisson", "negbin")


def _counts_of(data) -> np.ndarray:
    if isinstance(data, FrequencyTable):
        return data.counts_matrix()
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError("need a cells-by-categories counts matrix with at least 2 of each")
    if not np.all(arr >= 0):
        raise ValueError("counts must be non-negative")
    return arr.astype(np.int64)


@dataclass(frozen=True, eq=False)
class DirichletFit:
    """Moment-matched concentration vector plus its consistency diagnostic.

    implied_concentrations[k] is the total concentration A0 that category
    k's dispersion alone implies; alpha_dot_spread is max minus min of
    those. A large spread means the single-prior model fits the table
    poorly, though the pooled estimate is still returned.
    """

    alpha: np.ndarray
    implied_concentrations: np.ndarray
    alpha_dot_spread: float
    p_hat: np.ndarray


def fit_dirichlet_mom(data) -> DirichletFit:
    """Method-of-moments Dirichlet fit from a counts matrix or table."""
    counts = _counts_of(data)
    m, k = counts.shape
    n = counts.sum(axis=1).astype(float)
    if np.any(n < 1):
        raise ValueError("every cell must contain at least one record")
    total = n.sum()
    big_q = float((n**2).sum())
    p_hat = counts.sum(axis=0) / total
    if np.any(p_hat <= 0):
        missing = int(np.argmin(p_hat))
        raise ValueError(
            f"category index {missing} never occurs; drop it before fitting"
        )
    fitted = n[:, None] * p_hat[None, :]
    s2 = ((counts - fitted) ** 2).sum(axis=0)
    pq = p_hat * (1.0 - p_hat)
    denom = s2 - pq * total
    numer = pq * big_q - s2
    if np.any(denom <= 0):
        bad = int(np.argmax(denom <= 0))
        raise ValueError(
            f"category index {bad} shows no overdispersion beyond multinomial "
            "sampling; a Dirichlet prior is not identifiable from these cells"
        )
    if np.any(numer <= 0):
        bad = int(np.argmax(numer <= 0))
        raise ValueError(
            f"category index {bad} is more dispersed than any Dirichlet-multinomial allows"
        )
    concentration = numer / denom
    alpha = p_hat * concentration
    spread = float(concentration.max() - concentration.min())
    return DirichletFit(
        alpha=alpha,
        implied_concentrations=concentration,
        alpha_dot_spread=spread,
        p_hat=p_hat,
    )


def fit_beta_mom(data) -> DirichletFit:
    """Two-category special case; identical to the Dirichlet fit at K=2."""
    counts = _counts_of(data)
    if counts.shape[1] != 2:
        raise ValueError("fit_beta_mom requires exactly 2 categories")
    return fit_dirichlet_mom(counts)


@dataclass(frozen=True)
class CellSizeModel:
    """Count distribution for cell sizes, wrapping a frozen pmf family.

    For the ``poisson`` family ``lam`` is the rate. For ``negbin`` it is
    the success probability of scipy's nbinom and ``r`` the shape, chosen
    so the moments match the data.
    """

    family: str
    lam: float
    r: float | None = None

    def __post_init__(self):
        if self.family not in SIZE_FAMILIES:
            raise ValueError(f"unknown size family {self.family!r}")
        if self.family == "poisson":
            if not self.lam > 0:
                raise ValueError("poisson rate must be positive")
            if self.r is not None:
                raise ValueError("poisson model takes no shape parameter")
        else:
            if not 0 < self.lam < 1:
                raise ValueError("negbin success probability must lie in (0, 1)")
            if self.r is None or not self.r > 0:
                raise ValueError("negbin model needs a positive shape r")

    def _dist(self):
        if self.family == "poisson":
            return stats.poisson(self.lam)
        return stats.nbinom(self.r, self.lam)

    def pmf(self, n) -> np.ndarray:
        return self._dist().pmf(np.asarray(n))

    def zero_mass(self) -> float:
        return float(self._dist().pmf(0))

    def mean(self) -> float:
        return float(self._dist().mean())

    def tail_quantile(self, mass: float) -> int:
        """Smallest N with P(X > N) < mass."""
        dist = self._dist()
        n = max(int(dist.isf(mass)), 1)
        while dist.sf(n) >= mass:
            n += 1
        return n

    def truncated_ppf(self, u) -> np.ndarray:
        """Quantiles of the size distribution conditioned on X >= 1.

        Maps uniforms on (0, 1) through the zero-truncated cdf, so the
        result is distributionally identical to rejecting zero draws.
        """
        dist = self._dist()
        f0 = float(dist.cdf(0))
        shifted = f0 + np.asarray(u) * (1.0 - f0)
        return np.maximum(dist.ppf(shifted), 1.0).astype(np.int64)


def _check_size_sample(sizes) -> np.ndarray:
    arr = np.asarray(sizes)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("need at least 2 cell sizes to fit a size model")
    if not np.all(arr >= 1):
        raise ValueError("cell sizes must be >= 1")
    return arr.astype(float)


def fit_poisson(sizes, *, zero_truncated: bool = False) -> CellSizeModel:
    """Moment fit of the Poisson size model.

    Plain fit sets the rate to the sample mean. The zero-truncated fit
    accounts for empty cells never being observed, solving
    lam / (1 - exp(-lam)) = mean for lam; that requires mean > 1.
    """
    arr = _check_size_sample(sizes)
    m = float(arr.mean())
    if not zero_truncated:
        return CellSizeModel("poisson", m)
    if m <= 1.0:
        raise ValueError(
            "zero-truncated fit needs a sample mean above 1; every positive rate "
            "gives a truncated mean above 1"
        )
    lam = brentq(lambda x: x / (1.0 - np.exp(-x)) - m, 1e-12, m)
    return CellSizeModel("poisson", float(lam))


def fit_negbin(sizes) -> CellSizeModel:
    """Moment fit of the negative binomial size model.

    Matches mean m and variance v (ddof=1): success probability m / v and
    shape m^2 / (v - m). Requires overdispersion; if v <= m the family
    degenerates and a Poisson fit is the right model instead.
    """
    arr = _check_size_sample(sizes)
    m = float(arr.mean())
    v = float(arr.var(ddof=1))
    if v <= m:
        raise ValueError(
            f"sample variance {v:g} does not exceed the mean {m:g}; "
            "use the poisson family instead"
        )
    p = m / v
    r = m * p / (1.0 - p)
    return CellSizeModel("negbin", p, r)


def dirichlet_to_json(fit: DirichletFit) -> str:
    payload = {
        "alpha": [float(a) for a in fit.alpha],
        "alpha_dot_spread": float(fit.alpha_dot_spread),
    }
    return json.dumps(payload, separators=(",", ":")) + "\n"


def size_model_to_json(model: CellSizeModel) -> str:
    payload: dict = {"family": model.family, "lambda": float(model.lam)}
    if model.r is not None:
        payload["r"] = float(model.r)
    return json.dumps(payload, separators=(",", ":")) + "\n"


def size_model_from_json(text: str) -> CellSizeModel:
    obj = json.loads(text)
    try:
        family = obj["family"]
        lam = float(obj["lambda"])
    except KeyError as exc:
        raise ValueError(f"size-model JSON is missing field {exc.args[0]!r}") from None
    r = obj.get("r")
    return CellSizeModel(family, lam, None if r is None else float(r))
