"""Monte-Carlo oracles for the closed-form risk measures.

Every estimator here simulates the actual release process (draw a cell,
add mechanism noise, threshold at 0.5, classify the outcome) and never
touches the closed-form tail algebra, so agreement between the two routes
is a real check rather than a tautology.

Outcomes are classified into eight disjoint scenarios. For a cell that
was homogeneous at category k:

1. the support is exactly {k} (disclosure);
2. the support is a different single category;
3. the support has two or more categories;
4. the support is empty.

For a heterogeneous cell:

5. the support has two or more categories;
6. the support is empty;
7. the support is a single unoccupied category;
8. the support is a single occupied category (disclosure).

The disclosure event is scenario 1 or 8, and an estimate's value is
always (tally 1 + tally 8) / reps for the event estimators.

Reproducibility: work is cut into fixed blocks of ``BLOCK_REPS``
replicates. Block j always draws from its own counter-spaced substream of
the seed and block results are combined in index order, so estimates are
bit-identical for any thread count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import block_generator, check_seed
from .estimation import CellSizeModel
from .mechanisms import PRESENCE_THRESHOLD, PrivacyParams
from .risk import expected_risk_cells
from .tabulation import CellRecord, FrequencyTable, classify_cell

BLOCK_REPS = 1 << 16
_CHUNK_ELEMS = 1 << 21

THRESHOLD_MODES = ("hard", "soft")

_MODE_LABELS = {
    "hard": "plurality over the sanitized support, ties to the lowest category index;"
    " singleton support discloses the true share of its category",
    "soft": "noisy-count-proportional credit over the sanitized support",
}


@dataclass(frozen=True)
class McEstimate:
    """Simulation estimate with a conservative binomial standard error.

    scenarios maps "1".."8" to outcome tallies. Single-cell estimators
    classify one outcome per replicate, so their tallies sum to reps;
    table-level estimators classify every (replicate, cell) pair.
    """

    value: float
    se: float
    reps: int
    scenarios: dict
    mode: str | None = None


def classify_scenario(counts, support) -> int:
    """Scenario code (1-8) for original counts and a sanitized support set."""
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size < 2:
        raise ValueError("counts must be a vector with at least 2 categories")
    if counts.sum() < 1:
        raise ValueError("the original cell must be non-empty")
    support = sorted(set(int(k) for k in support))
    if support and not (0 <= support[0] and support[-1] < counts.size):
        raise ValueError("support indices out of range")
    occupied = np.nonzero(counts >= 1)[0]
    homog = occupied.size == 1
    if len(support) == 0:
        return 4 if homog else 6
    if len(support) >= 2:
        return 3 if homog else 5
    hit = counts[support[0]] >= 1
    if homog:
        return 1 if hit else 2
    return 8 if hit else 7


def _noise(gen, params: PrivacyParams, shape):
    if params.mechanism == "laplace":
        return gen.laplace(0.0, params.scale, shape)
    return gen.normal(0.0, params.scale, shape)


def _scenarios(homog, size, occ_at):
    """Scenario codes from homogeneity, support size, and whether the
    argmax support category is occupied (only read when size == 1)."""
    single = size == 1
    empty = size == 0
    return np.where(
        homog,
        np.where(single, np.where(occ_at, 1, 2), np.where(empty, 4, 3)),
        np.where(single, np.where(occ_at, 8, 7), np.where(empty, 6, 5)),
    )


def _classify_drawn(draws, noisy):
    occupied = draws >= 1
    present = noisy >= PRESENCE_THRESHOLD
    size = present.sum(axis=1)
    which = np.argmax(present, axis=1)
    occ_at = occupied[np.arange(draws.shape[0]), which]
    homog = occupied.sum(axis=1) == 1
    return _scenarios(homog, size, occ_at)


def _tally(scen) -> np.ndarray:
    return np.bincount(np.asarray(scen).ravel(), minlength=9)[1:9]


def _chunks(count: int, per: int):
    while count > 0:
        c = min(per, count)
        yield c
        count -= c


def _simulate(reps: int, seed: int, threads: int, block_fn, *, block_offset: int = 0):
    check_seed(seed)
    if not isinstance(reps, (int, np.integer)) or reps < 1:
        raise ValueError("reps must be a positive integer")
    blocks = []
    j, left = 0, int(reps)
    while left > 0:
        c = min(BLOCK_REPS, left)
        blocks.append((block_offset + j, c))
        j += 1
        left -= c

    def run(block):
        idx, count = block
        return block_fn(block_generator(seed, idx), count)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    total = sum(p[0] for p in parts)
    tallies = np.sum(np.stack([p[1] for p in parts]), axis=0)
    value = total / reps
    se = math.sqrt(max(value * (1.0 - value), 0.0) / reps)
    scen = {str(i + 1): int(tallies[i]) for i in range(8)}
    return value, se, scen


def _cell_counts(cell) -> np.ndarray:
    if isinstance(cell, CellRecord):
        arr = np.asarray(cell.counts, dtype=np.int64)
    else:
        arr = np.asarray(cell)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("counts must be a vector with at least 2 categories")
    if np.any(arr < 0) or arr.sum() < 1:
        raise ValueError("counts must be non-negative with at least one record")
    return arr.astype(np.int64)


def mc_local(
    cell, params: PrivacyParams, reps: int, seed: int, *, threads: int = 1, block_offset: int = 0
) -> McEstimate:
    """Disclosure frequency with the observed counts held fixed.

    Pairs with risk.local_risk; accepts a CellRecord or a counts vector.
    ``block_offset`` shifts the substream index so several cells can share
    one seed without stream overlap.
    """
    counts = _cell_counts(cell)
    k = counts.size
    base = counts.astype(float)
    occupied = counts >= 1
    homog = int(occupied.sum()) == 1
    per = max(1, _CHUNK_ELEMS // k)

    def block(gen, count):
        val = 0.0
        tall = np.zeros(8, dtype=np.int64)
        for c in _chunks(count, per):
            noisy = base[None, :] + _noise(gen, params, (c, k))
            present = noisy >= PRESENCE_THRESHOLD
            size = present.sum(axis=1)
            occ_at = occupied[np.argmax(present, axis=1)]
            scen = _scenarios(homog, size, occ_at)
            val += float(np.count_nonzero((scen == 1) | (scen == 8)))
            tall += _tally(scen)
        return val, tall

    value, se, scen = _simulate(reps, seed, threads, block, block_offset=block_offset)
    return McEstimate(value, se, int(reps), scen)


def mc_expected(
    n: int,
    p,
    params: PrivacyParams,
    reps: int,
    seed: int,
    *,
    threads: int = 1,
    block_offset: int = 0,
) -> McEstimate:
    """Disclosure frequency for a size-n cell redrawn from Multinomial(n, p).

    Pairs with the per-cell two-term expected value (exactly for the
    scenario-1 component; the scenario-8 term is only a partial cover, see
    upper_bound_findings).
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("p must be a probability vector with at least 2 categories")
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("p must be non-negative and sum to 1")
    if n < 1:
        raise ValueError("cell size must be >= 1")
    k = p.size
    p = p / p.sum()
    per = max(1, _CHUNK_ELEMS // k)

    def block(gen, count):
        val = 0.0
        tall = np.zeros(8, dtype=np.int64)
        for c in _chunks(count, per):
            draws = gen.multinomial(int(n), p, size=c)
            noisy = draws + _noise(gen, params, (c, k))
            scen = _classify_drawn(draws, noisy)
            val += float(np.count_nonzero((scen == 1) | (scen == 8)))
            tall += _tally(scen)
        return val, tall

    value, se, scen = _simulate(reps, seed, threads, block, block_offset=block_offset)
    return McEstimate(value, se, int(reps), scen)


def mc_shrinkage(
    n: int, alpha, params: PrivacyParams, reps: int, seed: int, *, threads: int = 1
) -> McEstimate:
    """Disclosure frequency for a size-n cell with Dirichlet(alpha) mix.

    Draw order per replicate: mixing proportions, then counts, then noise.
    Pairs with risk.shrinkage_risk at a single size.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 2 or not np.all(alpha > 0):
        raise ValueError("alpha must be a positive vector with at least 2 entries")
    if n < 1:
        raise ValueError("cell size must be >= 1")
    k = alpha.size
    per = max(1, _CHUNK_ELEMS // k)

    def block(gen, count):
        val = 0.0
        tall = np.zeros(8, dtype=np.int64)
        for c in _chunks(count, per):
            p = gen.dirichlet(alpha, size=c)
            draws = gen.multinomial(int(n), p)
            noisy = draws + _noise(gen, params, (c, k))
            scen = _classify_drawn(draws, noisy)
            val += float(np.count_nonzero((scen == 1) | (scen == 8)))
            tall += _tally(scen)
        return val, tall

    value, se, scen = _simulate(reps, seed, threads, block)
    return McEstimate(value, se, int(reps), scen)


def mc_global(
    alpha,
    size_model: CellSizeModel,
    params: PrivacyParams,
    reps: int,
    seed: int,
    *,
    threads: int = 1,
) -> McEstimate:
    """Disclosure frequency with both the size and the mix drawn.

    Sizes come from the model conditioned on being at least 1 (empty cells
    never enter a table), so the matching closed form is risk.global_risk
    with zero_truncated=True; against the unnormalized series the estimate
    differs by the deterministic factor 1 - P(size = 0). Draw order per
    replicate: size, mix, counts, noise.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 2 or not np.all(alpha > 0):
        raise ValueError("alpha must be a positive vector with at least 2 entries")
    k = alpha.size
    per = max(1, _CHUNK_ELEMS // k)

    def block(gen, count):
        val = 0.0
        tall = np.zeros(8, dtype=np.int64)
        for c in _chunks(count, per):
            sizes = size_model.truncated_ppf(gen.random(c))
            p = gen.dirichlet(alpha, size=c)
            draws = gen.multinomial(sizes, p)
            noisy = draws + _noise(gen, params, (c, k))
            scen = _classify_drawn(draws, noisy)
            val += float(np.count_nonzero((scen == 1) | (scen == 8)))
            tall += _tally(scen)
        return val, tall

    value, se, scen = _simulate(reps, seed, threads, block)
    return McEstimate(value, se, int(reps), scen)


def mc_global_variant(
    size_model: CellSizeModel,
    params: PrivacyParams,
    n_categories: int,
    reps: int,
    seed: int,
    *,
    threads: int = 1,
) -> McEstimate:
    """Disclosure frequency when every drawn cell is homogeneous.

    The occupied category is uniform over the K categories; by symmetry of
    the noise the closed form does not depend on that choice. Pairs with
    risk.global_risk_variant(zero_truncated=True).
    """
    if n_categories < 2:
        raise ValueError("n_categories must be at least 2")
    k = int(n_categories)
    per = max(1, _CHUNK_ELEMS // k)

    def block(gen, count):
        val = 0.0
        tall = np.zeros(8, dtype=np.int64)
        for c in _chunks(count, per):
            sizes = size_model.truncated_ppf(gen.random(c))
            cats = gen.integers(0, k, size=c)
            draws = np.zeros((c, k), dtype=np.int64)
            draws[np.arange(c), cats] = sizes
            noisy = draws + _noise(gen, params, (c, k))
            scen = _classify_drawn(draws, noisy)
            val += float(np.count_nonzero((scen == 1) | (scen == 8)))
            tall += _tally(scen)
        return val, tall

    value, se, scen = _simulate(reps, seed, threads, block)
    return McEstimate(value, se, int(reps), scen)


def mc_threshold_dr(
    table: FrequencyTable,
    params: PrivacyParams,
    reps: int,
    seed: int,
    *,
    mode: str = "hard",
    threads: int = 1,
) -> McEstimate:
    """Record-level disclosure fraction under a support-collapse reading.

    Per replicate and cell: a singleton support {k} contributes the true
    share n_k / n (1 for a homogeneous cell); an empty support contributes
    0; a larger support contributes the plurality category's true share in
    ``hard`` mode (argmax of noisy counts over the support, ties to the
    lowest index) or the noisy-count-weighted average of true shares in
    ``soft`` mode. Cell contributions are averaged per replicate, then
    over replicates. Scenario tallies count (replicate, cell) pairs and
    sum to reps times the number of cells.
    """
    if mode not in THRESHOLD_MODES:
        raise ValueError(f"mode must be one of {THRESHOLD_MODES}")
    counts = table.counts_matrix()
    occupied = counts >= 1
    homog = occupied.sum(axis=1) == 1
    m, k = counts.shape
    frac = counts / counts.sum(axis=1, keepdims=True)
    base = counts.astype(float)
    per = max(1, _CHUNK_ELEMS // (m * k))
    rows = np.arange(m)

    def block(gen, count):
        val = 0.0
        tall = np.zeros(8, dtype=np.int64)
        for c in _chunks(count, per):
            noisy = base[None, :, :] + _noise(gen, params, (c, m, k))
            present = noisy >= PRESENCE_THRESHOLD
            size = present.sum(axis=2)
            if mode == "hard":
                which = np.argmax(np.where(present, noisy, -np.inf), axis=2)
                contrib = frac[rows[None, :], which] * (size > 0)
            else:
                w = np.where(present, np.maximum(noisy, 0.0), 0.0)
                denom = w.sum(axis=2, keepdims=True)
                wnorm = np.divide(w, denom, out=np.zeros_like(w), where=denom > 0)
                contrib = (frac[None, :, :] * wnorm).sum(axis=2)
            val += float(contrib.mean(axis=1).sum())
            occ_at = occupied[rows[None, :], np.argmax(present, axis=2)]
            scen = _scenarios(homog[None, :], size, occ_at)
            tall += _tally(scen)
        return val, tall

    value, se, scen = _simulate(reps, seed, threads, block)
    return McEstimate(value, se, int(reps), scen, mode=mode)


def upper_bound_findings(
    table: FrequencyTable,
    params: PrivacyParams,
    reps: int,
    seed: int,
    *,
    z_threshold: float = 3.0,
    threads: int = 1,
) -> dict:
    """Check the two-term expected value against simulation, cell by cell.

    For homogeneous cells the two-term value is exact. For heterogeneous
    cells its second term covers only one extreme configuration, and the
    simulated disclosure frequency can exceed it; each such cell (excess
    beyond z_threshold standard errors) is reported as a finding rather
    than treated as a simulation failure.
    """
    closed = expected_risk_cells(table, params)
    findings = []
    checked = 0
    for i, cell in enumerate(table.cells):
        if classify_cell(cell).homogeneous:
            continue
        checked += 1
        counts = np.asarray(cell.counts, dtype=float)
        est = mc_expected(
            int(counts.sum()),
            counts / counts.sum(),
            params,
            reps,
            seed,
            threads=threads,
            block_offset=i << 32,
        )
        excess = est.value - float(closed[i])
        if est.se > 0 and excess > z_threshold * est.se:
            findings.append(
                {
                    "key": list(cell.key),
                    "mc_value": est.value,
                    "closed_form": float(closed[i]),
                    "se": est.se,
                    "excess_in_se": excess / est.se,
                }
            )
    return {"checked_cells": checked, "reps": int(reps), "violations": findings}


def mc_to_json(est: McEstimate) -> str:
    payload: dict = {
        "value": est.value,
        "se": est.se,
        "reps": est.reps,
        "scenarios": {str(i): int(est.scenarios[str(i)]) for i in range(1, 9)},
    }
    if est.mode is not None:
        payload["mode"] = est.mode
        payload["definition"] = _MODE_LABELS[est.mode]
    return json.dumps(payload, separators=(",", ":")) + "\n"


def write_mc_json(est: McEstimate, path) -> None:
    with open(path, "w") as fh:
        fh.write(mc_to_json(est))
