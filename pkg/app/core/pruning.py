# app/core/pruning.py
"""Poisson-Binomial reliability and robust-support pruning.

The oracle agrees with the true support on channel i with probability p_i, so
the number of correctly localized channels is Poisson-Binomial. l_eta is the
largest count reached with probability at least eta; pruning keeps only the
l_eta best-scored channels that the oracle also calls safe.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import InsufficientChannelsError
from app.core.models import (
    EtaSummary,
    OracleReport,
    OracleStats,
    PmfVector,
    PrunedSupport,
    PruneMonteCarloConfig,
    PruneMonteCarloSummary,
)
from app.core.oracle import agreement_draw, calibrated_confidence, safe_indicator

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-12


def poisson_binomial_pmf(p: Sequence[float]) -> PmfVector:
    """PMF of the number of successes, by convolving two-point distributions."""
    r = np.array([1.0])
    for pi in np.asarray(p, dtype=float):
        if pi < 0 or pi > 1:
            raise ValueError(f"probability {pi} outside [0, 1]")
        nxt = np.zeros(len(r) + 1)
        nxt[:-1] = r * (1 - pi)
        nxt[1:] += r * pi
        r = nxt
    return PmfVector(r=r)


def _tails(r: np.ndarray) -> np.ndarray:
    # tails[k] = Pr(S >= k); summed from the top to keep small tails exact.
    return np.cumsum(np.asarray(r)[::-1])[::-1]


def tail_probability(r: PmfVector, k: int) -> float:
    if k <= 0:
        return 1.0
    if k >= len(r.r):
        return 0.0
    return float(_tails(r.r)[k])


def reliable_count(r: PmfVector, eta: float) -> int:
    """Largest k with Pr(S >= k) >= eta, or 0."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    tails = _tails(r.r)
    ok = np.flatnonzero(tails[1:] >= eta - TAIL_TOL)
    return int(ok[-1] + 1) if ok.size else 0


def _ranked(scores: np.ndarray) -> List[int]:
    # Descending score, ties to the lower index.
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def _prune_indices(q_hat: np.ndarray, scores: np.ndarray, l_eta: int) -> Tuple[int, ...]:
    top = _ranked(scores)[:l_eta]
    return tuple(sorted(i for i in top if q_hat[i] == 1))


def prune(
    report: OracleReport,
    p: np.ndarray,
    l_eta: int,
    eta: float,
    strict: bool = False,
) -> PrunedSupport:
    """Oracle safe set intersected with the l_eta highest p*s channels."""
    p = np.asarray(p, dtype=float)
    if p.shape != report.q_hat.shape:
        raise ValueError("p and the oracle report disagree in length")
    indices = _prune_indices(report.q_hat, p * report.s, l_eta)
    if not indices:
        if strict:
            raise InsufficientChannelsError(f"no trusted channel left (l_eta={l_eta})")
        logger.warning("pruning left no trusted channel", extra={"l_eta": l_eta})
    return PrunedSupport(indices=indices, eta=eta, l_eta=l_eta)


def exclusion_event(pruned: Iterable[int], attacked: Iterable[int]) -> bool:
    """True when no attacked channel survived pruning."""
    return not (set(pruned) & set(attacked))


def _binomial_margin(rate: float, n: int) -> float:
    return 3.0 * float(np.sqrt(max(rate * (1 - rate), 0.0) / n))


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    # Same stream as SeedSequence(seed).spawn(...)[trial], independent of worker split.
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def _run_trials(config: PruneMonteCarloConfig, trials: Sequence[int]) -> List[dict]:
    stats = OracleStats.uniform(config.m, config.p, config.s)
    scores = stats.p * stats.s
    etas = sorted(set(config.etas) | {config.eta})
    counts = {eta: reliable_count(poisson_binomial_pmf(stats.p), eta) for eta in etas}
    rows = []
    for t in trials:
        rng = _trial_rng(config.seed, t)
        if config.support_mode == "random":
            attacked = tuple(sorted(int(i) for i in rng.choice(config.m, size=len(config.attacked), replace=False)))
        else:
            attacked = tuple(config.attacked)
        q = safe_indicator(attacked, config.m)
        agree = agreement_draw(q, stats, rng)
        q_hat = np.where(agree, q, 1 - q)
        trial_scores = scores
        if config.confidence_gap > 0:
            trial_scores = stats.p * calibrated_confidence(agree, stats.s, config.confidence_gap, rng)
        for eta in etas:
            kept = _prune_indices(q_hat, trial_scores, counts[eta])
            hit = len(set(kept) & set(attacked))
            rows.append(
                {
                    "trial": t,
                    "eta": eta,
                    "l_eta": counts[eta],
                    "retained": len(kept),
                    "retained_attacked": hit,
                    "excluded": hit == 0,
                    "oracle_agreement": int(agree.sum()),
                }
            )
    return rows


def monte_carlo(config: PruneMonteCarloConfig, workers: int = 1) -> Tuple[PruneMonteCarloSummary, pd.DataFrame]:
    """Empirical check that pruning excludes every attacked channel with prob >= eta.

    Trials fan out over `workers` processes; each trial owns its RNG stream and
    results are merged by trial index, so the output does not depend on
    the worker count.
    """
    indices = list(range(config.trials))
    if workers <= 1:
        rows = _run_trials(config, indices)
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_trials, [config] * len(chunks), chunks))
        rows = [row for part in parts for row in part]

    frame = pd.DataFrame(rows).sort_values(["trial", "eta"], kind="mergesort").reset_index(drop=True)
    per_eta = []
    for eta, grp in frame.groupby("eta", sort=True):
        per_eta.append(
            EtaSummary(
                eta=float(eta),
                l_eta=int(grp["l_eta"].iloc[0]),
                exclusion_rate=float(grp["excluded"].mean()),
                mean_retained_attacked=float(grp["retained_attacked"].mean()),
                max_retained_attacked=int(grp["retained_attacked"].max()),
            )
        )
    main = next(s for s in per_eta if s.eta == config.eta)
    margin = _binomial_margin(config.eta, config.trials)
    summary = PruneMonteCarloSummary(
        trials=config.trials,
        eta=config.eta,
        l_eta=main.l_eta,
        exclusion_rate=main.exclusion_rate,
        margin=margin,
        meets_bound=main.exclusion_rate >= config.eta - margin,
        per_eta=per_eta,
    )
    logger.info(
        "prune monte carlo done",
        extra={"trials": config.trials, "eta": config.eta, "rate": main.exclusion_rate},
    )
    return summary, frame
