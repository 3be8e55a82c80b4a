# app/core/oracle.py
"""Simulated attack-localization oracle with prescribed agreement rates."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from app.core.models import OracleReport, OracleStats


def safe_indicator(attacked_support: Iterable[int], m: int) -> np.ndarray:
    """q_i = 1 for channels outside the attacked support."""
    q = np.ones(m, dtype=int)
    idx = list(attacked_support)
    if any(i < 0 or i >= m for i in idx):
        raise ValueError(f"attacked support {idx} outside 0..{m - 1}")
    q[idx] = 0
    return q


def agreement_draw(q: np.ndarray, stats: OracleStats, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli agreement flags; attacked channels use p, safe ones the safe rate."""
    q = np.asarray(q)
    rate = np.where(q == 1, stats.safe_rate, stats.p)
    return rng.random(q.shape[0]) < rate


def simulate(
    q: np.ndarray,
    stats: OracleStats,
    rng: np.random.Generator,
    confidence_gap: float = 0.0,
) -> OracleReport:
    """Oracle verdicts for true indicator q; a positive gap makes s follow correctness."""
    q = np.asarray(q, dtype=int)
    if q.shape != stats.p.shape:
        raise ValueError(f"indicator has {q.shape[0]} channels, stats {stats.p.shape[0]}")
    agree = agreement_draw(q, stats, rng)
    q_hat = np.where(agree, q, 1 - q)
    s = calibrated_confidence(agree, stats.s, confidence_gap, rng) if confidence_gap > 0 else stats.s
    return OracleReport(q_hat=q_hat, s=s)


def resample_confidence(s: np.ndarray, rng: np.random.Generator, concentration: float = 20.0) -> np.ndarray:
    """Per-step confidences from Beta(c*s, c*(1-s)); mean stays s."""
    s = np.asarray(s, dtype=float)
    out = s.copy()
    inner = (s > 0) & (s < 1)
    out[inner] = rng.beta(concentration * s[inner], concentration * (1 - s[inner]))
    return out


def calibrated_confidence(
    agree: np.ndarray,
    s: np.ndarray,
    gap: float,
    rng: np.random.Generator,
    concentration: float = 20.0,
) -> np.ndarray:
    """Confidences that track correctness.

    A channel the oracle got right draws its confidence around s + gap/2,
    a wrong one around s - gap/2; gap = 0 reduces to resample_confidence.
    """
    agree = np.asarray(agree, dtype=bool)
    s = np.asarray(s, dtype=float)
    mean = np.clip(np.where(agree, s + gap / 2, s - gap / 2), 0.01, 0.99)
    return rng.beta(concentration * mean, concentration * (1 - mean))
