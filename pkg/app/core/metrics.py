# app/core/metrics.py
from __future__ import annotations

import numpy as np
import pandas as pd

from app.core.measurement import CHANNEL_NAMES
from app.core.models import MetricsSummary


def _rmse(a: pd.Series) -> float:
    arr = a.to_numpy(dtype=float)
    return float(np.sqrt(np.mean(arr ** 2))) if arr.size else 0.0


def _ratio(num: float, den: float) -> float:
    # Vacuous ratios count as perfect.
    return float(num / den) if den > 0 else 1.0


def compute_metrics(frame: pd.DataFrame, strategy: str, seed: int) -> MetricsSummary:
    """Flat summary of one closed-loop run."""
    e = frame[[f"e_{c}" for c in CHANNEL_NAMES]].to_numpy() != 0
    mask = frame[[f"mask_{c}" for c in CHANNEL_NAMES]].to_numpy() == 1
    q_hat = frame[[f"qhat_{c}" for c in CHANNEL_NAMES]].to_numpy()
    psi2 = frame[[f"psi2_{c}" for c in CHANNEL_NAMES]].to_numpy() == 1
    psi1 = frame["psi1"].to_numpy() == 1
    attacked_step = e.any(axis=1)
    oracle_on = frame["oracle_active"].to_numpy() == 1

    clean = ~attacked_step
    false_alarm = float(psi1[clean].mean()) if clean.any() else 0.0
    detection = float(psi1[attacked_step].mean()) if attacked_step.any() else 0.0

    flagged = q_hat[oracle_on] == 0
    truth = e[oracle_on]
    tp = float((flagged & truth).sum())
    precision = _ratio(tp, float(flagged.sum()))
    recall = _ratio(tp, float(truth.sum()))

    leaked = (mask & e).any(axis=1)
    exclusion = float((~leaked[attacked_step]).mean()) if attacked_step.any() else 1.0

    loc_hits = float((psi2 & e)[psi1].sum())
    localization = _ratio(loc_hits, float(psi2[psi1].sum()))

    return MetricsSummary(
        strategy=strategy,
        seed=seed,
        tracking_rmse=_rmse(frame["pos_err"]),
        v_rmse=_rmse(frame["v_hat"] - frame["v"]),
        omega_rmse=_rmse(frame["omega_hat"] - frame["omega"]),
        monitor_false_alarm_rate=false_alarm,
        monitor_detection_rate=detection,
        oracle_precision=precision,
        oracle_recall=recall,
        pruning_exclusion_rate=exclusion,
        localization_precision=localization,
        prediction_only_steps=int(frame["prediction_only"].sum()),
    )
