# app/core/measurement.py
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from app.core.models import MeasurementFrame, RobotParams

CHANNEL_NAMES: Tuple[str, ...] = ("v", "omega", "wheel_plus", "wheel_minus", "xdot", "ydot")


def measurement_matrix(theta: float, params: RobotParams) -> np.ndarray:
    """6x2 map F(theta) with y = F(theta) q + noise."""
    c, s = np.cos(theta), np.sin(theta)
    k = 1.0 / (4.0 * params.r)
    return np.array(
        [
            [1.0, 0.0],
            [0.0, 1.0],
            [k, k * params.L],
            [k, -k * params.L],
            [c, -params.d * s],
            [s, params.d * c],
        ]
    )


def measure_state(x: np.ndarray, params: RobotParams) -> np.ndarray:
    """Noise-free f(x) for x = [theta, v, omega]."""
    x = np.asarray(x, dtype=float)
    return measurement_matrix(x[0], params) @ x[1:3]


def measure(
    theta: float,
    q: np.ndarray,
    params: RobotParams,
    noise_sample: Optional[np.ndarray] = None,
) -> np.ndarray:
    y = measurement_matrix(theta, params) @ np.asarray(q, dtype=float)
    if noise_sample is not None:
        y = y + np.asarray(noise_sample, dtype=float)
    return y


def measurement_jacobian(x0: np.ndarray, params: RobotParams) -> np.ndarray:
    """Analytic d f / d [theta, v, omega] at x0 (6x3)."""
    theta, v, omega = (float(a) for a in x0)
    c, s = np.cos(theta), np.sin(theta)
    d = params.d
    dtheta = np.array([0.0, 0.0, 0.0, 0.0, -v * s - d * omega * c, v * c - d * omega * s])
    return np.column_stack([dtheta, measurement_matrix(theta, params)])


def sample_measurement_noise(Q_meas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.multivariate_normal(np.zeros(Q_meas.shape[0]), Q_meas, method="eigh")


def inject(y: np.ndarray, e: np.ndarray) -> MeasurementFrame:
    y = np.asarray(y, dtype=float)
    e = np.asarray(e, dtype=float)
    if y.shape != e.shape:
        raise ValueError(f"attack has shape {e.shape}, measurement {y.shape}")
    support = tuple(int(i) for i in np.flatnonzero(e))
    return MeasurementFrame(y=y, e=e, attacked_support=support)


def restrict(Q_meas: np.ndarray, mask) -> np.ndarray:
    idx = np.asarray(mask, dtype=int)
    return Q_meas[np.ix_(idx, idx)]

