# app/core/monitor.py
"""Residual monitor of horizon T.

The monitor checks the estimator's own history against the process model g
and the measurement model f. Both are injectable so the same code runs on the
nonlinear robot and on its linearization.
"""
from __future__ import annotations

from collections import deque
from typing import Callable, Deque, Optional, Sequence, Tuple

import numpy as np

from app.core import robot
from app.core.exceptions import HistoryMismatchError
from app.core.measurement import measure_state
from app.core.models import LinearizedModel, MonitorConfig, MonitorSettings, MonitorVerdict, RobotParams

EPS_FLOOR = 1e-9

MeasurementModel = Callable[[np.ndarray], np.ndarray]
ProcessModel = Callable[[np.ndarray, np.ndarray], np.ndarray]


def robot_models(params: RobotParams, dt: float) -> Tuple[MeasurementModel, ProcessModel]:
    """f and g of the discretized robot."""
    return (
        lambda x: measure_state(x, params),
        lambda x, tau: robot.discrete_dynamics(x, tau, dt, params),
    )


def calibrate(
    R_process: np.ndarray,
    Q_meas: np.ndarray,
    settings: Optional[MonitorSettings] = None,
) -> MonitorConfig:
    """k-sigma thresholds from the noise covariances."""
    settings = settings or MonitorSettings()
    k = settings.k_sigma
    eps_w = settings.eps_w or max(k * np.sqrt(np.trace(R_process)), EPS_FLOOR)
    eps_v = settings.eps_v or max(k * np.sqrt(np.trace(Q_meas)), EPS_FLOOR)
    per_channel = np.maximum(k * np.sqrt(np.clip(np.diag(Q_meas), 0.0, None)), EPS_FLOOR)
    return MonitorConfig(horizon=settings.horizon, eps_w=eps_w, eps_v=eps_v, per_channel_eps=per_channel)


def evaluate(
    Y_hist: Sequence[np.ndarray],
    U_hist: Sequence[np.ndarray],
    Xhat_hist: Sequence[np.ndarray],
    config: MonitorConfig,
    f: MeasurementModel,
    g: ProcessModel,
) -> MonitorVerdict:
    """Verdict over the last `config.horizon` aligned samples."""
    Y = np.atleast_2d(np.asarray(Y_hist, dtype=float))
    U = np.atleast_2d(np.asarray(U_hist, dtype=float))
    X = np.atleast_2d(np.asarray(Xhat_hist, dtype=float))
    if not (len(Y) == len(U) == len(X)):
        raise HistoryMismatchError(f"histories have lengths {len(Y)}, {len(U)}, {len(X)}")
    T = config.horizon
    if len(Y) < T:
        raise HistoryMismatchError(f"need {T} samples, got {len(Y)}")
    Y, U, X = Y[-T:], U[-T:], X[-T:]
    if Y.shape[1] != config.per_channel_eps.shape[0]:
        raise HistoryMismatchError("measurement width does not match the channel thresholds")

    meas_res = Y - np.array([f(x) for x in X])
    proc_ok = all(np.linalg.norm(X[j + 1] - g(X[j], U[j])) <= config.eps_w for j in range(T - 1))
    meas_ok = bool(np.all(np.linalg.norm(meas_res, axis=1) <= config.eps_v))
    if proc_ok and meas_ok:
        return MonitorVerdict(psi1=0)

    peak = np.abs(meas_res).max(axis=0)
    flagged = [i for i in range(len(peak)) if peak[i] > config.per_channel_eps[i]]
    flagged.sort(key=lambda i: (-peak[i], i))
    return MonitorVerdict(psi1=1, psi2=tuple(flagged))


class ResidualMonitor:
    """Rolling-window monitor fed one sample per step."""

    def __init__(self, config: MonitorConfig, f: MeasurementModel, g: ProcessModel) -> None:
        self.config = config
        self.f = f
        self.g = g
        self._y: Deque[np.ndarray] = deque(maxlen=config.horizon)
        self._u: Deque[np.ndarray] = deque(maxlen=config.horizon)
        self._x: Deque[np.ndarray] = deque(maxlen=config.horizon)

    def observe(self, y: np.ndarray, tau: np.ndarray, x_hat: np.ndarray) -> MonitorVerdict:
        """Record (y_j, tau_j, x_hat_j); safe until the window is full."""
        self._y.append(np.asarray(y, dtype=float))
        self._u.append(np.asarray(tau, dtype=float))
        self._x.append(np.asarray(x_hat, dtype=float))
        if len(self._y) < self.config.horizon:
            return MonitorVerdict(psi1=0)
        return evaluate(list(self._y), list(self._u), list(self._x), self.config, self.f, self.g)

    def reset(self) -> None:
        self._y.clear()
        self._u.clear()
        self._x.clear()


def false_alarm_rate(
    config: MonitorConfig,
    params: RobotParams,
    R_process: np.ndarray,
    Q_meas: np.ndarray,
    x0: np.ndarray,
    dt: float,
    windows: int,
    rng: np.random.Generator,
) -> float:
    """Share of clean windows flagged when the estimate equals the true state."""
    f, g = robot_models(params, dt)
    T = config.horizon
    tau = np.zeros(2)
    L_w = np.linalg.cholesky(R_process + EPS_FLOOR * np.eye(2))
    L_v = np.linalg.cholesky(Q_meas + EPS_FLOOR * np.eye(Q_meas.shape[0]))
    alarms = 0
    for _ in range(windows):
        x = np.asarray(x0, dtype=float)
        X, Y = [], []
        for _ in range(T):
            X.append(x)
            Y.append(f(x) + L_v @ rng.standard_normal(Q_meas.shape[0]))
            x = g(x, tau) + np.concatenate([[0.0], dt * (L_w @ rng.standard_normal(2))])
        alarms += evaluate(Y, [tau] * T, X, config, f, g).psi1
    return alarms / windows


def linearized_verdict(
    model: LinearizedModel,
    e: np.ndarray,
    config: MonitorConfig,
    noise: Optional[np.ndarray] = None,
) -> Tuple[MonitorVerdict, np.ndarray]:
    """Monitor verdict for a stacked attack on the linearized loop.

    Deviation coordinates with zero input and zero true deviation: block j of
    the data is C_d 0 + e_j (+ noise_j) and each sample is estimated by least
    squares against C_d. Returns the verdict over the whole stack and the
    per-block state estimates, whose drift is what the attack buys.
    """
    C_d, A_m, B_m = model.C_d, model.A_m, model.B_m
    p = C_d.shape[0]
    blocks = model.T_f + 1
    Y = np.asarray(e, dtype=float).reshape(blocks, p)
    if noise is not None:
        Y = Y + np.asarray(noise, dtype=float).reshape(blocks, p)
    X_hat = np.linalg.lstsq(C_d, Y.T, rcond=None)[0].T
    U = np.zeros((blocks, B_m.shape[1]))
    window = config.model_copy(update={"horizon": blocks})
    verdict = evaluate(Y, U, X_hat, window, lambda x: C_d @ x, lambda x, u: A_m @ x + B_m @ u)
    return verdict, X_hat
