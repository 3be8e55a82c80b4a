# app/core/ukf.py
"""Unscented Kalman filter over x = [theta, v, omega] with a channel mask."""
from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.core import robot
from app.core.exceptions import CovarianceError, InsufficientChannelsError, NumericalError
from app.core.measurement import measure_state, restrict
from app.core.models import STATE_DIM, GaussianBelief, RobotParams, UkfConfig

logger = logging.getLogger(__name__)

JITTER = 1e-9

ProcessFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
MeasurementFn = Callable[[np.ndarray], np.ndarray]


def weights(config: UkfConfig, n: int = STATE_DIM) -> Tuple[np.ndarray, np.ndarray]:
    lam = config.alpha ** 2 * (n + config.kappa) - n
    Wm = np.full(2 * n + 1, 0.5 / (n + lam))
    Wc = Wm.copy()
    Wm[0] = lam / (n + lam)
    Wc[0] = Wm[0] + 1 - config.alpha ** 2 + config.beta
    return Wm, Wc


def _robust_cholesky(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        logger.warning("covariance not positive definite, adding jitter")
    try:
        return np.linalg.cholesky(P + JITTER * np.eye(P.shape[0]))
    except np.linalg.LinAlgError as e:
        raise CovarianceError(f"covariance could not be factorized: {e}") from e


def sigma_points(belief: GaussianBelief, config: UkfConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """2n+1 points as rows, with mean and covariance weights."""
    n = belief.mean.shape[0]
    lam = config.alpha ** 2 * (n + config.kappa) - n
    S = _robust_cholesky((n + lam) * belief.cov)
    X = np.empty((2 * n + 1, n))
    X[0] = belief.mean
    X[1:n + 1] = belief.mean + S.T
    X[n + 1:] = belief.mean - S.T
    Wm, Wc = weights(config, n)
    return X, Wm, Wc


def _moments(points: np.ndarray, Wm: np.ndarray, Wc: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = Wm @ points
    dev = points - mean
    return mean, (Wc[:, None] * dev).T @ dev


def _lift(R_process: np.ndarray) -> np.ndarray:
    R_process = np.asarray(R_process, dtype=float)
    if R_process.shape == (STATE_DIM, STATE_DIM):
        return R_process
    R = np.zeros((STATE_DIM, STATE_DIM))
    R[1:, 1:] = R_process
    return R


def predict(
    belief: GaussianBelief,
    tau: np.ndarray,
    dt: float,
    R_process: np.ndarray,
    config: UkfConfig,
    params: Optional[RobotParams] = None,
    process: Optional[ProcessFn] = None,
) -> Tuple[GaussianBelief, np.ndarray]:
    """Propagate sigma points through the discretized dynamics; R is added as is."""
    if process is None:
        if params is None:
            raise ValueError("params are required for the robot process model")
        process = lambda x, u: robot.discrete_dynamics(x, u, dt, params)  # noqa: E731
    X, Wm, Wc = sigma_points(belief, config)
    tau = np.asarray(tau, dtype=float)
    X_prop = np.array([process(x, tau) for x in X])
    if not np.all(np.isfinite(X_prop)):
        raise NumericalError("sigma point propagation became non-finite")
    mean, cov = _moments(X_prop, Wm, Wc)
    cov = cov + _lift(R_process)
    return GaussianBelief(mean=mean, cov=0.5 * (cov + cov.T)), X_prop


def update(
    predicted: GaussianBelief,
    y_masked: np.ndarray,
    mask: Sequence[int],
    Q_meas: np.ndarray,
    config: UkfConfig,
    params: Optional[RobotParams] = None,
    measurement: Optional[MeasurementFn] = None,
) -> GaussianBelief:
    """Correct with the channels in `mask` only."""
    mask = tuple(int(i) for i in mask)
    if not mask:
        raise InsufficientChannelsError("empty mask, update skipped")
    if measurement is None:
        if params is None:
            raise ValueError("params are required for the robot measurement model")
        measurement = lambda x: measure_state(x, params)  # noqa: E731
    y_masked = np.asarray(y_masked, dtype=float)
    if y_masked.shape != (len(mask),):
        raise ValueError(f"expected {len(mask)} masked measurements, got {y_masked.shape}")

    X, Wm, Wc = sigma_points(predicted, config)
    idx = list(mask)
    Y = np.array([measurement(x)[idx] for x in X])
    y_hat = Wm @ Y
    dY = Y - y_hat
    dX = X - predicted.mean
    P_y = (Wc[:, None] * dY).T @ dY + restrict(Q_meas, idx)
    P_xy = (Wc[:, None] * dX).T @ dY

    try:
        factor = linalg.cho_factor(P_y)
    except linalg.LinAlgError:
        logger.warning("innovation covariance singular, adding jitter")
        try:
            P_y = P_y + JITTER * np.eye(len(idx))
            factor = linalg.cho_factor(P_y)
        except linalg.LinAlgError as e:
            raise CovarianceError(f"innovation covariance could not be factorized: {e}") from e
    K = linalg.cho_solve(factor, P_xy.T).T

    mean = predicted.mean + K @ (y_masked - y_hat)
    cov = predicted.cov - K @ P_y @ K.T
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise NumericalError("filter update became non-finite")
    return GaussianBelief(mean=mean, cov=0.5 * (cov + cov.T), mask=mask)


def kalman_predict(mean: np.ndarray, cov: np.ndarray, F: np.ndarray, Q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return F @ mean, F @ cov @ F.T + Q


def kalman_update(
    mean: np.ndarray, cov: np.ndarray, y: np.ndarray, Hm: np.ndarray, Rm: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    S = Hm @ cov @ Hm.T + Rm
    K = cov @ Hm.T @ np.linalg.inv(S)
    return mean + K @ (y - Hm @ mean), cov - K @ S @ K.T


class UnscentedKalmanFilter:
    """Single-owner filter; `step` runs predict then the masked update."""

    def __init__(
        self,
        belief: GaussianBelief,
        params: RobotParams,
        R_process: np.ndarray,
        Q_meas: np.ndarray,
        config: Optional[UkfConfig] = None,
    ) -> None:
        self.belief = belief
        self.params = params
        self.R_process = np.asarray(R_process, dtype=float)
        self.Q_meas = np.asarray(Q_meas, dtype=float)
        self.config = config or UkfConfig()
        self.prediction_only = False

    @property
    def mean(self) -> np.ndarray:
        return self.belief.mean

    def step(
        self,
        tau: Optional[np.ndarray],
        dt: float,
        y: np.ndarray,
        mask: Optional[Sequence[int]] = None,
        step_index: Optional[int] = None,
    ) -> GaussianBelief:
        """Predict with `tau` (skipped when None), then update on `mask`.

        Fewer than `min_channels` trusted channels leaves the prediction as is.
        """
        y = np.asarray(y, dtype=float)
        mask = tuple(range(y.shape[0])) if mask is None else tuple(mask)
        try:
            if tau is None:
                predicted = self.belief
            else:
                predicted, _ = predict(self.belief, tau, dt, self.R_process, self.config, self.params)
            if len(mask) < self.config.min_channels:
                self.prediction_only = True
                logger.debug("prediction-only step", extra={"step": step_index, "channels": len(mask)})
                self.belief = predicted.model_copy(update={"mask": mask})
            else:
                self.prediction_only = False
                self.belief = update(predicted, y[list(mask)], mask, self.Q_meas, self.config, self.params)
        except NumericalError as e:
            raise NumericalError(str(e), step=step_index) from e
        return self.belief
