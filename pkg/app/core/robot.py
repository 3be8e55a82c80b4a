# app/core/robot.py
"""Differential-drive robot dynamics and kinematics.

State ordering used by the filter and the attack model is x = [theta, v, omega];
the planar pose z = [x, y] of the offset point is carried separately.
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from app.core.exceptions import NumericalError
from app.core.models import BodyState, Pose, RobotParams

logger = logging.getLogger(__name__)


def mass_matrix(params: RobotParams) -> np.ndarray:
    return np.diag([params.m, params.m * params.d ** 2 + params.J])


def damping_matrix(params: RobotParams, omega: float) -> np.ndarray:
    c = params.m * params.d * omega
    return np.array([[0.0, -c], [c, 0.0]])


def input_matrix(params: RobotParams) -> np.ndarray:
    return np.array([[1.0, 1.0], [params.L, -params.L]]) / params.r


def c_matrix(theta: float, params: RobotParams) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -params.d * s], [s, params.d * c]])


def c_inverse(theta: float, params: RobotParams) -> np.ndarray:
    # det C = d, so the inverse is closed form.
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s / params.d, c / params.d]])


def c_inverse_dot(theta: float, omega: float, params: RobotParams) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return omega * np.array([[-s, c], [-c / params.d, -s / params.d]])


def c_bar(theta: float, params: RobotParams) -> np.ndarray:
    """Stacked 3x2 map from q to [theta_dot; z_dot]."""
    return np.vstack([[0.0, 1.0], c_matrix(theta, params)])


def dynamics_rhs(state: BodyState, tau: np.ndarray, params: RobotParams) -> np.ndarray:
    return _qdot(state.q, np.asarray(tau, dtype=float), params)


def _qdot(q: np.ndarray, tau: np.ndarray, params: RobotParams) -> np.ndarray:
    M = mass_matrix(params)
    rhs = -damping_matrix(params, q[1]) @ q + input_matrix(params) @ tau
    return np.linalg.solve(M, rhs)


def kinematics_rhs(theta: float, q: np.ndarray, params: RobotParams) -> np.ndarray:
    return c_bar(theta, params) @ np.asarray(q, dtype=float)


def discrete_dynamics(x: np.ndarray, tau: np.ndarray, dt: float, params: RobotParams) -> np.ndarray:
    """One forward-Euler step of x = [theta, v, omega] with torque held over dt."""
    x = np.asarray(x, dtype=float)
    q = x[1:3]
    return np.concatenate([[x[0] + dt * q[1]], q + dt * _qdot(q, np.asarray(tau, dtype=float), params)])


def sample_process_noise(R_process: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.multivariate_normal(np.zeros(2), R_process, method="eigh")


def step(
    state: BodyState,
    pose: Pose,
    tau: np.ndarray,
    dt: float,
    noise_sample: Optional[np.ndarray],
    params: RobotParams,
    step_index: Optional[int] = None,
) -> Tuple[BodyState, Pose]:
    """Forward-Euler plant update; process noise enters on q as w*dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    tau = np.asarray(tau, dtype=float)
    q = state.q
    theta_next = state.theta + dt * q[1]
    q_next = q + dt * _qdot(q, tau, params)
    if noise_sample is not None:
        q_next = q_next + dt * np.asarray(noise_sample, dtype=float)
    z_next = pose.z + dt * (c_matrix(state.theta, params) @ q)

    if not (np.isfinite(theta_next) and np.all(np.isfinite(q_next)) and np.all(np.isfinite(z_next))):
        logger.error("plant diverged", extra={"step": step_index})
        raise NumericalError("plant state became non-finite", step=step_index)
    return BodyState(theta=float(theta_next), q=q_next), Pose(z=z_next)


def rk4_step(
    state: BodyState,
    pose: Pose,
    tau: np.ndarray,
    dt: float,
    params: RobotParams,
) -> Tuple[BodyState, Pose]:
    """Noise-free classical RK4 with zero-order-hold torque."""
    tau = np.asarray(tau, dtype=float)

    def f(s: np.ndarray) -> np.ndarray:
        theta, q = s[0], s[1:3]
        return np.concatenate([[q[1]], _qdot(q, tau, params), c_matrix(theta, params) @ q])

    s0 = np.concatenate([[state.theta], state.q, pose.z])
    k1 = f(s0)
    k2 = f(s0 + 0.5 * dt * k1)
    k3 = f(s0 + 0.5 * dt * k2)
    k4 = f(s0 + dt * k3)
    s1 = s0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return BodyState(theta=float(s1[0]), q=s1[1:3]), Pose(z=s1[3:5])
