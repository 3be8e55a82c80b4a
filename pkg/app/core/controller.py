# app/core/controller.py
"""Two-layer tracking controller and reference trajectories.

The outer layer turns the task-space error into a desired body velocity q_d;
the inner layer computes wheel torques that drive q to q_d while feeding the
pose error back through C_bar^T.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from app.core import robot
from app.core.models import (
    BodyState,
    ControlGains,
    Pose,
    ReferenceSample,
    RobotParams,
    TrackingError,
    TrajectoryShape,
)

# Heading branch cut for the lemniscate; the path never points straight up.
_LEMNISCATE_CUT = np.pi / 2


def tracking_error(state_est: BodyState, pose_est: Pose, ref: ReferenceSample) -> TrackingError:
    # e_theta stays unwrapped; references are generated continuously.
    return TrackingError(e_theta=state_est.theta - ref.theta_d, e_z=pose_est.z - ref.z_d)


def desired_velocity(
    theta: float,
    q: np.ndarray,
    e_z: np.ndarray,
    ref: ReferenceSample,
    gains: ControlGains,
    params: RobotParams,
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (q_d, q_d_dot); q_d_dot uses the current q as a feedback term."""
    q = np.asarray(q, dtype=float)
    e_z = np.asarray(e_z, dtype=float)
    c_inv = robot.c_inverse(theta, params)
    c_inv_dot = robot.c_inverse_dot(theta, q[1], params)
    k_e = gains.k_e

    q_d = c_inv @ (ref.z_d_dot - k_e * e_z)
    inner = ref.z_d_ddot + (k_e * np.eye(2) + robot.c_matrix(theta, params) @ c_inv_dot) @ ref.z_d_dot
    q_d_dot = -k_e * (c_inv_dot @ e_z + q) + c_inv @ inner
    return q_d, q_d_dot


def control_law(
    state_est: BodyState,
    pose_est: Pose,
    ref: ReferenceSample,
    gains: ControlGains,
    params: RobotParams,
) -> Tuple[np.ndarray, np.ndarray, TrackingError]:
    """Torque plus the intermediate q_d and tracking error, for logging."""
    err = tracking_error(state_est, pose_est, ref)
    q = state_est.q
    q_d, q_d_dot = desired_velocity(state_est.theta, q, err.e_z, ref, gains, params)

    u = -gains.k_q * (q - q_d) + q_d_dot - robot.c_bar(state_est.theta, params).T @ err.as_vector()
    M = robot.mass_matrix(params)
    D = robot.damping_matrix(params, q[1])
    tau = np.linalg.solve(robot.input_matrix(params), M @ u + D @ q)
    return tau, q_d, err


def control_torque(
    state_est: BodyState,
    pose_est: Pose,
    ref: ReferenceSample,
    gains: ControlGains,
    params: RobotParams,
) -> np.ndarray:
    return control_law(state_est, pose_est, ref, gains, params)[0]


def lyapunov(q: np.ndarray, q_d: np.ndarray, err: TrackingError) -> float:
    q_tilde = np.asarray(q) - np.asarray(q_d)
    return 0.5 * float(q_tilde @ q_tilde) + 0.5 * float(err.as_vector() @ err.as_vector())


def lyapunov_rate(q_tilde: np.ndarray, e_z: np.ndarray, gains: ControlGains) -> float:
    q_tilde = np.asarray(q_tilde)
    e_z = np.asarray(e_z)
    return -gains.k_q * float(q_tilde @ q_tilde) - gains.k_e * float(e_z @ e_z)


# ---------- references ----------

def _continuous_heading(xdot: float, ydot: float, cut: float) -> float:
    return cut - 2 * np.pi + np.mod(np.arctan2(ydot, xdot) - cut, 2 * np.pi)


def reference_trajectory(kind: str, t: float, shape: Optional[TrajectoryShape] = None) -> ReferenceSample:
    """Analytic reference sample; theta_d follows the path tangent."""
    if kind not in ("circle", "lemniscate", "line"):
        raise ValueError(f"unknown trajectory kind: {kind!r}")
    shape = shape or TrajectoryShape(kind=kind)
    if kind == "circle":
        rho, w = shape.radius, shape.rate
        c, s = np.cos(w * t), np.sin(w * t)
        return ReferenceSample(
            theta_d=w * t + np.pi / 2,
            z_d=[rho * c, rho * s],
            z_d_dot=[-rho * w * s, rho * w * c],
            z_d_ddot=[-rho * w ** 2 * c, -rho * w ** 2 * s],
            omega_d=w,
        )
    if kind == "lemniscate":
        a, w = shape.size, shape.rate
        s1, c1 = np.sin(w * t), np.cos(w * t)
        s2, c2 = np.sin(2 * w * t), np.cos(2 * w * t)
        vel = np.array([a * w * c1, a * w * c2])
        acc = np.array([-a * w ** 2 * s1, -2 * a * w ** 2 * s2])
        speed2 = float(vel @ vel)
        return ReferenceSample(
            theta_d=_continuous_heading(vel[0], vel[1], _LEMNISCATE_CUT),
            z_d=[a * s1, 0.5 * a * s2],
            z_d_dot=vel,
            z_d_ddot=acc,
            omega_d=(vel[0] * acc[1] - vel[1] * acc[0]) / speed2,
        )
    u = np.array([np.cos(shape.heading), np.sin(shape.heading)])
    return ReferenceSample(
        theta_d=shape.heading,
        z_d=shape.speed * t * u,
        z_d_dot=shape.speed * u,
        z_d_ddot=np.zeros(2),
        omega_d=0.0,
    )


class HeadingReference:
    """Desired heading carried between steps.

    In "path" mode the analytic tangent heading is used as is. In "integrated"
    mode theta_d is the running integral of the second component of q_d, which
    makes V_dot = -k_q|q~|^2 - k_e|e_z|^2 exact along the continuous loop.
    """

    def __init__(self, mode: str, theta0: float) -> None:
        if mode not in ("path", "integrated"):
            raise ValueError(f"unknown heading mode: {mode!r}")
        self.mode = mode
        self.theta_d = float(theta0)
        self.omega_d = 0.0

    def apply(self, ref: ReferenceSample) -> ReferenceSample:
        if self.mode == "path":
            return ref
        return ref.model_copy(update={"theta_d": self.theta_d, "omega_d": self.omega_d})

    def advance(self, q_d: np.ndarray, dt: float) -> None:
        if self.mode == "integrated":
            self.omega_d = float(q_d[1])
            self.theta_d += dt * self.omega_d
