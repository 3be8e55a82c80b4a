import numpy as np
import pytest

from app.core import controller, robot
from app.core.models import BodyState, ControlGains, Pose, ReferenceSample, TrajectoryShape


def _ref(theta_d=0.0, z_d=(0.0, 0.0), z_d_dot=(0.0, 0.0), z_d_ddot=(0.0, 0.0), omega_d=0.0):
    return ReferenceSample(theta_d=theta_d, z_d=z_d, z_d_dot=z_d_dot, z_d_ddot=z_d_ddot, omega_d=omega_d)


def test_tracking_error_components():
    err = controller.tracking_error(BodyState(theta=1.0, q=[0, 0]), Pose(z=[1.0, 2.0]), _ref(theta_d=0.5, z_d=(0.0, 2.0)))
    assert err.e_theta == pytest.approx(0.5)
    np.testing.assert_allclose(err.e_z, [1.0, 0.0])


def test_tracking_error_is_not_wrapped():
    err = controller.tracking_error(BodyState(theta=7.0, q=[0, 0]), Pose(z=[0, 0]), _ref(theta_d=0.0))
    assert err.e_theta == 7.0


def test_desired_velocity_examples(params):
    gains = ControlGains()
    q_d, _ = controller.desired_velocity(0.3, np.zeros(2), np.zeros(2), _ref(), gains, params)
    np.testing.assert_array_equal(q_d, [0.0, 0.0])
    q_d, _ = controller.desired_velocity(0.0, np.zeros(2), np.zeros(2), _ref(z_d_dot=(1.0, 0.0)), gains, params)
    np.testing.assert_allclose(q_d, [1.0, 0.0])


def test_zero_everything_gives_zero_torque(params):
    tau = controller.control_torque(BodyState(theta=0.2, q=[0, 0]), Pose(z=[0, 0]), _ref(theta_d=0.2), ControlGains(), params)
    np.testing.assert_allclose(tau, [0.0, 0.0], atol=1e-15)


def test_reference_circle():
    shape = TrajectoryShape(kind="circle", radius=2.0, rate=0.2)
    r0 = controller.reference_trajectory("circle", 0.0, shape)
    np.testing.assert_allclose(r0.z_d, [2.0, 0.0])
    np.testing.assert_allclose(r0.z_d_dot, [0.0, 0.4], atol=1e-15)
    speeds = [np.linalg.norm(controller.reference_trajectory("circle", t, shape).z_d_dot) for t in np.linspace(0, 30, 50)]
    np.testing.assert_allclose(speeds, 0.4)


@pytest.mark.parametrize("kind", ["circle", "lemniscate", "line"])
def test_reference_derivatives_match_finite_differences(kind):
    h = 1e-5
    for t in (0.3, 4.0, 11.7):
        prev = controller.reference_trajectory(kind, t - h)
        cur = controller.reference_trajectory(kind, t)
        nxt = controller.reference_trajectory(kind, t + h)
        np.testing.assert_allclose((nxt.z_d - prev.z_d) / (2 * h), cur.z_d_dot, atol=1e-8)
        np.testing.assert_allclose((nxt.z_d_dot - prev.z_d_dot) / (2 * h), cur.z_d_ddot, atol=1e-8)
        assert (nxt.theta_d - prev.theta_d) / (2 * h) == pytest.approx(cur.omega_d, abs=1e-6)


def test_lemniscate_heading_is_continuous():
    thetas = [controller.reference_trajectory("lemniscate", t).theta_d for t in np.arange(0, 40, 0.01)]
    assert np.max(np.abs(np.diff(thetas))) < 0.05


def test_unknown_reference_kind():
    with pytest.raises(ValueError):
        controller.reference_trajectory("spiral", 0.0)


def _closed_loop(params, gains, duration, dt, offset=(0.1, 0.05, -0.05), shape=None):
    """Noise-free loop on the true state; returns per-step (q, q_d, err)."""
    shape = shape or TrajectoryShape()
    ref0 = controller.reference_trajectory(shape.kind, 0.0, shape)
    theta0 = ref0.theta_d + offset[0]
    state = BodyState(theta=theta0, q=robot.c_inverse(theta0, params) @ ref0.z_d_dot)
    pose = Pose(z=ref0.z_d + np.array(offset[1:]))
    heading = controller.HeadingReference(gains.heading, ref0.theta_d)
    out = []
    for k in range(int(round(duration / dt))):
        ref = heading.apply(controller.reference_trajectory(shape.kind, k * dt, shape))
        tau, q_d, err = controller.control_law(state, pose, ref, gains, params)
        out.append((state.q.copy(), q_d, err))
        heading.advance(q_d, dt)
        state, pose = robot.step(state, pose, tau, dt, None, params)
    return out


def _size(q, q_d, err):
    return np.linalg.norm(err.as_vector()) + np.linalg.norm(q - q_d)


def test_closed_loop_converges(params):
    # The heading error is the slowest mode, about exp(-t / k_q).
    out = _closed_loop(params, ControlGains(), duration=70.0, dt=0.01)
    assert _size(*out[-1]) < 0.01 * _size(*out[0])


def test_lyapunov_rate_matches_finite_difference(params):
    gains = ControlGains()
    dt = 1e-3
    out = _closed_loop(params, gains, duration=0.5, dt=dt)
    V = np.array([controller.lyapunov(q, q_d, err) for q, q_d, err in out])
    checked = 0
    for k in range(1, len(out) - 1):
        q, q_d, err = out[k]
        rate = controller.lyapunov_rate(q - q_d, err.e_z, gains)
        if abs(rate) < 1e-3:
            continue
        fd = (V[k + 1] - V[k - 1]) / (2 * dt)
        assert fd == pytest.approx(rate, rel=0.05)
        checked += 1
    assert checked > 100


def test_lyapunov_is_non_increasing(params):
    out = _closed_loop(params, ControlGains(), duration=5.0, dt=1e-3)
    V = np.array([controller.lyapunov(q, q_d, err) for q, q_d, err in out])
    assert np.all(np.diff(V) <= 1e-3 * V[:-1])


def test_heading_reference_modes():
    ref = _ref(theta_d=1.0, omega_d=0.5)
    path = controller.HeadingReference("path", 0.0)
    assert path.apply(ref).theta_d == 1.0
    integrated = controller.HeadingReference("integrated", 0.2)
    integrated.advance(np.array([0.4, 0.5]), 0.1)
    applied = integrated.apply(ref)
    assert applied.theta_d == pytest.approx(0.25)
    assert applied.omega_d == pytest.approx(0.5)
    with pytest.raises(ValueError):
        controller.HeadingReference("tangent", 0.0)
