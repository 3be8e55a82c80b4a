import numpy as np
import pytest

from app.core import ukf
from app.core.exceptions import CovarianceError, InsufficientChannelsError
from app.core.measurement import measure_state
from app.core.models import GaussianBelief, UkfConfig
from app.core.robot import discrete_dynamics


def _belief(mean=(0.1, 0.3, -0.2), scale=0.05):
    return GaussianBelief(mean=np.array(mean), cov=scale * np.eye(3))


def test_weights_sum_to_one():
    for cfg in (UkfConfig(), UkfConfig(alpha=1.0, kappa=1.0)):
        Wm, Wc = ukf.weights(cfg)
        assert Wm.sum() == pytest.approx(1.0)
        assert Wc[0] == pytest.approx(Wm[0] + 1 - cfg.alpha ** 2 + cfg.beta)


def test_sigma_points_reproduce_moments():
    b = GaussianBelief(mean=[0.1, 0.3, -0.2], cov=[[0.2, 0.05, 0.0], [0.05, 0.1, 0.01], [0.0, 0.01, 0.3]])
    X, Wm, Wc = ukf.sigma_points(b, UkfConfig())
    assert X.shape == (7, 3)
    np.testing.assert_allclose(Wm @ X, b.mean, atol=1e-14)
    dev = X - b.mean
    np.testing.assert_allclose((Wc[:, None] * dev).T @ dev, b.cov, atol=1e-12)


def test_cholesky_repair():
    P = np.diag([1.0, 1.0, 0.0])
    L = ukf._robust_cholesky(P)
    np.testing.assert_allclose(L @ L.T, P, atol=1e-8)
    with pytest.raises(CovarianceError):
        ukf._robust_cholesky(np.diag([1.0, -1.0, 1.0]))


def test_matches_linear_kalman_filter(rng):
    F = np.array([[1.0, 0.01, 0.0], [0.0, 0.99, 0.01], [0.0, -0.02, 0.98]])
    Hm = rng.standard_normal((6, 3))
    R = np.diag([1e-4, 1e-3, 1e-3])
    Q = np.diag(rng.uniform(1e-3, 1e-2, size=6))
    cfg = UkfConfig()
    belief = _belief()
    mean, cov = belief.mean.copy(), belief.cov.copy()
    x = np.array([0.0, 0.2, -0.1])
    masks = [tuple(range(6)), (0, 2, 5), (1,), (3, 4)]
    for k in range(1000):
        x = F @ x + rng.multivariate_normal(np.zeros(3), R)
        y = Hm @ x + rng.multivariate_normal(np.zeros(6), Q)
        mask = masks[k % len(masks)]

        predicted, _ = ukf.predict(belief, np.zeros(2), 0.01, R, cfg, process=lambda s, u: F @ s)
        belief = ukf.update(predicted, y[list(mask)], mask, Q, cfg, measurement=lambda s: Hm @ s)

        mean, cov = ukf.kalman_predict(mean, cov, F, R)
        idx = list(mask)
        mean, cov = ukf.kalman_update(mean, cov, y[idx], Hm[idx], Q[np.ix_(idx, idx)])

        np.testing.assert_allclose(belief.mean, mean, atol=1e-8)
        np.testing.assert_allclose(belief.cov, cov, atol=1e-8)
        assert belief.mask == mask


def test_predict_lifts_two_by_two_noise(params):
    b = _belief()
    R2 = np.diag([1e-2, 2e-2])
    p2, _ = ukf.predict(b, np.zeros(2), 0.01, R2, UkfConfig(), params=params)
    R3 = np.zeros((3, 3))
    R3[1:, 1:] = R2
    p3, _ = ukf.predict(b, np.zeros(2), 0.01, R3, UkfConfig(), params=params)
    np.testing.assert_allclose(p2.cov, p3.cov)


def test_robot_models_are_default(params):
    b = _belief()
    tau = np.array([0.1, -0.05])
    predicted, X_prop = ukf.predict(b, tau, 0.01, np.eye(2) * 1e-3, UkfConfig(), params=params)
    np.testing.assert_allclose(X_prop[0], discrete_dynamics(b.mean, tau, 0.01, params))
    y = measure_state(predicted.mean, params)
    updated = ukf.update(predicted, y, range(6), np.eye(6) * 1e-4, UkfConfig(), params=params)
    assert np.trace(updated.cov) < np.trace(predicted.cov)


def test_update_checks_inputs(params):
    b = _belief()
    with pytest.raises(InsufficientChannelsError):
        ukf.update(b, np.zeros(0), (), np.eye(6), UkfConfig(), params=params)
    with pytest.raises(ValueError):
        ukf.update(b, np.zeros(3), (0, 1), np.eye(6), UkfConfig(), params=params)
    with pytest.raises(ValueError):
        ukf.predict(b, np.zeros(2), 0.01, np.eye(2), UkfConfig())


def test_filter_prediction_only_below_min_channels(params):
    filt = ukf.UnscentedKalmanFilter(_belief(), params, np.eye(2) * 1e-3, np.eye(6) * 1e-4, UkfConfig(min_channels=2))
    y = measure_state(filt.mean, params)
    expected, _ = ukf.predict(filt.belief, np.zeros(2), 0.01, filt.R_process, filt.config, params)
    filt.step(np.zeros(2), 0.01, y, mask=(3,))
    assert filt.prediction_only
    np.testing.assert_allclose(filt.mean, expected.mean)
    assert filt.belief.mask == (3,)
    filt.step(np.zeros(2), 0.01, y, mask=(0, 3))
    assert not filt.prediction_only


def test_filter_skips_predict_without_torque(params):
    start = _belief()
    filt = ukf.UnscentedKalmanFilter(start, params, np.eye(2) * 1e-3, np.eye(6) * 1e-4)
    y = measure_state(start.mean, params)
    direct = ukf.update(start, y, tuple(range(6)), filt.Q_meas, filt.config, params)
    filt.step(None, 0.01, y)
    np.testing.assert_allclose(filt.mean, direct.mean)


def test_masked_channels_do_not_move_the_estimate(params):
    filt = ukf.UnscentedKalmanFilter(_belief(), params, np.eye(2) * 1e-3, np.eye(6) * 1e-4)
    y = measure_state(filt.mean, params)
    y_bad = y.copy()
    y_bad[2:4] += 3.0
    a = ukf.UnscentedKalmanFilter(_belief(), params, np.eye(2) * 1e-3, np.eye(6) * 1e-4)
    a.step(np.zeros(2), 0.01, y, mask=(0, 1, 4, 5))
    filt.step(np.zeros(2), 0.01, y_bad, mask=(0, 1, 4, 5))
    np.testing.assert_array_equal(a.mean, filt.mean)


@pytest.mark.parametrize("mask", [(0,), (1,), (2, 3), (4, 5), tuple(range(6))])
def test_every_masked_update_shrinks_the_covariance(params, mask):
    predicted, _ = ukf.predict(_belief(), np.zeros(2), 0.01, np.eye(2) * 1e-3, UkfConfig(), params=params)
    y = measure_state(predicted.mean + 0.01, params)
    updated = ukf.update(predicted, y[list(mask)], mask, np.eye(6) * 1e-4, UkfConfig(), params=params)
    assert np.trace(updated.cov) < np.trace(predicted.cov)


def test_covariance_stays_symmetric_positive_definite_over_long_run(params, rng):
    R = np.diag([1e-2, 1e-2])
    Q = np.diag([1e-4, 1e-4, 4e-2, 4e-2, 1e-4, 1e-4])
    dt = 0.01
    x = np.array([np.pi / 2, 0.4, 0.2])
    tau = np.zeros(2)
    filt = ukf.UnscentedKalmanFilter(GaussianBelief(mean=x, cov=1e-2 * np.eye(3)), params, R, Q)
    L_q = np.linalg.cholesky(Q)
    for k in range(10_000):
        x = discrete_dynamics(x, tau, dt, params)
        x[1:] += dt * rng.multivariate_normal(np.zeros(2), R)
        y = measure_state(x, params) + L_q @ rng.standard_normal(6)
        filt.step(tau, dt, y, mask=None if k % 7 else (0, 1, 4, 5))
        if k % 500 == 0 or k == 9_999:
            P = filt.belief.cov
            np.testing.assert_array_equal(P, P.T)
            assert np.linalg.eigvalsh(P).min() > 0
    assert np.all(np.isfinite(filt.mean))
