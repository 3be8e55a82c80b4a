import numpy as np
import pandas as pd
import pytest

from app.core import runner
from app.core.measurement import CHANNEL_NAMES
from tests.conftest import short_scenario, stealth_scenario

E_COLS = [f"e_{c}" for c in CHANNEL_NAMES]


@pytest.fixture(scope="module")
def strategies():
    return runner.sweep(short_scenario())


@pytest.fixture(scope="module")
def attack_free():
    log, summary = runner.run(short_scenario(attack={"enabled": False}, strategy="ukf-only"))
    return log.frame(), summary


def test_run_is_deterministic():
    config = short_scenario(duration=2.0, attack={"start_time": 0.5})
    f1 = runner.run(config)[0].frame()
    f2 = runner.run(config)[0].frame()
    pd.testing.assert_frame_equal(f1, f2)
    assert f1.to_csv(float_format="%.17g") == f2.to_csv(float_format="%.17g")


def test_log_columns_and_length():
    config = short_scenario(duration=0.5)
    log, _ = runner.run(config)
    frame = log.frame()
    assert list(frame.columns) == runner.RunLog.COLUMNS
    assert len(frame) == config.n_steps


def test_log_rejects_incomplete_rows():
    log = runner.RunLog("ukf-only", 0)
    with pytest.raises(KeyError):
        log.append({"step": 0})


def test_initial_conditions_apply_offset():
    config = short_scenario(initial_offset=(0.1, 0.2, -0.3))
    state, pose = runner.initial_conditions(config)
    assert state.theta == pytest.approx(np.pi / 2 + 0.1)
    np.testing.assert_allclose(pose.z, [2.2, -0.3])


def test_no_attack_before_start(strategies):
    for frame, _ in strategies.values():
        before = frame[frame["t"] < 5.0 - 1e-9]
        np.testing.assert_array_equal(before[E_COLS].to_numpy(), 0.0)
        assert (before["oracle_active"] == 0).all()
        assert (before["attack_excluded"] == -1).all()
        after = frame[frame["t"] >= 5.0]
        assert set(np.flatnonzero(after[E_COLS].to_numpy().any(axis=0))) <= {2, 3}


def test_exclusion_ordering(strategies):
    pruning = strategies["pruning-ukf"][1]
    oracle = strategies["ukf-with-oracle"][1]
    ukf_only = strategies["ukf-only"][1]
    assert ukf_only.pruning_exclusion_rate == 0.0
    assert pruning.pruning_exclusion_rate > oracle.pruning_exclusion_rate > ukf_only.pruning_exclusion_rate


def test_pruning_mask_stays_in_reliable_count(strategies):
    frame = strategies["pruning-ukf"][0]
    active = frame[frame["oracle_active"] == 1]
    masks = active[[f"mask_{c}" for c in CHANNEL_NAMES]].to_numpy()
    assert (masks.sum(axis=1) <= active["l_eta"].to_numpy()).all()
    assert (active["l_eta"] == 4).all()
    # The wheel channels score lowest, so they never reach the filter.
    np.testing.assert_array_equal(masks[:, [2, 3]], 0)
    # Prediction-only steps are exactly the empty masks.
    np.testing.assert_array_equal(active["prediction_only"].to_numpy(), (masks.sum(axis=1) == 0).astype(int))


def test_strategies_rank_by_tracking_error(strategies, attack_free):
    pruning = strategies["pruning-ukf"][1].tracking_rmse
    oracle = strategies["ukf-with-oracle"][1].tracking_rmse
    ukf_only = strategies["ukf-only"][1].tracking_rmse
    assert pruning < oracle < ukf_only
    assert pruning <= 2 * attack_free[1].tracking_rmse


def test_attack_free_run_tracks_the_circle(attack_free):
    frame, summary = attack_free
    assert summary.tracking_rmse < 0.05
    np.testing.assert_array_equal(frame[E_COLS].to_numpy(), 0.0)


def test_excluding_attacked_channels_keeps_estimate_close(attack_free):
    config = short_scenario(strategy="ukf-with-oracle", oracle={"p": 1.0, "tnr": 1.0})
    log, summary = runner.run(config)
    frame = log.frame()
    active = frame[frame["oracle_active"] == 1]
    assert (active["attack_excluded"] == 1).all()
    assert summary.v_rmse <= 3 * attack_free[1].v_rmse
    assert summary.omega_rmse <= 3 * attack_free[1].omega_rmse


@pytest.fixture(scope="module")
def stealthy():
    log, summary = runner.run(stealth_scenario())
    return log.frame(), summary


def test_stealthy_attack_shifts_plain_ukf_unnoticed(stealthy, attack_free):
    frame, summary = stealthy
    after = frame[frame["t"] >= 5.0]
    # Block 0 of an in-range speed shift leaves the omega channel untouched.
    assert set(np.flatnonzero(np.abs(after[E_COLS].to_numpy()).max(axis=0) > 1e-9)) == {0, 2, 3, 4, 5}
    shift = float((after["v_hat"] - after["v"]).mean())
    assert shift == pytest.approx(0.2, rel=0.05)
    assert summary.monitor_detection_rate <= 0.05
    assert summary.v_rmse >= 5 * attack_free[1].v_rmse
