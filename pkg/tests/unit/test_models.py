# tests/unit/test_models.py
import numpy as np
import pytest
from pydantic import ValidationError

from app.core.models import (
    AttackConfig,
    AttackSettings,
    BodyState,
    GaussianBelief,
    MeasurementFrame,
    MonitorVerdict,
    OracleSettings,
    OracleStats,
    PmfVector,
    PrunedSupport,
    PruneMonteCarloConfig,
    RobotParams,
    ScenarioConfig,
    UkfConfig,
)


def test_robot_params_must_be_positive():
    with pytest.raises(ValidationError):
        RobotParams(d=0.0)
    with pytest.raises(ValidationError):
        RobotParams(m=-1.0)


def test_body_state_vector_ordering():
    s = BodyState(theta=0.3, q=[0.4, -0.1])
    np.testing.assert_array_equal(s.as_vector(), [0.3, 0.4, -0.1])
    assert BodyState.from_vector(s.as_vector()).v == pytest.approx(0.4)


def test_body_state_rejects_non_finite():
    with pytest.raises(ValidationError):
        BodyState(theta=float("nan"), q=[0.0, 0.0])
    with pytest.raises(ValidationError):
        BodyState(theta=0.0, q=[np.inf, 0.0])


def test_arrays_are_read_only_copies():
    q = np.array([1.0, 2.0])
    s = BodyState(theta=0.0, q=q)
    q[0] = 5.0
    assert s.q[0] == 1.0
    with pytest.raises(ValueError):
        s.q[0] = 3.0


def test_frame_support_must_cover_attack():
    with pytest.raises(ValidationError):
        MeasurementFrame(y=np.zeros(6), e=[0, 0, 1.0, 0, 0, 0], attacked_support=(3,))
    frame = MeasurementFrame(y=np.ones(6), e=[0, 0, 1.0, 0, 0, 0], attacked_support=(2,))
    np.testing.assert_array_equal(frame.y_attacked, [1, 1, 2, 1, 1, 1])


def test_attack_config_sorts_support():
    cfg = AttackConfig(support=(5, 1, 5, 3), alpha=0.1, gamma=1.0)
    assert cfg.support == (1, 3, 5)
    with pytest.raises(ValidationError):
        AttackConfig(support=(1,), alpha=0.1, gamma=0.0)


def test_safe_verdict_carries_no_support():
    with pytest.raises(ValidationError):
        MonitorVerdict(psi1=0, psi2=(1,))
    assert MonitorVerdict(psi1=1, psi2=(2, 0)).psi2 == (2, 0)


def test_oracle_stats_ranges():
    with pytest.raises(ValidationError):
        OracleStats(p=[0.6, 1.2], s=[0.5, 0.5])
    with pytest.raises(ValidationError):
        OracleStats(p=[0.6, 0.6], s=[0.5])
    stats = OracleSettings(p=0.6, s=0.5).stats(6)
    np.testing.assert_array_equal(stats.safe_rate, np.full(6, 0.6))


def test_pmf_must_sum_to_one():
    with pytest.raises(ValidationError):
        PmfVector(r=[0.5, 0.4])
    PmfVector(r=[0.25, 0.5, 0.25])


def test_pruned_support_bounded_by_reliable_count():
    with pytest.raises(ValidationError):
        PrunedSupport(indices=(0, 1, 2), eta=0.8, l_eta=2)


def test_ukf_config_lambda():
    assert UkfConfig().lam == pytest.approx(0.25 * 3 - 3)


def test_belief_cov_must_be_symmetric():
    with pytest.raises(ValidationError):
        GaussianBelief(mean=np.zeros(3), cov=[[1, 0.1, 0], [0, 1, 0], [0, 0, 1]])


def test_scenario_defaults_and_extra_keys():
    cfg = ScenarioConfig()
    assert cfg.n_steps == 6000
    assert cfg.strategy == "pruning-ukf"
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"duraton": 10})
    with pytest.raises(ValidationError):
        ScenarioConfig(dt=0.0)


def test_scenario_noise_must_be_psd():
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"noise": {"R_process": [[1.0, 2.0], [2.0, 1.0]]}})


def test_attack_channels_in_range():
    with pytest.raises(ValidationError):
        AttackSettings(channels=(1, 6))
    assert AttackSettings(channels=(3, 2, 3)).channels == (2, 3)


def test_monte_carlo_config_keeps_a_safe_channel():
    with pytest.raises(ValidationError):
        PruneMonteCarloConfig(m=3, attacked=(0, 1, 2))
    with pytest.raises(ValidationError):
        PruneMonteCarloConfig(m=4, attacked=(4,))
