# app/core/runner.py
"""Closed-loop scenario: plant, attacker, oracle, pruning, UKF, monitor, controller."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from opentelemetry import trace

from app.core import controller, measurement, robot
from app.core.exceptions import NumericalError
from app.core.fdia import AttackGenerator
from app.core.measurement import CHANNEL_NAMES
from app.core.metrics import compute_metrics
from app.core.models import (
    N_CHANNELS,
    STRATEGIES,
    BodyState,
    GaussianBelief,
    MetricsSummary,
    OracleStats,
    Pose,
    ScenarioConfig,
)
from app.core.monitor import ResidualMonitor, calibrate, robot_models
from app.core.oracle import resample_confidence, safe_indicator, simulate
from app.core.pruning import poisson_binomial_pmf, prune, reliable_count
from app.core.ukf import UnscentedKalmanFilter

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

INITIAL_COV = 1e-4


def _per_channel(prefix: str) -> List[str]:
    return [f"{prefix}_{c}" for c in CHANNEL_NAMES]


class RunLog:
    """Column-ordered per-step records of one run."""

    COLUMNS: List[str] = (
        ["step", "t", "theta", "v", "omega", "px", "py", "theta_d", "px_d", "py_d"]
        + ["theta_hat", "v_hat", "omega_hat", "px_hat", "py_hat"]
        + _per_channel("y")
        + _per_channel("e")
        + _per_channel("mask")
        + _per_channel("qhat")
        + ["oracle_active", "l_eta", "attack_excluded", "prediction_only"]
        + ["psi1"]
        + _per_channel("psi2")
        + ["tau_right", "tau_left", "e_theta", "e_x", "e_y", "lyapunov", "pos_err"]
    )

    def __init__(self, strategy: str, seed: int) -> None:
        self.strategy = strategy
        self.seed = seed
        self._rows: List[List[float]] = []

    def append(self, row: Dict[str, float]) -> None:
        missing = set(self.COLUMNS) - row.keys()
        if missing:
            raise KeyError(f"log row is missing columns: {sorted(missing)}")
        self._rows.append([row[c] for c in self.COLUMNS])

    def __len__(self) -> int:
        return len(self._rows)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self._rows, columns=self.COLUMNS)


def _channel_flags(prefix: str, indices: Iterable[int]) -> Dict[str, int]:
    on = set(indices)
    return {f"{prefix}_{c}": int(i in on) for i, c in enumerate(CHANNEL_NAMES)}


def _streams(seed: int) -> Tuple[np.random.Generator, ...]:
    # Separate streams keep noise identical across strategies for one seed.
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def initial_conditions(config: ScenarioConfig) -> Tuple[BodyState, Pose]:
    shape = config.trajectory
    ref0 = controller.reference_trajectory(shape.kind, 0.0, shape)
    d_theta, dx, dy = config.initial_offset
    theta0 = ref0.theta_d + d_theta
    q0 = robot.c_inverse(theta0, config.robot) @ ref0.z_d_dot
    return BodyState(theta=theta0, q=q0), Pose(z=ref0.z_d + np.array([dx, dy]))


def run(config: ScenarioConfig) -> Tuple[RunLog, MetricsSummary]:
    """Simulate one scenario; deterministic for a given config and seed."""
    with tracer.start_as_current_span("scenario.run") as span:
        span.set_attribute("scenario.strategy", config.strategy)
        span.set_attribute("scenario.seed", config.seed)
        log = _simulate(config)
        summary = compute_metrics(log.frame(), config.strategy, config.seed)
        span.set_attribute("scenario.tracking_rmse", summary.tracking_rmse)
    logger.info(
        "scenario finished",
        extra={"strategy": config.strategy, "seed": config.seed, "steps": len(log), "tracking_rmse": summary.tracking_rmse},
    )
    return log, summary


def _simulate(config: ScenarioConfig) -> RunLog:
    params = config.robot
    dt = config.dt
    shape = config.trajectory
    R_process = config.noise.R_process
    Q_meas = config.noise.Q_meas
    rng_plant, rng_meas, rng_oracle = _streams(config.seed)

    state, pose = initial_conditions(config)
    ref0 = controller.reference_trajectory(shape.kind, 0.0, shape)
    heading = controller.HeadingReference(config.gains.heading, ref0.theta_d)
    belief = GaussianBelief(mean=state.as_vector(), cov=INITIAL_COV * np.eye(3))
    ukf = UnscentedKalmanFilter(belief, params, R_process, Q_meas, config.ukf)
    z_hat = pose.z.copy()

    monitor_cfg = calibrate(R_process, Q_meas, config.monitor)
    monitor = ResidualMonitor(monitor_cfg, *robot_models(params, dt))
    attacker = AttackGenerator(config.attack, params, dt, monitor_cfg.eps_v, shape.nominal_speed())

    stats = config.oracle.stats(N_CHANNELS)
    l_eta = reliable_count(poisson_binomial_pmf(stats.p), config.eta)
    all_channels = tuple(range(N_CHANNELS))
    logger.info(
        "scenario start",
        extra={"strategy": config.strategy, "seed": config.seed, "steps": config.n_steps, "l_eta": l_eta},
    )

    log = RunLog(config.strategy, config.seed)
    tau_prev: Optional[np.ndarray] = None
    for k in range(config.n_steps):
        t = k * dt
        ref = heading.apply(controller.reference_trajectory(shape.kind, t, shape))

        y = measurement.measure(state.theta, state.q, params, measurement.sample_measurement_noise(Q_meas, rng_meas))
        e = attacker(k, t, ukf.mean) if config.attack.enabled else np.zeros(N_CHANNELS)
        frame = measurement.inject(y, e)
        attacked = frame.attacked_support

        oracle_active = config.always_on or t >= config.attack.start_time - 1e-12
        q_hat = np.full(N_CHANNELS, -1)
        mask = all_channels
        if oracle_active:
            step_stats = stats
            if config.oracle.resample_confidence:
                step_stats = OracleStats(p=stats.p, s=resample_confidence(stats.s, rng_oracle), tnr=stats.tnr)
            report = simulate(
                safe_indicator(attacked, N_CHANNELS), step_stats, rng_oracle, config.oracle.confidence_gap
            )
            q_hat = report.q_hat.astype(int)
            if config.strategy == "ukf-with-oracle":
                mask = report.safe_set()
            elif config.strategy == "pruning-ukf":
                mask = prune(report, stats.p, l_eta, config.eta).indices

        # No predict on the first step: the initial belief already sits at t = 0.
        ukf.step(tau_prev, dt, frame.y_attacked, mask, step_index=k)
        x_hat = ukf.mean
        state_hat = BodyState.from_vector(x_hat)
        pose_hat = Pose(z=z_hat)

        tau, q_d, err = controller.control_law(state_hat, pose_hat, ref, config.gains, params)
        verdict = monitor.observe(frame.y_attacked, tau, x_hat)

        true_err = controller.tracking_error(state, pose, ref)
        row = {
            "step": k,
            "t": t,
            "theta": state.theta,
            "v": state.v,
            "omega": state.omega,
            "px": pose.z[0],
            "py": pose.z[1],
            "theta_d": ref.theta_d,
            "px_d": ref.z_d[0],
            "py_d": ref.z_d[1],
            "theta_hat": x_hat[0],
            "v_hat": x_hat[1],
            "omega_hat": x_hat[2],
            "px_hat": z_hat[0],
            "py_hat": z_hat[1],
            "oracle_active": int(oracle_active),
            "l_eta": l_eta,
            "attack_excluded": int(not set(mask) & set(attacked)) if oracle_active else -1,
            "prediction_only": int(len(mask) < config.ukf.min_channels),
            "psi1": verdict.psi1,
            "tau_right": tau[0],
            "tau_left": tau[1],
            "e_theta": err.e_theta,
            "e_x": err.e_z[0],
            "e_y": err.e_z[1],
            "lyapunov": controller.lyapunov(state.q, q_d, true_err),
            "pos_err": float(np.linalg.norm(true_err.e_z)),
        }
        row.update({f"y_{c}": frame.y_attacked[i] for i, c in enumerate(CHANNEL_NAMES)})
        row.update({f"e_{c}": frame.e[i] for i, c in enumerate(CHANNEL_NAMES)})
        row.update({f"qhat_{c}": int(q_hat[i]) for i, c in enumerate(CHANNEL_NAMES)})
        row.update(_channel_flags("mask", mask))
        row.update(_channel_flags("psi2", verdict.psi2))
        log.append(row)

        heading.advance(q_d, dt)
        z_hat = z_hat + dt * (robot.c_matrix(x_hat[0], params) @ x_hat[1:3])
        w = robot.sample_process_noise(R_process, rng_plant)
        try:
            state, pose = robot.step(state, pose, tau, dt, w, params, step_index=k)
        except NumericalError:
            logger.error("scenario aborted", extra={"step": k, "strategy": config.strategy})
            raise
        tau_prev = tau
    return log


def _run_one(config: ScenarioConfig) -> Tuple[pd.DataFrame, MetricsSummary]:
    log, summary = run(config)
    return log.frame(), summary


def sweep(
    config: ScenarioConfig,
    strategies: Sequence[str] = STRATEGIES,
    workers: int = 1,
) -> Dict[str, Tuple[pd.DataFrame, MetricsSummary]]:
    """Same scenario and seed under each observer strategy."""
    configs = [config.model_copy(update={"strategy": s}) for s in strategies]
    with tracer.start_as_current_span("scenario.sweep") as span:
        span.set_attribute("scenario.seed", config.seed)
        if workers <= 1:
            results = [_run_one(c) for c in configs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_one, configs))
    return {s: r for s, r in zip(strategies, results)}
