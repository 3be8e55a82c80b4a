from __future__ import annotations

import argparse
import time

import numpy as np

from app.config import Settings
from app.core import controller, robot
from app.core.fdia import AttackGenerator
from app.core.measurement import CHANNEL_NAMES
from app.core.monitor import calibrate, linearized_verdict
from app.core.models import ScenarioConfig
from app.services.journal import RunJournal
from app.services.repo.json_repo import ScenarioRepo


def register(subparsers) -> None:
    p = subparsers.add_parser("attack", help="synthesize the stealthy attack and check it on the linearized loop")
    p.add_argument("config", help="scenario JSON file")
    p.add_argument("--trials", type=int, default=0, help="noisy monitor trials for the stealth pass rate")
    p.set_defaults(func=handle)


def operating_point(config: ScenarioConfig) -> np.ndarray:
    """[theta, v, omega] of the reference at attack start."""
    ref = controller.reference_trajectory(config.trajectory.kind, config.attack.start_time, config.trajectory)
    q = robot.c_inverse(ref.theta_d, config.robot) @ ref.z_d_dot
    return np.array([ref.theta_d, q[0], q[1]])


def handle(args: argparse.Namespace, settings: Settings) -> int:
    config = ScenarioRepo().load(args.config)
    started = time.perf_counter()
    monitor_cfg = calibrate(config.noise.R_process, config.noise.Q_meas, config.monitor)
    generator = AttackGenerator(
        config.attack, config.robot, config.dt, monitor_cfg.eps_v, config.trajectory.nominal_speed()
    )
    attack, model = generator.synthesize(operating_point(config))
    verdict, x_hat = linearized_verdict(model, attack.e, monitor_cfg)
    v_shift = float(x_hat[:, 1].mean())

    print(f"channels: {' '.join(CHANNEL_NAMES[c] for c in generator.channels)}")
    print(f"branch: {attack.branch}")
    print(f"norm_e: {np.linalg.norm(attack.e):.6g}")
    print(f"objective: {attack.objective:.6g}")
    print(f"stealth_residual: {attack.stealth:.6g}")
    print(f"stealth_margin: {np.sqrt(attack.stealth) / monitor_cfg.eps_v:.6g}")
    print(f"psi1: {verdict.psi1}")
    print(f"psi2: {' '.join(CHANNEL_NAMES[c] for c in verdict.psi2) or '-'}")
    print(f"v_shift: {v_shift:.6g}")

    pass_rate = None
    if args.trials > 0:
        rng = np.random.default_rng(config.seed)
        blocks = model.T_f + 1
        passes = 0
        for _ in range(args.trials):
            noise = rng.multivariate_normal(np.zeros(len(CHANNEL_NAMES)), config.noise.Q_meas, size=blocks, method="eigh")
            passes += linearized_verdict(model, attack.e, monitor_cfg, noise=noise.ravel())[0].psi1 == 0
        pass_rate = passes / args.trials
        print(f"stealth_pass_rate: {pass_rate:.4f}")

    RunJournal(settings).record(
        "attack",
        args.config,
        (time.perf_counter() - started) * 1000.0,
        {"channels": list(generator.channels), "psi1": verdict.psi1, "v_shift": v_shift, "pass_rate": pass_rate},
    )
    return 0
