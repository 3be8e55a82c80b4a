# app/core/fdia.py
"""Stealthy false-data-injection attack synthesis.

The attacker stacks T_f + 1 future samples, Y = H x + G u + e, splits H with
an SVD into its range basis U1 and the complement U2, and picks an attack on a
fixed set of stacked rows that maximises |U1^T e|^2 while keeping the residual
energy |U2^T e|^2 within alpha. A magnitude cap gamma bounds the otherwise
unbounded null-space case.
"""
from __future__ import annotations

import logging
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from app.core import robot
from app.core.exceptions import AttackSynthesisError, NoEffectiveAttackError, RankDeficientError
from app.core.measurement import measurement_jacobian
from app.core.models import (
    N_CHANNELS,
    AttackConfig,
    AttackSettings,
    LinearizedModel,
    RobotParams,
    SvdSplit,
    SynthesizedAttack,
)

logger = logging.getLogger(__name__)

NULL_TOL = 1e-10
B_REGULARIZATION = 1e-12
SIGMA_MIN = 1e-10


def linearize(x0: np.ndarray, params: RobotParams, T_s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Euler-discretized Jacobians (A_m, B_m, C_d) at x0 = [theta, v, omega]."""
    if T_s <= 0:
        raise ValueError("T_s must be positive")
    _, v, omega = (float(a) for a in x0)
    m, d = params.m, params.d
    inertia = m * d ** 2 + params.J
    a_c = np.array(
        [
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 2.0 * d * omega],
            [0.0, -m * d * omega / inertia, -m * d * v / inertia],
        ]
    )
    A_m = np.eye(3) + T_s * a_c
    M_inv_B = np.linalg.solve(robot.mass_matrix(params), robot.input_matrix(params))
    B_m = T_s * np.vstack([np.zeros((1, 2)), M_inv_B])
    C_d = measurement_jacobian(x0, params)
    return A_m, B_m, C_d


def stack(A_m: np.ndarray, B_m: np.ndarray, C_d: np.ndarray, T_f: int, T_s: float) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked observability matrix H and lower block-triangular input matrix G."""
    if T_f < 0:
        raise ValueError("T_f must be non-negative")
    p, n = C_d.shape
    k = B_m.shape[1]
    powers = [np.eye(n)]
    for _ in range(T_f):
        powers.append(powers[-1] @ A_m)
    H = np.vstack([C_d @ P for P in powers])

    G = np.zeros(((T_f + 1) * p, T_f * k))
    for i in range(1, T_f + 1):
        for j in range(i):
            G[i * p:(i + 1) * p, j * k:(j + 1) * k] = T_s * (C_d @ powers[i - 1 - j] @ B_m)
    return H, G


def linearized_model(x0: np.ndarray, params: RobotParams, T_s: float, T_f: int) -> LinearizedModel:
    A_m, B_m, C_d = linearize(x0, params, T_s)
    H, G = stack(A_m, B_m, C_d, T_f, T_s)
    return LinearizedModel(A_m=A_m, B_m=B_m, C_d=C_d, T_s=T_s, T_f=T_f, H=H, G=G)


def svd_split(H: np.ndarray) -> SvdSplit:
    H = np.asarray(H, dtype=float)
    m, n = H.shape
    if m < n:
        raise RankDeficientError(f"H has fewer rows ({m}) than columns ({n})")
    U, sigma, Vt = linalg.svd(H, full_matrices=True)
    if sigma.min() <= SIGMA_MIN:
        raise RankDeficientError(f"H is rank deficient (sigma_min={sigma.min():.3e})")
    return SvdSplit(U1=U[:, :n], U2=U[:, n:], sigma=sigma, V=Vt)


def stacked_support(channels: Iterable[int], horizon: int, n_channels: int = N_CHANNELS) -> Tuple[int, ...]:
    """Indices of the stacked vector covering `channels` in every time block."""
    chans = sorted(set(int(c) for c in channels))
    return tuple(b * n_channels + c for b in range(horizon + 1) for c in chans)


def attack_objective(split: SvdSplit, e: np.ndarray) -> float:
    r = split.U1.T @ e
    return float(r @ r)


def stealth_residual(split: SvdSplit, e: np.ndarray) -> float:
    r = split.U2.T @ e
    return float(r @ r)


def _normalize_sign(v: np.ndarray, target: Optional[np.ndarray]) -> np.ndarray:
    if target is not None:
        dot = float(v @ target)
        if abs(dot) > NULL_TOL:
            return v if dot > 0 else -v
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


def generate_attack(
    split: SvdSplit,
    config: AttackConfig,
    target: Optional[np.ndarray] = None,
) -> SynthesizedAttack:
    """Solve max |U1^T e|^2 s.t. |U2^T e|^2 <= alpha, supp(e) in T, |e| <= gamma.

    `target` is an optional stacked direction the attacker prefers; it only
    picks among equally good null-space directions and fixes the sign.
    """
    support = list(config.support)
    m = split.m
    if not support:
        raise NoEffectiveAttackError("empty attack support")
    if support[-1] >= m:
        raise AttackSynthesisError(f"support index {support[-1]} outside stacked length {m}")

    U1_T = split.U1[support, :]
    U2_T = split.U2[support, :]
    A = U1_T @ U1_T.T
    B = U2_T @ U2_T.T
    t_T = None if target is None else np.asarray(target, dtype=float)[support]

    w, vecs = linalg.eigh(B)
    null = vecs[:, w < NULL_TOL]
    if null.shape[1] > 0:
        branch = "null-space"
        direction = None
        if t_T is not None:
            proj = null @ (null.T @ t_T)
            if np.linalg.norm(proj) > NULL_TOL:
                direction = proj
        if direction is None:
            # Highest A-energy direction inside the null space of B.
            _, inner = linalg.eigh(null.T @ A @ null)
            direction = null @ inner[:, -1]
        e_T = config.gamma * direction / np.linalg.norm(direction)
    else:
        branch = "generalized-eigen"
        _, gvecs = linalg.eigh(A, B + B_REGULARIZATION * np.eye(len(support)))
        v = gvecs[:, -1]
        b_energy = float(v @ B @ v)
        e_T = np.sqrt(config.alpha / b_energy) * v if b_energy > 0 else np.zeros_like(v)
        norm = np.linalg.norm(e_T)
        if norm > config.gamma:
            e_T *= config.gamma / norm
    e_T = _normalize_sign(e_T, t_T)

    e = np.zeros(m)
    e[support] = e_T
    objective = attack_objective(split, e)
    if objective <= 1e-12 * max(1.0, float(e @ e)) or not np.any(e_T):
        raise NoEffectiveAttackError("support has no reach into the range space of H")
    return SynthesizedAttack(
        e=e,
        support=tuple(support),
        objective=objective,
        stealth=stealth_residual(split, e),
        branch=branch,
    )


def gamma_for_displacement(H: np.ndarray, dv: float) -> float:
    """Magnitude of the in-range attack H [0, dv, 0]^T shifting v by dv."""
    return abs(float(dv)) * float(np.linalg.norm(np.asarray(H)[:, 1]))


def select_support(
    split: SvdSplit,
    n_channels: int,
    horizon: int,
    fraction: float,
    alpha: float,
    gamma: float,
) -> Tuple[int, ...]:
    """Greedy channel selection; each round adds the channel that helps most."""
    budget = max(1, int(round(fraction * n_channels)))
    chosen: List[int] = []
    for _ in range(min(budget, n_channels)):
        best, best_obj = None, -1.0
        for c in range(n_channels):
            if c in chosen:
                continue
            cfg = AttackConfig(support=stacked_support(chosen + [c], horizon, n_channels), alpha=alpha, gamma=gamma)
            try:
                obj = generate_attack(split, cfg).objective
            except NoEffectiveAttackError:
                obj = 0.0
            if obj > best_obj + 1e-15:
                best, best_obj = c, obj
        chosen.append(best)
    return tuple(sorted(chosen))


def attack_schedule(
    t: float,
    base_e: np.ndarray,
    mode: str,
    start_time: float = 0.0,
    ramp_window: float = 5.0,
    resolve: Optional[Callable[[], np.ndarray]] = None,
) -> np.ndarray:
    """Time profile of an attack that is active from `start_time`."""
    base_e = np.asarray(base_e, dtype=float)
    if t < start_time:
        return np.zeros_like(base_e)
    if mode == "constant":
        return base_e.copy()
    if mode == "ramp":
        return min(1.0, (t - start_time) / ramp_window) * base_e
    if mode == "recompute-per-step":
        return np.asarray(resolve(), dtype=float) if resolve is not None else base_e.copy()
    raise ValueError(f"unknown attack mode: {mode!r}")


class AttackGenerator:
    """Per-scenario attacker with full knowledge of the model and the estimate.

    In "constant" and "ramp" mode the stacked attack is solved once, at the
    first active step k0, and step k replays block (k - k0) mod (T_f + 1).
    In "recompute-per-step" mode it is re-solved at every step from the
    current estimate and only block 0 of the fresh plan is injected.
    """

    def __init__(
        self,
        settings: AttackSettings,
        params: RobotParams,
        dt: float,
        eps_v: float,
        nominal_speed: float,
        n_channels: int = N_CHANNELS,
    ) -> None:
        self.settings = settings
        self.params = params
        self.dt = dt
        self.n_channels = n_channels
        self.alpha = settings.alpha if settings.alpha is not None else (0.5 * eps_v) ** 2
        self.target_dv = settings.target_dv_ratio * nominal_speed
        self.gamma: Optional[float] = settings.gamma
        self.channels: Optional[Tuple[int, ...]] = settings.channels
        self.base: Optional[SynthesizedAttack] = None
        self._k0: Optional[int] = None

    def synthesize(self, x_est: np.ndarray) -> Tuple[SynthesizedAttack, LinearizedModel]:
        """Stacked attack at operating point x_est, with the model it was built on."""
        T_f = self.settings.horizon
        model = linearized_model(x_est, self.params, self.dt, T_f)
        split = svd_split(model.H)
        gamma = self.gamma if self.gamma is not None else gamma_for_displacement(model.H, self.target_dv)
        if self.channels is None:
            self.channels = select_support(split, self.n_channels, T_f, self.settings.fraction, self.alpha, gamma)
            logger.info("attacker selected channels", extra={"channels": list(self.channels)})
        if self.gamma is None:
            self.gamma = gamma
        cfg = AttackConfig(support=stacked_support(self.channels, T_f, self.n_channels), alpha=self.alpha, gamma=gamma)
        return generate_attack(split, cfg, target=model.H[:, 1]), model

    def active(self, t: float) -> bool:
        return self.settings.enabled and t >= self.settings.start_time - 1e-12

    def __call__(self, k: int, t: float, x_est: np.ndarray) -> np.ndarray:
        """Attack on the n_channels measurements at step k, time t."""
        zero = np.zeros(self.n_channels)
        if not self.active(t):
            return zero
        if self._k0 is None:
            self._k0 = k
        recompute = self.settings.mode == "recompute-per-step"
        block = 0 if recompute else (k - self._k0) % (self.settings.horizon + 1)

        try:
            if recompute or self.base is None:
                self.base = self.synthesize(x_est)[0]
            stacked = attack_schedule(
                t,
                self.base.e,
                self.settings.mode,
                start_time=self.settings.start_time,
                ramp_window=self.settings.ramp_window,
            )
        except AttackSynthesisError as e:
            logger.warning("attack synthesis failed, injecting zero: %s", e)
            return zero
        return stacked[block * self.n_channels:(block + 1) * self.n_channels]
