# app/core/models.py
from __future__ import annotations

from typing import Annotated, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)

N_CHANNELS = 6
STATE_DIM = 3


def _frozen_array(v) -> np.ndarray:
    # Copy so callers keep ownership of their buffers.
    arr = np.array(v, dtype=float)
    arr.flags.writeable = False
    return arr


Array = Annotated[
    np.ndarray,
    BeforeValidator(_frozen_array),
    PlainSerializer(lambda a: np.asarray(a).tolist(), return_type=list),
]


class ArrayModel(BaseModel):
    """Base for immutable value types carrying numpy arrays."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def _check_shape(name: str, arr: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _check_psd(name: str, mat: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got {mat.shape}")
    if not np.allclose(mat, mat.T, atol=tol):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(mat).min() < -tol:
        raise ValueError(f"{name} must be positive semi-definite")
    return mat


# ---------- Robot ----------

class RobotParams(BaseModel):
    """Physical parameters of the differential-drive robot.

    Defaults describe a small indoor robot; the model leaves them open.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    m: float = Field(10.0, gt=0, description="Mass (kg)")
    J: float = Field(0.5, gt=0, description="Yaw inertia (kg m^2)")
    d: float = Field(0.1, gt=0, description="Offset of the tracked point from the axle centre (m)")
    r: float = Field(0.05, gt=0, description="Wheel radius (m)")
    L: float = Field(0.2, gt=0, description="Half wheel-base (m)")


class BodyState(ArrayModel):
    theta: float
    q: Array = Field(..., description="[v (m/s), omega (rad/s)]")

    @field_validator("theta")
    @classmethod
    def _finite_theta(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("theta must be finite")
        return v

    @field_validator("q")
    @classmethod
    def _q_shape(cls, v: np.ndarray) -> np.ndarray:
        return _check_shape("q", v, (2,))

    @property
    def v(self) -> float:
        return float(self.q[0])

    @property
    def omega(self) -> float:
        return float(self.q[1])

    def as_vector(self) -> np.ndarray:
        """[theta, v, omega], the filter's state ordering."""
        return np.array([self.theta, self.q[0], self.q[1]])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "BodyState":
        return cls(theta=float(x[0]), q=x[1:3])


class Pose(ArrayModel):
    z: Array = Field(..., description="Planar position [x, y] (m)")

    @field_validator("z")
    @classmethod
    def _z_shape(cls, v: np.ndarray) -> np.ndarray:
        return _check_shape("z", v, (2,))


class ProcessNoise(ArrayModel):
    R_process: Array = Field(default_factory=lambda: np.diag([1e-2, 1e-2]))

    @field_validator("R_process")
    @classmethod
    def _psd(cls, v: np.ndarray) -> np.ndarray:
        _check_shape("R_process", v, (2, 2))
        return _check_psd("R_process", v)


# ---------- Tracking control ----------

class ReferenceSample(ArrayModel):
    theta_d: float
    z_d: Array
    z_d_dot: Array
    z_d_ddot: Array
    omega_d: float

    @field_validator("z_d", "z_d_dot", "z_d_ddot")
    @classmethod
    def _vec2(cls, v: np.ndarray) -> np.ndarray:
        return _check_shape("reference vector", v, (2,))


class ControlGains(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    k_q: float = Field(10.0, gt=0)
    k_e: float = Field(10.0, gt=0)
    # "integrated": theta_d follows the second component of q_d.
    heading: Literal["path", "integrated"] = "integrated"


class TrackingError(ArrayModel):
    e_theta: float
    e_z: Array

    @field_validator("e_z")
    @classmethod
    def _vec2(cls, v: np.ndarray) -> np.ndarray:
        return _check_shape("e_z", v, (2,))

    def as_vector(self) -> np.ndarray:
        return np.array([self.e_theta, self.e_z[0], self.e_z[1]])


class TrajectoryShape(BaseModel):
    """Geometry of the analytic reference paths."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["circle", "lemniscate", "line"] = "circle"
    radius: float = Field(2.0, gt=0, description="circle radius (m)")
    rate: float = Field(0.2, gt=0, description="angular rate of the path parameter (rad/s)")
    size: float = Field(2.0, gt=0, description="lemniscate half-width (m)")
    speed: float = Field(0.4, gt=0, description="line speed (m/s)")
    heading: float = Field(0.0, description="line direction (rad)")

    def nominal_speed(self) -> float:
        if self.kind == "circle":
            return self.radius * self.rate
        if self.kind == "lemniscate":
            return self.size * self.rate
        return self.speed


# ---------- Measurements ----------

class MeasurementNoise(ArrayModel):
    # Wheel channels read in encoder units and are noisier than the body-rate channels.
    Q_meas: Array = Field(default_factory=lambda: np.diag([1e-4, 1e-4, 4e-2, 4e-2, 1e-4, 1e-4]))

    @field_validator("Q_meas")
    @classmethod
    def _psd(cls, v: np.ndarray) -> np.ndarray:
        _check_shape("Q_meas", v, (N_CHANNELS, N_CHANNELS))
        return _check_psd("Q_meas", v)


class MeasurementFrame(ArrayModel):
    y: Array
    e: Array
    attacked_support: Tuple[int, ...] = ()

    @model_validator(mode="after")
    def _support_covers_attack(self) -> "MeasurementFrame":
        if self.y.shape != self.e.shape or self.y.ndim != 1:
            raise ValueError("y and e must be vectors of equal length")
        outside = [i for i in np.flatnonzero(self.e) if int(i) not in self.attacked_support]
        if outside:
            raise ValueError(f"attack entries outside the recorded support: {outside}")
        return self

    @property
    def y_attacked(self) -> np.ndarray:
        return self.y + self.e


# ---------- FDIA ----------

class LinearizedModel(ArrayModel):
    A_m: Array
    B_m: Array
    C_d: Array
    T_s: float = Field(..., gt=0)
    T_f: int = Field(..., ge=0)
    H: Array
    G: Array

    @model_validator(mode="after")
    def _block_shapes(self) -> "LinearizedModel":
        n = self.A_m.shape[0]
        rows = (self.T_f + 1) * self.C_d.shape[0]
        if self.H.shape != (rows, n):
            raise ValueError(f"H must be {(rows, n)}, got {self.H.shape}")
        if self.G.shape != (rows, self.T_f * self.B_m.shape[1]):
            raise ValueError(f"G has shape {self.G.shape}, inconsistent with T_f={self.T_f}")
        return self


class SvdSplit(ArrayModel):
    U1: Array
    U2: Array
    sigma: Array
    V: Array

    @property
    def m(self) -> int:
        return self.U1.shape[0]

    @property
    def n(self) -> int:
        return self.U1.shape[1]


class AttackConfig(BaseModel):
    """Solver input: support over the stacked measurement vector."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    support: Tuple[int, ...]
    alpha: float = Field(..., ge=0, description="residual budget on ||U2_T^T e||^2")
    gamma: float = Field(..., gt=0, description="cap on ||e||")

    @field_validator("support")
    @classmethod
    def _sorted_unique(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(i < 0 for i in v):
            raise ValueError("support indices must be non-negative")
        return tuple(sorted(set(v)))

    @field_validator("gamma")
    @classmethod
    def _finite_gamma(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("gamma must be finite")
        return v


class SynthesizedAttack(ArrayModel):
    e: Array
    support: Tuple[int, ...]
    objective: float
    stealth: float
    branch: Literal["null-space", "generalized-eigen"]


# ---------- Monitor ----------

class MonitorConfig(ArrayModel):
    horizon: int = Field(10, ge=1)
    eps_w: float = Field(..., gt=0)
    eps_v: float = Field(..., gt=0)
    per_channel_eps: Array

    @field_validator("per_channel_eps")
    @classmethod
    def _positive(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 1 or np.any(v <= 0):
            raise ValueError("per_channel_eps must be a vector of positive thresholds")
        return v


class MonitorVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    psi1: Literal[0, 1]
    psi2: Tuple[int, ...] = ()

    @model_validator(mode="after")
    def _safe_has_no_support(self) -> "MonitorVerdict":
        if self.psi1 == 0 and self.psi2:
            raise ValueError("a safe verdict cannot carry a suspected support")
        return self


# ---------- Oracle / pruning ----------

class OracleStats(ArrayModel):
    p: Array = Field(..., description="agreement rate per channel (attacked channels)")
    s: Array = Field(..., description="confidence per channel")
    tnr: Optional[Array] = Field(None, description="agreement rate on safe channels; defaults to p")

    @model_validator(mode="after")
    def _ranges(self) -> "OracleStats":
        if self.p.shape != self.s.shape or self.p.ndim != 1:
            raise ValueError("p and s must be vectors of equal length")
        if np.any(self.p <= 0) or np.any(self.p > 1):
            raise ValueError("p must lie in (0, 1]")
        if np.any(self.s < 0) or np.any(self.s > 1):
            raise ValueError("s must lie in [0, 1]")
        if self.tnr is not None:
            if self.tnr.shape != self.p.shape or np.any(self.tnr <= 0) or np.any(self.tnr > 1):
                raise ValueError("tnr must match p in shape and lie in (0, 1]")
        return self

    @classmethod
    def uniform(cls, m: int, p: float, s: float) -> "OracleStats":
        return cls(p=np.full(m, p), s=np.full(m, s))

    @property
    def safe_rate(self) -> np.ndarray:
        return self.p if self.tnr is None else self.tnr


class OracleReport(ArrayModel):
    q_hat: Array
    s: Array

    @field_validator("q_hat")
    @classmethod
    def _binary(cls, v: np.ndarray) -> np.ndarray:
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("q_hat must be a 0/1 indicator")
        return v

    def safe_set(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.q_hat))


class PmfVector(ArrayModel):
    r: Array

    @field_validator("r")
    @classmethod
    def _distribution(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 1 or np.any(v < 0):
            raise ValueError("PMF entries must be non-negative")
        if abs(v.sum() - 1.0) > 1e-12:
            raise ValueError(f"PMF must sum to 1, got {v.sum()!r}")
        return v


class PrunedSupport(BaseModel):
    model_config = ConfigDict(frozen=True)

    indices: Tuple[int, ...]
    eta: float = Field(..., gt=0, lt=1)
    l_eta: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _bounded(self) -> "PrunedSupport":
        if len(self.indices) > self.l_eta:
            raise ValueError("pruned support cannot exceed the reliable count")
        return self


# ---------- UKF ----------

class UkfConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(0.5, gt=0, le=1)
    beta: float = Field(2.0, ge=0)
    kappa: float = Field(0.0, ge=0)
    # Fewer trusted channels than this means prediction-only.
    min_channels: int = Field(1, ge=1)

    @property
    def lam(self) -> float:
        return self.alpha ** 2 * (STATE_DIM + self.kappa) - STATE_DIM

    @model_validator(mode="after")
    def _spread(self) -> "UkfConfig":
        if STATE_DIM + self.lam <= 0:
            raise ValueError("n + lambda must be positive")
        return self


class GaussianBelief(ArrayModel):
    mean: Array
    cov: Array
    mask: Optional[Tuple[int, ...]] = None

    @field_validator("mean")
    @classmethod
    def _mean_shape(cls, v: np.ndarray) -> np.ndarray:
        return _check_shape("mean", v, (STATE_DIM,))

    @field_validator("cov")
    @classmethod
    def _cov_symmetric(cls, v: np.ndarray) -> np.ndarray:
        _check_shape("cov", v, (STATE_DIM, STATE_DIM))
        if not np.allclose(v, v.T, atol=1e-10):
            raise ValueError("cov must be symmetric")
        return v


# ---------- Scenario ----------

class NoiseSettings(ArrayModel):
    R_process: Array = Field(default_factory=lambda: np.diag([1e-2, 1e-2]))
    Q_meas: Array = Field(default_factory=lambda: MeasurementNoise().Q_meas)

    @field_validator("R_process")
    @classmethod
    def _r(cls, v: np.ndarray) -> np.ndarray:
        return ProcessNoise(R_process=v).R_process

    @field_validator("Q_meas")
    @classmethod
    def _q(cls, v: np.ndarray) -> np.ndarray:
        return MeasurementNoise(Q_meas=v).Q_meas


class AttackSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    channels: Optional[Tuple[int, ...]] = Field(None, description="fixed attacked channels; greedy when omitted")
    fraction: float = Field(1 / 3, gt=0, le=1, description="share of channels compromised by greedy selection")
    alpha: Optional[float] = Field(None, ge=0, description="stealth budget; (0.5 eps_v)^2 when omitted")
    gamma: Optional[float] = Field(None, gt=0, description="magnitude cap; derived from target_dv_ratio when omitted")
    target_dv_ratio: float = Field(0.5, gt=0, description="v displacement the default cap aims for, relative to nominal speed")
    horizon: int = Field(10, ge=0, description="T_f, samples stacked ahead")
    mode: Literal["constant", "ramp", "recompute-per-step"] = "recompute-per-step"
    ramp_window: float = Field(5.0, gt=0)
    start_time: float = Field(20.0, ge=0)

    @field_validator("channels")
    @classmethod
    def _valid_channels(cls, v: Optional[Tuple[int, ...]]) -> Optional[Tuple[int, ...]]:
        if v is None:
            return v
        if any(i < 0 or i >= N_CHANNELS for i in v):
            raise ValueError(f"channels must lie in 0..{N_CHANNELS - 1}")
        return tuple(sorted(set(v)))


class OracleSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    p: float | Tuple[float, ...] = 0.6
    s: float | Tuple[float, ...] = 0.5
    tnr: Optional[float | Tuple[float, ...]] = None
    resample_confidence: bool = False
    confidence_gap: float = Field(0.0, ge=0, lt=1, description="confidence lift of correct verdicts over wrong ones")

    def stats(self, m: int = N_CHANNELS) -> OracleStats:
        def vec(x):
            return None if x is None else np.broadcast_to(np.asarray(x, dtype=float), (m,))
        return OracleStats(p=vec(self.p), s=vec(self.s), tnr=vec(self.tnr))


class MonitorSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    horizon: int = Field(10, ge=1)
    k_sigma: float = Field(3.0, gt=0)
    eps_w: Optional[float] = Field(None, gt=0)
    eps_v: Optional[float] = Field(None, gt=0)


Strategy = Literal["ukf-only", "ukf-with-oracle", "pruning-ukf"]
STRATEGIES: Tuple[Strategy, ...] = ("ukf-only", "ukf-with-oracle", "pruning-ukf")


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    robot: RobotParams = Field(default_factory=RobotParams)
    gains: ControlGains = Field(default_factory=ControlGains)
    trajectory: TrajectoryShape = Field(default_factory=TrajectoryShape)
    duration: float = Field(60.0, gt=0)
    dt: float = Field(0.01, gt=0)
    initial_offset: Tuple[float, float, float] = Field((0.0, 0.0, 0.0), description="[dtheta, dx, dy] from the reference")
    noise: NoiseSettings = Field(default_factory=NoiseSettings)
    attack: AttackSettings = Field(default_factory=AttackSettings)
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    eta: float = Field(0.8, gt=0, lt=1)
    monitor: MonitorSettings = Field(default_factory=MonitorSettings)
    ukf: UkfConfig = Field(default_factory=UkfConfig)
    strategy: Strategy = "pruning-ukf"
    always_on: bool = Field(False, description="run oracle/pruning before the attack starts too")
    seed: int = Field(0, ge=0)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


class MetricsSummary(BaseModel):
    strategy: str
    seed: int
    tracking_rmse: float
    v_rmse: float
    omega_rmse: float
    monitor_false_alarm_rate: float
    monitor_detection_rate: float
    oracle_precision: float
    oracle_recall: float
    pruning_exclusion_rate: float
    localization_precision: float
    prediction_only_steps: int


class PruneMonteCarloConfig(BaseModel):
    """Monte Carlo check of pruning exclusion over repeated oracle draws."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    m: int = Field(12, ge=1)
    attacked: Tuple[int, ...] = (1, 5, 9)
    support_mode: Literal["fixed", "random"] = "fixed"
    p: float = Field(0.6, gt=0, le=1)
    s: float = Field(0.5, ge=0, le=1)
    confidence_gap: float = Field(0.6, ge=0, lt=1, description="0 keeps every confidence at s")
    eta: float = Field(0.8, gt=0, lt=1)
    etas: Tuple[float, ...] = (0.1, 0.5, 0.9)
    trials: int = Field(10_000, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _attacked_in_range(self) -> "PruneMonteCarloConfig":
        if any(i < 0 or i >= self.m for i in self.attacked):
            raise ValueError("attacked indices must lie in 0..m-1")
        if len(set(self.attacked)) >= self.m:
            raise ValueError("at least one channel must stay safe")
        return self


class EtaSummary(BaseModel):
    eta: float
    l_eta: int
    exclusion_rate: float
    mean_retained_attacked: float
    max_retained_attacked: int


class PruneMonteCarloSummary(BaseModel):
    trials: int
    eta: float
    l_eta: int
    exclusion_rate: float
    margin: float = Field(..., description="3-sigma binomial margin at eta")
    meets_bound: bool
    per_eta: list[EtaSummary]
