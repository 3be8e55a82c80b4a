from __future__ import annotations

from typing import Optional


class SimulationError(RuntimeError):
    """Base class for errors raised by the numerical core."""


class NumericalError(SimulationError):
    """Non-finite values appeared while integrating or filtering."""

    def __init__(self, message: str, step: Optional[int] = None) -> None:
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class CovarianceError(SimulationError):
    """A covariance could not be factorized even after repair."""


class AttackSynthesisError(SimulationError):
    """Attack generation is undefined for the given model or support."""


class RankDeficientError(AttackSynthesisError):
    """The stacked observability matrix lost column rank."""


class NoEffectiveAttackError(AttackSynthesisError):
    """The support cannot reach the range space of H."""


class InsufficientChannelsError(SimulationError):
    """Pruning left no trusted channel."""


class HistoryMismatchError(SimulationError, ValueError):
    """Monitor histories are misaligned or shorter than the horizon."""
