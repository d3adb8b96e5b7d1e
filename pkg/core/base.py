from pathlib import Path
from typing import Any, Dict, List, Optional


class CommandResult:
    """The result of running one toolkit command."""

    def __init__(
            self,
            command: str,
            outputs: Optional[List[Path]] = None,
            summary: Optional[Dict[str, Any]] = None,
    ):
        self.command: str = command
        self.outputs: List[Path] = list(outputs or [])
        self.summary: Dict[str, Any] = dict(summary or {})


class Command:
    """Abstract superclass of all toolkit commands."""

    name: str = ""

    def run(self, context: Any, **kwargs: Any) -> Optional[CommandResult]:
        raise NotImplementedError()


class SlowLightError(Exception):
    """Base class of every error the toolkit raises on purpose."""

    exit_code = 1


class ConfigError(SlowLightError):
    exit_code = 2


class NumericError(SlowLightError):
    exit_code = 3


class PhysicsError(SlowLightError):
    exit_code = 4


# configuration / geometry
class OverlapError(ConfigError):
    pass


class ResolutionError(ConfigError):
    pass


class DomainError(ConfigError):
    pass


class UnsupportedCommandError(ConfigError):
    pass


# numerics
class CutoffError(NumericError):
    pass


class ConvergenceError(NumericError):
    pass


class ResonanceError(NumericError):
    pass


class TableRangeError(NumericError):
    pass


class ZeroVgError(NumericError):
    pass


# physics outcomes
class NoMinimumError(PhysicsError):
    pass


class NoPlateauError(PhysicsError):
    pass


class NoGuidedBandError(PhysicsError):
    pass


class MaxIterError(PhysicsError):
    """Raised by strict optimizations; carries the best-so-far result."""

    def __init__(self, message: str, result: Any = None):
        super().__init__(message)
        self.result = result


class DegeneracyWarning(UserWarning):
    pass
