"""
Semilab - Error Hierarchy Module

All library failures derive from SemilabError. Each class carries the CLI exit
code it maps to and a payload dict with the data needed to act on the failure
(last valid state, best estimate, per-class solutions, ...).

Key Features:
- ModelError family: invalid inputs and violated model assumptions (exit 3)
- NumericalError family: non-convergence and numerical breakdown (exit 4)
"""

from typing import Any, Dict, Optional


class SemilabError(Exception):
    """Base class for every error raised by the library."""
    exit_code: int = 3

    def __init__(self, message: str, **payload: Any):
        super().__init__(message)
        self.message = message
        self.payload: Dict[str, Any] = payload

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready description used on the CLI stderr channel."""
        body: Dict[str, Any] = {"error": type(self).__name__, "message": self.message}
        for key, value in self.payload.items():
            body[key] = _jsonable(value)
        return body


def _jsonable(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    return repr(value)


# Model / validation errors (exit 3)

class ModelError(SemilabError):
    exit_code = 3


class ValidationError(ModelError):
    """An invariant of a constructed type does not hold."""


class DomainError(ModelError):
    """Argument outside the domain of the operation."""


class ShapeError(ModelError):
    """Mismatched grids or array shapes."""


class DegenerateInputError(ModelError):
    """Zero total mass, empty sample set and similar."""


class GeometryError(ModelError):
    """A map branch does not bracket a cell boundary."""


class BoundaryPointError(ModelError):
    """Point evaluation requested on a measure-zero branch boundary."""


class PreconditionError(ModelError):
    pass


class CriticalCaseError(ModelError):
    """Threshold equality where no verdict is available."""


class ReducibleChainError(ModelError):
    """More than one closed class; payload carries one stationary law per class."""

    def __init__(self, message: str, solutions: Optional[list] = None, **payload: Any):
        super().__init__(message, solutions=solutions or [], **payload)
        self.solutions = solutions or []


class AbsorbingBoundaryError(ModelError):
    pass


class BoundViolationError(ModelError):
    """A jump rate exceeded its declared thinning bound."""


class RegionViolationError(ModelError):
    """A trajectory left the declared invariant region."""


class ModelAssumptionError(ModelError):
    pass


class SaturationError(DomainError):
    """Distance formula evaluated past its saturation point."""


class StepSizeError(ModelError):
    """CFL or step constraint violated."""


class StallError(ModelError):
    """A guard was not reached within the declared horizon."""


class PeriodicRegimeError(ModelError):
    """Complex dominant pair: no limit exists, a descriptive profile is attached."""


# Numerical errors (exit 4)

class NumericalError(SemilabError):
    exit_code = 4


class IntegrationError(NumericalError):
    """Non-finite field value; payload carries the last valid state."""


class ToleranceNotMetError(NumericalError):
    """Quadrature did not reach tolerance; payload carries the best estimate."""


class BracketError(NumericalError):
    pass


class NonConvergenceError(NumericalError):
    """Iteration cap reached; payload carries last iterate and residual."""


class BlowUpError(NumericalError):
    pass


class SamplerError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class OutputError(NumericalError):
    """Failure while writing run outputs."""
