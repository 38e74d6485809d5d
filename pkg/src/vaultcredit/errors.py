"""Exception hierarchy shared by every stage of the engine.

Every error carries a stable ``code`` so the CLI can emit machine-readable
failure records.
"""

from __future__ import annotations

from typing import Any


class VaultCreditError(Exception):
    code = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.details:
            out["details"] = {k: _jsonable(v) for k, v in self.details.items()}
        return out


class DomainError(VaultCreditError, ValueError):
    """An input lies outside the mathematical domain of an operation."""

    code = "domain_error"


class DataError(VaultCreditError, ValueError):
    """Malformed or inconsistent input data."""

    code = "data_error"

    def __init__(self, message: str, file: str | None = None, line: int | None = None, **details: Any):
        where = ""
        if file is not None:
            where = f"{file}:{line}: " if line is not None else f"{file}: "
        super().__init__(where + message, file=file, line=line, **details)
        self.file = file
        self.line = line


class SchemaError(DataError):
    code = "schema_error"


class OrderingError(DataError):
    code = "ordering_error"


class DanglingReferenceError(DataError):
    code = "dangling_reference"


class ConfigError(VaultCreditError, ValueError):
    code = "config_error"


class InsufficientData(VaultCreditError):
    """Too few observations for an estimator; ``count`` is what was found."""

    code = "insufficient_data"

    def __init__(self, message: str, count: int, required: int | None = None, **details: Any):
        super().__init__(message, count=count, required=required, **details)
        self.count = count
        self.required = required


class Undefined(VaultCreditError):
    """The quantity is mathematically undefined on this input (not zero)."""

    code = "undefined"


class InfeasibleScenario(VaultCreditError):
    code = "infeasible_scenario"


class DegenerateData(VaultCreditError):
    """A fit cannot be carried out, e.g. separated or single-class outcomes."""

    code = "degenerate"


class ScenarioEvaluationError(VaultCreditError):
    code = "scenario_evaluation_failed"


def _jsonable(v: Any) -> Any:
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return str(v)
