"""Custom exceptions and error handlers"""
from typing import Optional

from fastapi import Request, status
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError


class HauslevError(Exception):
    """Base exception for level set estimation errors"""

    exit_code: int = 1
    status_code: int = status.HTTP_500_INTERNAL_SERVER_ERROR

    def __init__(
        self,
        message: str,
        exit_code: Optional[int] = None,
        status_code: Optional[int] = None
    ):
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        if status_code is not None:
            self.status_code = status_code
        super().__init__(self.message)

    def with_context(self, context: str) -> "HauslevError":
        """Prefix the message with where the error happened, keeping the class"""
        self.message = f"{context}: {self.message}"
        self.args = (self.message,)
        return self

    def __reduce__(self):
        # subclasses take different constructor arguments; rebuild from state
        return _rebuild_error, (type(self), self.__dict__.copy())


def _rebuild_error(cls, state):
    error = cls.__new__(cls)
    Exception.__init__(error, state.get("message", ""))
    error.__dict__.update(state)
    return error


class UsageError(HauslevError):
    """Raised for malformed command lines or request shapes"""

    exit_code = 1
    status_code = status.HTTP_400_BAD_REQUEST


class ConfigError(HauslevError):
    """Raised when a run configuration or plan cannot be resolved"""

    exit_code = 1
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class ModelConstructionError(HauslevError):
    """Raised when a synthetic density model cannot be built"""

    exit_code = 1
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class ContractError(HauslevError):
    """Raised when an operation is called outside its contract"""

    exit_code = 1
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class DomainError(HauslevError, ValueError):
    """Raised for inputs outside [0,1]^d or mismatched dimensions"""

    exit_code = 2
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class DataFormatError(HauslevError):
    """Raised when a sample, set or plan file cannot be parsed"""

    exit_code = 2
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class NumericError(HauslevError):
    """Raised when a quadrature or solver does not reach its tolerance"""

    exit_code = 2
    status_code = status.HTTP_500_INTERNAL_SERVER_ERROR

    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(f"{message} (residual estimate {residual:.3g})")


class RateFitError(HauslevError):
    """Raised when too few points survive for a rate fit"""

    exit_code = 2
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class ResourceBudgetError(HauslevError):
    """Raised when a resolution would enumerate more cells than the budget allows"""

    exit_code = 3
    status_code = status.HTTP_413_REQUEST_ENTITY_TOO_LARGE

    def __init__(self, requested: int, budget: int, what: str = "cells"):
        self.requested = requested
        self.budget = budget
        super().__init__(
            f"{what} would need {requested} cells, above the cell budget of {budget} "
            f"(set HAUSLEV_CELL_BUDGET to raise it)"
        )


class ValidationFailure(HauslevError):
    """Raised when a model fails one of its assumption checks"""

    exit_code = 4
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


async def hauslev_error_handler(request: Request, exc: HauslevError) -> JSONResponse:
    """Handle library errors"""
    return JSONResponse(
        status_code=exc.status_code,
        content={
            "detail": exc.message,
            "status_code": exc.status_code
        }
    )


async def validation_exception_handler(request: Request, exc: RequestValidationError) -> JSONResponse:
    """Handle Pydantic validation errors"""
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content={
            "detail": "Validation error",
            "status_code": status.HTTP_422_UNPROCESSABLE_ENTITY,
            "errors": exc.errors()
        }
    )


async def generic_exception_handler(request: Request, exc: Exception) -> JSONResponse:
    """Handle all uncaught exceptions"""
    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content={
            "detail": "Internal server error",
            "status_code": status.HTTP_500_INTERNAL_SERVER_ERROR,
            "message": str(exc)
        }
    )
