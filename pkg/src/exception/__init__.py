import sys
import logging
from typing import Any, Dict, Optional

from src.constants import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE


def error_message_detail(error: Exception, error_detail: sys) -> str:
    """
    Extracts detailed error information including file name, line number, and the error message.

    :param error: The exception that occurred.
    :param error_detail: The sys module to access traceback details.
    :return: A formatted error message string.
    """
    _, _, exc_tb = error_detail.exc_info()

    if exc_tb is None:
        error_message = f"Error occurred: {str(error)}"
    else:
        # Walk to the innermost frame, where the error was actually raised
        while exc_tb.tb_next is not None:
            exc_tb = exc_tb.tb_next
        file_name = exc_tb.tb_frame.f_code.co_filename
        line_number = exc_tb.tb_lineno
        error_message = f"Error occurred in python script: [{file_name}] at line number [{line_number}]: {str(error)}"

    logging.error(error_message)

    return error_message


class StylizerError(Exception):
    """
    Base class for structured errors raised by the stylization engine.

    Every error carries a machine-readable ``kind``, the process ``exit_code``
    the command line maps it to, and a ``details`` dictionary.
    """
    kind: str = "error"
    exit_code: int = EXIT_DATA

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.kind, "message": self.message, "details": self.details}


class UsageError(StylizerError):
    kind = "usage"
    exit_code = EXIT_USAGE


class DataError(StylizerError):
    kind = "data"
    exit_code = EXIT_DATA


class NumericError(StylizerError):
    """Raised when a NaN or infinite value shows up in a loss or gradient."""
    kind = "numeric"
    exit_code = EXIT_NUMERIC


class ShapeMismatchError(DataError):
    kind = "shape_mismatch"


class UnknownOperationError(DataError):
    kind = "unknown_operation"


class ParameterRangeError(DataError):
    kind = "parameter_range"


class PPMFormatError(DataError):
    kind = "ppm_format"


class EmptyDatasetError(DataError):
    kind = "empty_dataset"


class DatasetReadError(DataError):
    kind = "dataset_read"


class MissingLabelsError(DataError):
    kind = "missing_labels"


class PoolExhaustedError(DataError):
    kind = "pool_exhausted"


class MalformedDocumentError(DataError):
    kind = "malformed_document"


class VersionMismatchError(DataError):
    kind = "version_mismatch"


class RegistryMismatchError(DataError):
    kind = "registry_mismatch"


class PolicyValidationError(DataError):
    kind = "policy_validation"


class CheckpointError(DataError):
    kind = "checkpoint"


class OutputCollisionError(DataError):
    kind = "output_collision"


class MyException(Exception):
    """
    Custom exception class used by the pipeline components. Wraps any error with
    the location it was raised from, keeping the structured fields of a wrapped
    StylizerError.
    """
    def __init__(self, error_message, error_detail: sys):
        """
        :param error_message: The original exception (or a message string).
        :param error_detail: The sys module to access traceback details.
        """
        super().__init__(error_message)

        self.error_message = error_message_detail(error_message, error_detail)

        cause: Optional[BaseException] = error_message if isinstance(error_message, BaseException) else None
        # Unwrap nested MyException so the innermost structured error wins
        while isinstance(cause, MyException) and cause.cause is not None:
            cause = cause.cause
        self.cause = cause
        self.kind: str = getattr(cause, "kind", "internal")
        self.exit_code: int = getattr(cause, "exit_code", DataError.exit_code)
        self.details: Dict[str, Any] = getattr(cause, "details", {})
        self.message: str = getattr(cause, "message", str(error_message))

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.kind, "message": self.message, "details": self.details}

    def __str__(self) -> str:
        """
        Returns the string representation of the error message.
        """
        return self.error_message
