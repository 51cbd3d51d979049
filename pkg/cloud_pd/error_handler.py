from __future__ import annotations

import logging
import sys
import traceback
from types import TracebackType
from typing import Optional, Type

from .i18n import t

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3


class CloudPDError(Exception):
    """Base class for every error raised by cloud_pd."""

    exit_code = EXIT_UNEXPECTED

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class ValidationError(CloudPDError):
    exit_code = EXIT_INVALID


class DimensionError(ValidationError):
    pass


class SlaterViolationError(ValidationError):
    pass


class StepSizeError(ValidationError):
    pass


class ScheduleError(ValidationError):
    pass


class ConfigError(CloudPDError):
    exit_code = EXIT_INVALID


class ConvergenceError(CloudPDError):
    exit_code = EXIT_NOT_CONVERGED


def check_dimension(name: str, array, expected: int) -> None:
    length = len(array)
    if length != expected:
        raise DimensionError(t("error.dimension", field=name, expected=expected, actual=length), field=name)


def install_exception_hook() -> None:
    original_hook = sys.excepthook

    def handle_exception(
        exc_type: Type[BaseException],
        exc_value: BaseException,
        exc_traceback: Optional[TracebackType],
    ) -> None:
        if issubclass(exc_type, KeyboardInterrupt):
            original_hook(exc_type, exc_value, exc_traceback)
            return

        from .diagnostics import diagnostics_summary

        details = "".join(traceback.format_exception(exc_type, exc_value, exc_traceback))
        logger.error("unhandled exception\n%s", details)
        sys.stderr.write(f"{t('error.unexpected.title')}\n{t('error.unexpected.body')}\n\n")
        sys.stderr.write(details)
        sys.stderr.write(f"\n{diagnostics_summary()}")

    sys.excepthook = handle_exception
