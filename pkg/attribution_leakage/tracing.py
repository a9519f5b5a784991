"""Run tracing for CLI commands."""

import configparser
import functools
import logging
import time
from typing import Any, Callable, Optional, TypeVar, cast

from .recorder import SUCCESS, RunLog

logger = logging.getLogger()

F = TypeVar("F", bound=Callable[..., Any])


def _config_of(args: tuple[Any, ...]) -> Optional[dict[str, dict[str, str]]]:
    if args and isinstance(args[0], configparser.ConfigParser):
        parser = args[0]
        return {name: dict(parser[name]) for name in parser.sections()}
    return None


def trace_command(name: str) -> Callable[[F], F]:
    """Decorator that wraps a command to record its start and outcome."""

    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            runlog = RunLog(name)
            started = time.monotonic()
            runlog.started(_config_of(args))
            logger.info(f"{name}: started (run log {runlog.path})")
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                runlog.finished(f"Error: {e}", time.monotonic() - started)
                logger.error(f"{name} failed with exception: {e}", exc_info=True)
                raise
            runlog.finished(SUCCESS, time.monotonic() - started)
            logger.info(f"{name}: finished")
            return result

        return cast(F, wrapper)

    return decorator
