"""Structured run logging for the learners via Python's logging module."""

import logging

from psrlab.settings import get_app_settings

LOGGER_NAME = "psrlab.run_log"
_LOGGER_CONFIGURED = False


def _get_logger():
    """Return the run log logger, ensuring it has a handler.

    Deferred setup leaves applications free to configure logging before the first run.
    """
    global _LOGGER_CONFIGURED  # noqa: PLW0603  # pylint: disable=global-statement
    log = logging.getLogger(LOGGER_NAME)
    if not _LOGGER_CONFIGURED:
        _LOGGER_CONFIGURED = True
        if not log.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(
                logging.Formatter(
                    "%(asctime)s.%(msecs)03d %(levelname)-7s %(name)s : %(message)s",
                    datefmt="%H:%M:%S",
                )
            )
            log.addHandler(handler)
        log.setLevel(logging.INFO)
        log.propagate = False
    return log


def emit_iteration(record):
    """Log one learner iteration record.

    Args:
        record (dict): A :class:`psrlab.learners.RunLog` record. Keys become attributes of the log record;
            the realized trajectory is dropped unless ``log_trajectories`` is enabled.
    """
    settings = get_app_settings()
    if not settings.get("run_logging_enabled", True):
        return
    extra = {key: value for key, value in record.items() if key != "trajectory"}
    if settings.get("log_trajectories", False) and "trajectory" in record:
        extra["trajectory"] = record["trajectory"]
    _get_logger().info(
        "learner_iteration",
        extra=extra,
    )


def emit_finished(algorithm, seed, summary):
    """Log the end of a learner run with its summary statistics."""
    if not get_app_settings().get("run_logging_enabled", True):
        return
    _get_logger().info(
        "learner_finished",
        extra={"algorithm": algorithm, "seed": seed, **summary},
    )


def emit_saddle_warning(problem, iterations, gap):
    """Log a saddle-point solve that stopped above the gap tolerance."""
    _get_logger().warning(
        "saddle_not_converged",
        extra={"problem": problem, "iterations": iterations, "duality_gap": gap},
    )
