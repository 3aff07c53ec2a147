"""
Reward Audit Logging Utility
Consistent logging configuration across the toolkit
"""

import logging
import os
import sys
from datetime import datetime
from functools import wraps
from typing import Any, Dict, Optional


def setup_logger(name: str, level: Optional[str] = None) -> logging.Logger:
    """Setup logger with consistent configuration"""

    logger = logging.getLogger(name)

    # Avoid adding handlers if they already exist
    if logger.handlers:
        return logger

    log_level = level or os.getenv("LOG_LEVEL", "WARNING")
    logger.setLevel(getattr(logging, log_level.upper(), logging.WARNING))

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # stdout carries report bytes, so the console handler writes to stderr
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    log_file = os.getenv("LOG_FILE")
    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False

    return logger


def log_performance(func_name: str):
    """Decorator to log function performance"""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            logger = setup_logger(f"{func.__module__}.{func.__name__}")
            start_time = datetime.now()
            try:
                result = func(*args, **kwargs)
                duration = (datetime.now() - start_time).total_seconds()
                logger.info(f"{func_name} completed in {duration:.3f} seconds")
                return result
            except Exception as e:
                duration = (datetime.now() - start_time).total_seconds()
                logger.error(f"{func_name} failed after {duration:.3f} seconds with error: {e}")
                raise
        return wrapper
    return decorator


class AuditLogger:
    """Logger with audit-specific event helpers"""

    def __init__(self, name: str):
        self.logger = setup_logger(name)

    def info(self, message: str, **kwargs):
        self.logger.info(message, extra=kwargs)

    def warning(self, message: str, **kwargs):
        self.logger.warning(message, extra=kwargs)

    def error(self, message: str, **kwargs):
        self.logger.error(message, extra=kwargs)

    def debug(self, message: str, **kwargs):
        self.logger.debug(message, extra=kwargs)

    def log_check_result(self, entry_id: str, check: str, status: str, details: Optional[Dict[str, Any]] = None):
        """Log the outcome of one sanity check"""
        log_data = {"entry_id": entry_id, "check": check, "status": status, "details": details or {}}
        self.logger.info(f"Check {check} on {entry_id}: {status}", extra={"audit": log_data})

    def log_discrepancy(self, entry_id: str, quantity: str, stated: float, derived: float, note: str):
        """Log a stated value that the entry's own formula does not reproduce"""
        log_data = {
            "entry_id": entry_id,
            "quantity": quantity,
            "stated": stated,
            "derived": derived,
            "note": note,
        }
        self.logger.warning(
            f"Discrepancy in {entry_id}.{quantity}: stated {stated}, derived {derived}",
            extra={"audit": log_data},
        )

    def log_step_rounding(self, scenario_id: str, kind: str, exact_steps: float, steps: int):
        """Log a step count that had to be rounded beyond the guard"""
        log_data = {"scenario": scenario_id, "kind": kind, "exact_steps": exact_steps, "steps": steps}
        self.logger.warning(
            f"Scenario {scenario_id} ({kind}): {exact_steps:.6f} reward steps rounded to {steps}",
            extra={"audit": log_data},
        )
