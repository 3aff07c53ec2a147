"""
Reward Audit Helper Utilities
Number formatting and tolerance helpers shared by renderer and reports
"""

import math
from typing import Optional

import numpy as np


def format_number(value: float) -> str:
    """Shortest positional numeral, preferring 6 significant digits, that reads back exactly"""
    if value == 0:
        return "0"
    if float(value).is_integer() and abs(value) < 1e16:
        return str(int(value))
    short = np.format_float_positional(value, precision=6, unique=False, fractional=False, trim="-")
    if float(short) == value:
        return short
    return np.format_float_positional(value, unique=True, trim="-")


def format_fixed(value: Optional[float], decimals: int) -> str:
    """Fixed-point rendering for report columns; missing values render empty"""
    if value is None or math.isnan(value):
        return ""
    text = f"{round(value, decimals):.{decimals}f}"
    # avoid "-0.00"
    if float(text) == 0:
        text = text.lstrip("-")
    return text


def tolerance_for(a: float, b: float, abs_tol: float = 1e-9, rel_tol: float = 1e-9) -> float:
    """Absolute-plus-relative slack used by strict comparisons"""
    return abs_tol + rel_tol * max(abs(a), abs(b))


def matches_printed(value: float, printed: float, decimals: int) -> bool:
    """True when value rounds to the printed figure at its printed precision"""
    return abs(value - printed) <= 0.5 * 10 ** (-decimals) + 1e-9 * max(1.0, abs(printed))
