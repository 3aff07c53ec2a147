"""
Reward Expression Language
Immutable AST for attribute formulas and a numpy-vectorised evaluator
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Callable, Dict, FrozenSet, Mapping, Optional, Tuple, Union

import numpy as np

from app.core.exceptions import DivisionByZero, InvalidClipBounds, MissingFeature

Value = Union[float, np.ndarray]
Location = Optional[Tuple[int, int]]


class BinaryOp(str, Enum):
    ADD = "+"
    SUB = "-"
    MUL = "*"
    DIV = "/"


class CompareOp(str, Enum):
    LT = "<"
    LE = "<="
    EQ = "=="
    GE = ">="
    GT = ">"


class Function(str, Enum):
    MIN = "min"
    MAX = "max"
    ABS = "abs"
    CLIP = "clip"


# Argument counts: None means variadic with at least two arguments
FUNCTION_ARITY: Dict[Function, Optional[int]] = {
    Function.MIN: None,
    Function.MAX: None,
    Function.ABS: 1,
    Function.CLIP: 3,
}


class Expr:
    """Base class of expression nodes"""


@dataclass(frozen=True)
class Const(Expr):
    value: float
    loc: Location = field(default=None, compare=False)


@dataclass(frozen=True)
class Ref(Expr):
    name: str
    loc: Location = field(default=None, compare=False)


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr
    loc: Location = field(default=None, compare=False)


@dataclass(frozen=True)
class Binary(Expr):
    op: BinaryOp
    left: Expr
    right: Expr
    loc: Location = field(default=None, compare=False)


@dataclass(frozen=True)
class Call(Expr):
    fn: Function
    args: Tuple[Expr, ...]
    loc: Location = field(default=None, compare=False)


@dataclass(frozen=True)
class Compare:
    op: CompareOp
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Cond(Expr):
    test: Compare
    then: Expr
    otherwise: Expr
    loc: Location = field(default=None, compare=False)


def free_features(expr: Expr) -> FrozenSet[str]:
    """Names of every feature an expression references"""
    if isinstance(expr, Ref):
        return frozenset({expr.name})
    if isinstance(expr, Const):
        return frozenset()
    if isinstance(expr, Neg):
        return free_features(expr.operand)
    if isinstance(expr, Binary):
        return free_features(expr.left) | free_features(expr.right)
    if isinstance(expr, Call):
        return frozenset().union(*(free_features(a) for a in expr.args))
    if isinstance(expr, Cond):
        return (
            free_features(expr.test.left)
            | free_features(expr.test.right)
            | free_features(expr.then)
            | free_features(expr.otherwise)
        )
    raise TypeError(f"not an expression node: {expr!r}")


def constant_value(expr: Expr) -> Optional[float]:
    """Value of a feature-free expression, or None when it depends on features"""
    if free_features(expr):
        return None
    try:
        return float(eval_expr(expr, {}))
    except (DivisionByZero, InvalidClipBounds):
        return None


def iter_nodes(expr: Expr):
    """Pre-order walk over expression nodes"""
    yield expr
    if isinstance(expr, Neg):
        yield from iter_nodes(expr.operand)
    elif isinstance(expr, Binary):
        yield from iter_nodes(expr.left)
        yield from iter_nodes(expr.right)
    elif isinstance(expr, Call):
        for arg in expr.args:
            yield from iter_nodes(arg)
    elif isinstance(expr, Cond):
        yield from iter_nodes(expr.test.left)
        yield from iter_nodes(expr.test.right)
        yield from iter_nodes(expr.then)
        yield from iter_nodes(expr.otherwise)


_COMPARATORS: Dict[CompareOp, Callable[[Value, Value], Value]] = {
    CompareOp.LT: np.less,
    CompareOp.LE: np.less_equal,
    CompareOp.EQ: np.equal,
    CompareOp.GE: np.greater_equal,
    CompareOp.GT: np.greater,
}


def _eval(expr: Expr, env: Mapping[str, Value]) -> Value:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Ref):
        try:
            return env[expr.name]
        except KeyError:
            raise MissingFeature(expr.name) from None
    if isinstance(expr, Neg):
        return np.negative(_eval(expr.operand, env))
    if isinstance(expr, Binary):
        left = _eval(expr.left, env)
        right = _eval(expr.right, env)
        if expr.op is BinaryOp.ADD:
            return np.add(left, right)
        if expr.op is BinaryOp.SUB:
            return np.subtract(left, right)
        if expr.op is BinaryOp.MUL:
            return np.multiply(left, right)
        if np.any(np.asarray(right) == 0):
            raise DivisionByZero(expr.loc)
        return np.divide(left, right)
    if isinstance(expr, Call):
        args = [_eval(a, env) for a in expr.args]
        if expr.fn is Function.MIN:
            return reduce(np.minimum, args)
        if expr.fn is Function.MAX:
            return reduce(np.maximum, args)
        if expr.fn is Function.ABS:
            return np.abs(args[0])
        x, lo, hi = args
        if np.any(np.asarray(lo) > np.asarray(hi)):
            raise InvalidClipBounds(float(np.max(lo)), float(np.min(hi)))
        return np.minimum(np.maximum(x, lo), hi)
    if isinstance(expr, Cond):
        test = _COMPARATORS[expr.test.op](_eval(expr.test.left, env), _eval(expr.test.right, env))
        return np.where(test, _eval(expr.then, env), _eval(expr.otherwise, env))
    raise TypeError(f"not an expression node: {expr!r}")


def eval_expr(expr: Expr, env: Mapping[str, Value]) -> Value:
    """
    Evaluate an expression over a feature environment

    Environment values may be scalars or equal-length numpy columns; the
    result is a float for scalar input and an array otherwise.
    """
    result = _eval(expr, env)
    if np.ndim(result) == 0:
        return float(result)
    return result
