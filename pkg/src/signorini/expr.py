"""Arithmetic load expressions over ``x`` and ``y``.

Only numbers, ``x``, ``y``, ``pi``, ``e``, the operators ``+ - * / **`` and
the functions below are accepted.  Expressions are compiled to a vectorised
callable.

>>> f = parse_load("x*cos(2*pi*y)")
>>> float(f(1.0, 0.0))
1.0
"""
from __future__ import annotations

import ast
import operator

import numpy as np

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class ExpressionError(ValueError):
    pass


def _compile(node):
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda x, y: v
    if isinstance(node, ast.Name):
        if node.id == "x":
            return lambda x, y: x
        if node.id == "y":
            return lambda x, y: y
        if node.id in CONSTANTS:
            v = CONSTANTS[node.id]
            return lambda x, y: v
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op, a, b = _BINOPS[type(node.op)], _compile(node.left), _compile(node.right)
        return lambda x, y: op(a(x, y), b(x, y))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op, a = _UNARY[type(node.op)], _compile(node.operand)
        return lambda x, y: op(a(x, y))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
        fn, a = FUNCTIONS[node.func.id], _compile(node.args[0])
        return lambda x, y: fn(a(x, y))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse_load(text: str):
    """Compile ``text`` into ``f(x, y)`` returning arrays shaped like ``x``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    fn = _compile(tree)

    def f(x, y):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(fn(x, np.asarray(y, dtype=float)), np.broadcast(x, y).shape).astype(float)

    f.expression = text
    return f
