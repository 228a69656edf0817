"""Safe evaluation of reference-curve expressions in the variable y.

Accepts plain arithmetic (+ - * / ** and unary signs) over numbers and
the single variable y, e.g. "0.1+2*y**3".  Anything else is rejected, so
expressions from the command line cannot execute code.
"""

from __future__ import annotations

import ast

import numpy as np

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)


def _eval_node(node, y):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, y)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "y":
        return y
    if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        a = _eval_node(node.left, y)
        b = _eval_node(node.right, y)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        if isinstance(node.op, ast.Div):
            return a / b
        return a**b
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
        v = _eval_node(node.operand, y)
        return v if isinstance(node.op, ast.UAdd) else -v
    raise ValueError(f"unsupported element in reference curve: {ast.dump(node)}")


def reference_curve(expression: str):
    """Compile an expression of y into a vectorized callable."""
    tree = ast.parse(expression, mode="eval")

    def f(y):
        return _eval_node(tree, np.asarray(y, dtype=np.float64))

    f(np.array([1.0]))  # validate eagerly
    return f
