"""Small arithmetic-expression language for custom driving phases.

Supports ``+ - * / ^`` (``**`` too), unary minus, numeric literals, the
functions ``sin cos exp`` and the variables ``t2`` and ``x2``. Parsing uses
the stdlib :mod:`ast` and a whitelist walk; nothing is ``eval``-ed.
"""
import ast
import operator

import numpy as np

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_VARS = ("t2", "x2")


class ExpressionError(ValueError):
    pass


def _check(node):
    if isinstance(node, ast.Expression):
        return _check(node.body)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check(node.operand)
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        pass
    elif isinstance(node, ast.Name):
        if node.id not in _VARS:
            raise ExpressionError(f"unknown variable {node.id!r} at column {node.col_offset}")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError(f"unsupported function at column {node.col_offset}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0])
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__!r}")


def _eval(node, env):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    return _FUNCS[node.func.id](_eval(node.args[0], env))


class Expression:
    """Compiled expression callable as ``expr(t2, x2)`` on scalars or arrays."""

    def __init__(self, source):
        self.source = source
        text = source.replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        _check(tree)
        self._body = tree.body

    def __call__(self, t2, x2):
        t2 = np.asarray(t2, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = _eval(self._body, {"t2": t2, "x2": x2})
        return np.broadcast_to(out, np.broadcast(t2, x2).shape).astype(float)

    def __repr__(self):
        return f"Expression({self.source!r})"
