"""Safe evaluation of arithmetic expressions for potentials and drift fields.

Expressions are plain Python arithmetic in the coordinate names (``x`` in 1D,
``x, y`` in 2D) over a whitelist of numpy functions.  Everything is parsed
once with :mod:`ast` and rejected unless it only uses names, numbers,
arithmetic operators and calls to whitelisted functions.
"""
from __future__ import annotations

import ast
from typing import Callable, Sequence

import numpy as np

FUNCTIONS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "arctan": np.arctan, "arcsinh": np.arcsinh,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


class ExpressionError(ValueError):
    pass


def compile_expression(text: str, variables: Sequence[str]) -> Callable:
    """Compile ``text`` into ``f(*coords)`` that accepts real or complex arrays."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    names = set(variables) | set(FUNCTIONS) | set(CONSTANTS)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ExpressionError(f"{type(node).__name__} not allowed in {text!r}")
        if isinstance(node, ast.Name) and node.id not in names:
            raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(f"only whitelisted functions may be called in {text!r}")
            if node.keywords:
                raise ExpressionError("keyword arguments are not allowed")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError(f"constant {node.value!r} is not a number")
    code = compile(tree, "<expression>", "eval")
    env = {"__builtins__": {}, **FUNCTIONS, **CONSTANTS}
    variables = tuple(variables)

    def f(*coords):
        scope = dict(zip(variables, coords))
        out = eval(code, env, scope)  # noqa: S307 - AST checked above
        return out + 0 * coords[0]  # broadcast constants to the input shape

    f.__doc__ = text
    return f
