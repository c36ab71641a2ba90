"""Small arithmetic-expression evaluator for config-supplied functions.

Supports ``+ - * / ^`` (``^`` is exponentiation), parentheses, numeric
literals, one free variable, and the functions ``sin cos exp log``.
Expressions are parsed once with :mod:`ast` and evaluated on numpy arrays.
"""
from __future__ import annotations

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
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log}
_CONSTS = {"pi": np.pi}


class ExpressionError(ValueError):
    pass


class Expression:
    """A parsed expression in a single variable.

    >>> Expression("2*s^2 + 1", "s")(3.0)
    19.0
    """

    def __init__(self, source: str, variable: str = "s"):
        self.source = source
        self.variable = variable
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"functions take one argument in {self.source!r}")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id != self.variable and node.id not in _CONSTS:
                raise ExpressionError(
                    f"unknown name {node.id!r} in {self.source!r} "
                    f"(variable is {self.variable!r})"
                )
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"non-numeric literal in {self.source!r}")
        else:
            raise ExpressionError(
                f"unsupported syntax {type(node).__name__} in {self.source!r}"
            )

    def _eval(self, node, value):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](
                self._eval(node.left, value), self._eval(node.right, value)
            )
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, value))
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](self._eval(node.args[0], value))
        if isinstance(node, ast.Name):
            return value if node.id == self.variable else _CONSTS[node.id]
        return float(node.value)

    def __call__(self, value):
        arr = np.asarray(value, dtype=float)
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, arr)
        out = np.broadcast_to(np.asarray(out, dtype=float), arr.shape)
        return float(out) if out.ndim == 0 else out.copy()

    def __repr__(self):
        return f"Expression({self.source!r}, {self.variable!r})"
