"""Safe arithmetic expressions over the coordinates ``x`` and ``y``.

Expressions are parsed with :mod:`ast` and walked against a whitelist, so a
configuration file can never reach arbitrary Python.
"""

from __future__ import annotations

import ast
from functools import reduce

import numpy as np

COORDINATES = ("x", "y")

_CONSTANTS = {"pi": np.pi, "e": np.e}

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
    "min": lambda *a: reduce(np.minimum, a),
    "max": lambda *a: reduce(np.maximum, a),
}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}

_UNARY = {ast.UAdd: np.positive, ast.USub: np.negative}


class ExpressionError(ValueError):
    pass


class Expression:
    """A parsed scalar expression, callable on coordinate arrays.

    >>> Expression("2 + 0.2*x")(np.array([[0.0], [1.0]]))
    array([2. , 2.2])
    """

    def __init__(self, source: str):
        if not isinstance(source, str):
            source = repr(source)
        self.source = source
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self.names: set[str] = set()
        self._validate(tree.body)
        self._tree = tree.body

    def _validate(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"unsupported literal {node.value!r} in {self.source!r}")
        elif isinstance(node, ast.Name):
            if node.id not in COORDINATES and node.id not in _CONSTANTS:
                raise ExpressionError(f"unknown name {node.id!r} in {self.source!r}")
            if node.id in COORDINATES:
                self.names.add(node.id)
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._validate(node.left)
            self._validate(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._validate(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ExpressionError(f"function not allowed in {self.source!r}")
            if node.keywords or not node.args:
                raise ExpressionError(f"bad call syntax in {self.source!r}")
            if node.func.id not in ("min", "max") and len(node.args) != 1:
                raise ExpressionError(f"{node.func.id} takes one argument in {self.source!r}")
            for arg in node.args:
                self._validate(arg)
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.source!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        args = [self._eval(a, env) for a in node.args]
        return _FUNCTIONS[node.func.id](*args)

    @property
    def is_constant(self) -> bool:
        return not self.names

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        env = {}
        for i, name in enumerate(COORDINATES):
            if i < pts.shape[1]:
                env[name] = pts[:, i]
            elif name in self.names:
                raise ExpressionError(f"{self.source!r} uses {name!r} on a {pts.shape[1]}D domain")
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (pts.shape[0],)).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"
