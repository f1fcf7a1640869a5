"""Tiny safe arithmetic-expression evaluator for custom model profiles.

Grammar: numeric literals, the variables ``t`` (alias ``lx``, the ray
coordinate) and ``x1`` .. ``xd`` (state components), the functions ``log``,
``log1p``, ``exp``, ``sqrt`` and ``pow``, and the operators + - * / ** with
parentheses. Anything else is rejected at compile time.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field

_ALLOWED_FUNCS = {"log": math.log, "log1p": math.log1p, "exp": math.exp,
                  "sqrt": math.sqrt, "pow": math.pow}
_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)


def _validate(node: ast.AST, names: set[str]) -> None:
    if isinstance(node, ast.Expression):
        _validate(node.body, names)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        _validate(node.left, names)
        _validate(node.right, names)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
        _validate(node.operand, names)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_FUNCS):
            raise ValueError(f"function not allowed in expression: {ast.dump(node.func)}")
        if node.keywords:
            raise ValueError("keyword arguments not allowed in expressions")
        for arg in node.args:
            _validate(arg, names)
    elif isinstance(node, ast.Name):
        if node.id not in names:
            raise ValueError(f"unknown name in expression: {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ValueError(f"literal not allowed: {node.value!r}")
    else:
        raise ValueError(f"syntax not allowed in expression: {type(node).__name__}")


@dataclass(frozen=True)
class ScalarExpr:
    """A compiled expression evaluated on (t, optional state components)."""

    source: str
    dim: int = 0
    _code: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = {"t", "lx"} | {f"x{i + 1}" for i in range(self.dim)}
        tree = ast.parse(self.source, mode="eval")
        _validate(tree, names)
        object.__setattr__(self, "_code", compile(tree, "<expr>", "eval"))

    def __call__(self, t: float, x=None) -> float:
        env = {"t": t, "lx": t, **_ALLOWED_FUNCS}
        if x is not None:
            for i, xi in enumerate(x):
                env[f"x{i + 1}"] = float(xi)
        return float(eval(self._code, {"__builtins__": {}}, env))
