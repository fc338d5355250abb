"""Tiny arithmetic expression language used for atom locations, weights,
densities and integrands.

Grammar: numeric literals, the variables ``n`` and ``xi1 .. xid``, the binary
operators ``+ - * / ^``, unary minus, and the functions ``exp``, ``ln``,
``abs``, ``min``, ``max``. Parsing goes through :mod:`ast` with a node
whitelist, evaluation is vectorised over numpy arrays.
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = ["Expr", "ExprError", "parse"]

_XI = re.compile(r"^xi([1-9][0-9]*)$")

_FUNCS: dict[str, tuple[int, Callable]] = {
    "exp": (1, np.exp),
    "ln": (1, np.log),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExprError(ValueError):
    """Raised for malformed or disallowed expressions."""


def _compile(node: ast.AST, text: str) -> tuple[Callable, frozenset]:
    """Turn a whitelisted AST node into ``(fn(env) -> array, free_vars)``."""
    if isinstance(node, ast.Expression):
        return _compile(node.body, text)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        value = float(node.value)
        return (lambda env: value), frozenset()
    if isinstance(node, ast.Name):
        name = node.id
        if name != "n" and not _XI.match(name):
            raise ExprError(f"unknown variable {name!r} in {text!r}")
        return (lambda env: env[name]), frozenset([name])
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner, free = _compile(node.operand, text)
        if isinstance(node.op, ast.USub):
            return (lambda env: -inner(env)), free
        return inner, free
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, lfree = _compile(node.left, text)
        right, rfree = _compile(node.right, text)
        return (lambda env: op(left(env), right(env))), lfree | rfree
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        name = node.func.id
        if name not in _FUNCS:
            raise ExprError(f"unknown function {name!r} in {text!r}")
        arity, fn = _FUNCS[name]
        if len(node.args) != arity or node.keywords:
            raise ExprError(f"{name} takes {arity} argument(s) in {text!r}")
        parts = [_compile(a, text) for a in node.args]
        free = frozenset().union(*(p[1] for p in parts))
        if arity == 1:
            (a, _), = parts
            return (lambda env: fn(a(env))), free
        (a, _), (b, _) = parts
        return (lambda env: fn(a(env), b(env))), free
    raise ExprError(f"unsupported syntax {type(node).__name__} in {text!r}")


@dataclass(frozen=True)
class Expr:
    """A parsed expression. ``text`` is kept verbatim for round trips."""

    text: str
    _fn: Callable = field(repr=False, compare=False, hash=False)
    variables: frozenset = field(compare=False, hash=False)

    def __call__(self, **env) -> np.ndarray:
        missing = self.variables - env.keys()
        if missing:
            raise ExprError(f"{self.text!r} needs values for {sorted(missing)}")
        env = {k: np.asarray(v, dtype=np.result_type(v, float)) for k, v in env.items()}
        with np.errstate(all="ignore"):
            out = self._fn(env)
        shape = np.broadcast_shapes(*(np.shape(env[v]) for v in self.variables)) \
            if self.variables else ()
        return np.broadcast_to(np.asarray(out), shape) if np.shape(out) != shape else np.asarray(out)

    def evaluate(self, env: Mapping[str, np.ndarray]) -> np.ndarray:
        return self(**dict(env))

    def max_xi_index(self) -> int:
        idx = [int(_XI.match(v).group(1)) for v in self.variables if v != "n"]
        return max(idx, default=0)

    def __mul__(self, other: "Expr | str | float") -> "Expr":
        other = parse(other)
        return parse(f"({self.text})*({other.text})")

    def __add__(self, other: "Expr | str | float") -> "Expr":
        other = parse(other)
        return parse(f"({self.text})+({other.text})")

    def __str__(self) -> str:
        return self.text


def parse(text: "str | float | int | Expr") -> Expr:
    """Parse ``text`` into an :class:`Expr`; numbers and Exprs pass through."""
    if isinstance(text, Expr):
        return text
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ExprError(f"expected a non-empty expression string, got {text!r}")
    if "**" in text:
        raise ExprError(f"use '^' for powers in {text!r}")
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"cannot parse {text!r}: {exc.msg}") from None
    fn, free = _compile(tree, text)
    return Expr(text, fn, free)
