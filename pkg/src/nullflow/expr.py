"""Tiny expression language for initial graphs over ``(theta, phi)``.

Grammar: numeric constants, ``pi``, ``theta``, ``phi``, ``cos(.)``, ``sin(.)``,
``+``, ``-``, ``*`` and parentheses. Anything else is rejected before
evaluation; nothing is passed to ``eval``.
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import ConfigError
from .sphere import SphereGrid

_FUNCS = {"cos": np.cos, "sin": np.sin}
_NAMES = {"pi": np.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply}


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in _NAMES:
            return _NAMES[node.id]
        raise ConfigError([f"unknown name {node.id!r} in expression"])
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in _FUNCS
        and len(node.args) == 1
        and not node.keywords
    ):
        return _FUNCS[node.func.id](_eval(node.args[0], env))
    raise ConfigError([f"unsupported construct {ast.dump(node)[:60]!r} in expression"])


def parse(text: str) -> ast.Expression:
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError([f"cannot parse expression {text!r}: {exc.msg}"]) from None
    _eval(tree, {"theta": 0.0, "phi": 0.0})  # validates the tree
    return tree


def evaluate(text: str, grid: SphereGrid) -> np.ndarray:
    """Evaluate ``text`` at the grid nodes; returns a field of the grid's shape."""
    tree = parse(text)
    theta, phi = grid.mesh
    out = _eval(tree, {"theta": theta, "phi": phi})
    return np.broadcast_to(np.asarray(out, dtype=float), grid.shape).copy()
