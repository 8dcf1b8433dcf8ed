"""Closed-form parameter maps written as small arithmetic expressions.

Vocabulary: + - * / **, unary minus, numeric constants, variable names and
the functions log, exp, sqrt, abs. Expressions are parsed with ``ast`` and
evaluated on numpy arrays; nothing else is executed.
"""
import ast
from typing import Dict, FrozenSet

import numpy as np

from cpcm_errors import PreconditionError

FUNCTIONS = {'log': np.log, 'exp': np.exp, 'sqrt': np.sqrt, 'abs': np.abs}
BINARY = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ThetaExpression:
    def __init__(self, source: str):
        self.source = str(source)
        try:
            self._tree = ast.parse(self.source, mode='eval')
        except SyntaxError as e:
            raise PreconditionError(f"Cannot parse expression '{self.source}': {e.msg}")
        self.variables: FrozenSet[str] = frozenset(self._collect(self._tree.body))

    def _collect(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise PreconditionError(f"Only numeric constants are allowed in '{self.source}'")
            return set()
        if isinstance(node, ast.Name):
            if node.id in FUNCTIONS:
                raise PreconditionError(f"'{node.id}' is a function in '{self.source}'")
            return {node.id}
        if isinstance(node, ast.BinOp) and type(node.op) in BINARY:
            return self._collect(node.left) | self._collect(node.right)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            return self._collect(node.operand)
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS
                and len(node.args) == 1 and not node.keywords):
            return self._collect(node.args[0])
        raise PreconditionError(f"Unsupported syntax '{ast.dump(node)[:40]}' in '{self.source}'")

    def _eval(self, node, env: Dict[str, np.ndarray]):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return BINARY[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            value = self._eval(node.operand, env)
            return -value if isinstance(node.op, ast.USub) else value
        return FUNCTIONS[node.func.id](self._eval(node.args[0], env))

    def evaluate(self, env: Dict[str, np.ndarray], n: int) -> np.ndarray:
        """Vector of length n; missing variables are an error"""
        missing = self.variables - set(env)
        if missing:
            raise PreconditionError(f"Expression '{self.source}' uses unknown variables {sorted(missing)}")
        arrays = {k: np.asarray(v, dtype=float) for k, v in env.items()}
        with np.errstate(all='ignore'):
            value = self._eval(self._tree.body, arrays)
        return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()

    def __repr__(self):
        return f"ThetaExpression({self.source!r})"
