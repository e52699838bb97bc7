"""Expression trees over ``{+, *, sin, cos}``, constants and the variable ``x``."""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .. import kernels
from ..errors import InvalidInputError

UNARY_OPS = ("sin", "cos")
BINARY_OPS = ("+", "*")
_OPCODES = {"+": kernels.OP_ADD, "*": kernels.OP_MUL, "sin": kernels.OP_SIN, "cos": kernels.OP_COS}


class Expr:
    __slots__ = ()

    def children(self):
        return ()

    @property
    def complexity(self):
        return self._size

    def __call__(self, x):
        return eval_expr(self, x)

    def __str__(self):
        return format_expr(self)


@dataclass(frozen=True, eq=True, repr=True)
class Constant(Expr):
    value: float

    @property
    def _size(self):
        return 1


@dataclass(frozen=True, eq=True, repr=True)
class Variable(Expr):
    @property
    def _size(self):
        return 1


@dataclass(frozen=True, eq=True, repr=True)
class Unary(Expr):
    op: str
    child: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise InvalidInputError(f"unknown unary operator {self.op!r}")

    def children(self):
        return (self.child,)

    @cached_property
    def _size(self):
        return 1 + self.child.complexity


@dataclass(frozen=True, eq=True, repr=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise InvalidInputError(f"unknown binary operator {self.op!r}")

    def children(self):
        return (self.left, self.right)

    @cached_property
    def _size(self):
        return 1 + self.left.complexity + self.right.complexity


# cached_property needs a __dict__; frozen dataclasses without slots have one.
X = Variable()


def add(a, b):
    return Binary("+", a, b)


def mul(a, b):
    return Binary("*", a, b)


def sin(a):
    return Unary("sin", a)


def cos(a):
    return Unary("cos", a)


def const(v):
    return Constant(float(v))


def complexity(e):
    return e.complexity


def depth(e):
    kids = e.children()
    return 1 + max((depth(k) for k in kids), default=0)


def compile_expr(e):
    """Postfix opcodes plus the constants in the order they are pushed."""
    code, consts = [], []

    def walk(n):
        if isinstance(n, Constant):
            code.append(kernels.OP_CONST)
            consts.append(n.value)
        elif isinstance(n, Variable):
            code.append(kernels.OP_VAR)
        elif isinstance(n, Unary):
            walk(n.child)
            code.append(_OPCODES[n.op])
        else:
            walk(n.left)
            walk(n.right)
            code.append(_OPCODES[n.op])

    walk(e)
    return np.array(code, dtype=np.int_), np.array(consts, dtype=np.float64)


def constants_of(e):
    return compile_expr(e)[1]


def with_constants(e, values):
    """Copy of ``e`` with its constants replaced, in postfix order."""
    it = iter(values)

    def walk(n):
        if isinstance(n, Constant):
            return Constant(float(next(it)))
        if isinstance(n, Variable):
            return n
        if isinstance(n, Unary):
            return Unary(n.op, walk(n.child))
        return Binary(n.op, walk(n.left), walk(n.right))

    return walk(e)


def eval_expr(e, x):
    """Evaluate on a scalar or array; NaN and inf propagate."""
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    code, consts = compile_expr(e)
    out = kernels.eval_program(code, consts, xa)
    return float(out[0]) if scalar else out


def mse(e, x, y):
    code, consts = compile_expr(e)
    return kernels.mse_program(code, consts, x, y)


def subtrees(e):
    """All nodes in pre-order, as ``(path, node)``; a path is a tuple of child indices."""
    out = []

    def walk(n, path):
        out.append((path, n))
        for i, c in enumerate(n.children()):
            walk(c, path + (i,))

    walk(e, ())
    return out


def replace_at(e, path, new):
    if not path:
        return new
    i, rest = path[0], path[1:]
    if isinstance(e, Unary):
        return Unary(e.op, replace_at(e.child, rest, new))
    if i == 0:
        return Binary(e.op, replace_at(e.left, rest, new), e.right)
    return Binary(e.op, e.left, replace_at(e.right, rest, new))


def node_at(e, path):
    for i in path:
        e = e.children()[i]
    return e


# -- text form -----------------------------------------------------------------

def _num(v):
    return f"{v:.9g}"


def _negated(n):
    """``n`` with its sign flipped if that can be shown as a subtraction, else None."""
    if isinstance(n, Constant) and (n.value < 0 or (n.value == 0 and math.copysign(1, n.value) < 0)):
        return Constant(-n.value)
    if isinstance(n, Binary) and n.op == "*" and isinstance(n.left, Constant) and n.left.value < 0:
        if n.left.value == -1:
            return n.right
        return Binary("*", Constant(-n.left.value), n.right)
    return None


def format_expr(e):
    """Infix text with constants at 9 significant digits, e.g. ``-0.335*sin(0.046*x - 4.137) - 0.968``."""
    if isinstance(e, Constant):
        return _num(e.value)
    if isinstance(e, Variable):
        return "x"
    if isinstance(e, Unary):
        return f"{e.op}({format_expr(e.child)})"
    if e.op == "+":
        neg = _negated(e.right)
        if neg is not None:
            return f"{format_expr(e.left)} - {_factor(neg, minus=True)}"
        right = format_expr(e.right)
        if isinstance(e.right, Binary) and e.right.op == "+":
            right = f"({right})"  # keep the tree shape on re-parsing
        return f"{format_expr(e.left)} + {right}"
    left = _factor(e.left)
    if isinstance(e.left, Constant) and e.left.value == -1:
        return f"-{_factor(e.right)}"
    return f"{left}*{_factor(e.right)}"


def _factor(n, minus=False):
    s = format_expr(n)
    if isinstance(n, Binary) and n.op == "+":
        return f"({s})"
    if minus and isinstance(n, Binary) and n.op == "*" and s.startswith("-"):
        return f"({s})"
    return s


def parse_expr(text):
    """Inverse of :func:`format_expr` (also accepts any equivalent ``+ - * sin cos`` text)."""
    try:
        tree = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise InvalidInputError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def neg(n):
        if isinstance(n, Constant):
            return Constant(-n.value)
        if isinstance(n, Binary) and n.op == "*" and isinstance(n.left, Constant):
            return Binary("*", Constant(-n.left.value), n.right)
        return Binary("*", Constant(-1.0), n)

    def conv(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return Constant(float(node.value))
        if isinstance(node, ast.Name) and node.id == "x":
            return X
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = conv(node.operand)
            return neg(inner) if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp):
            a, b = conv(node.left), conv(node.right)
            if isinstance(node.op, ast.Add):
                return Binary("+", a, b)
            if isinstance(node.op, ast.Sub):
                return Binary("+", a, neg(b))
            if isinstance(node.op, ast.Mult):
                return Binary("*", a, b)
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in UNARY_OPS and len(node.args) == 1 and not node.keywords):
            return Unary(node.func.id, conv(node.args[0]))
        raise InvalidInputError(f"unsupported syntax in expression {text!r}")

    return conv(tree)
