"""Algebraic simplification: constant folding, identities, constant merging."""

from __future__ import annotations

import math

from .expr import Binary, Constant, Unary, Variable


def _fold(op, a, b):
    return a + b if op == "+" else a * b


def _is_const(n, v=None):
    return isinstance(n, Constant) and (v is None or n.value == v)


def simplify(e):
    """Bottom-up rewrite to a fixed point.

    Rules: fold constant subtrees (including ``sin``/``cos`` of constants),
    ``e + 0 -> e``, ``e * 1 -> e``, ``e * 0 -> 0``, move constants to the left
    of commutative operators, and merge ``c1 op (c2 op e)`` into ``(c1 op c2) op e``.
    Results agree with the input wherever both evaluate to finite values.
    """
    prev = None
    while prev != e:
        prev, e = e, _simplify_once(e)
    return e


def _simplify_once(e):
    if isinstance(e, (Constant, Variable)):
        return e
    if isinstance(e, Unary):
        c = _simplify_once(e.child)
        if isinstance(c, Constant):
            return Constant(math.sin(c.value) if e.op == "sin" else math.cos(c.value))
        return Unary(e.op, c)

    a, b = _simplify_once(e.left), _simplify_once(e.right)
    if isinstance(a, Constant) and isinstance(b, Constant):
        return Constant(_fold(e.op, a.value, b.value))
    if isinstance(b, Constant) and not isinstance(a, Constant):
        a, b = b, a
    if e.op == "+":
        if _is_const(a, 0.0):
            return b
    else:
        if _is_const(a, 1.0):
            return b
        if _is_const(a, 0.0):
            return Constant(0.0)
    if isinstance(a, Constant) and isinstance(b, Binary) and b.op == e.op and isinstance(b.left, Constant):
        return Binary(e.op, Constant(_fold(e.op, a.value, b.left.value)), b.right)
    return Binary(e.op, a, b)
