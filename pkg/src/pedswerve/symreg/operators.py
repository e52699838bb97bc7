"""Random trees and variation operators. All randomness comes from the caller's ``Generator``."""

from __future__ import annotations

import numpy as np

from .expr import BINARY_OPS, UNARY_OPS, Binary, Constant, Unary, X, replace_at, subtrees

MUTATIONS = ("constant", "operator", "graft", "delete")


def random_constant(rng, const_scale=1.0):
    """Random sign, magnitude log-uniform over ``const_scale * [1e-2, 1e1]``."""
    mag = const_scale * 10.0 ** rng.uniform(-2.0, 1.0)
    return mag if rng.random() < 0.5 else -mag


def random_leaf(rng, const_scale=1.0, p_var=0.5):
    if rng.random() < p_var:
        return X
    return Constant(float(random_constant(rng, const_scale)))


def random_tree(rng, max_depth=3, const_scale=1.0, p_leaf=0.3, unary_ops=UNARY_OPS):
    """Grow-method tree with at most ``max_depth`` levels of operators."""
    if max_depth <= 0 or rng.random() < p_leaf:
        return random_leaf(rng, const_scale)
    if unary_ops and rng.random() < 0.4:
        op = unary_ops[rng.integers(len(unary_ops))]
        return Unary(op, random_tree(rng, max_depth - 1, const_scale, p_leaf, unary_ops))
    return Binary(
        BINARY_OPS[rng.integers(2)],
        random_tree(rng, max_depth - 1, const_scale, p_leaf, unary_ops),
        random_tree(rng, max_depth - 1, const_scale, p_leaf, unary_ops),
    )


def _pick(rng, nodes):
    return nodes[rng.integers(len(nodes))]


def _perturb_constant(e, rng, const_scale):
    consts = [(p, n) for p, n in subtrees(e) if isinstance(n, Constant)]
    if not consts:
        return None
    path, node = _pick(rng, consts)
    if rng.random() < 0.5:
        v = node.value * float(np.exp(rng.normal(0.0, 0.5)))
        if rng.random() < 0.1:
            v = -v
    else:
        v = node.value + float(random_constant(rng, const_scale))
    return replace_at(e, path, Constant(v))


def _swap_operator(e, rng, unary_ops):
    ops = [(p, n) for p, n in subtrees(e) if isinstance(n, (Unary, Binary))]
    if not ops:
        return None
    path, node = _pick(rng, ops)
    if isinstance(node, Unary):
        alts = [op for op in unary_ops if op != node.op]
        if not alts:
            return None
        return replace_at(e, path, Unary(alts[rng.integers(len(alts))], node.child))
    return replace_at(e, path, Binary("*" if node.op == "+" else "+", node.left, node.right))


def _graft(e, rng, const_scale, unary_ops):
    path, node = _pick(rng, subtrees(e))
    if rng.random() < 0.5:
        return replace_at(e, path, random_tree(rng, 2, const_scale, unary_ops=unary_ops))
    if unary_ops and rng.random() < 0.4:
        new = Unary(unary_ops[rng.integers(len(unary_ops))], node)
    else:
        leaf = random_leaf(rng, const_scale)
        op = BINARY_OPS[rng.integers(2)]
        new = Binary(op, node, leaf) if rng.random() < 0.5 else Binary(op, leaf, node)
    return replace_at(e, path, new)


def _delete(e, rng, const_scale):
    internal = [(p, n) for p, n in subtrees(e) if isinstance(n, (Unary, Binary))]
    if not internal:
        return None
    path, node = _pick(rng, internal)
    if rng.random() < 0.8:
        kids = node.children()
        return replace_at(e, path, kids[rng.integers(len(kids))])
    return replace_at(e, path, random_leaf(rng, const_scale))


def mutate(e, rng, max_complexity=25, const_scale=1.0, tries=10, unary_ops=UNARY_OPS):
    """One random edit: perturb a constant, swap an operator, graft or delete a subtree.

    Candidates over ``max_complexity`` are redrawn up to ``tries`` times, after
    which the parent is returned unchanged.
    """
    for _ in range(tries):
        kind = MUTATIONS[rng.integers(len(MUTATIONS))]
        if kind == "constant":
            child = _perturb_constant(e, rng, const_scale)
        elif kind == "operator":
            child = _swap_operator(e, rng, unary_ops)
        elif kind == "graft":
            child = _graft(e, rng, const_scale, unary_ops)
        else:
            child = _delete(e, rng, const_scale)
        if child is not None and child.complexity <= max_complexity:
            return child
    return e


def crossover(e1, e2, rng, max_complexity=25, tries=10):
    """Replace a random subtree of ``e1`` by a random subtree of ``e2``."""
    n1, n2 = subtrees(e1), subtrees(e2)
    for _ in range(tries):
        path, _ = _pick(rng, n1)
        _, donor = _pick(rng, n2)
        child = replace_at(e1, path, donor)
        if child.complexity <= max_complexity:
            return child
    return e1

