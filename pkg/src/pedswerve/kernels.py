"""Kernel dispatch: the compiled extension when built, numpy otherwise.

Set ``PEDSWERVE_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

OP_CONST, OP_VAR, OP_ADD, OP_MUL, OP_SIN, OP_COS = range(6)

_impl = _fallback
BACKEND = "python"
if os.environ.get("PEDSWERVE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:  # extension not built
        pass


def _prep(code, consts, *arrays):
    code = np.ascontiguousarray(code, dtype=np.int_)
    consts = np.ascontiguousarray(consts, dtype=np.float64)
    return (code, consts) + tuple(np.ascontiguousarray(a, dtype=np.float64) for a in arrays)


def eval_program(code, consts, x):
    return _impl.eval_program(*_prep(code, consts, x))


def mse_program(code, consts, x, y):
    return float(_impl.mse_program(*_prep(code, consts, x, y)))


def mse_grad_program(code, consts, x, y):
    mse, grad = _impl.mse_grad_program(*_prep(code, consts, x, y))
    return float(mse), grad


def optimize_program(code, consts, x, y, maxiter=100, gtol=1e-12):
    """BFGS on the program constants; returns ``(constants, mse)``."""
    c, f = _impl.optimize_program(*_prep(code, consts, x, y), int(maxiter), float(gtol))
    return np.asarray(c, dtype=np.float64), float(f)


def predict_closed_loop(coeffs, x, other, d0):
    return _impl.predict_closed_loop(
        np.ascontiguousarray(coeffs, dtype=np.float64),
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(other, dtype=np.float64).reshape(-1, 2),
        float(d0),
    )
