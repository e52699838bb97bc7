# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Mirrors ``pedswerve._fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, fabs, INFINITY

cnp.import_array()

DEF OP_CONST = 0
DEF OP_VAR = 1
DEF OP_ADD = 2
DEF OP_MUL = 3
DEF OP_SIN = 4
DEF OP_COS = 5


cdef inline double _run(const long[:] code, const double[:] consts,
                        double xi, double[:] stack) nogil:
    cdef Py_ssize_t pc, sp = 0, k = 0
    cdef long op
    for pc in range(code.shape[0]):
        op = code[pc]
        if op == OP_CONST:
            stack[sp] = consts[k]
            k += 1
            sp += 1
        elif op == OP_VAR:
            stack[sp] = xi
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_SIN:
            stack[sp - 1] = sin(stack[sp - 1])
        else:
            stack[sp - 1] = cos(stack[sp - 1])
    return stack[0]


def eval_program(const long[:] code, const double[:] consts, const double[:] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    cdef double[:] stack = np.empty(code.shape[0] + 1, dtype=np.float64)
    with nogil:
        for i in range(n):
            o[i] = _run(code, consts, x[i], stack)
    return out


def mse_program(const long[:] code, const double[:] consts,
                const double[:] x, const double[:] y):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double r, acc = 0.0
    cdef double[:] stack = np.empty(code.shape[0] + 1, dtype=np.float64)
    with nogil:
        for i in range(n):
            r = _run(code, consts, x[i], stack) - y[i]
            acc += r * r
    return acc / n


cdef double _mse(const long[:] code, const double[:] consts, const double[:] x,
                 const double[:] y, double[:] stack) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double r, acc = 0.0
    for i in range(n):
        r = _run(code, consts, x[i], stack) - y[i]
        acc += r * r
    return acc / n


cdef double _mse_grad(const long[:] code, const double[:] consts, const double[:] x,
                      const double[:] y, double[:] val, double[:, :] der,
                      double[:] g) nogil:
    cdef Py_ssize_t n = x.shape[0], m = consts.shape[0]
    cdef Py_ssize_t i, j, pc, sp, k
    cdef long op
    cdef double r, a, b, acc = 0.0
    for j in range(m):
        g[j] = 0.0
    for i in range(n):
        sp = 0
        k = 0
        for pc in range(code.shape[0]):
            op = code[pc]
            if op == OP_CONST:
                val[sp] = consts[k]
                for j in range(m):
                    der[sp, j] = 0.0
                der[sp, k] = 1.0
                k += 1
                sp += 1
            elif op == OP_VAR:
                val[sp] = x[i]
                for j in range(m):
                    der[sp, j] = 0.0
                sp += 1
            elif op == OP_ADD:
                sp -= 1
                val[sp - 1] = val[sp - 1] + val[sp]
                for j in range(m):
                    der[sp - 1, j] = der[sp - 1, j] + der[sp, j]
            elif op == OP_MUL:
                sp -= 1
                a = val[sp - 1]
                b = val[sp]
                val[sp - 1] = a * b
                for j in range(m):
                    der[sp - 1, j] = der[sp - 1, j] * b + a * der[sp, j]
            elif op == OP_SIN:
                a = val[sp - 1]
                val[sp - 1] = sin(a)
                b = cos(a)
                for j in range(m):
                    der[sp - 1, j] = b * der[sp - 1, j]
            else:
                a = val[sp - 1]
                val[sp - 1] = cos(a)
                b = -sin(a)
                for j in range(m):
                    der[sp - 1, j] = b * der[sp - 1, j]
        r = val[0] - y[i]
        acc += r * r
        for j in range(m):
            g[j] += 2.0 * r * der[0, j]
    for j in range(m):
        g[j] /= n
    return acc / n


def mse_grad_program(const long[:] code, const double[:] consts,
                     const double[:] x, const double[:] y):
    """Mean squared error and its gradient w.r.t. ``consts`` (forward mode)."""
    cdef Py_ssize_t m = consts.shape[0], depth = code.shape[0] + 1
    cdef double[:] val = np.empty(depth, dtype=np.float64)
    cdef double[:, :] der = np.empty((depth, m if m > 0 else 1), dtype=np.float64)
    grad = np.zeros(m, dtype=np.float64)
    cdef double[:] g = grad
    cdef double f
    with nogil:
        f = _mse_grad(code, consts, x, y, val, der, g)
    return f, grad


cdef inline bint _finite(double v) nogil:
    return v == v and v - v == 0.0


def optimize_program(const long[:] code, const double[:] consts, const double[:] x,
                     const double[:] y, int maxiter=100, double gtol=1e-12):
    """BFGS with Armijo backtracking on the program constants.

    Returns ``(constants, mse)``; the result never has a larger MSE than the start.
    """
    cdef Py_ssize_t m = consts.shape[0], depth = code.shape[0] + 1
    cdef Py_ssize_t i, j, it, ls
    cdef double f, f_new, slope, step, sy, yy, rho, gmax, hy_dot, tmp
    best = np.array(consts, dtype=np.float64)
    if m == 0:
        return best, mse_program(code, consts, x, y)
    cdef double[:] c = best
    cdef double[:] c_try = np.empty(m, dtype=np.float64)
    cdef double[:] g = np.empty(m, dtype=np.float64)
    cdef double[:] g_new = np.empty(m, dtype=np.float64)
    cdef double[:] p = np.empty(m, dtype=np.float64)
    cdef double[:] s = np.empty(m, dtype=np.float64)
    cdef double[:] yv = np.empty(m, dtype=np.float64)
    cdef double[:] hy = np.empty(m, dtype=np.float64)
    cdef double[:, :] H = np.empty((m, m), dtype=np.float64)
    cdef double[:] val = np.empty(depth, dtype=np.float64)
    cdef double[:, :] der = np.empty((depth, m), dtype=np.float64)
    cdef double[:] stack = np.empty(depth, dtype=np.float64)
    cdef bint first = True, ok
    with nogil:
        f = _mse_grad(code, c, x, y, val, der, g)
        if not _finite(f):
            f = INFINITY
        for i in range(m):
            for j in range(m):
                H[i, j] = 1.0 if i == j else 0.0
        for it in range(maxiter):
            if not _finite(f):
                break
            gmax = 0.0
            for i in range(m):
                if not _finite(g[i]):
                    gmax = INFINITY
                elif fabs(g[i]) > gmax:
                    gmax = fabs(g[i])
            if gmax <= gtol or gmax == INFINITY:
                break
            slope = 0.0
            for i in range(m):
                tmp = 0.0
                for j in range(m):
                    tmp -= H[i, j] * g[j]
                p[i] = tmp
                slope += tmp * g[i]
            if slope >= 0.0:
                # not a descent direction: restart from steepest descent
                for i in range(m):
                    for j in range(m):
                        H[i, j] = 1.0 if i == j else 0.0
                    p[i] = -g[i]
                slope = 0.0
                for i in range(m):
                    slope -= g[i] * g[i]
                first = True
            step = 1.0
            ok = False
            for ls in range(40):
                for i in range(m):
                    c_try[i] = c[i] + step * p[i]
                f_new = _mse(code, c_try, x, y, stack)
                if _finite(f_new) and f_new <= f + 1e-4 * step * slope:
                    ok = True
                    break
                step *= 0.5
            if not ok:
                break
            f_new = _mse_grad(code, c_try, x, y, val, der, g_new)
            sy = 0.0
            yy = 0.0
            for i in range(m):
                s[i] = c_try[i] - c[i]
                yv[i] = g_new[i] - g[i]
                sy += s[i] * yv[i]
                yy += yv[i] * yv[i]
            tmp = f - f_new
            for i in range(m):
                c[i] = c_try[i]
                g[i] = g_new[i]
            f = f_new
            if tmp <= 1e-16 * fabs(f) and tmp >= 0.0 and f > 0.0:
                break
            if sy > 1e-300 and _finite(sy) and _finite(yy):
                if first:
                    for i in range(m):
                        for j in range(m):
                            H[i, j] = (sy / yy) if i == j else 0.0
                    first = False
                rho = 1.0 / sy
                # H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
                hy_dot = 0.0
                for i in range(m):
                    tmp = 0.0
                    for j in range(m):
                        tmp += H[i, j] * yv[j]
                    hy[i] = tmp
                    hy_dot += yv[i] * tmp
                for i in range(m):
                    for j in range(m):
                        H[i, j] = (H[i, j] - rho * (hy[i] * s[j] + s[i] * hy[j])
                                   + (rho * rho * hy_dot + rho) * s[i] * s[j])
    return best, f


def predict_closed_loop(const double[:] coeffs, const double[:] x,
                        const double[:, :] other, double d0):
    """Roll the quadratic swerve model forward using the previous frame's distance."""
    cdef Py_ssize_t t, n = x.shape[0]
    cdef double d = d0, xi, yi, dx, dy
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    with nogil:
        for t in range(n):
            xi = x[t]
            yi = (coeffs[0] + coeffs[1] * xi + coeffs[2] * d
                  + coeffs[3] * xi * xi + coeffs[4] * d * d + coeffs[5] * xi * d)
            o[t] = yi
            dx = xi - other[t, 0]
            dy = yi - other[t, 1]
            d = sqrt(dx * dx + dy * dy)
    return out
