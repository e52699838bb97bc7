"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import math

import numpy as np

OP_CONST, OP_VAR, OP_ADD, OP_MUL, OP_SIN, OP_COS = range(6)


def eval_program(code, consts, x):
    x = np.asarray(x, dtype=np.float64)
    stack = []
    k = 0
    with np.errstate(all="ignore"):
        for op in code:
            if op == OP_CONST:
                stack.append(np.full_like(x, consts[k]))
                k += 1
            elif op == OP_VAR:
                stack.append(x.copy())
            elif op == OP_ADD:
                b = stack.pop()
                stack[-1] = stack[-1] + b
            elif op == OP_MUL:
                b = stack.pop()
                stack[-1] = stack[-1] * b
            elif op == OP_SIN:
                stack[-1] = np.sin(stack[-1])
            else:
                stack[-1] = np.cos(stack[-1])
    return stack[0]


def mse_program(code, consts, x, y):
    with np.errstate(all="ignore"):
        r = eval_program(code, consts, x) - y
        return float(np.mean(r * r))


def mse_grad_program(code, consts, x, y):
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape[0], len(consts)
    vals, ders = [], []
    k = 0
    with np.errstate(all="ignore"):
        for op in code:
            if op == OP_CONST:
                vals.append(np.full(n, consts[k]))
                d = np.zeros((m, n))
                d[k] = 1.0
                ders.append(d)
                k += 1
            elif op == OP_VAR:
                vals.append(x.copy())
                ders.append(np.zeros((m, n)))
            elif op == OP_ADD:
                b, db = vals.pop(), ders.pop()
                vals[-1] = vals[-1] + b
                ders[-1] = ders[-1] + db
            elif op == OP_MUL:
                b, db = vals.pop(), ders.pop()
                a, da = vals[-1], ders[-1]
                vals[-1] = a * b
                ders[-1] = da * b + a * db
            elif op == OP_SIN:
                a = vals[-1]
                vals[-1] = np.sin(a)
                ders[-1] = np.cos(a) * ders[-1]
            else:
                a = vals[-1]
                vals[-1] = np.cos(a)
                ders[-1] = -np.sin(a) * ders[-1]
        r = vals[0] - y
        mse = float(np.mean(r * r))
        grad = 2.0 * (ders[0] @ r) / n if m else np.zeros(0)
    return mse, np.asarray(grad, dtype=np.float64)


def optimize_program(code, consts, x, y, maxiter=100, gtol=1e-12):
    """Same BFGS iteration as the compiled kernel."""
    c = np.array(consts, dtype=np.float64)
    m = len(c)
    if m == 0:
        return c, mse_program(code, c, x, y)
    f, g = mse_grad_program(code, c, x, y)
    if not math.isfinite(f):
        f = math.inf
    H = np.eye(m)
    first = True
    for _ in range(maxiter):
        if not math.isfinite(f) or not np.all(np.isfinite(g)) or np.max(np.abs(g)) <= gtol:
            break
        p = -H @ g
        slope = float(p @ g)
        if not slope < 0.0:
            H = np.eye(m)
            p = -g
            slope = -float(g @ g)
            first = True
        step, ok = 1.0, False
        for _ls in range(40):
            c_try = c + step * p
            f_new = mse_program(code, c_try, x, y)
            if math.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                ok = True
                break
            step *= 0.5
        if not ok:
            break
        f_new, g_new = mse_grad_program(code, c_try, x, y)
        s, yv = c_try - c, g_new - g
        sy, yy = float(s @ yv), float(yv @ yv)
        drop = f - f_new
        c, g, f = c_try, g_new, f_new
        if 0.0 <= drop <= 1e-16 * abs(f) and f > 0.0:
            break
        if sy > 1e-300 and math.isfinite(sy) and math.isfinite(yy):
            if first:
                H = np.eye(m) * (sy / yy)
                first = False
            rho = 1.0 / sy
            hy = H @ yv
            H = H - rho * (np.outer(hy, s) + np.outer(s, hy)) + (rho * rho * float(yv @ hy) + rho) * np.outer(s, s)
    return c, f


def predict_closed_loop(coeffs, x, other, d0):
    a0, a1, a2, a3, a4, a5 = (float(c) for c in coeffs)
    out = np.empty(len(x))
    d = float(d0)
    for t in range(len(x)):
        xi = float(x[t])
        yi = a0 + a1 * xi + a2 * d + a3 * xi * xi + a4 * d * d + a5 * xi * d
        out[t] = yi
        d = math.sqrt((xi - other[t][0]) ** 2 + (yi - other[t][1]) ** 2)
    return out
