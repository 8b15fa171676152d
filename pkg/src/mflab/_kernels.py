"""numba kernels: postfix-program interpreter, SSA event loop, fixed-step RK4.

Everything here works on plain arrays so a single compiled (and cached)
version serves every model.
"""
import numpy as np
from numba import njit

# keep in sync with mflab.expr
OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_POW, OP_MAX0 = 0, 1, 2, 3, 4, 5, 6

BOX, SIMPLEX = 0, 1

# status codes
DONE, NEED_RANDOMS = 0, 1
OK, PROJECTION_FAILED = 0, 1


@njit(cache=True, nogil=True)
def eval_expr(ops, args, start, stop, y, stack):
    sp = 0
    for p in range(start, stop):
        op = ops[p]
        if op == OP_CONST:
            stack[sp] = args[p]
            sp += 1
        elif op == OP_VAR:
            stack[sp] = y[int(args[p])]
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_POW:
            n = int(args[p])
            v = stack[sp - 1]
            if n == 0:
                out = v * 0.0 + 1.0
            else:
                out = v
                for _ in range(n - 1):
                    out = out * v
            stack[sp - 1] = out
        else:
            if not stack[sp - 1] > 0.0:
                stack[sp - 1] = 0.0
    return stack[0]


@njit(cache=True, nogil=True)
def eval_all(ops, args, starts, y, stack, out):
    for j in range(starts.shape[0] - 1):
        out[j] = eval_expr(ops, args, starts[j], starts[j + 1], y, stack)


@njit(cache=True, nogil=True)
def drift_into(ops, args, starts, L, y, stack, rates, out):
    eval_all(ops, args, starts, y, stack, rates)
    for i in range(out.shape[0]):
        out[i] = 0.0
    for k in range(L.shape[0]):
        r = rates[k]
        for i in range(out.shape[0]):
            out[i] = out[i] + r * L[k, i]


@njit(cache=True, nogil=True)
def ssa_run(k, N, t, horizon, ops, args, starts, depth, L, kind, lo, kmax,
            uniforms, sample_times, sample_pos, samples, counters):
    """Advance the exact SSA from ``(k, t)`` until ``horizon`` or until randoms run out.

    ``k`` (lattice coordinates) and ``samples`` are updated in place.
    ``counters`` holds [events, truncations, uniforms used, next sample index].
    Returns (status, t). On NEED_RANDOMS nothing of the pending event was consumed.
    """
    d = k.shape[0]
    K = L.shape[0]
    y = np.empty(d)
    stack = np.empty(depth + 1)
    rates = np.empty(K)
    prop = np.empty(K)
    pos = counters[2]
    si = counters[3]
    n_samples = sample_times.shape[0]
    while True:
        for i in range(d):
            if kind == BOX:
                y[i] = lo[i] + k[i] / N
            else:
                y[i] = k[i] / N
        eval_all(ops, args, starts, y, stack, rates)
        a0 = 0.0
        censored = 0
        for j in range(K):
            r = rates[j]
            prop[j] = 0.0
            if not r > 0.0:
                continue
            inside = True
            for i in range(d):
                nk = k[i] + L[j, i]
                if nk < 0 or (kind == BOX and nk > kmax[i]):
                    inside = False
                    break
            if inside:
                prop[j] = N * r
                a0 += prop[j]
            else:
                censored += 1
        if a0 > 0.0:
            if pos + 2 > uniforms.shape[0]:
                counters[2] = pos
                counters[3] = si
                return NEED_RANDOMS, t
            # uniforms are in [0, 1); 1 - u is in (0, 1]
            tau = -np.log(1.0 - uniforms[pos]) / a0
            t_next = t + tau
        else:
            t_next = np.inf
        while si < n_samples and sample_times[si] < t_next and sample_times[si] <= horizon:
            for i in range(d):
                samples[sample_pos[si], i] = k[i]
            si += 1
        if t_next > horizon:
            counters[2] = pos
            counters[3] = si
            return DONE, horizon
        target = uniforms[pos + 1] * a0
        pos += 2
        acc = 0.0
        chosen = -1
        for j in range(K):
            if prop[j] > 0.0:
                chosen = j
                acc += prop[j]
                if target < acc:
                    break
        for i in range(d):
            k[i] += L[chosen, i]
        t = t_next
        counters[0] += 1
        counters[1] += censored


@njit(cache=True, nogil=True)
def _project(y, kind, lo, hi, tol):
    d = y.shape[0]
    if kind == BOX:
        for i in range(d):
            if y[i] < lo[i] - tol or y[i] > hi[i] + tol:
                return False
            if y[i] < lo[i]:
                y[i] = lo[i]
            elif y[i] > hi[i]:
                y[i] = hi[i]
        return True
    s = 0.0
    for i in range(d):
        if y[i] < -tol:
            return False
        s += y[i]
    if abs(s - 1.0) > tol:
        return False
    s = 0.0
    for i in range(d):
        if y[i] < 0.0:
            y[i] = 0.0
        s += y[i]
    for i in range(d):
        y[i] = y[i] / s
    return True


@njit(cache=True, nogil=True)
def _rk4_step(y, h, ops, args, starts, L, stack, rates, k1, k2, k3, k4, tmp):
    d = y.shape[0]
    drift_into(ops, args, starts, L, y, stack, rates, k1)
    for i in range(d):
        tmp[i] = y[i] + 0.5 * h * k1[i]
    drift_into(ops, args, starts, L, tmp, stack, rates, k2)
    for i in range(d):
        tmp[i] = y[i] + 0.5 * h * k2[i]
    drift_into(ops, args, starts, L, tmp, stack, rates, k3)
    for i in range(d):
        tmp[i] = y[i] + h * k3[i]
    drift_into(ops, args, starts, L, tmp, stack, rates, k4)
    for i in range(d):
        y[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, nogil=True)
def rk4_flow(Y, n_full, dt, last, ops, args, starts, depth, L, kind, lo, hi, tol, record):
    """Integrate every row of ``Y`` in place: ``n_full`` steps of ``dt`` then one of ``last``.

    If ``record`` has room it receives the path of row 0 after each full step.
    Returns (status, failing row).
    """
    n, d = Y.shape
    stack = np.empty(depth + 1)
    rates = np.empty(L.shape[0])
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    y = np.empty(d)
    rec = record.shape[0] > 0
    for r in range(n):
        for i in range(d):
            y[i] = Y[r, i]
        if rec and r == 0:
            for i in range(d):
                record[0, i] = y[i]
        for s in range(n_full):
            _rk4_step(y, dt, ops, args, starts, L, stack, rates, k1, k2, k3, k4, tmp)
            if not _project(y, kind, lo, hi, tol):
                for i in range(d):
                    Y[r, i] = y[i]
                return PROJECTION_FAILED, r
            if rec and r == 0:
                for i in range(d):
                    record[s + 1, i] = y[i]
        if last > 0.0:
            _rk4_step(y, last, ops, args, starts, L, stack, rates, k1, k2, k3, k4, tmp)
            if not _project(y, kind, lo, hi, tol):
                for i in range(d):
                    Y[r, i] = y[i]
                return PROJECTION_FAILED, r
        for i in range(d):
            Y[r, i] = y[i]
    return OK, -1


@njit(cache=True, nogil=True)
def _eval_rows(ops, args, start, stop, Y, stack, out):
    # same op order as eval_expr, one stack row per program slot
    n = Y.shape[0]
    sp = 0
    for p in range(start, stop):
        op = ops[p]
        if op == OP_CONST:
            c = args[p]
            for r in range(n):
                stack[sp, r] = c
            sp += 1
        elif op == OP_VAR:
            j = int(args[p])
            for r in range(n):
                stack[sp, r] = Y[r, j]
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            for r in range(n):
                stack[sp - 1, r] = stack[sp - 1, r] + stack[sp, r]
        elif op == OP_SUB:
            sp -= 1
            for r in range(n):
                stack[sp - 1, r] = stack[sp - 1, r] - stack[sp, r]
        elif op == OP_MUL:
            sp -= 1
            for r in range(n):
                stack[sp - 1, r] = stack[sp - 1, r] * stack[sp, r]
        elif op == OP_POW:
            m = int(args[p])
            for r in range(n):
                v = stack[sp - 1, r]
                if m == 0:
                    o = v * 0.0 + 1.0
                else:
                    o = v
                    for _ in range(m - 1):
                        o = o * v
                stack[sp - 1, r] = o
        else:
            for r in range(n):
                if not stack[sp - 1, r] > 0.0:
                    stack[sp - 1, r] = 0.0
    for r in range(n):
        out[r] = stack[0, r]


@njit(cache=True, nogil=True)
def _drift_rows(ops, args, starts, L, Y, stack, rates, out):
    n, d = Y.shape
    for k in range(L.shape[0]):
        _eval_rows(ops, args, starts[k], starts[k + 1], Y, stack, rates[k])
    for r in range(n):
        for i in range(d):
            out[r, i] = 0.0
    for k in range(L.shape[0]):
        for r in range(n):
            rk = rates[k, r]
            for i in range(d):
                out[r, i] = out[r, i] + rk * L[k, i]


@njit(cache=True, nogil=True)
def _rk4_rows(Y, h, ops, args, starts, L, stack, rates, k1, k2, k3, k4, tmp):
    n, d = Y.shape
    _drift_rows(ops, args, starts, L, Y, stack, rates, k1)
    for r in range(n):
        for i in range(d):
            tmp[r, i] = Y[r, i] + 0.5 * h * k1[r, i]
    _drift_rows(ops, args, starts, L, tmp, stack, rates, k2)
    for r in range(n):
        for i in range(d):
            tmp[r, i] = Y[r, i] + 0.5 * h * k2[r, i]
    _drift_rows(ops, args, starts, L, tmp, stack, rates, k3)
    for r in range(n):
        for i in range(d):
            tmp[r, i] = Y[r, i] + h * k3[r, i]
    _drift_rows(ops, args, starts, L, tmp, stack, rates, k4)
    for r in range(n):
        for i in range(d):
            Y[r, i] = Y[r, i] + h / 6.0 * (k1[r, i] + 2.0 * k2[r, i] + 2.0 * k3[r, i] + k4[r, i])


@njit(cache=True, nogil=True)
def _project_rows(Y, kind, lo, hi, tol):
    for r in range(Y.shape[0]):
        if not _project(Y[r], kind, lo, hi, tol):
            return r
    return -1


@njit(cache=True, nogil=True)
def rk4_flow_rows(Y, n_full, dt, last, ops, args, starts, depth, L, kind, lo, hi, tol):
    """Lockstep variant of ``rk4_flow`` for many rows and no recording.

    Each program op is dispatched once per stage for all rows, which is much
    cheaper than interpreting per row. Arithmetic per row is unchanged.
    """
    n, d = Y.shape
    stack = np.empty((depth + 1, n))
    rates = np.empty((L.shape[0], n))
    k1 = np.empty((n, d))
    k2 = np.empty((n, d))
    k3 = np.empty((n, d))
    k4 = np.empty((n, d))
    tmp = np.empty((n, d))
    for s in range(n_full):
        _rk4_rows(Y, dt, ops, args, starts, L, stack, rates, k1, k2, k3, k4, tmp)
        r = _project_rows(Y, kind, lo, hi, tol)
        if r >= 0:
            return PROJECTION_FAILED, r
    if last > 0.0:
        _rk4_rows(Y, last, ops, args, starts, L, stack, rates, k1, k2, k3, k4, tmp)
        r = _project_rows(Y, kind, lo, hi, tol)
        if r >= 0:
            return PROJECTION_FAILED, r
    return OK, -1
