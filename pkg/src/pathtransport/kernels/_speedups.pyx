# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bytecode evaluator and transport integrators.

Twin of ``kernels.pure``: same opcode set, same typed numeric error
semantics, and the same step controller as ``integrate.dopri5_matrix``.
Agreement with the pure backend is numerical, not bitwise.
"""

from libc.math cimport (
    INFINITY,
    atan2,
    cos,
    exp,
    fabs,
    fmax,
    isfinite,
    isinf,
    isnan,
    log,
    pow,
    sin,
    sqrt,
    tan,
)
from libc.string cimport memcpy

import numpy as np

from pathtransport.errors import (
    ConvergenceError,
    DomainError,
    EvaluationError,
    ExpressionEvaluationError,
)
from pathtransport.kernels.opcodes import ERROR_KINDS

BACKEND = "compiled"

cdef enum:
    PUSH_CONST = 0
    PUSH_VAR = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_POW = 6
    OP_NEG = 7
    OP_SIN = 8
    OP_COS = 9
    OP_TAN = 10
    OP_EXP = 11
    OP_LOG = 12
    OP_SQRT = 13
    OP_ABS = 14
    OP_ATAN2 = 15

cdef enum:
    ERR_DIV_ZERO = 1
    ERR_LOG_DOMAIN = 2
    ERR_SQRT_DOMAIN = 3
    ERR_POW_DOMAIN = 4
    ERR_OVERFLOW = 5
    ERR_UNDERFLOW_STEP = 100
    ERR_STEP_BUDGET = 101

# Dormand-Prince 5(4) tableau; values match integrate.py bit for bit.
_C_NP = np.array([0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0])
_A_NP = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ]
)
_E_NP = np.array(
    [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ]
)

cdef double[::1] _C_MV = _C_NP
cdef double[:, ::1] _A_MV = _A_NP
cdef double[::1] _E_MV = _E_NP

cdef double _UNDERFLOW = 1e-14
cdef double _MIN_FACTOR = 0.2
cdef double _MAX_FACTOR = 5.0
cdef double _SAFETY = 0.9
cdef long _MAX_STEPS = 1000000


cdef int _run(const int* codes, int start, int stop, const double* consts, int cbase,
              const double* args, double* stack, double* result) noexcept nogil:
    """Execute one program slice; 0 on success, else a numeric error code."""
    cdef int sp = -1
    cdef int i = start
    cdef int code, arg
    cdef double a, b, v
    while i < stop:
        code = codes[i]
        arg = codes[i + 1]
        i += 2
        if code == PUSH_CONST:
            sp += 1
            stack[sp] = consts[cbase + arg]
        elif code == PUSH_VAR:
            sp += 1
            stack[sp] = args[arg]
        elif code == OP_ADD:
            sp -= 1
            v = stack[sp] + stack[sp + 1]
            if not isfinite(v):
                return ERR_OVERFLOW
            stack[sp] = v
        elif code == OP_SUB:
            sp -= 1
            v = stack[sp] - stack[sp + 1]
            if not isfinite(v):
                return ERR_OVERFLOW
            stack[sp] = v
        elif code == OP_MUL:
            sp -= 1
            v = stack[sp] * stack[sp + 1]
            if not isfinite(v):
                return ERR_OVERFLOW
            stack[sp] = v
        elif code == OP_DIV:
            sp -= 1
            b = stack[sp + 1]
            if b == 0.0:
                return ERR_DIV_ZERO
            v = stack[sp] / b
            if not isfinite(v):
                return ERR_OVERFLOW
            stack[sp] = v
        elif code == OP_POW:
            sp -= 1
            a = stack[sp]
            b = stack[sp + 1]
            v = pow(a, b)
            # C pow signals domain errors by NaN (and by +-inf for 0^negative)
            # where math.pow raises; map to the same typed failures
            if isnan(v):
                return ERR_POW_DOMAIN
            if isinf(v):
                return ERR_POW_DOMAIN if a == 0.0 else ERR_OVERFLOW
            stack[sp] = v
        elif code == OP_NEG:
            stack[sp] = -stack[sp]
        elif code == OP_SIN:
            stack[sp] = sin(stack[sp])
        elif code == OP_COS:
            stack[sp] = cos(stack[sp])
        elif code == OP_TAN:
            stack[sp] = tan(stack[sp])
        elif code == OP_EXP:
            v = exp(stack[sp])
            if isinf(v):
                return ERR_OVERFLOW
            stack[sp] = v
        elif code == OP_LOG:
            if stack[sp] <= 0.0:
                return ERR_LOG_DOMAIN
            stack[sp] = log(stack[sp])
        elif code == OP_SQRT:
            if stack[sp] < 0.0:
                return ERR_SQRT_DOMAIN
            stack[sp] = sqrt(stack[sp])
        elif code == OP_ABS:
            stack[sp] = fabs(stack[sp])
        else:  # OP_ATAN2
            sp -= 1
            stack[sp] = atan2(stack[sp], stack[sp + 1])
    result[0] = stack[sp]
    return 0


cdef inline double* _fptr(double[::1] view) noexcept nogil:
    if view.shape[0] == 0:
        return NULL
    return &view[0]


cdef inline int* _iptr(int[::1] view) noexcept nogil:
    if view.shape[0] == 0:
        return NULL
    return &view[0]


def eval_program(codes, consts, stack_need, args):
    """Evaluate one compiled expression program at an argument vector."""
    cdef int[::1] cmv = np.ascontiguousarray(codes, dtype=np.int32)
    cdef double[::1] kmv = np.ascontiguousarray(consts, dtype=np.float64)
    cdef double[::1] amv = np.ascontiguousarray(np.ravel(args), dtype=np.float64)
    cdef double[::1] smv = np.empty(max(int(stack_need), 1), dtype=np.float64)
    cdef double result = 0.0
    cdef int err
    with nogil:
        err = _run(&cmv[0], 0, <int>cmv.shape[0], _fptr(kmv), 0, _fptr(amv), &smv[0], &result)
    if err:
        raise ExpressionEvaluationError(ERROR_KINDS[err])
    return result


def eval_table(codes, code_offsets, consts, const_offsets, stack_need, args, out):
    """Evaluate every program in a packed table into ``out``."""
    cdef int[::1] cmv = np.ascontiguousarray(codes, dtype=np.int32)
    cdef int[::1] omv = np.ascontiguousarray(code_offsets, dtype=np.int32)
    cdef double[::1] kmv = np.ascontiguousarray(consts, dtype=np.float64)
    cdef int[::1] komv = np.ascontiguousarray(const_offsets, dtype=np.int32)
    cdef double[::1] amv = np.ascontiguousarray(np.ravel(args), dtype=np.float64)
    cdef double[::1] outmv = out
    cdef double[::1] smv = np.empty(max(int(stack_need), 1), dtype=np.float64)
    cdef int count = <int>omv.shape[0] - 1
    cdef int k, err = 0
    with nogil:
        for k in range(count):
            err = _run(&cmv[0], omv[k], omv[k + 1], _fptr(kmv), komv[k],
                       _fptr(amv), &smv[0], &outmv[k])
            if err:
                break
    if err:
        raise ExpressionEvaluationError(ERROR_KINDS[err])
    return out


cdef struct GammaCtx:
    int* ccodes
    int* coffs
    double* cconsts
    int* ccoffs
    int* pcodes
    int* poffs
    double* pconsts
    int* pcoffs
    int* vcodes
    int* voffs
    double* vconsts
    int* vcoffs
    double* cstack
    double* pstack
    double* vstack
    double* point
    double* velv
    int m
    int n


cdef int _gamma(GammaCtx* cx, double tau, double* G) noexcept nogil:
    """Coefficient matrix of the transport ODE at parameter tau.

    Matches the pure backend: evaluate the path point and velocity, then
    contract the coefficient table against the velocity in ascending
    coordinate order.
    """
    cdef double targ = tau
    cdef double coeff, acc
    cdef int a, i, j, k, base, err
    cdef int m = cx.m, n = cx.n
    for a in range(n):
        err = _run(cx.pcodes, cx.poffs[a], cx.poffs[a + 1], cx.pconsts,
                   cx.pcoffs[a], &targ, cx.pstack, &cx.point[a])
        if err:
            return err
    for a in range(n):
        err = _run(cx.vcodes, cx.voffs[a], cx.voffs[a + 1], cx.vconsts,
                   cx.vcoffs[a], &targ, cx.vstack, &cx.velv[a])
        if err:
            return err
    for i in range(m):
        for j in range(m):
            base = (i * m + j) * n
            acc = 0.0
            for a in range(n):
                k = base + a
                err = _run(cx.ccodes, cx.coffs[k], cx.coffs[k + 1], cx.cconsts,
                           cx.ccoffs[k], cx.point, cx.cstack, &coeff)
                if err:
                    return err
                acc += coeff * cx.velv[a]
            G[i * m + j] = acc
    return 0


cdef int _fode(GammaCtx* cx, double tau, double* Y, double* G, double* out) noexcept nogil:
    """Right-hand side of the transport ODE: out = -Gamma(tau) @ Y."""
    cdef int err = _gamma(cx, tau, G)
    if err:
        return err
    cdef int m = cx.m
    cdef int i, j, l
    cdef double acc
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for l in range(m):
                acc += G[i * m + l] * Y[l * m + j]
            out[i * m + j] = -acc
    return 0


cdef int _dopri5(GammaCtx* cx, double s, double t, double rtol, double atol,
                 double* y, double* kbuf, double* yi, double* y5, double* G,
                 double* est_out, long* nsteps_out, double* stall) noexcept nogil:
    """Adaptive 5(4) pair with first-same-as-last reuse, in place on y."""
    cdef int m = cx.m
    cdef int mm = m * m
    cdef double tau = s
    cdef double direction = 1.0 if t > s else -1.0
    cdef double h = (t - s) / 64.0
    cdef double est = 0.0
    cdef long nsteps = 0
    cdef long attempts = 0
    cdef bint last, sawnan
    cdef int i, j, c, err
    cdef double w, aij, ev, aev, ya, yb, sc, ratio, errnorm, est_step, factor

    err = _fode(cx, tau, y, G, kbuf)
    if err:
        return err
    while True:
        if fabs(h) < _UNDERFLOW * fmax(1.0, fabs(tau)):
            stall[0] = tau
            return ERR_UNDERFLOW_STEP
        if attempts >= _MAX_STEPS:
            stall[0] = tau
            return ERR_STEP_BUDGET
        attempts += 1
        last = (t - (tau + h)) * direction <= 0.0
        if last:
            h = t - tau
        for i in range(1, 6):
            memcpy(yi, y, mm * sizeof(double))
            for j in range(i):
                aij = _A_MV[i, j]
                if aij != 0.0:
                    w = h * aij
                    for c in range(mm):
                        yi[c] += w * kbuf[j * mm + c]
            err = _fode(cx, tau + _C_MV[i] * h, yi, G, kbuf + i * mm)
            if err:
                return err
        memcpy(y5, y, mm * sizeof(double))
        for j in range(6):
            aij = _A_MV[6, j]
            if aij != 0.0:
                w = h * aij
                for c in range(mm):
                    y5[c] += w * kbuf[j * mm + c]
        err = _fode(cx, tau + h, y5, G, kbuf + 6 * mm)
        if err:
            return err
        errnorm = 0.0
        est_step = 0.0
        sawnan = False
        for c in range(mm):
            ev = _E_MV[0] * kbuf[c]
            for j in range(2, 7):
                ev += _E_MV[j] * kbuf[j * mm + c]
            ev *= h
            aev = fabs(ev)
            if aev > est_step:
                est_step = aev
            ya = fabs(y[c])
            yb = fabs(y5[c])
            sc = atol + rtol * (ya if ya > yb else yb)
            ratio = aev / sc
            if isnan(ratio):
                sawnan = True
            elif ratio > errnorm:
                errnorm = ratio
        if sawnan:
            errnorm = INFINITY
        if errnorm <= 1.0:
            est += est_step
            nsteps += 1
            memcpy(y, y5, mm * sizeof(double))
            memcpy(kbuf, kbuf + 6 * mm, mm * sizeof(double))  # FSAL
            if last:
                est_out[0] = est
                nsteps_out[0] = nsteps
                return 0
            tau += h
            if errnorm == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * pow(errnorm, -0.2)
                if factor < _MIN_FACTOR:
                    factor = _MIN_FACTOR
                if factor > _MAX_FACTOR:
                    factor = _MAX_FACTOR
            h *= factor
        else:
            factor = _SAFETY * pow(errnorm, -0.2)
            if factor < _MIN_FACTOR:
                factor = _MIN_FACTOR
            if factor > 1.0:
                factor = 1.0
            h *= factor


cdef class _Workspace:
    """Pins the pack arrays and scratch buffers for one transport call."""
    cdef int[::1] ccodes, coffs, ccoffs
    cdef double[::1] cconsts
    cdef int[::1] pcodes, poffs, pcoffs
    cdef double[::1] pconsts
    cdef int[::1] vcodes, voffs, vcoffs
    cdef double[::1] vconsts
    cdef double[::1] scratch
    cdef GammaCtx cx

    def __init__(self, conn, path, vel, int m, int n, int extra):
        self.ccodes = np.ascontiguousarray(conn[0], dtype=np.int32)
        self.coffs = np.ascontiguousarray(conn[1], dtype=np.int32)
        self.cconsts = np.ascontiguousarray(conn[2], dtype=np.float64)
        self.ccoffs = np.ascontiguousarray(conn[3], dtype=np.int32)
        self.pcodes = np.ascontiguousarray(path[0], dtype=np.int32)
        self.poffs = np.ascontiguousarray(path[1], dtype=np.int32)
        self.pconsts = np.ascontiguousarray(path[2], dtype=np.float64)
        self.pcoffs = np.ascontiguousarray(path[3], dtype=np.int32)
        self.vcodes = np.ascontiguousarray(vel[0], dtype=np.int32)
        self.voffs = np.ascontiguousarray(vel[1], dtype=np.int32)
        self.vconsts = np.ascontiguousarray(vel[2], dtype=np.float64)
        self.vcoffs = np.ascontiguousarray(vel[3], dtype=np.int32)
        cdef int cstack = max(int(conn[4]), 1)
        cdef int pstack = max(int(path[4]), 1)
        cdef int vstack = max(int(vel[4]), 1)
        self.scratch = np.empty(cstack + pstack + vstack + 2 * n + extra,
                                dtype=np.float64)
        cdef double* w = &self.scratch[0]
        self.cx.ccodes = _iptr(self.ccodes)
        self.cx.coffs = _iptr(self.coffs)
        self.cx.cconsts = _fptr(self.cconsts)
        self.cx.ccoffs = _iptr(self.ccoffs)
        self.cx.pcodes = _iptr(self.pcodes)
        self.cx.poffs = _iptr(self.poffs)
        self.cx.pconsts = _fptr(self.pconsts)
        self.cx.pcoffs = _iptr(self.pcoffs)
        self.cx.vcodes = _iptr(self.vcodes)
        self.cx.voffs = _iptr(self.voffs)
        self.cx.vconsts = _fptr(self.vconsts)
        self.cx.vcoffs = _iptr(self.vcoffs)
        self.cx.cstack = w
        self.cx.pstack = w + cstack
        self.cx.vstack = w + cstack + pstack
        self.cx.point = w + cstack + pstack + vstack
        self.cx.velv = self.cx.point + n
        self.cx.m = m
        self.cx.n = n

    cdef double* buffers(self):
        # extra area starts right after point/velv
        return self.cx.velv + self.cx.n


def transport_ode(conn, path, vel, int m, int n, double s, double t,
                  double rtol, double atol):
    """Adaptive transport solve; returns (H, est_error, accepted_steps)."""
    cdef int mm = m * m
    H = np.eye(m)
    if s == t:
        return H, 0.0, 0
    # extra scratch: 7 stage slots + yi + y5 + G
    cdef _Workspace ws = _Workspace(conn, path, vel, m, n, 10 * mm)
    cdef double[:, ::1] ymv = H
    cdef double* buf = ws.buffers()
    cdef double est = 0.0
    cdef long nsteps = 0
    cdef double stall = 0.0
    cdef int err
    with nogil:
        err = _dopri5(&ws.cx, s, t, rtol, atol, &ymv[0, 0],
                      buf, buf + 7 * mm, buf + 8 * mm, buf + 9 * mm,
                      &est, &nsteps, &stall)
    if err == ERR_UNDERFLOW_STEP:
        raise ConvergenceError("step size underflow", param=stall)
    if err == ERR_STEP_BUDGET:
        raise ConvergenceError("step budget exhausted", param=stall)
    if err:
        raise ExpressionEvaluationError(ERROR_KINDS[err])
    return H, est, int(nsteps)


def transport_rk4(conn, path, vel, int m, int n, double s, double t, nsteps):
    """Classic fixed-step fourth-order transport solve; returns H only."""
    cdef long steps = int(nsteps)
    if steps < 1:
        raise DomainError("fixed-step integration needs at least one step")
    cdef int mm = m * m
    H = np.eye(m)
    if s == t:
        return H
    # extra scratch: k1..k4 + ytmp + G
    cdef _Workspace ws = _Workspace(conn, path, vel, m, n, 6 * mm)
    cdef double[:, ::1] ymv = H
    cdef double* buf = ws.buffers()
    cdef double* y = &ymv[0, 0]
    cdef double* k1 = buf
    cdef double* k2 = buf + mm
    cdef double* k3 = buf + 2 * mm
    cdef double* k4 = buf + 3 * mm
    cdef double* ytmp = buf + 4 * mm
    cdef double* G = buf + 5 * mm
    cdef double h = (t - s) / steps
    cdef double half = h / 2.0
    cdef double tau
    cdef long i
    cdef int c, err = 0
    cdef bint bad = False
    with nogil:
        for i in range(steps):
            tau = s + i * h
            err = _fode(&ws.cx, tau, y, G, k1)
            if err:
                break
            for c in range(mm):
                ytmp[c] = y[c] + half * k1[c]
            err = _fode(&ws.cx, tau + half, ytmp, G, k2)
            if err:
                break
            for c in range(mm):
                ytmp[c] = y[c] + half * k2[c]
            err = _fode(&ws.cx, tau + half, ytmp, G, k3)
            if err:
                break
            for c in range(mm):
                ytmp[c] = y[c] + h * k3[c]
            err = _fode(&ws.cx, tau + h, ytmp, G, k4)
            if err:
                break
            for c in range(mm):
                y[c] = y[c] + (h / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
        if not err:
            for c in range(mm):
                if not isfinite(y[c]):
                    bad = True
                    break
    if err:
        raise ExpressionEvaluationError(ERROR_KINDS[err])
    if bad:
        raise EvaluationError("integration produced non-finite values", where=t)
    return H
