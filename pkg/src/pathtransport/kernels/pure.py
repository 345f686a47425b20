"""Pure-Python bytecode evaluator, the fallback kernel backend.

Mirrors the compiled extension's public surface: ``eval_program``,
``eval_table``, ``transport_ode``, ``transport_rk4``.  Numeric error
semantics match the compiled kernel: every operation either returns a
finite float or raises a typed ExpressionEvaluationError.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..errors import ExpressionEvaluationError
from . import opcodes as op

BACKEND = "python"


def _fail(code: int, detail: str = ""):
    raise ExpressionEvaluationError(op.ERROR_KINDS[code], detail)


def _run(codes, start, stop, consts, cbase, args, stack):
    """Execute one program slice; returns the single value left on the stack."""
    sp = -1
    i = start
    while i < stop:
        code = codes[i]
        arg = codes[i + 1]
        i += 2
        if code == 0:  # PUSH_CONST
            sp += 1
            stack[sp] = consts[cbase + arg]
        elif code == 1:  # PUSH_VAR
            sp += 1
            stack[sp] = args[arg]
        elif code == 2:  # ADD
            sp -= 1
            v = stack[sp] + stack[sp + 1]
            if not math.isfinite(v):
                _fail(op.ERR_OVERFLOW, "addition overflow")
            stack[sp] = v
        elif code == 3:  # SUB
            sp -= 1
            v = stack[sp] - stack[sp + 1]
            if not math.isfinite(v):
                _fail(op.ERR_OVERFLOW, "subtraction overflow")
            stack[sp] = v
        elif code == 4:  # MUL
            sp -= 1
            v = stack[sp] * stack[sp + 1]
            if not math.isfinite(v):
                _fail(op.ERR_OVERFLOW, "multiplication overflow")
            stack[sp] = v
        elif code == 5:  # DIV
            sp -= 1
            b = stack[sp + 1]
            if b == 0.0:
                _fail(op.ERR_DIV_ZERO, f"numerator {stack[sp]!r}")
            v = stack[sp] / b
            if not math.isfinite(v):
                _fail(op.ERR_OVERFLOW, "division overflow")
            stack[sp] = v
        elif code == 6:  # POW
            sp -= 1
            try:
                v = math.pow(stack[sp], stack[sp + 1])
            except ValueError:
                _fail(op.ERR_POW_DOMAIN, f"base {stack[sp]!r}, exponent {stack[sp + 1]!r}")
            except OverflowError:
                _fail(op.ERR_OVERFLOW, "power overflow")
            stack[sp] = v
        elif code == 7:  # NEG
            stack[sp] = -stack[sp]
        elif code == 8:
            stack[sp] = math.sin(stack[sp])
        elif code == 9:
            stack[sp] = math.cos(stack[sp])
        elif code == 10:
            stack[sp] = math.tan(stack[sp])
        elif code == 11:
            try:
                stack[sp] = math.exp(stack[sp])
            except OverflowError:
                _fail(op.ERR_OVERFLOW, "exp overflow")
        elif code == 12:
            if stack[sp] <= 0.0:
                _fail(op.ERR_LOG_DOMAIN, f"argument {stack[sp]!r}")
            stack[sp] = math.log(stack[sp])
        elif code == 13:
            if stack[sp] < 0.0:
                _fail(op.ERR_SQRT_DOMAIN, f"argument {stack[sp]!r}")
            stack[sp] = math.sqrt(stack[sp])
        elif code == 14:
            stack[sp] = abs(stack[sp])
        else:  # ATAN2
            sp -= 1
            stack[sp] = math.atan2(stack[sp], stack[sp + 1])
    return stack[sp]


@lru_cache(maxsize=256)
def _lists(codes_bytes, offsets_bytes, consts_bytes, const_offsets_bytes):
    codes = np.frombuffer(codes_bytes, dtype=np.int32).tolist()
    offsets = np.frombuffer(offsets_bytes, dtype=np.int32).tolist()
    consts = np.frombuffer(consts_bytes, dtype=np.float64).tolist()
    const_offsets = np.frombuffer(const_offsets_bytes, dtype=np.int32).tolist()
    return codes, offsets, consts, const_offsets


def _prepared(codes, code_offsets, consts, const_offsets):
    return _lists(
        np.ascontiguousarray(codes, dtype=np.int32).tobytes(),
        np.ascontiguousarray(code_offsets, dtype=np.int32).tobytes(),
        np.ascontiguousarray(consts, dtype=np.float64).tobytes(),
        np.ascontiguousarray(const_offsets, dtype=np.int32).tobytes(),
    )


def eval_program(codes, consts, stack_need, args):
    clist = np.ascontiguousarray(codes, dtype=np.int32).tolist()
    klist = np.ascontiguousarray(consts, dtype=np.float64).tolist()
    alist = [float(a) for a in np.ravel(args)]
    stack = [0.0] * max(int(stack_need), 1)
    return _run(clist, 0, len(clist), klist, 0, alist, stack)


def eval_table(codes, code_offsets, consts, const_offsets, stack_need, args, out):
    clist, offs, konsts, coffs = _prepared(codes, code_offsets, consts, const_offsets)
    alist = [float(a) for a in np.ravel(args)]
    stack = [0.0] * max(int(stack_need), 1)
    for k in range(len(offs) - 1):
        out[k] = _run(clist, offs[k], offs[k + 1], konsts, coffs[k], alist, stack)
    return out


def _make_gamma(conn, path, vel, m, n):
    """Closure tau -> coefficient matrix for expression-backed data.

    ``conn`` packs m*m*n programs in index order (i, j, alpha); ``path``
    and ``vel`` pack n single-variable programs each.  The alpha
    contraction runs in ascending order.
    """
    ccodes, coffs, cconsts, ccoffs = _prepared(conn[0], conn[1], conn[2], conn[3])
    pcodes, poffs, pconsts, pcoffs = _prepared(path[0], path[1], path[2], path[3])
    vcodes, voffs, vconsts, vcoffs = _prepared(vel[0], vel[1], vel[2], vel[3])
    cstack = [0.0] * max(int(conn[4]), 1)
    pstack = [0.0] * max(int(path[4]), 1)
    vstack = [0.0] * max(int(vel[4]), 1)

    def gamma(tau):
        targ = [tau]
        point = [
            _run(pcodes, poffs[a], poffs[a + 1], pconsts, pcoffs[a], targ, pstack)
            for a in range(n)
        ]
        velocity = [
            _run(vcodes, voffs[a], voffs[a + 1], vconsts, vcoffs[a], targ, vstack)
            for a in range(n)
        ]
        G = np.empty((m, m), dtype=np.float64)
        for i in range(m):
            for j in range(m):
                base = (i * m + j) * n
                acc = 0.0
                for a in range(n):
                    k = base + a
                    coeff = _run(
                        ccodes, coffs[k], coffs[k + 1], cconsts, ccoffs[k], point, cstack
                    )
                    acc += coeff * velocity[a]
                G[i, j] = acc
        return G

    return gamma


def transport_ode(conn, path, vel, m, n, s, t, rtol, atol):
    from ..integrate import dopri5_matrix

    gamma = _make_gamma(conn, path, vel, m, n)

    def f(tau, Y):
        return -gamma(tau) @ Y

    return dopri5_matrix(f, s, t, np.eye(m), rtol=rtol, atol=atol)


def transport_rk4(conn, path, vel, m, n, s, t, nsteps):
    from ..integrate import rk4_matrix

    gamma = _make_gamma(conn, path, vel, m, n)

    def f(tau, Y):
        return -gamma(tau) @ Y

    return rk4_matrix(f, s, t, np.eye(m), nsteps)
