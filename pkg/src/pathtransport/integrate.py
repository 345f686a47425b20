"""Runge-Kutta integrators for matrix-valued ODEs dY/dtau = f(tau, Y).

``dopri5_matrix`` is an adaptive embedded pair of orders 5(4) with the
first-same-as-last stage reuse; ``rk4_matrix`` is the classic fixed-step
scheme kept for deterministic regression baselines.  Both integrate in
either parameter direction and land exactly on the target parameter.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError, DomainError, EvaluationError

_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ),
    (
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ),
)
# difference between 5th-order weights and the embedded 4th-order weights
_E = (
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

_UNDERFLOW = 1e-14
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def dopri5_matrix(f, s, t, y0, rtol=1e-9, atol=1e-12, max_steps=1_000_000):
    """Integrate dY/dtau = f(tau, Y) from tau=s to tau=t, Y(s)=y0.

    Returns (Y(t), est_error, nsteps) where est_error accumulates the
    per-step embedded error estimates (max-abs component) over accepted
    steps and nsteps counts accepted steps.  Raises ConvergenceError on
    step underflow, carrying the stalling parameter value.
    """
    y = np.array(y0, dtype=np.float64)
    s = float(s)
    t = float(t)
    if s == t:
        return y, 0.0, 0
    tau = s
    direction = 1.0 if t > s else -1.0
    h = (t - s) / 64.0
    k = [None] * 7
    k[0] = np.asarray(f(tau, y), dtype=np.float64)
    est_error = 0.0
    nsteps = 0
    attempts = 0
    while True:
        if abs(h) < _UNDERFLOW * max(1.0, abs(tau)):
            raise ConvergenceError("step size underflow", param=tau)
        if attempts >= max_steps:
            raise ConvergenceError("step budget exhausted", param=tau)
        attempts += 1
        last = (t - (tau + h)) * direction <= 0.0
        if last:
            h = t - tau
        for i in range(1, 6):
            yi = y.copy()
            ai = _A[i]
            for j in range(i):
                if ai[j] != 0.0:
                    yi += (h * ai[j]) * k[j]
            k[i] = np.asarray(f(tau + _C[i] * h, yi), dtype=np.float64)
        a7 = _A[6]
        y5 = y.copy()
        for j in range(6):
            if a7[j] != 0.0:
                y5 += (h * a7[j]) * k[j]
        k[6] = np.asarray(f(tau + h, y5), dtype=np.float64)
        errvec = _E[0] * k[0]
        for j in range(2, 7):
            errvec = errvec + _E[j] * k[j]
        errvec = h * errvec
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        with np.errstate(divide="ignore", invalid="ignore"):
            errnorm = float(np.max(np.abs(errvec) / scale))
        if math.isnan(errnorm):
            errnorm = math.inf
        if errnorm <= 1.0:
            est_error += float(np.max(np.abs(errvec)))
            nsteps += 1
            y = y5
            k[0] = k[6]  # first-same-as-last reuse
            if last:
                return y, est_error, nsteps
            tau += h
            if errnorm == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(
                    _MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * errnorm ** -0.2)
                )
            h *= factor
        else:
            factor = max(_MIN_FACTOR, _SAFETY * errnorm ** -0.2)
            h *= min(1.0, factor)


def rk4_matrix(f, s, t, y0, nsteps):
    """Classic fixed-step fourth-order scheme; returns Y(t) only."""
    nsteps = int(nsteps)
    if nsteps < 1:
        raise DomainError("fixed-step integration needs at least one step")
    y = np.array(y0, dtype=np.float64)
    s = float(s)
    t = float(t)
    if s == t:
        return y
    h = (t - s) / nsteps
    half = h / 2.0
    for i in range(nsteps):
        tau = s + i * h
        k1 = np.asarray(f(tau, y), dtype=np.float64)
        k2 = np.asarray(f(tau + half, y + half * k1), dtype=np.float64)
        k3 = np.asarray(f(tau + half, y + half * k2), dtype=np.float64)
        k4 = np.asarray(f(tau + h, y + h * k3), dtype=np.float64)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise EvaluationError("integration produced non-finite values", where=t)
    return y
