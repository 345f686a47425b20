"""Finite-difference helpers shared by the whole engine.

Conventions: the step for an argument ``s`` is ``h * max(1, |s|)`` with
``h`` defaulting to :data:`DEFAULT_STEP`; stencils are central except
within one step of an interval endpoint, where a second-order one-sided
stencil is used instead.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, EvaluationError

DEFAULT_STEP = 1e-5


def scaled_step(s: float, h: float | None = None) -> float:
    """Relative step size at argument ``s``."""
    base = DEFAULT_STEP if h is None else float(h)
    return base * max(1.0, abs(s))


def _as_array(value, where):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError("non-finite value from user function", where=where)
    return arr


def derivative(f, s: float, h: float | None = None, interval=None):
    """Differentiate ``f`` at ``s``.

    Central second-order stencil, falling back to one-sided stencils of
    the same order when ``interval = (a, b)`` is given and ``s`` is within
    one step of an endpoint.
    """
    step = scaled_step(s, h)
    if interval is not None:
        a, b = interval
        if s < a or s > b:
            raise DomainError(f"parameter {s!r} outside interval [{a}, {b}]")
        if b - a < 2 * step:
            raise DomainError(
                f"interval [{a}, {b}] too short for finite differences (step {step})"
            )
        if s - step < a:
            f0 = _as_array(f(s), s)
            f1 = _as_array(f(s + step), s + step)
            f2 = _as_array(f(s + 2 * step), s + 2 * step)
            return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * step)
        if s + step > b:
            f0 = _as_array(f(s), s)
            f1 = _as_array(f(s - step), s - step)
            f2 = _as_array(f(s - 2 * step), s - 2 * step)
            return (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * step)
    hi = _as_array(f(s + step), s + step)
    lo = _as_array(f(s - step), s - step)
    return (hi - lo) / (2.0 * step)


def gradient(f, x, h: float | None = None):
    """Per-axis central differences of a chart function ``f(x)``.

    Returns an array of shape ``f(x).shape + (len(x),)`` with the axis
    derivative in the trailing index.
    """
    x = np.asarray(x, dtype=float)
    sample = _as_array(f(x), tuple(x))
    out = np.empty(sample.shape + (x.size,), dtype=float)
    for axis in range(x.size):
        step = scaled_step(x[axis], h)
        hi = x.copy()
        hi[axis] += step
        lo = x.copy()
        lo[axis] -= step
        out[..., axis] = (_as_array(f(hi), tuple(hi)) - _as_array(f(lo), tuple(lo))) / (
            2.0 * step
        )
    return out
