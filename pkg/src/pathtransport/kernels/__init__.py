"""Kernel backend selection.

The compiled extension (Cython) is preferred when present; the pure
Python twin is used otherwise.  Set PATH_TRANSPORT_BACKEND=python to
force the fallback, or =compiled to require the extension (ImportError
if it is missing).  Both backends expose the same four entry points and
the same numeric error semantics; results agree to roundoff, not bitwise.
"""

import os
import warnings

from . import opcodes  # noqa: F401  (re-exported)

_choice = os.environ.get("PATH_TRANSPORT_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "python", "compiled"):
    warnings.warn(
        f"PATH_TRANSPORT_BACKEND={_choice!r} not recognized, using auto",
        stacklevel=1,
    )
    _choice = "auto"

if _choice == "python":
    from . import pure as _impl
elif _choice == "compiled":
    from . import _speedups as _impl  # type: ignore[attr-defined]
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _impl

BACKEND = _impl.BACKEND
eval_program = _impl.eval_program
eval_table = _impl.eval_table
transport_ode = _impl.transport_ode
transport_rk4 = _impl.transport_rk4

__all__ = [
    "BACKEND",
    "opcodes",
    "eval_program",
    "eval_table",
    "transport_ode",
    "transport_rk4",
]
