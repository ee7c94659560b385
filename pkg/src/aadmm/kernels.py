"""Sequential recursions with an optional compiled core.

The compiled module is used when it was built at install time; otherwise
the pure NumPy/SciPy versions below are used.  ``BACKEND`` reports which.
Set ``AADMM_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import signal

__all__ = ["discounted_cumsum", "lti_response", "BACKEND", "py_discounted_cumsum", "py_lti_response"]


def py_discounted_cumsum(q, r2: float) -> np.ndarray:
    """``S[t] = r2 * S[t-1] + q[t]`` along axis 0, with ``S[-1] = 0``."""
    q = np.asarray(q, dtype=float)
    if q.shape[0] == 0:
        return q.copy()
    return signal.lfilter([1.0], [1.0, -float(r2)], q, axis=0)


def py_lti_response(A, B, C, D, w, x0=None):
    """Simulate ``x+ = A x + B w``, ``y = C x + D w``.

    Returns ``(y, states)`` with shapes ``(T, p)`` and ``(T + 1, n)``.
    """
    A, B, C, D = (np.asarray(M, dtype=float) for M in (A, B, C, D))
    w = np.asarray(w, dtype=float)
    n = A.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    states = np.empty((w.shape[0] + 1, n))
    y = np.empty((w.shape[0], C.shape[0]))
    states[0] = x
    for k, wk in enumerate(w):
        y[k] = C @ x + D @ wk
        x = A @ x + B @ wk
        states[k + 1] = x
    return y, states


try:
    if os.environ.get("AADMM_PURE_PYTHON"):
        raise ImportError("forced fallback")
    from ._ext import _kernels as _c
except ImportError:
    _c = None

BACKEND = "compiled" if _c is not None else "python"


def _c2(M):
    return np.ascontiguousarray(M, dtype=float)


if _c is not None:

    def discounted_cumsum(q, r2: float) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        shape = q.shape
        if q.size == 0:
            return q.copy()
        out = _c.discounted_cumsum(_c2(q.reshape(shape[0], -1)), float(r2))
        return out.reshape(shape)

    def lti_response(A, B, C, D, w, x0=None):
        A = _c2(A)
        x0 = np.zeros(A.shape[0]) if x0 is None else _c2(x0)
        return _c.lti_response(A, _c2(B), _c2(C), _c2(D), _c2(w), x0)

else:
    discounted_cumsum = py_discounted_cumsum
    lti_response = py_lti_response

discounted_cumsum.__doc__ = py_discounted_cumsum.__doc__
lti_response.__doc__ = py_lti_response.__doc__
