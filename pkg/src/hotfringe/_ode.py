"""Adaptive Dormand-Prince 5(4) integrator.

Small embedded Runge-Kutta pair shared by the radiative-cooling master
curve and the fringe-coefficient evolution.  Works on real or complex
state vectors and is fully deterministic.
"""

from __future__ import annotations

import numpy as np

# Dormand-Prince 5(4) tableau
_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0,
     -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
     11.0 / 84.0),
)
# 5th order propagating weights and 4th order embedded weights
_B5 = np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0,
                -2187.0 / 6784.0, 11.0 / 84.0, 0.0])
_B4 = np.array([5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0,
                -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class StepSizeUnderflow(RuntimeError):
    """Raised when the step size collapses below the resolvable scale."""


def integrate_dp45(rhs, t0, t1, y0, rtol=1e-8, atol=1e-12, first_step=None,
                   max_rel_change=None, collect=False):
    """Integrate dy/dt = rhs(t, y) from t0 to t1 (t1 >= t0).

    Parameters
    ----------
    rhs : callable(t, y) -> array_like
    y0 : array_like, real or complex
    rtol, atol : error tolerances for the embedded 4th order estimate
    first_step : optional initial step size
    max_rel_change : optional cap on the per-step relative change of
        ``|y|`` (used to force dense steps along the cooling curve)
    collect : when True return the accepted step points ``(ts, ys)``
        in addition to the final state

    Returns
    -------
    y_end  or  (y_end, ts, ys) when ``collect`` is set.
    """
    y = np.atleast_1d(np.asarray(y0, dtype=complex if np.iscomplexobj(y0)
                                 else float)).copy()
    t = float(t0)
    t1 = float(t1)
    span = t1 - t
    if span < 0.0:
        raise ValueError("integrate_dp45 requires t1 >= t0")
    ts = [t]
    ys = [y.copy()]
    if span == 0.0:
        if collect:
            return y, np.array(ts), np.array(ys)
        return y

    f0 = np.atleast_1d(np.asarray(rhs(t, y)))
    if first_step is None:
        scale = atol + rtol * np.abs(y)
        d0 = float(np.max(np.abs(y) / scale))
        d1 = float(np.max(np.abs(f0) / scale))
        h = 0.01 * d0 / d1 if (d0 > 1e-5 and d1 > 1e-5) else 1e-6 * span
        h = min(h, span)
    else:
        h = min(float(first_step), span)

    k = np.empty((7,) + y.shape, dtype=y.dtype)
    k[0] = f0
    while t < t1:
        h = min(h, t1 - t)
        if h <= abs(t) * 1e-15 or h <= 1e-300:
            raise StepSizeUnderflow(f"step size underflow at t={t!r}")
        for i in range(1, 7):
            yi = y + h * sum(a * k[j] for j, a in enumerate(_A[i]))
            k[i] = rhs(t + _C[i] * h, yi)
        y5 = y + h * (_B5 @ k.reshape(7, -1)).reshape(y.shape)
        err_vec = h * ((_B5 - _B4) @ k.reshape(7, -1)).reshape(y.shape)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean((np.abs(err_vec) / scale) ** 2)))

        accept = err <= 1.0
        if accept and max_rel_change is not None:
            denom = np.maximum(np.abs(y), 1e-300)
            if float(np.max(np.abs(y5 - y) / denom)) > max_rel_change:
                accept = False
                h *= 0.5
                k[0] = rhs(t, y)
                continue
        if accept:
            t += h
            y = y5
            k[0] = k[6]  # FSAL
            if collect:
                ts.append(t)
                ys.append(y.copy())
        factor = _SAFETY * err ** -0.2 if err > 0.0 else _MAX_FACTOR
        h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        if not accept:
            k[0] = rhs(t, y)

    if collect:
        return y, np.array(ts), np.array(ys)
    return y
