"""Embedded Dormand-Prince 5(4) integrator with PI step-size control.

The step controller follows Hairer, Norsett & Wanner (Solving ODEs I,
section II.4) with the Gustafsson PI refinement.  Dense output uses the
standard fourth-order continuous extension of the DOPRI5 pair.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th and embedded 4th order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output coefficients (Hairer's CONTD5)
D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
BETA = 0.04
ALPHA = 0.2 - 0.75 * BETA


class IntegrationError(RuntimeError):
    """Raised when the integrator cannot continue."""

    def __init__(self, message, t):
        super().__init__(f"{message} at t={t!r}")
        self.t = t


class StepSizeUnderflow(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


@dataclass
class OdeSolution:
    """Accepted steps plus the dense-output coefficients of each step."""

    t: np.ndarray
    y: np.ndarray
    nfev: int
    naccept: int
    nreject: int
    _coeffs: list = field(default_factory=list, repr=False)
    _stacked: np.ndarray = field(default=None, repr=False)

    def __call__(self, tq):
        """Dense output at the query times ``tq`` (scalar or 1-d array)."""
        tq = np.asarray(tq, dtype=float)
        scalar = tq.ndim == 0
        tq = np.atleast_1d(tq)
        if tq.size and (tq.min() < self.t[0] - 1e-12 or tq.max() > self.t[-1] + 1e-12):
            raise ValueError("dense output query outside the integration interval")
        if self._stacked is None:
            self._stacked = np.array(self._coeffs)
        idx = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, len(self.t) - 2)
        t0, t1 = self.t[idx], self.t[idx + 1]
        r1, r2, r3, r4, r5 = np.moveaxis(self._stacked[idx], 1, 0)
        s = ((tq - t0) / (t1 - t0))[:, None]
        s1 = 1.0 - s
        out = r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)))
        # exact stored states at step boundaries
        at_start = tq == t0
        at_end = tq == t1
        out[at_start] = self.y[idx[at_start]]
        out[at_end] = self.y[idx[at_end] + 1]
        return out[0] if scalar else out


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return np.sqrt(np.mean((err / scale) ** 2))


def _initial_step(fun, t0, y0, f0, direction, rtol, atol):
    # Hairer's automatic starting step for a 5th-order method
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = fun(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri5(fun, t_span, y0, rtol=1e-8, atol=1e-10, max_step=np.inf, first_step=None, stops=(), dense=True):
    """Integrate ``y' = fun(t, y)`` over ``t_span`` with DOPRI5.

    ``stops`` are times where a step must end exactly, typically
    discontinuities of the right-hand side.  Returns an :class:`OdeSolution`
    holding every accepted step.
    """
    t0, tf = map(float, t_span)
    if not tf > t0:
        raise ValueError("t_span must be increasing")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    y = np.array(y0, dtype=float)
    nfev = 0

    def f(t, y):
        nonlocal nfev
        nfev += 1
        return np.asarray(fun(t, y), dtype=float)

    stops = np.unique([s for s in stops if t0 < s < tf])
    stops = list(stops) + [tf]
    stop_idx = 0

    t = t0
    k1 = f(t, y)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(k1))):
        raise NonFiniteState("non-finite initial state or derivative", t)
    h = first_step if first_step is not None else _initial_step(f, t, y, k1, 1.0, rtol, atol)
    h = min(h, max_step, tf - t0)
    err_prev = 1e-4

    ts, ys, coeffs = [t], [y.copy()], []
    naccept = nreject = 0
    K = np.empty((7, y.size))
    while t < tf:
        target = stops[stop_idx]
        min_step = 16 * np.spacing(max(abs(t), 1.0))
        if not h >= min_step:
            raise StepSizeUnderflow("step size underflow", t)
        h_eff = h
        hits_stop = t + h_eff >= target - min_step
        if hits_stop:
            h_eff = target - t

        K[0] = k1
        for s in range(1, 6):
            K[s] = f(t + C[s] * h_eff, y + h_eff * (A[s] @ K[:s]))
        y_new = y + h_eff * (B[:6] @ K[:6])
        K[6] = f(t + h_eff, y_new)
        if not np.all(np.isfinite(y_new)) or not np.all(np.isfinite(K[6])):
            if h_eff <= min_step:
                raise NonFiniteState("non-finite state", t)
            h = 0.25 * h_eff
            nreject += 1
            continue
        err = _error_norm(h_eff * (E @ K), y, y_new, rtol, atol)

        if err <= 1.0:
            if dense:
                dy = y_new - y
                bspl = h_eff * k1 - dy
                coeffs.append((y.copy(), dy, bspl, dy - h_eff * K[6] - bspl, h_eff * (D @ K)))
            err = max(err, 1e-10)
            factor = SAFETY * err ** -ALPHA * err_prev**BETA
            factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            err_prev = err
            t = target if hits_stop else t + h_eff
            if hits_stop:
                stop_idx += 1
            y = y_new
            k1 = K[6].copy()
            ts.append(t)
            ys.append(y.copy())
            naccept += 1
            h = min(h_eff * factor, max_step) if not hits_stop else min(max(h, h_eff * factor), max_step)
        else:
            factor = max(MIN_FACTOR, SAFETY * err ** -ALPHA)
            h = h_eff * factor
            nreject += 1
    return OdeSolution(np.array(ts), np.array(ys), nfev, naccept, nreject, coeffs)
