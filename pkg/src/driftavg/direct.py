"""Direct integration of the stiff oscillatory drift system.

The state is ``(X, V)`` with

    dX/dt = V
    dV/dt = (1/eps) dM/dtheta + dM/dt + dN/dtheta + (grad M) V + W - V
            + eps (dN/dt + (grad N) V)

every field being evaluated at ``(t, t/eps, X)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .rk import NonFiniteState, dopri5

DIRECT_RTOL = 1e-8
DIRECT_ATOL = 1e-10


def output_grid(eps):
    """Uniform evaluation grid with 32 points per tide period (doubled)."""
    n = 2 * math.ceil(1.0 / eps) * 32
    return np.linspace(0.0, 1.0, n + 1)


@dataclass
class Trajectory:
    """Time-stamped position and velocity samples on ``[0, 1]``.

    ``t``/``x``/``v`` merge the accepted integrator steps with the uniform
    output grid.  ``dense`` maps times to ``(n, 4)`` states.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    dense: object = field(repr=False, default=None)
    meta: dict = field(default_factory=dict)

    def state(self, t):
        y = self.dense(t)
        return y[..., :2], y[..., 2:]

    def position(self, t):
        return self.dense(t)[..., :2]

    def velocity(self, t):
        return self.dense(t)[..., 2:]

    def to_csv(self, path):
        write_state_csv(path, self.t, self.x, self.v)


def write_state_csv(path, t, x, v):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x1", "x2", "v1", "v2"])
        for row in zip(t, x[:, 0], x[:, 1], v[:, 0], v[:, 1]):
            writer.writerow([repr(float(c)) for c in row])


def direct_rhs(fields, wind, eps):
    tide, pert = fields.tide, fields.perturbation
    no_tide, no_pert = tide.is_zero, pert.is_zero

    def rhs(t, y):
        x, v = y[:2], y[2:]
        theta = (t / eps) % 1.0
        dv = wind.wind_at(t) - v
        if not no_tide:
            dv = dv + tide.d_theta(t, theta, x) / eps + tide.d_t(t, theta, x) + tide.jacobian(t, theta, x) @ v
        if not no_pert:
            dv = dv + pert.d_theta(t, theta, x) + eps * (pert.d_t(t, theta, x) + pert.jacobian(t, theta, x) @ v)
        return np.concatenate([v, dv])

    return rhs


def _merge(steps_t, grid):
    t = np.union1d(steps_t, grid)
    # drop near-duplicates created by rounding
    keep = np.concatenate([[True], np.diff(t) > 1e-14])
    return t[keep]


def integrate_direct(fields, wind, eps, x0, v0, rtol=DIRECT_RTOL, atol=DIRECT_ATOL, max_step=np.inf):
    """Integrate the exact system on ``[0, 1]`` with DOPRI5.

    Raises :class:`~driftavg.rk.StepSizeUnderflow` or
    :class:`~driftavg.rk.NonFiniteState` on failure.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    if wind.t_lo > 0 or wind.t_hi < 1:
        raise ValueError("wind span must cover [0, 1]")
    y0 = np.concatenate([np.asarray(x0, dtype=float), np.asarray(v0, dtype=float)])
    sol = dopri5(direct_rhs(fields, wind, eps), (0.0, 1.0), y0, rtol=rtol, atol=atol, max_step=max_step)
    t = _merge(sol.t, output_grid(eps))
    y = sol(t)
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("non-finite state", float(t[~np.isfinite(y).all(axis=1)][0]))
    meta = {
        "eps": eps,
        "seed": wind.seed,
        "rtol": rtol,
        "atol": atol,
        "nfev": sol.nfev,
        "naccept": sol.naccept,
        "nreject": sol.nreject,
    }
    return Trajectory(t, y[:, :2], y[:, 2:], dense=sol, meta=meta)
