"""Averaged (non-oscillating) drift system and trajectory reconstruction.

The slow unknowns ``(Y0, U0, Y1, U1)`` obey

    dY0/dt = U0
    dU0/dt = <W> - U0
    dY1/dt = <grad M . A> + U1 + <N> - N_0 + I_W - <A> - <grad A> U0 - <dA/dt>
    dU1/dt = -(<grad M . A> + U1 + <N> - N_0 + J_W - <A>)
             + (grad N_0 + <grad A>) U0 + dN_0/dt - dJ_W/dt + <dA/dt>

with ``<.>`` the phase average over one tide period, ``A`` the phase
antiderivative of ``M`` (zero at phase 0), ``N_0`` the perturbation at
phase 0, ``<W>`` the windowed wind mean and ``I_W``, ``J_W`` the cumulated
wind fluctuation over the current tide cycle.  The oscillating trajectory
is rebuilt from

    X = Y0 + eps (Y1 + A)
    V = M + U0 + eps (grad M (Y1 + A) + U1 + N - N_0 + cumulated wind - A)

The wind is homogeneous in space, so it enters all four equations as an
additive, state-independent forcing.  By default its response is computed
separately (:class:`WindResponse`) and superposed on a wind-free system,
which keeps the right-hand side seen by the adaptive integrator smooth.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .direct import output_grid, write_state_csv
from .rk import dopri5

AVERAGED_RTOL = 1e-6
AVERAGED_ATOL = 1e-9


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite trapezoid rule on ``n_theta`` uniform nodes of ``[0, 1)``."""

    n_theta: int = 64

    def __post_init__(self):
        if self.n_theta < 16:
            raise ValueError(f"n_theta must be >= 16, got {self.n_theta}")

    @property
    def nodes(self):
        return np.arange(self.n_theta) / self.n_theta

    def average(self, values):
        """Periodic trapezoid average over the leading axis."""
        return np.mean(values, axis=0)


@dataclass(frozen=True)
class AveragedState:
    Y0: np.ndarray
    U0: np.ndarray
    Y1: np.ndarray
    U1: np.ndarray

    @classmethod
    def from_vector(cls, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] == 4:
            zeros = np.zeros(y.shape[:-1] + (2,))
            return cls(y[..., 0:2], y[..., 2:4], zeros, zeros)
        return cls(y[..., 0:2], y[..., 2:4], y[..., 4:6], y[..., 6:8])

    def to_vector(self):
        return np.concatenate([self.Y0, self.U0, self.Y1, self.U1], axis=-1)


def phase(t, eps):
    """Cycle index ``[t/eps]`` and phase ``t/eps - [t/eps]`` (arrays allowed).

    Phases within 1e-9 of the next integer snap to it, so ``t = k eps``
    always has phase 0.
    """
    q = np.asarray(t, dtype=float) / eps
    k = np.floor(q)
    k = np.where(q - k > 1.0 - 1e-9, k + 1.0, k)
    return k, np.maximum(q - k, 0.0)


def theta_averages(t, y0, fields, quad):
    """Every phase average of the tide and perturbation fields at ``(t, y0)``."""
    out = fields.tide.tide_averages(t, y0, quad.n_theta)
    out.update(fields.perturbation.perturbation_averages(t, y0, quad.n_theta))
    return out


def rhs_order0(t, Y0, U0, wind, p):
    """Right-hand side of the order-0 system; the tide averages out."""
    return np.asarray(U0, dtype=float), wind.windowed_mean(t, p) - U0


def wind_terms(t, wind, eps, p):
    """``(I_W, J_W, dJ_W/dt)``; all zero for a calm series."""
    if wind.is_zero:
        z = np.zeros(2)
        return z, z, z
    mom = wind.oscillation_moments(t, eps, p)
    return mom.I_W, mom.J_W, wind.oscillation_moments_dt(t, eps, p, t_min=0.0)


def field_terms_order1(t, state, fields, quad):
    """Wind-free part of ``(dY1/dt, dU1/dt)``."""
    av = theta_averages(t, state.Y0, fields, quad)
    common = av["grad_m_a"] + state.U1 + av["n_mean"] - av["n_0"] - av["a_mean"]
    grad_a_u0 = av["grad_a_mean"] @ state.U0
    dY1 = common - grad_a_u0 - av["dt_a_mean"]
    dU1 = -common + av["grad_n_0"] @ state.U0 + grad_a_u0 + av["dt_n_0"] + av["dt_a_mean"]
    return dY1, dU1


def rhs_order1(t, state, fields, wind, eps, p, quad):
    """Right-hand side ``(dY1/dt, dU1/dt)`` of the order-1 system.

    The wind is homogeneous in space, so every term carrying the wind
    Jacobian (``<grad W> Y1``, ``<grad W . A>`` and the gradient of the
    cumulated wind multiplying ``U0``) vanishes and is omitted; they would
    enter ``dU1/dt`` for an inhomogeneous wind.
    """
    dY1, dU1 = field_terms_order1(t, state, fields, quad)
    i_w, j_w, dj_w = wind_terms(t, wind, eps, p)
    return dY1 + i_w, dU1 - j_w - dj_w


# 4-point Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class WindResponse:
    """Part of the averaged solution driven by the wind alone.

    Solves, from zero initial data,

        y0' = u0,  u0' = Wbar - u0,
        y1' = u1 + I_W,  u1' = -u1 - J_W - dJ_W/dt,

    where ``dJ_W/dt`` is the derivative of ``t -> J_W(t)`` including its jumps
    at tide-cycle boundaries.  With ``v = u1 + J_W`` the last equation reads
    ``v' = -v``, hence the closed forms

        u1(t) = J_W(0) exp(-t) - J_W(t),
        y1(t) = J_W(0) (1 - exp(-t)) + int_0^t (I_W - J_W) ds.

    ``(y0, u0)`` are integrated exactly (exponential integrator, Gauss rule
    per cell) on a uniform grid finer than the small-scale wind step and
    interpolated by cubic Hermite polynomials; 64 cells per tide cycle keep
    the interpolation error near 1e-8 for the default surrogate wind.
    """

    def __init__(self, wind, eps, p, t_end=1.0, cells_per_cycle=None):
        self.wind, self.eps, self.p = wind, eps, p
        if cells_per_cycle is None:
            cells_per_cycle = 64
        n = math.ceil(t_end * cells_per_cycle / eps - 1e-9)
        self.h = t_end / n
        self.t = np.linspace(0.0, t_end, n + 1)
        h = self.h
        gauss = self.t[:-1, None] + h * _GL_X
        m_g = wind.windowed_mean(gauss, p)
        lag = np.exp(-h * (1.0 - _GL_X))[:, None]
        f_u = h * np.einsum("q,nqc->nc", _GL_W, lag * m_g)
        f_y = h * np.einsum("q,nqc->nc", _GL_W, (1.0 - lag) * m_g)
        decay = math.exp(-h)
        u_next = lfilter([1.0], [1.0, -decay], f_u, axis=0)
        u = np.vstack([np.zeros((1, 2)), u_next])
        y = np.vstack([np.zeros((1, 2)), np.cumsum((1.0 - decay) * u[:-1] + f_y, axis=0)])
        self.y0, self.u0 = y, u
        self.m = wind.windowed_mean(self.t, p)
        mom = wind.oscillation_moments(gauss, eps, p)
        gap = h * np.einsum("q,nqc->nc", _GL_W, mom.I_W - mom.J_W)
        self.gap = np.vstack([np.zeros((1, 2)), np.cumsum(gap, axis=0)])
        self.j0 = wind.oscillation_moments(0.0, eps, p).J_W
        self.n_nodes = gauss.size + self.t.size

    def _hermite(self, t, values, slopes):
        if np.ndim(t) == 0:
            t = float(t)
            j = min(max(int(t // self.h), 0), len(self.t) - 2)
            s = (t - self.t[j]) / self.h
            s2, s3 = s * s, s * s * s
            return ((2 * s3 - 3 * s2 + 1) * values[j] + (s3 - 2 * s2 + s) * self.h * slopes[j]
                    + (3 * s2 - 2 * s3) * values[j + 1] + (s3 - s2) * self.h * slopes[j + 1])
        t = np.asarray(t, dtype=float)
        j = np.clip(np.floor(t / self.h).astype(np.int64), 0, len(self.t) - 2)
        s = ((t - self.t[j]) / self.h)[..., None]
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        return h00 * values[j] + h10 * self.h * slopes[j] + h01 * values[j + 1] + h11 * self.h * slopes[j + 1]

    def order0(self, t):
        """``(y0, u0)`` at ``t``."""
        y = self._hermite(t, self.y0, self.u0)
        u = self._hermite(t, self.u0, self.m - self.u0)
        return y, u

    def order1(self, t):
        """``(y1, u1)`` at ``t``."""
        t = np.asarray(t, dtype=float)
        decay = np.exp(-t)[..., None]
        j_w = self.wind.oscillation_moments(t, self.eps, self.p).J_W
        j = np.clip(np.floor(t / self.h).astype(np.int64), 0, len(self.t) - 2)
        s = ((t - self.t[j]) / self.h)[..., None]
        gap = (1.0 - s) * self.gap[j] + s * self.gap[j + 1]
        return self.j0 * (1.0 - decay) + gap, self.j0 * decay - j_w

    def states(self, t, order):
        y0, u0 = self.order0(t)
        if order == 0:
            return np.concatenate([y0, u0], axis=-1)
        y1, u1 = self.order1(t)
        return np.concatenate([y0, u0, y1, u1], axis=-1)


@dataclass
class AveragedTrajectory:
    """Accepted steps of the averaged system plus its dense output.

    ``states`` holds the full averaged state at the step times ``t``; when a
    :class:`WindResponse` is attached, ``dense`` integrates only the wind-free
    part and :meth:`state` adds the response back.
    """

    t: np.ndarray
    states: np.ndarray
    order: int
    dense: object = field(repr=False, default=None)
    meta: dict = field(default_factory=dict)
    response: WindResponse = field(repr=False, default=None)

    def state_vector(self, t):
        y = self.dense(t)
        if self.response is not None:
            y = y + self.response.states(t, self.order)
        return y

    def state(self, t):
        return AveragedState.from_vector(self.state_vector(t))

    def to_csv(self, path):
        st = AveragedState.from_vector(self.states)
        cols = np.column_stack([self.t, st.to_vector()])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "y0_1", "y0_2", "u0_1", "u0_2", "y1_1", "y1_2", "u1_1", "u1_2"])
            for row in cols:
                writer.writerow([repr(float(c)) for c in row])


WIND_MODES = ("superpose", "inline")


def integrate_averaged(
    fields,
    wind,
    eps,
    p,
    x0,
    v0,
    order=1,
    quad=None,
    rtol=AVERAGED_RTOL,
    atol=AVERAGED_ATOL,
    wind_mode="superpose",
):
    """Solve the averaged system on ``[0, 1]``.

    ``wind_mode="superpose"`` (default) integrates the wind-free system with
    the precomputed :class:`WindResponse` added to ``Y0`` and ``U0`` wherever
    the fields are evaluated.  ``wind_mode="inline"`` integrates the literal
    equations, wind moments included, stopping at every tide-cycle boundary
    and at the edges of the finite-difference stencil around it; it is much
    slower and serves as a cross-check.
    """
    if order not in (0, 1):
        raise ValueError(f"order must be 0 or 1, got {order}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not p > 0:
        raise ValueError("window length p must be > 0")
    if wind_mode not in WIND_MODES:
        raise ValueError(f"wind_mode must be one of {WIND_MODES}, got {wind_mode!r}")
    quad = quad or QuadratureConfig()
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(v0, dtype=float) - fields.tide.value(0.0, 0.0, x0)
    windy = not wind.is_zero
    response = WindResponse(wind, eps, p) if windy and wind_mode == "superpose" else None
    stops = ()

    if response is not None:

        def rhs(t, y):
            wy, wu = response.order0(t)
            dy = np.empty_like(y)
            dy[0:2] = y[2:4]
            dy[2:4] = -y[2:4]
            if order == 1:
                st = AveragedState(y[0:2] + wy, y[2:4] + wu, y[4:6], y[6:8])
                dy[4:6], dy[6:8] = field_terms_order1(t, st, fields, quad)
            return dy

    elif order == 0:

        def rhs(t, y):
            dy0, du0 = rhs_order0(t, y[0:2], y[2:4], wind, p)
            return np.concatenate([dy0, du0])

    else:

        def rhs(t, y):
            st = AveragedState(y[0:2], y[2:4], y[4:6], y[6:8])
            dy0, du0 = rhs_order0(t, st.Y0, st.U0, wind, p)
            dy1, du1 = rhs_order1(t, st, fields, wind, eps, p, quad)
            return np.concatenate([dy0, du0, dy1, du1])

        if windy:
            k = eps * np.arange(1, math.ceil(1.0 / eps) + 1)
            h = wind.dt2
            stops = np.concatenate([k - h, k, k + h])

    y_init = np.concatenate([x0, u0]) if order == 0 else np.concatenate([x0, u0, np.zeros(4)])
    sol = dopri5(rhs, (0.0, 1.0), y_init, rtol=rtol, atol=atol, stops=stops)
    states = sol.y if response is None else sol.y + response.states(sol.t, order)
    meta = {"eps": eps, "p": p, "order": order, "n_theta": quad.n_theta, "rtol": rtol, "atol": atol,
            "nfev": sol.nfev, "naccept": sol.naccept, "nreject": sol.nreject, "seed": wind.seed,
            "wind_mode": wind_mode, "wind_nodes": 0 if response is None else response.n_nodes}
    return AveragedTrajectory(sol.t, states, order, dense=sol, meta=meta, response=response)


def reconstruct(t, avg, fields, wind, eps, order=1):
    """Oscillating position and velocity rebuilt from the averaged solution.

    Returns ``(x, v)`` with shape ``(..., 2)`` matching ``t``.
    """
    if order not in (0, 1):
        raise ValueError(f"order must be 0 or 1, got {order}")
    if order > avg.order:
        raise ValueError("order-1 reconstruction needs an order-1 averaged trajectory")
    t = np.asarray(t, dtype=float)
    st = avg.state(t)
    k, theta = phase(t, eps)
    tide, pert = fields.tide, fields.perturbation
    x = st.Y0
    v = tide.value(t, theta, st.Y0) + st.U0
    if order == 0:
        return x, v
    anti = tide.antiderivative(t, theta, st.Y0)
    x1 = st.Y1 + anti
    v1 = np.einsum("...ij,...j->...i", tide.jacobian(t, theta, st.Y0), x1) + st.U1 - anti
    v1 = v1 + pert.value(t, theta, st.Y0) - pert.value(t, 0.0, st.Y0)
    if not wind.is_zero:
        # (1/eps) int_{k eps}^{t} (W - <W>) ds, the phase integral over the current cycle
        cum = wind.cycle_integral(t, eps) - (t - k * eps)[..., None] * wind.windowed_mean(t, avg.meta["p"])
        v1 = v1 + cum / eps
    return x + eps * x1, v + eps * v1


@dataclass
class Reconstruction:
    """Reconstructed trajectory usable wherever a direct trajectory is."""

    avg: AveragedTrajectory
    fields: object
    wind: object
    eps: float
    order: int = 1
    t: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.t is None:
            self.t = output_grid(self.eps)

    def state(self, t):
        return reconstruct(t, self.avg, self.fields, self.wind, self.eps, self.order)

    def position(self, t):
        return self.state(t)[0]

    def velocity(self, t):
        return self.state(t)[1]

    def to_csv(self, path):
        x, v = self.state(self.t)
        write_state_csv(path, self.t, x, v)
