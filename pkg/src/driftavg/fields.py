"""Sea velocity fields: the tide ``M`` and its perturbation ``N``.

Both fields are functions of the slow time ``t``, the fast tide phase
``theta`` (1-periodic) and the position ``x``.  Every method broadcasts:
``t`` and ``theta`` may be scalars or arrays, ``x`` has shape ``(..., 2)``.
Vector results have shape ``(..., 2)`` and Jacobians ``(..., 2, 2)`` with
``J[..., i, j] = d f_i / d x_j``.

Phases are always reduced modulo 1 before evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

TWO_PI = 2.0 * np.pi
SIX_PI = 6.0 * np.pi

QUAD_TOL = 1e-10


def _phase(theta):
    return np.mod(np.asarray(theta, dtype=float), 1.0)


def _coords(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1]


def _stack(a, b):
    a, b = np.broadcast_arrays(a, b)
    return np.stack([a, b], axis=-1)


def _column_jacobian(col, column):
    """Jacobian whose only nonzero column is ``column``."""
    col = np.asarray(col, dtype=float)
    jac = np.zeros(col.shape[:-1] + (2, 2))
    jac[..., :, column] = col
    return jac


class Field:
    """A 1-periodic (in phase) velocity field with its derivatives.

    Subclasses implement :meth:`value`, :meth:`d_theta`, :meth:`d_t` and
    :meth:`jacobian`.  Field objects hold no mutable state and can be shared
    between workers.
    """

    name = "field"

    def value(self, t, theta, x):
        raise NotImplementedError

    def d_theta(self, t, theta, x):
        raise NotImplementedError

    def d_t(self, t, theta, x):
        raise NotImplementedError

    def jacobian(self, t, theta, x):
        raise NotImplementedError

    def derivatives(self, t, theta, x):
        return {
            "d_theta": self.d_theta(t, theta, x),
            "d_t": self.d_t(t, theta, x),
            "jacobian": self.jacobian(t, theta, x),
        }

    @property
    def is_zero(self):
        return False

    def perturbation_averages(self, t, x, n_theta):
        """Terms of the averaged system built from this field as a perturbation.

        ``n_mean`` is the trapezoid phase average on ``n_theta`` nodes; ``n_0``,
        ``grad_n_0`` and ``dt_n_0`` are the value, Jacobian and time derivative
        at phase 0.  ``t`` is a scalar and ``x`` a single point.
        """
        nodes = np.arange(n_theta) / n_theta
        return {
            "n_mean": np.mean(self.value(t, nodes, x), axis=0),
            "n_0": self.value(t, 0.0, x),
            "grad_n_0": self.jacobian(t, 0.0, x),
            "dt_n_0": self.d_t(t, 0.0, x),
        }


class TideField(Field):
    """Zero-mean tide field.  Adds the phase antiderivatives

    ``A(t, theta, x) = int_0^theta M(t, s, x) ds`` together with its
    Jacobian and time derivative, i.e. the phase antiderivatives of
    ``jacobian`` and ``d_t``.

    The generic implementations below integrate numerically with adaptive
    quadrature; fields with a closed form should override them.
    """

    name = "tide"

    def antiderivative(self, t, theta, x):
        return self._quad(lambda s, tt, xx: self.value(tt, s, xx), t, theta, x, (2,))

    def antiderivative_jacobian(self, t, theta, x):
        return self._quad(lambda s, tt, xx: self.jacobian(tt, s, xx), t, theta, x, (2, 2))

    def antiderivative_dt(self, t, theta, x):
        return self._quad(lambda s, tt, xx: self.d_t(tt, s, xx), t, theta, x, (2,))

    def tide_averages(self, t, x, n_theta):
        """Phase averages entering the averaged system, on ``n_theta`` nodes.

        Keys: ``grad_m_a`` (average of ``jacobian . A``), ``a_mean``,
        ``grad_a_mean`` and ``dt_a_mean``.  ``t`` is a scalar and ``x`` a
        single point.
        """
        nodes = np.arange(n_theta) / n_theta
        anti = self.antiderivative(t, nodes, x)
        jac = self.jacobian(t, nodes, x)
        return {
            "grad_m_a": np.mean(np.einsum("nij,nj->ni", jac, anti), axis=0),
            "a_mean": np.mean(anti, axis=0),
            "grad_a_mean": np.mean(self.antiderivative_jacobian(t, nodes, x), axis=0),
            "dt_a_mean": np.mean(self.antiderivative_dt(t, nodes, x), axis=0),
        }

    @staticmethod
    def _quad(func, t, theta, x, shape):
        theta = _phase(theta)
        x = np.asarray(x, dtype=float)
        t_b, theta_b = np.broadcast_arrays(np.asarray(t, dtype=float), theta)
        batch = np.broadcast_shapes(t_b.shape, x.shape[:-1])
        t_b = np.broadcast_to(t_b, batch)
        theta_b = np.broadcast_to(theta_b, batch)
        x_b = np.broadcast_to(x, batch + (2,))
        out = np.zeros(batch + shape)
        for idx in np.ndindex(*batch):
            tt, th, xx = t_b[idx], theta_b[idx], x_b[idx]
            if th == 0.0:
                continue
            for comp in np.ndindex(*shape):
                out[idx + comp] = integrate.quad(
                    lambda s: func(s, tt, xx)[comp],
                    0.0,
                    th,
                    epsabs=QUAD_TOL,
                    epsrel=QUAD_TOL,
                    limit=200,
                )[0]
        return out


class AnalyticTide(TideField):
    """Tide field producing non-circular loops with a modulated amplitude.

    ``M(t, theta, x) = (2 + sin 6 pi t) x1 (sin 2 pi theta + sin(4 pi theta)/4,
    sin(2 pi theta)/2)``.
    """

    name = "paper-tide"

    @staticmethod
    def _amp(t):
        return 2.0 + np.sin(SIX_PI * np.asarray(t, dtype=float))

    @staticmethod
    def _amp_dt(t):
        return SIX_PI * np.cos(SIX_PI * np.asarray(t, dtype=float))

    @staticmethod
    def _shape(theta):
        s2 = np.sin(TWO_PI * theta)
        return _stack(s2 + 0.25 * np.sin(2.0 * TWO_PI * theta), 0.5 * s2)

    @staticmethod
    def _shape_dtheta(theta):
        c2 = np.cos(TWO_PI * theta)
        return _stack(TWO_PI * c2 + np.pi * np.cos(2.0 * TWO_PI * theta), np.pi * c2)

    @staticmethod
    def _shape_integral(theta):
        # int_0^theta of _shape; vanishes at theta = 0 and theta = 1
        c2 = np.cos(TWO_PI * theta)
        c4 = np.cos(2.0 * TWO_PI * theta)
        return _stack((1.0 - c2) / TWO_PI + (1.0 - c4) / (16.0 * np.pi), (1.0 - c2) / (4.0 * np.pi))

    def _scale(self, amp, x):
        x1, _ = _coords(x)
        return (amp * x1)[..., None]

    def value(self, t, theta, x):
        return self._scale(self._amp(t), x) * self._shape(_phase(theta))

    def d_theta(self, t, theta, x):
        return self._scale(self._amp(t), x) * self._shape_dtheta(_phase(theta))

    def d_t(self, t, theta, x):
        return self._scale(self._amp_dt(t), x) * self._shape(_phase(theta))

    def jacobian(self, t, theta, x):
        amp = np.asarray(self._amp(t))[..., None]
        col = amp * self._shape(_phase(theta))
        col = np.broadcast_to(col, np.broadcast_shapes(col.shape, np.shape(x)))
        return _column_jacobian(col, 0)

    def antiderivative(self, t, theta, x):
        return self._scale(self._amp(t), x) * self._shape_integral(_phase(theta))

    def antiderivative_jacobian(self, t, theta, x):
        amp = np.asarray(self._amp(t))[..., None]
        col = amp * self._shape_integral(_phase(theta))
        col = np.broadcast_to(col, np.broadcast_shapes(col.shape, np.shape(x)))
        return _column_jacobian(col, 0)

    def antiderivative_dt(self, t, theta, x):
        return self._scale(self._amp_dt(t), x) * self._shape_integral(_phase(theta))

    @staticmethod
    @lru_cache(maxsize=8)
    def _average_tables(n_theta):
        nodes = np.arange(n_theta) / n_theta
        shape = AnalyticTide._shape(nodes)
        integral = AnalyticTide._shape_integral(nodes)
        return np.mean(shape * integral[:, :1], axis=0), np.mean(integral, axis=0)

    def tide_averages(self, t, x, n_theta):
        # separable field: the phase averages are fixed tables scaled by t and x
        shape_a, a_bar = self._average_tables(n_theta)
        amp = 2.0 + math.sin(SIX_PI * t)
        amp_dt = SIX_PI * math.cos(SIX_PI * t)
        x1 = float(x[0])
        grad_a = np.zeros((2, 2))
        grad_a[:, 0] = amp * a_bar
        return {
            "grad_m_a": (amp * amp * x1) * shape_a,
            "a_mean": (amp * x1) * a_bar,
            "grad_a_mean": grad_a,
            "dt_a_mean": (amp_dt * x1) * a_bar,
        }


class AnalyticPerturbation(Field):
    """Perturbation current with a gradient orthogonal to the tide's.

    ``N(t, theta, x) = (2 + cos 6 pi t) x2 (sin 2 pi theta, sin 2 pi theta)``.
    """

    name = "paper-perturbation"

    @staticmethod
    def _amp(t):
        return 2.0 + np.cos(SIX_PI * np.asarray(t, dtype=float))

    @staticmethod
    def _amp_dt(t):
        return -SIX_PI * np.sin(SIX_PI * np.asarray(t, dtype=float))

    def _both(self, scalar):
        return np.repeat(np.asarray(scalar)[..., None], 2, axis=-1)

    def value(self, t, theta, x):
        _, x2 = _coords(x)
        return self._both(self._amp(t) * x2 * np.sin(TWO_PI * _phase(theta)))

    def d_theta(self, t, theta, x):
        _, x2 = _coords(x)
        return self._both(self._amp(t) * x2 * TWO_PI * np.cos(TWO_PI * _phase(theta)))

    def d_t(self, t, theta, x):
        _, x2 = _coords(x)
        return self._both(self._amp_dt(t) * x2 * np.sin(TWO_PI * _phase(theta)))

    def jacobian(self, t, theta, x):
        s = self._amp(t) * np.sin(TWO_PI * _phase(theta))
        s = np.broadcast_to(s, np.broadcast_shapes(np.shape(s), np.shape(x)[:-1]))
        return _column_jacobian(self._both(s), 1)

    @staticmethod
    @lru_cache(maxsize=8)
    def _sine_mean(n_theta):
        return float(np.mean(np.sin(TWO_PI * np.arange(n_theta) / n_theta)))

    def perturbation_averages(self, t, x, n_theta):
        # sin(2 pi theta) vanishes at phase 0, and so do N, its Jacobian and d_t
        mean = (2.0 + math.cos(SIX_PI * t)) * float(x[1]) * self._sine_mean(n_theta)
        return {"n_mean": np.full(2, mean), "n_0": np.zeros(2), "grad_n_0": np.zeros((2, 2)), "dt_n_0": np.zeros(2)}


class ZeroField(TideField):
    """Identically zero field, usable as tide or perturbation."""

    name = "none"

    def _zeros(self, t, theta, x, shape=(2,)):
        batch = np.broadcast_shapes(np.shape(t), np.shape(theta), np.shape(x)[:-1])
        return np.zeros(batch + shape)

    def value(self, t, theta, x):
        return self._zeros(t, theta, x)

    d_theta = d_t = antiderivative = antiderivative_dt = value

    def jacobian(self, t, theta, x):
        return self._zeros(t, theta, x, (2, 2))

    antiderivative_jacobian = jacobian

    @property
    def is_zero(self):
        return True

    def tide_averages(self, t, x, n_theta):
        z2 = np.zeros(2)
        return {"grad_m_a": z2, "a_mean": z2, "grad_a_mean": np.zeros((2, 2)), "dt_a_mean": z2}

    def perturbation_averages(self, t, x, n_theta):
        z2 = np.zeros(2)
        return {"n_mean": z2, "n_0": z2, "grad_n_0": np.zeros((2, 2)), "dt_n_0": z2}


@dataclass(frozen=True)
class FieldBundle:
    """The pair of sea velocity fields driving a simulation."""

    tide: TideField
    perturbation: Field

    @classmethod
    def analytic(cls):
        return cls(AnalyticTide(), AnalyticPerturbation())

    @classmethod
    def zero(cls):
        return cls(ZeroField(), ZeroField())


TIDE_FIELDS = {"paper-tide": AnalyticTide, "none": ZeroField}
PERTURBATION_FIELDS = {"paper-perturbation": AnalyticPerturbation, "none": ZeroField}


def make_bundle(tide="paper-tide", perturbation="paper-perturbation"):
    """Build a :class:`FieldBundle` from the registered field names."""
    try:
        tide_field = TIDE_FIELDS[tide]()
    except KeyError:
        raise ValueError(f"unknown tide field {tide!r}; choose from {sorted(TIDE_FIELDS)}") from None
    try:
        pert_field = PERTURBATION_FIELDS[perturbation]()
    except KeyError:
        raise ValueError(
            f"unknown perturbation field {perturbation!r}; choose from {sorted(PERTURBATION_FIELDS)}"
        ) from None
    return FieldBundle(tide_field, pert_field)


_DEFAULT = FieldBundle.analytic()


def eval_tide(t, theta, x, field=None):
    return (field or _DEFAULT.tide).value(t, theta, x)


def tide_theta_antiderivative(t, theta, x, field=None):
    """``int_0^theta M(t, s, x) ds`` with ``theta`` taken modulo 1."""
    return (field or _DEFAULT.tide).antiderivative(t, theta, x)


def eval_tide_derivatives(t, theta, x, field=None):
    return (field or _DEFAULT.tide).derivatives(t, theta, x)


def eval_perturbation(t, theta, x, field=None):
    return (field or _DEFAULT.perturbation).value(t, theta, x)


def eval_perturbation_derivatives(t, theta, x, field=None):
    return (field or _DEFAULT.perturbation).derivatives(t, theta, x)
