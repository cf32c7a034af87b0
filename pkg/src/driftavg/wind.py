"""Synthetic wind: synoptic surrogate plus a small-scale AR(1) component.

All times are slow (rescaled) times.  A wind series is spatially
homogeneous, so every query ignores position.  Between grid samples both
components are linear, so every integral below is computed exactly on the
breakpoints of the signal.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter


class WindSpanError(ValueError):
    """A query falls outside the synthesized time span."""


@dataclass(frozen=True)
class SmallScaleParams:
    """AR(1) small-scale wind.

    ``sigma`` is the innovation standard deviation.  When it is ``None`` it
    is calibrated after synoptic generation so that the marginal standard
    deviation of the small-scale part is ``fraction`` of the total one.
    ``dt2`` defaults to ``eps / 100``.
    """

    a: float = 0.96
    sigma: float | None = None
    fraction: float = 0.1
    dt2: float | None = None

    def validate(self):
        if not abs(self.a) < 1:
            raise ValueError(f"AR coefficient a must satisfy |a| < 1, got {self.a}")
        if self.sigma is not None and not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 <= self.fraction < 1:
            raise ValueError(f"fraction must lie in [0, 1), got {self.fraction}")
        if self.dt2 is not None and not self.dt2 > 0:
            raise ValueError(f"dt2 must be > 0, got {self.dt2}")

    def resolved_dt2(self, eps):
        return self.dt2 if self.dt2 is not None else eps / 100.0


@dataclass(frozen=True)
class SynopticParams:
    """Large-scale wind generator settings.

    ``markov-surrogate`` is a first-order vector autoregression around
    ``mean`` with marginal standard deviations ``std`` and an e-folding
    persistence of ``persistence_hours``.  Its transition matrix is a damped
    rotation, so anomalies veer (turn clockwise) with period
    ``rotation_period_hours``, mimicking passing depressions; 0 disables the
    rotation.  The stationary spread is exactly ``std`` when both components
    share it (or without rotation).  ``catalog-resample`` draws blocks
    of ``block_hours`` from a ``t_hours,u,v`` CSV catalog and rotates each
    block by a uniform random angle in ``[-max_rotation_deg,
    max_rotation_deg]``.

    Hours are converted to slow time through ``tide_period_hours``: one tide
    period lasts ``eps`` slow-time units.
    """

    model: str = "markov-surrogate"
    dt1_hours: float = 6.0
    tide_period_hours: float = 12.5
    mean: tuple[float, float] = (0.0, -0.8)
    std: tuple[float, float] = (0.35, 0.35)
    persistence_hours: float = 48.0
    rotation_period_hours: float = 96.0
    catalog_path: str | None = None
    block_hours: float = 72.0
    max_rotation_deg: float = 20.0

    MODELS = ("markov-surrogate", "catalog-resample")

    def validate(self, eps=None):
        if self.model not in self.MODELS:
            raise ValueError(f"unknown synoptic model {self.model!r}; choose from {self.MODELS}")
        if not self.dt1_hours > 0 or not self.tide_period_hours > 0:
            raise ValueError("dt1_hours and tide_period_hours must be > 0")
        if min(self.std) < 0:
            raise ValueError("synoptic std must be >= 0")
        if not self.persistence_hours > 0:
            raise ValueError("persistence_hours must be > 0")
        if not self.rotation_period_hours >= 0:
            raise ValueError("rotation_period_hours must be >= 0 (0 disables rotation)")
        if self.model == "catalog-resample" and not self.catalog_path:
            raise ValueError("catalog-resample needs catalog_path")
        if not self.block_hours > 0:
            raise ValueError("block_hours must be > 0")

    def resolved_dt1(self, eps):
        return self.dt1_hours * eps / self.tide_period_hours


def required_span(eps, p, dt2=None):
    """Span covering every window, tide cycle and finite difference used on [0, 1]."""
    dt2 = eps / 100.0 if dt2 is None else dt2
    margin = max(0.5 * p, eps) + 2.0 * dt2
    return (-margin, 1.0 + margin)


class PiecewiseLinear:
    """Vector signal sampled on a uniform grid, linear between samples."""

    def __init__(self, t0, dt, values):
        self.t0 = float(t0)
        self.dt = float(dt)
        self.values = np.array(values, dtype=float)
        self.values.setflags(write=False)
        cells = 0.5 * self.dt * (self.values[1:] + self.values[:-1])
        self.cumulative = np.concatenate([np.zeros((1, 2)), np.cumsum(cells, axis=0)])
        self.cumulative.setflags(write=False)
        self.t1 = self.t0 + self.dt * (len(self.values) - 1)

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.floor((t - self.t0) / self.dt).astype(int), 0, len(self.values) - 2)
        return t, k, (t - (self.t0 + k * self.dt))

    def __call__(self, t):
        t, k, r = self._locate(t)
        s = (r / self.dt)[..., None]
        return (1.0 - s) * self.values[k] + s * self.values[k + 1]

    def integral(self, t):
        """``int_{t0}^{t}`` of the signal."""
        t, k, r = self._locate(t)
        return self.cumulative[k] + 0.5 * r[..., None] * (self.values[k] + self(t))

    def nodes(self, lo, hi):
        """Grid nodes strictly inside ``(lo, hi)``."""
        k0 = math.floor((lo - self.t0) / self.dt) + 1
        k1 = math.ceil((hi - self.t0) / self.dt) - 1
        k = np.arange(max(k0, 0), min(k1, len(self.values) - 1) + 1)
        return self.t0 + k * self.dt


@dataclass(frozen=True)
class OscillationMoments:
    I_W: np.ndarray
    J_W: np.ndarray


class WindSeries:
    """Immutable two-component wind series ``W(t) = W_Lt(t) + W_st(t)``.

    Parameters
    ----------
    t_lo, t_hi : float
        Time span on which queries are allowed.
    dt1, synoptic : float, array (n1, 2)
        Synoptic step and samples starting at ``t_lo``.
    dt2, small : float, array (n2, 2)
        Small-scale step and samples starting at ``t_lo``.
    """

    def __init__(self, t_lo, t_hi, dt1, synoptic, dt2, small, eps, seed=None, small_sigma=0.0):
        if not t_lo < t_hi:
            raise ValueError("empty wind span")
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        self.eps = float(eps)
        self.seed = seed
        self.small_sigma = float(small_sigma)
        self.synoptic = PiecewiseLinear(t_lo, dt1, synoptic)
        self.small = PiecewiseLinear(t_lo, dt2, small)
        if self.synoptic.t1 < self.t_hi - 1e-12 or self.small.t1 < self.t_hi - 1e-12:
            raise ValueError("wind samples do not cover the span")
        self.is_zero = not (np.any(self.synoptic.values) or np.any(self.small.values))
        self._cycle_cache = {}

    # construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, value, span, eps, dt1=None, dt2=None):
        dt2 = eps / 100.0 if dt2 is None else dt2
        dt1 = 0.48 * eps if dt1 is None else dt1
        lo, hi = span
        n1 = math.ceil((hi - lo) / dt1) + 1
        n2 = math.ceil((hi - lo) / dt2) + 1
        syn = np.tile(np.asarray(value, dtype=float), (n1, 1))
        return cls(lo, hi, dt1, syn, dt2, np.zeros((n2, 2)), eps)

    @classmethod
    def zero(cls, span, eps, dt1=None, dt2=None):
        return cls.constant((0.0, 0.0), span, eps, dt1, dt2)

    @property
    def dt1(self):
        return self.synoptic.dt

    @property
    def dt2(self):
        return self.small.dt

    @property
    def span(self):
        return (self.t_lo, self.t_hi)

    # queries -------------------------------------------------------------

    def _check(self, lo, hi=None):
        hi = lo if hi is None else hi
        tol = 1e-12
        if np.min(lo) < self.t_lo - tol or np.max(hi) > self.t_hi + tol:
            raise WindSpanError(
                f"wind query [{np.min(lo)}, {np.max(hi)}] outside span [{self.t_lo}, {self.t_hi}]"
            )

    def wind_at(self, t):
        self._check(t)
        return self.synoptic(t) + self.small(t)

    def integral(self, t):
        """``int_{t_lo}^{t} W(s) ds``."""
        return self.synoptic.integral(t) + self.small.integral(t)

    def windowed_mean(self, t, p):
        """Mean wind over ``[t - p/2, t + p/2]``."""
        if not p > 0:
            raise ValueError("window length p must be > 0")
        t = np.asarray(t, dtype=float)
        self._check(t - 0.5 * p, t + 0.5 * p)
        return (self.integral(t + 0.5 * p) - self.integral(t - 0.5 * p)) / p

    def cycle_start(self, t, eps=None):
        """Index ``k`` and start ``k eps`` of the tide cycle containing ``t``."""
        eps = self.eps if eps is None else eps
        q = t / eps
        k = math.floor(q)
        if q - k > 1.0 - 1e-9:
            k += 1
        return k, k * eps

    def cycle_integral(self, t, eps=None):
        """``int_{eps [t/eps]}^{t} W(s) ds`` (slow-time integral)."""
        eps = self.eps if eps is None else eps
        t = np.asarray(t, dtype=float)
        q = t / eps
        k = np.floor(q)
        k = np.where(q - k > 1.0 - 1e-9, k + 1.0, k)
        tau = np.minimum(k * eps, t)
        self._check(tau, t)
        return self.integral(t) - self.integral(tau)

    def _cycle_moments(self, k, eps):
        """Phase-averaged cumulated wind over cycle ``k``, by two routes.

        Returns ``(first_moment, mean_cumulated)`` which both equal
        ``int_0^1 int_0^theta W(k eps + eps s) ds dtheta``.
        """
        key = (k, eps)
        hit = self._cycle_cache.get(key)
        if hit is not None:
            return hit
        tau = k * eps
        end = tau + eps
        self._check(tau, end)
        nodes = np.union1d(self.synoptic.nodes(tau, end), self.small.nodes(tau, end))
        s = np.concatenate([[tau], nodes, [end]])
        mid = 0.5 * (s[1:] + s[:-1])
        h = np.diff(s)
        w = self.synoptic(s) + self.small(s)
        wm = self.synoptic(mid) + self.small(mid)
        # route 1: int (end - s) W(s) ds, quadratic integrand per cell
        g_a = (end - s[:-1])[:, None] * w[:-1]
        g_m = (end - mid)[:, None] * wm
        g_b = (end - s[1:])[:, None] * w[1:]
        first = np.sum(h[:, None] / 6.0 * (g_a + 4.0 * g_m + g_b), axis=0) / eps**2
        # route 2: int C(s) ds with C the running integral from tau
        cells = 0.5 * h[:, None] * (w[1:] + w[:-1])
        c = np.concatenate([np.zeros((1, 2)), np.cumsum(cells, axis=0)])
        c_mid = c[:-1] + 0.25 * h[:, None] * (w[:-1] + wm)
        second = np.sum(h[:, None] / 6.0 * (c[:-1] + 4.0 * c_mid + c[1:]), axis=0) / eps**2
        out = (first, second)
        if len(self._cycle_cache) > 4096:
            self._cycle_cache.clear()
        self._cycle_cache[key] = out
        return out

    def oscillation_moments(self, t, eps=None, p=None):
        """Cumulated wind fluctuation averaged over the current tide cycle.

        ``I_W = avg_theta int_0^theta (W - Wbar) dsigma`` and
        ``J_W = avg_theta (int_0^theta W dsigma - theta Wbar)`` where the
        phase ``sigma`` runs over the cycle ``[eps k, eps (k + 1)]`` with
        ``k = [t/eps]`` and ``Wbar`` is the windowed mean at ``t``.  ``t`` may
        be an array; results then have shape ``t.shape + (2,)``.
        """
        eps = self.eps if eps is None else eps
        if p is None:
            raise ValueError("window length p is required")
        t = np.asarray(t, dtype=float)
        half_mean = 0.5 * self.windowed_mean(t, p)
        if t.ndim == 0:
            first, second = self._cycle_moments(self.cycle_start(float(t), eps)[0], eps)
        else:
            q = t / eps
            k = np.floor(q)
            k = np.where(q - k > 1.0 - 1e-9, k + 1.0, k).astype(np.int64)
            ks, inv = np.unique(k, return_inverse=True)
            table = np.array([self._cycle_moments(int(kk), eps) for kk in ks])
            first, second = table[inv.reshape(k.shape), 0], table[inv.reshape(k.shape), 1]
        return OscillationMoments(first - half_mean, second - half_mean)

    def oscillation_moments_dt(self, t, eps=None, p=None, h=None, t_min=None):
        """Central difference ``(J_W(t + h) - J_W(t - h)) / 2h``, default ``h = dt2``.

        Each side uses its own tide cycle, so near a cycle boundary the
        difference quotient carries the jump of ``J_W`` spread over ``2h``.
        Below ``t_min + h`` the difference is one-sided so the stencil never
        reaches before ``t_min`` (the start of an integration).
        """
        eps = self.eps if eps is None else eps
        h = self.dt2 if h is None else h
        lo = t - h
        if t_min is not None and lo < t_min:
            lo = t_min
        plus = self.oscillation_moments(t + h, eps, p).J_W
        minus = self.oscillation_moments(lo, eps, p).J_W
        return (plus - minus) / (t + h - lo)

    # io ---------------------------------------------------------------------

    def sample_grid(self):
        """Times of the finest grid inside the span."""
        n = int(math.floor((self.t_hi - self.t_lo) / self.dt2 + 1e-9)) + 1
        return self.t_lo + self.dt2 * np.arange(n)

    def to_csv(self, path):
        t = self.sample_grid()
        w = self.wind_at(t)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "u", "v"])
            for ti, (u, v) in zip(t, w):
                writer.writerow([repr(float(ti)), repr(float(u)), repr(float(v))])


def load_catalog(path):
    """Read a ``t_hours,u,v`` wind catalog."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"t_hours", "u", "v"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: catalog header lacks {sorted(missing)}")
        rows = [(float(r["t_hours"]), float(r["u"]), float(r["v"])) for r in reader]
    if len(rows) < 2:
        raise ValueError(f"{path}: catalog needs at least two rows")
    data = np.array(rows)
    if np.any(np.diff(data[:, 0]) <= 0):
        raise ValueError(f"{path}: t_hours must be strictly increasing")
    return data


def _markov_surrogate(params, n, rng):
    # complex form z = u + i v: z_k = phi exp(-i alpha) z_{k-1} + noise
    phi = math.exp(-params.dt1_hours / params.persistence_hours)
    alpha = 0.0
    if params.rotation_period_hours > 0:
        alpha = 2.0 * math.pi * params.dt1_hours / params.rotation_period_hours
    std = np.asarray(params.std, dtype=float)
    noise = rng.standard_normal((n, 2)) * std
    # stationary start, then innovations keeping the marginal spread
    noise[1:] *= math.sqrt(1.0 - phi * phi)
    z = lfilter([1.0], [1.0, -phi * complex(math.cos(alpha), -math.sin(alpha))], noise[:, 0] + 1j * noise[:, 1])
    return np.asarray(params.mean, dtype=float) + np.column_stack([z.real, z.imag])


def _catalog_resample(params, n, rng):
    data = load_catalog(params.catalog_path)
    hours = np.arange(data[0, 0], data[-1, 0] + 1e-9, params.dt1_hours)
    series = np.column_stack([np.interp(hours, data[:, 0], data[:, i]) for i in (1, 2)])
    block = max(1, int(round(params.block_hours / params.dt1_hours)))
    block = min(block, len(series))
    pieces, total = [], 0
    max_rot = math.radians(params.max_rotation_deg)
    while total < n:
        start = rng.integers(0, len(series) - block + 1)
        angle = rng.uniform(-max_rot, max_rot) if max_rot > 0 else 0.0
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        pieces.append(series[start : start + block] @ rot.T)
        total += block
    return np.vstack(pieces)[:n]


def synthesize(synoptic, small, eps, span, seed):
    """Generate a :class:`WindSeries` on ``span``.

    The synoptic and small-scale parts use independent child streams of
    ``seed``; identical arguments give bit-identical series.
    """
    synoptic.validate()
    small.validate()
    lo, hi = map(float, span)
    if not lo < hi:
        raise ValueError(f"empty span {span}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    dt1 = synoptic.resolved_dt1(eps)
    dt2 = small.resolved_dt2(eps)
    if not dt1 > dt2:
        raise ValueError("synoptic step must exceed the small-scale step")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    syn_ss, small_ss = ss.spawn(2)
    n1 = math.ceil((hi - lo) / dt1) + 1
    n2 = math.ceil((hi - lo) / dt2) + 1

    syn_rng = np.random.default_rng(syn_ss)
    if synoptic.model == "markov-surrogate":
        syn = _markov_surrogate(synoptic, n1, syn_rng)
    else:
        syn = _catalog_resample(synoptic, n1, syn_rng)

    sigma = small.sigma
    if sigma is None:
        var_syn = float(np.mean(np.var(syn, axis=0)))
        f2 = small.fraction**2
        var_small = var_syn * f2 / (1.0 - f2)
        sigma = math.sqrt(var_small * (1.0 - small.a**2))
    innov = np.random.default_rng(small_ss).standard_normal((n2, 2)) * sigma
    innov[0] = 0.0
    w_small = lfilter([1.0], [1.0, -small.a], innov, axis=0)

    seed_repr = seed
    if isinstance(seed, np.random.SeedSequence):
        seed_repr = [seed.entropy, *seed.spawn_key] if seed.spawn_key else seed.entropy
    return WindSeries(lo, hi, dt1, syn, dt2, w_small, eps, seed=seed_repr, small_sigma=sigma)
