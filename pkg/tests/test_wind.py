import math

import numpy as np
import pytest

from driftavg.wind import (
    SmallScaleParams,
    SynopticParams,
    WindSeries,
    WindSpanError,
    load_catalog,
    required_span,
    synthesize,
)

EPS = 1 / 50
P = EPS / 2


def random_series(seed=3, eps=EPS, p=P):
    return synthesize(SynopticParams(), SmallScaleParams(), eps, required_span(eps, p), seed)


def calm_synoptic(**kw):
    return SynopticParams(mean=(0.0, 0.0), std=(0.0, 0.0), **kw)


# --- synthesis --------------------------------------------------------------


def test_zero_noise_and_zero_synoptic_gives_zero_wind():
    w = synthesize(calm_synoptic(), SmallScaleParams(sigma=0.0), EPS, (-0.1, 1.1), 1)
    assert w.is_zero
    t = np.linspace(-0.1, 1.1, 1001)
    assert not np.any(w.wind_at(t))


def test_ar1_stationary_variance():
    a, sigma, n = 0.9, 0.1, 10**6
    small = SmallScaleParams(a=a, sigma=sigma, dt2=1.0 / n)
    w = synthesize(calm_synoptic(), small, 0.5, (0.0, 1.0), 11)
    x = w.small.values
    assert len(x) >= n
    var = sigma**2 / (1 - a**2)
    assert abs(var - 0.05263) < 1e-5
    # standard error of the sample variance of an AR(1) sequence
    se = var * math.sqrt(2 * (1 + a**2) / (1 - a**2) / len(x))
    for comp in range(2):
        assert abs(np.var(x[:, comp]) - var) < 3 * se


def test_synthesis_is_deterministic():
    a, b = random_series(seed=42), random_series(seed=42)
    np.testing.assert_array_equal(a.synoptic.values, b.synoptic.values)
    np.testing.assert_array_equal(a.small.values, b.small.values)
    c = random_series(seed=43)
    assert not np.array_equal(a.synoptic.values, c.synoptic.values)


def test_seed_sequence_children_are_independent_and_recorded():
    ss = np.random.SeedSequence(5, spawn_key=(7,))
    w = synthesize(SynopticParams(), SmallScaleParams(), EPS, (-0.1, 1.1), ss)
    assert w.seed == [5, 7]
    w2 = synthesize(SynopticParams(), SmallScaleParams(), EPS, (-0.1, 1.1), np.random.SeedSequence(5, spawn_key=(7,)))
    np.testing.assert_array_equal(w.small.values, w2.small.values)


def test_small_scale_fraction_of_total_spread():
    for seed in range(5):
        w = random_series(seed=seed)
        t = w.sample_grid()
        small = w.small(t)
        total = w.wind_at(t)
        ratio = np.sqrt(np.mean(np.var(small, axis=0)) / np.mean(np.var(total, axis=0)))
        assert 0.05 <= ratio <= 0.15


def test_rotating_surrogate_keeps_mean_and_spread():
    syn = SynopticParams(std=(0.3, 0.3), dt1_hours=6.0, tide_period_hours=12.5)
    w = synthesize(syn, SmallScaleParams(sigma=0.0), 0.001, (0.0, 5.0), 4)
    x = w.synoptic.values
    assert len(x) > 10000
    np.testing.assert_allclose(x.mean(axis=0), syn.mean, atol=0.05)
    np.testing.assert_allclose(x.std(axis=0), syn.std, rtol=0.1)
    # clockwise veering: the lag-1 cross term u_k v_{k+1} - v_k u_{k+1} is negative
    z = (x - x.mean(axis=0))
    cross = np.mean(z[:-1, 0] * z[1:, 1] - z[:-1, 1] * z[1:, 0])
    assert cross < 0


def test_rotation_disabled_has_no_veering():
    syn = SynopticParams(rotation_period_hours=0.0)
    w = synthesize(syn, SmallScaleParams(sigma=0.0), 0.001, (0.0, 1.0), 4)
    z = w.synoptic.values - w.synoptic.values.mean(axis=0)
    cross = np.mean(z[:-1, 0] * z[1:, 1] - z[:-1, 1] * z[1:, 0])
    assert abs(cross) < 0.01


@pytest.mark.parametrize(
    "small,syn,span,eps",
    [
        (SmallScaleParams(a=1.0), SynopticParams(), (0, 1), EPS),
        (SmallScaleParams(a=-1.2), SynopticParams(), (0, 1), EPS),
        (SmallScaleParams(sigma=-0.1), SynopticParams(), (0, 1), EPS),
        (SmallScaleParams(), SynopticParams(), (1, 1), EPS),
        (SmallScaleParams(), SynopticParams(model="gust"), (0, 1), EPS),
        (SmallScaleParams(), SynopticParams(std=(-1.0, 0.1)), (0, 1), EPS),
        (SmallScaleParams(), SynopticParams(model="catalog-resample"), (0, 1), EPS),
        (SmallScaleParams(), SynopticParams(), (0, 1), 1.5),
        (SmallScaleParams(dt2=1.0), SynopticParams(), (0, 1), EPS),
    ],
)
def test_invalid_params(small, syn, span, eps):
    with pytest.raises(ValueError):
        synthesize(syn, small, eps, span, 0)


def test_catalog_resample_rotates_blocks(tmp_path):
    path = tmp_path / "cat.csv"
    hours = np.arange(0, 600, 6.0)
    speed = 1.0 + 0.5 * np.sin(hours / 50)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t_hours,u,v\n")
        for h, s in zip(hours, speed):
            fh.write(f"{h},{s},0.0\n")
    syn = SynopticParams(model="catalog-resample", catalog_path=str(path), block_hours=36, max_rotation_deg=20)
    w = synthesize(syn, SmallScaleParams(sigma=0.0), EPS, (0.0, 1.0), 9)
    values = w.synoptic.values
    mag = np.hypot(values[:, 0], values[:, 1])
    # every sample is a rotated catalog sample
    assert np.all(np.min(np.abs(mag[:, None] - speed[None, :]), axis=1) < 1e-12)
    angle = np.degrees(np.arctan2(values[:, 1], values[:, 0]))
    assert np.all(np.abs(angle) <= 20 + 1e-9)
    assert np.ptp(angle) > 1.0


def test_catalog_validation(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,u,v\n0,1,1\n6,1,1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header"):
        load_catalog(bad)
    short = tmp_path / "short.csv"
    short.write_text("t_hours,u,v\n0,1,1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="two rows"):
        load_catalog(short)
    order = tmp_path / "order.csv"
    order.write_text("t_hours,u,v\n6,1,1\n0,1,1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="increasing"):
        load_catalog(order)


# --- evaluation -------------------------------------------------------------


def linear_series(slope=(1.0, -2.0), span=(-0.1, 1.1)):
    dt1, dt2 = 0.01, 0.001
    lo, hi = span
    t1 = lo + dt1 * np.arange(math.ceil((hi - lo) / dt1) + 1)
    syn = np.outer(t1, slope)
    small = np.zeros((math.ceil((hi - lo) / dt2) + 1, 2))
    return WindSeries(lo, hi, dt1, syn, dt2, small, EPS)


def test_wind_at_on_grid_and_between_samples():
    w = random_series()
    k = 40
    t_node = w.t_lo + k * w.dt1
    j = int(round((t_node - w.t_lo) / w.dt2))
    np.testing.assert_allclose(w.wind_at(t_node), w.synoptic.values[k] + w.small.values[j], atol=1e-14)
    syn_only = WindSeries(w.t_lo, w.t_hi, w.dt1, w.synoptic.values, w.dt2, np.zeros_like(w.small.values), EPS)
    mid = w.t_lo + (k + 0.5) * w.dt1
    np.testing.assert_allclose(syn_only.wind_at(mid), 0.5 * (w.synoptic.values[k] + w.synoptic.values[k + 1]))
    c = WindSeries.constant((0.3, -0.7), (-0.1, 1.1), EPS)
    np.testing.assert_allclose(c.wind_at([0.0, 0.123, 1.05]), [[0.3, -0.7]] * 3, atol=1e-15)


def test_out_of_span_queries_raise():
    w = random_series()
    with pytest.raises(WindSpanError):
        w.wind_at(w.t_hi + 0.01)
    with pytest.raises(WindSpanError):
        w.windowed_mean(w.t_lo + 0.001, P)
    with pytest.raises(ValueError):
        w.windowed_mean(0.5, 0.0)


def test_windowed_mean_examples():
    c = WindSeries.constant((0.3, -0.7), (-0.1, 1.1), EPS)
    for p in (0.001, 0.02, 0.15):
        np.testing.assert_allclose(c.windowed_mean(0.5, p), [0.3, -0.7], atol=1e-13)
    lin = linear_series()
    for t in (0.0, 0.2345, 0.97):
        np.testing.assert_allclose(lin.windowed_mean(t, 0.0731), [t, -2 * t], atol=1e-12)


def test_windowed_mean_of_sampled_sine_over_its_period():
    period, n = 0.05, 40
    dt = period / n
    lo, hi = -0.2, 1.2
    t = lo + dt * np.arange(math.ceil((hi - lo) / dt) + 1)
    syn = np.column_stack([np.sin(2 * np.pi * t / period), 2 * np.cos(2 * np.pi * t / period)])
    w = WindSeries(lo, hi, dt, syn, dt / 4, np.zeros((4 * len(t) - 3, 2)), EPS)
    for tq in (0.0, 0.3137, 0.5, 0.9999):
        assert np.max(np.abs(w.windowed_mean(tq, period))) < 1e-10


def test_cycle_integral_matches_riemann_sum():
    w = random_series(seed=8)
    rng = np.random.default_rng(0)
    for t in rng.uniform(0.0, 1.0, size=10):
        k = math.floor(t / EPS)
        s = np.linspace(k * EPS, t, 10**4 + 1)
        ref = np.trapezoid(w.wind_at(s), s, axis=0)
        np.testing.assert_allclose(w.cycle_integral(t), ref, atol=1e-8)


def test_cycle_integral_vanishes_at_cycle_starts_and_is_continuous():
    w = random_series(seed=8)
    for k in (0, 1, 17, 49):
        assert not np.any(w.cycle_integral(k * EPS))
    c = WindSeries.constant((0.3, -0.7), (-0.1, 1.1), EPS)
    np.testing.assert_allclose(c.cycle_integral(3 * EPS + 0.004), [0.3 * 0.004, -0.7 * 0.004], atol=1e-15)
    t = 0.3 + 0.0037
    d = w.cycle_integral(t + 1e-9) - w.cycle_integral(t)
    assert np.max(np.abs(d)) < 1e-8


def nested_oracle(w, t, eps, p, n=1000):
    """Double midpoint Riemann sum of the phase-averaged cumulated fluctuation."""
    k = math.floor(t / eps)
    theta = (np.arange(n) + 0.5) / n
    mean = w.windowed_mean(t, p)
    out = np.zeros(2)
    for th in theta:
        sigma = (np.arange(n) + 0.5) / n * th
        inner = np.sum(w.wind_at(k * eps + eps * sigma), axis=0) * th / n
        out += inner - th * mean
    return out / n


def test_oscillation_moments_match_nested_quadrature():
    w = random_series(seed=21)
    for t in (0.0137, 0.4419, 0.905):
        mom = w.oscillation_moments(t, EPS, P)
        ref = nested_oracle(w, t, EPS, P)
        np.testing.assert_allclose(mom.J_W, ref, atol=1e-6)
        np.testing.assert_allclose(mom.I_W, ref, atol=1e-6)


def test_oscillation_moments_two_routes_agree():
    w = random_series(seed=21)
    t = np.linspace(0.0, 1.0, 333)
    mom = w.oscillation_moments(t, EPS, P)
    assert mom.I_W.shape == (333, 2)
    assert np.max(np.abs(mom.I_W - mom.J_W)) < 1e-12
    # array and scalar queries agree
    np.testing.assert_array_equal(w.oscillation_moments(t[100], EPS, P).J_W, mom.J_W[100])


def test_oscillation_moments_trivial_cases():
    c = WindSeries.constant((0.3, -0.7), (-0.1, 1.1), EPS)
    z = WindSeries.zero((-0.1, 1.1), EPS)
    for w in (c, z):
        mom = w.oscillation_moments(0.5071, EPS, P)
        assert np.max(np.abs(mom.I_W)) < 1e-14 and np.max(np.abs(mom.J_W)) < 1e-14
    with pytest.raises(ValueError):
        c.oscillation_moments(0.5, EPS)


def test_oscillation_moments_dt_inside_a_cycle():
    w = random_series(seed=2)
    h = w.dt2
    t = 0.31  # mid-cycle
    ref = (w.oscillation_moments(t + h, EPS, P).J_W - w.oscillation_moments(t - h, EPS, P).J_W) / (2 * h)
    np.testing.assert_allclose(w.oscillation_moments_dt(t, EPS, P), ref, rtol=1e-12)
    # only the windowed mean varies inside a cycle: dJ/dt = -(dWbar/dt)/2
    dmean = (w.windowed_mean(t + h, P) - w.windowed_mean(t - h, P)) / (2 * h)
    np.testing.assert_allclose(w.oscillation_moments_dt(t, EPS, P), -0.5 * dmean, atol=1e-10)


def test_oscillation_moments_dt_is_one_sided_at_start():
    w = random_series(seed=2)
    h = w.dt2
    ref = (w.oscillation_moments(h, EPS, P).J_W - w.oscillation_moments(0.0, EPS, P).J_W) / h
    np.testing.assert_allclose(w.oscillation_moments_dt(0.0, EPS, P, t_min=0.0), ref, rtol=1e-12)


def test_required_span_covers_windows():
    lo, hi = required_span(EPS, 4 * EPS)
    assert lo <= -2 * EPS and hi >= 1 + 2 * EPS


def test_csv_export(tmp_path):
    w = random_series()
    path = tmp_path / "wind.csv"
    w.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 1:], w.wind_at(data[:, 0]), atol=1e-15)
    assert open(path, encoding="utf-8").readline().strip() == "t,u,v"
