import math

import numpy as np
import pytest

from driftavg import mc
from driftavg.mc import (
    CoastGeometry,
    EnsembleConfig,
    EnsembleError,
    compass_angle,
    detect_grounding,
    error_table,
    run_ensemble,
    sector_index,
    wind_rose,
)
from driftavg.rk import StepSizeUnderflow

CENTER = np.array([1.0, 1.0])
COAST = CoastGeometry(center=(1.0, 1.0), radius=0.3)


def straight_line(t):
    t = np.asarray(t, dtype=float)
    return CENTER + np.stack([t, np.zeros_like(t)], axis=-1)


def wiggly(t):
    # radius grows monotonically while the bearing oscillates
    t = np.asarray(t, dtype=float)
    r = 0.45 * t + 0.008 * np.sin(50 * t)
    phi = 3 * t + 0.5 * np.sin(30 * t)
    return CENTER + np.stack([r * np.sin(phi), r * np.cos(phi)], axis=-1)


# geometry --------------------------------------------------------------------


def test_compass_convention():
    assert compass_angle(0, 1) == 0.0
    assert compass_angle(1, 0) == 90.0
    assert compass_angle(0, -1) == 180.0
    assert compass_angle(-1, 0) == 270.0
    np.testing.assert_array_equal(sector_index([0.0, 11.2, 11.3, 348.8, 90.0], 16), [0, 0, 1, 0, 4])


def test_straight_line_grounds_east_at_radius():
    ev = detect_grounding(straight_line, COAST, t=np.linspace(0, 1, 33))
    assert abs(ev.time - 0.3) < 1e-6
    assert abs(ev.angle - 90.0) < 1e-9
    np.testing.assert_allclose(ev.position, [1.3, 1.0], atol=1e-6)


def test_bisection_matches_dense_scan():
    ev = detect_grounding(wiggly, COAST, t=np.linspace(0, 1, 65))
    dense = np.linspace(0, 1, 10**6 + 1)
    d = COAST.signed_distance(wiggly(dense))
    t_scan = dense[np.argmax(d >= 0)]
    assert abs(ev.time - t_scan) < 1e-5
    x = wiggly(ev.time)
    assert abs(ev.angle - compass_angle(x[0] - 1.0, x[1] - 1.0)) < 1e-3


def test_no_grounding_and_start_outside():
    assert detect_grounding(lambda t: CENTER + 0 * straight_line(t), COAST, t=np.linspace(0, 1, 11)) is None
    with pytest.raises(ValueError, match="outside"):
        detect_grounding(lambda t: straight_line(t) + 1.0, COAST, t=np.linspace(0, 1, 11))
    with pytest.raises(ValueError):
        detect_grounding(straight_line, COAST)


def test_coast_validation():
    with pytest.raises(ValueError):
        CoastGeometry(radius=0.0)
    with pytest.raises(ValueError):
        CoastGeometry(kind="polygon")


# wind rose ---------------------------------------------------------------------


def test_wind_from_north_fills_north_bin():
    rng = np.random.default_rng(1)
    speeds = rng.uniform(0.1, 2.0, size=500)
    rose = wind_rose(np.column_stack([np.zeros(500), -speeds]))
    per_sector = rose.proportions.sum(axis=1)
    assert per_sector[0] == 1.0 and rose.labels[0] == "N"
    assert rose.counts.sum() == 500


def test_isotropic_wind_is_uniform():
    rng = np.random.default_rng(2)
    n = 160_000
    ang = rng.uniform(0, 2 * np.pi, n)
    spd = rng.rayleigh(1.0, n)
    rose = wind_rose(np.column_stack([spd * np.cos(ang), spd * np.sin(ang)]))
    prop = rose.proportions.sum(axis=1)
    se = math.sqrt((1 / 16) * (15 / 16) / n)
    assert np.all(np.abs(prop - 1 / 16) < 3 * se)
    # quantile classes are equally populated
    np.testing.assert_allclose(rose.proportions.sum(axis=0), 0.25, atol=1e-4)


def test_empty_speed_class_still_normalized(tmp_path):
    samples = np.array([[0.0, -1.0], [1.0, 0.0], [0.5, 0.5]])
    rose = wind_rose(samples, speed_edges=[0.2, 5.0, 10.0])
    assert rose.counts[:, 0].sum() == 0 and rose.counts[:, 3].sum() == 0
    assert abs(rose.proportions.sum() - 1.0) < 1e-15
    rose.to_csv(tmp_path / "rose.csv")
    assert "class3_prop" in (tmp_path / "rose.csv").read_text()
    with pytest.raises(ValueError):
        wind_rose(np.zeros((0, 2)))


# ensembles --------------------------------------------------------------------


def small_config(**kw):
    base = dict(n_members=6, master_seed=3)
    base.update(kw)
    return EnsembleConfig(**base)


def test_zero_wind_probability_is_zero_or_one():
    rep = run_ensemble(small_config(wind="none", n_members=3))
    assert rep.probability in (0.0, 1.0)
    assert rep.std_error == 0.0
    times = {m.time for m in rep.members}
    assert len(times) == 1


def test_huge_coast_never_grounds(tmp_path):
    rep = run_ensemble(small_config(coast=CoastGeometry(radius=10.0)))
    assert rep.probability == 0.0 and rep.n_grounded == 0
    assert rep.rose.counts.sum() > 0
    rep.angle_csv(tmp_path / "angles.csv")
    rep.members_csv(tmp_path / "members.csv")
    assert len((tmp_path / "members.csv").read_text().splitlines()) == 7
    assert "probability" in rep.to_text()


def test_probability_is_monotone_in_radius():
    probs = [run_ensemble(small_config(n_members=8, coast=CoastGeometry(radius=r))).probability
             for r in (0.15, 0.3, 0.6)]
    assert probs[0] >= probs[1] >= probs[2]
    assert probs[0] > probs[2]


def test_report_is_identical_across_runs_and_workers():
    cfg = small_config(n_members=5)
    a = run_ensemble(cfg).to_json()
    b = run_ensemble(cfg).to_json()
    c = run_ensemble(cfg, workers=2).to_json()
    assert a == b == c


def test_members_depend_only_on_their_index():
    whole = run_ensemble(small_config(n_members=6))
    tail = run_ensemble(small_config(n_members=3, first_member=3))
    assert [m.time for m in whole.members[3:]] == [m.time for m in tail.members]


def test_failed_member_raises_or_is_skipped(monkeypatch):
    real = mc.integrate_averaged

    def flaky(fields, wind, *args, **kwargs):
        if wind.seed == [3, 1]:
            raise StepSizeUnderflow("step size underflow", 0.5)
        return real(fields, wind, *args, **kwargs)

    monkeypatch.setattr(mc, "integrate_averaged", flaky)
    with pytest.raises(EnsembleError, match="member 1"):
        run_ensemble(small_config(n_members=3))
    rep = run_ensemble(small_config(n_members=3, skip_failures=True))
    assert rep.n_failed == 1 and rep.n_members == 2
    assert rep.members[1].error


@pytest.mark.parametrize(
    "kwargs",
    [{"n_members": 0}, {"eps": 1.5}, {"order": 3}, {"wind": "gale"}, {"p": -1.0}, {"tide": "storm"}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EnsembleConfig(**kwargs)


# error tables -----------------------------------------------------------------


def test_error_table_validation():
    cfg = small_config()
    with pytest.raises(ValueError, match="eps list"):
        error_table(cfg, [], [0.5])
    with pytest.raises(ValueError, match="p list"):
        error_table(cfg, [0.1], [])
    with pytest.raises(ValueError):
        error_table(cfg, [1.2], [0.5])


def test_error_table_flags_wide_windows(tmp_path):
    table = error_table(small_config(n_members=1), [0.1], [0.5, 4.0])
    assert [r.flagged for r in table.rows] == [False, True]
    assert "above recommended" in table.to_text()
    row = table.rows[0]
    assert row.cells["position_order1"].mean < row.cells["position_order0"].mean
    assert row.nfev_direct > row.nfev_averaged
    table.to_csv(tmp_path / "errors.csv")
    assert len((tmp_path / "errors.csv").read_text().splitlines()) == 3
