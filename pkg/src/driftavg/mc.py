"""Monte Carlo drift ensembles, grounding detection and error tables.

Every member draws its wind from ``SeedSequence(master_seed, spawn_key=(i,))``
so a member's result depends only on ``(config, i)``.  Members may run in
worker processes; results are reduced in member order, which makes reports
bit-identical whatever the number of workers.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .averaged import AVERAGED_ATOL, AVERAGED_RTOL, QuadratureConfig, Reconstruction, integrate_averaged, reconstruct
from .direct import DIRECT_ATOL, DIRECT_RTOL, integrate_direct, output_grid
from .fields import make_bundle
from .rk import IntegrationError
from .wind import SmallScaleParams, SynopticParams, WindSeries, required_span, synthesize

COMPASS_16 = ("N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE", "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW")
WIND_KINDS = ("synthetic", "none")


class EnsembleError(RuntimeError):
    """A member failed and failures are not being skipped."""

    def __init__(self, index, message):
        super().__init__(f"member {index}: {message}")
        self.index = index


# geometry ---------------------------------------------------------------------


@dataclass(frozen=True)
class CoastGeometry:
    """Circular coast; the object starts inside and grounds on exiting."""

    center: tuple = (1.0, 1.0)
    radius: float = 0.3
    kind: str = "circle"

    def __post_init__(self):
        if self.kind != "circle":
            raise ValueError(f"only circular coasts are supported, got {self.kind!r}")
        if not self.radius > 0:
            raise ValueError(f"coast radius must be > 0, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def signed_distance(self, x):
        """Distance to the circle, negative inside."""
        x = np.asarray(x, dtype=float)
        return np.hypot(x[..., 0] - self.center[0], x[..., 1] - self.center[1]) - self.radius


def compass_angle(dx, dy):
    """Bearing in degrees of the vector ``(dx, dy)``: 0 = North, clockwise."""
    return np.mod(np.degrees(np.arctan2(dx, dy)), 360.0)


def sector_index(bearing, n_bins):
    """Sector of each bearing; sector 0 is centered on North."""
    width = 360.0 / n_bins
    return np.floor(np.mod(np.asarray(bearing, dtype=float) + 0.5 * width, 360.0) / width).astype(int) % n_bins


def sector_labels(n_bins):
    if n_bins == 16:
        return list(COMPASS_16)
    width = 360.0 / n_bins
    return [f"{i * width:g}" for i in range(n_bins)]


@dataclass(frozen=True)
class GroundingEvent:
    time: float
    angle: float
    position: tuple


def _position_fn(traj):
    if callable(getattr(traj, "position", None)):
        return traj.position
    if callable(traj):
        return traj
    raise TypeError("trajectory must provide position(t) or be callable")


def grounding_grid(eps):
    """32 samples per tide period over ``[0, 1]``."""
    return np.linspace(0.0, 1.0, 32 * math.ceil(1.0 / eps - 1e-9) + 1)


def detect_grounding(traj, coast, t=None, tol=1e-6):
    """First exit of ``traj`` from the coast disk, or ``None``.

    ``traj`` is anything with a vectorized ``position(t)`` (direct or
    reconstructed trajectories) or a callable ``t -> X(t)``.  Positions are
    scanned at ``t`` (default: the trajectory's own sample times), the first
    bracketing pair is refined by bisection until it is shorter than ``tol``,
    and the upper end is returned.
    """
    position = _position_fn(traj)
    if t is None:
        t = getattr(traj, "t", None)
        if t is None:
            raise ValueError("sample times are required for a bare callable")
    t = np.asarray(t, dtype=float)
    d = coast.signed_distance(position(t))
    if d[0] >= 0:
        raise ValueError("trajectory starts outside the coast disk")
    hits = np.flatnonzero(d >= 0)
    if hits.size == 0:
        return None
    hi = float(t[hits[0]])
    lo = float(t[hits[0] - 1])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if coast.signed_distance(position(np.array([mid])))[0] >= 0:
            hi = mid
        else:
            lo = mid
    x = position(np.array([hi]))[0]
    angle = float(compass_angle(x[0] - coast.center[0], x[1] - coast.center[1]))
    return GroundingEvent(hi, angle, (float(x[0]), float(x[1])))


# wind rose --------------------------------------------------------------------


@dataclass
class WindRose:
    """Joint histogram of wind direction (coming from) and speed class."""

    counts: np.ndarray
    speed_edges: np.ndarray
    labels: list

    @property
    def proportions(self):
        total = self.counts.sum()
        return self.counts / total if total else np.zeros_like(self.counts, dtype=float)

    def to_csv(self, path):
        prop = self.proportions
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            n_cls = self.counts.shape[1]
            writer.writerow(["sector", "center_deg"] + [f"class{j}_count" for j in range(n_cls)]
                            + [f"class{j}_prop" for j in range(n_cls)])
            width = 360.0 / len(self.labels)
            for i, lab in enumerate(self.labels):
                writer.writerow([lab, i * width] + [int(c) for c in self.counts[i]]
                                + [repr(float(q)) for q in prop[i]])

    def to_dict(self):
        return {"labels": self.labels, "speed_edges": self.speed_edges.tolist(),
                "counts": self.counts.tolist(), "proportions": self.proportions.tolist()}


def wind_rose(samples, n_bins=16, n_classes=4, speed_edges=None):
    """Direction x speed-class histogram of wind samples.

    ``samples`` is an ``(n, 2)`` array of ``(u, v)`` vectors or a list of
    such arrays.  Directions follow the meteorological convention (where the
    wind blows from).  ``speed_edges`` are the inner class boundaries; by
    default the speed quantiles splitting the sample into ``n_classes``
    equally populated classes.
    """
    if isinstance(samples, (list, tuple)):
        samples = np.concatenate([np.asarray(s, dtype=float).reshape(-1, 2) for s in samples])
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if samples.shape[0] == 0:
        raise ValueError("wind rose needs at least one sample")
    speed = np.hypot(samples[:, 0], samples[:, 1])
    if speed_edges is None:
        speed_edges = np.quantile(speed, np.arange(1, n_classes) / n_classes)
    speed_edges = np.asarray(speed_edges, dtype=float)
    n_classes = len(speed_edges) + 1
    sector = sector_index(compass_angle(-samples[:, 0], -samples[:, 1]), n_bins)
    cls = np.searchsorted(speed_edges, speed, side="right")
    counts = np.zeros((n_bins, n_classes), dtype=np.int64)
    np.add.at(counts, (sector, cls), 1)
    return WindRose(counts, speed_edges, sector_labels(n_bins))


# ensemble ---------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything a grounding ensemble depends on.

    ``p`` defaults to ``eps / 2``.  Members ``first_member`` to
    ``first_member + n_members - 1`` are simulated, so disjoint index
    ranges give independent blocks under one master seed.
    """

    n_members: int = 1000
    master_seed: int = 0
    eps: float = 1.0 / 50.0
    p: float | None = None
    order: int = 1
    x0: tuple = (1.0, 1.0)
    v0: tuple = (0.0, 0.0)
    tide: str = "paper-tide"
    perturbation: str = "paper-perturbation"
    wind: str = "synthetic"
    synoptic: SynopticParams = field(default_factory=SynopticParams)
    small: SmallScaleParams = field(default_factory=SmallScaleParams)
    coast: CoastGeometry = field(default_factory=CoastGeometry)
    rtol: float = AVERAGED_RTOL
    atol: float = AVERAGED_ATOL
    n_theta: int = 64
    angle_bins: int = 16
    speed_classes: int = 4
    skip_failures: bool = False
    first_member: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if int(self.n_members) < 1:
            raise ValueError(f"n_members must be >= 1, got {self.n_members}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.p is not None and not self.p > 0:
            raise ValueError(f"p must be > 0, got {self.p}")
        if self.order not in (0, 1):
            raise ValueError(f"order must be 0 or 1, got {self.order}")
        if self.wind not in WIND_KINDS:
            raise ValueError(f"wind must be one of {WIND_KINDS}, got {self.wind!r}")
        if self.angle_bins < 1 or self.speed_classes < 1:
            raise ValueError("angle_bins and speed_classes must be >= 1")
        if self.master_seed < 0 or self.first_member < 0:
            raise ValueError("master_seed and first_member must be >= 0")
        self.synoptic.validate()
        self.small.validate()
        QuadratureConfig(self.n_theta)
        make_bundle(self.tide, self.perturbation)

    @property
    def window(self):
        return 0.5 * self.eps if self.p is None else self.p

    def to_dict(self):
        return asdict(self)


def member_seed(master_seed, index):
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))


def member_wind(config, index, eps=None, p=None):
    """Wind series of member ``index`` (a zero series when wind is off)."""
    eps = config.eps if eps is None else eps
    p = config.window if p is None else p
    dt2 = config.small.resolved_dt2(eps)
    span = required_span(eps, p, dt2)
    if config.wind == "none":
        return WindSeries.zero(span, eps, dt2=dt2)
    return synthesize(config.synoptic, config.small, eps, span, member_seed(config.master_seed, index))


@dataclass
class MemberResult:
    index: int
    grounded: bool
    time: float | None = None
    angle: float | None = None
    error: str | None = None
    wind_samples: np.ndarray = field(default=None, repr=False)


def run_member(config, index):
    """Simulate one member; failures are returned, not raised."""
    fields = make_bundle(config.tide, config.perturbation)
    try:
        wind = member_wind(config, index)
        avg = integrate_averaged(fields, wind, config.eps, config.window, config.x0, config.v0,
                                 order=config.order, quad=QuadratureConfig(config.n_theta),
                                 rtol=config.rtol, atol=config.atol)
        rec = Reconstruction(avg, fields, wind, config.eps, order=config.order)
        event = detect_grounding(rec, config.coast, t=grounding_grid(config.eps))
    except (IntegrationError, FloatingPointError, ArithmeticError) as exc:
        return MemberResult(index, False, error=str(exc))
    # synoptic-step samples over [0, 1] feed the wind rose
    t_w = np.arange(0.0, 1.0 + 1e-12, wind.dt1)
    samples = wind.wind_at(t_w)
    if event is None:
        return MemberResult(index, False, wind_samples=samples)
    return MemberResult(index, True, event.time, event.angle, wind_samples=samples)


def _run_chunk(args):
    config, indices = args
    return [run_member(config, i) for i in indices]


def _map_members(config, indices, workers):
    if workers is None or workers <= 1 or len(indices) < 2:
        return [run_member(config, i) for i in indices]
    n_chunks = min(len(indices), 4 * workers)
    chunks = [list(c) for c in np.array_split(np.asarray(indices), n_chunks) if len(c)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_run_chunk, [(config, [int(i) for i in c]) for c in chunks])
        return [r for part in parts for r in part]


@dataclass
class GroundingReport:
    """Aggregated grounding statistics of an ensemble."""

    n_members: int
    n_grounded: int
    n_failed: int
    probability: float
    std_error: float
    members: list
    angle_counts: np.ndarray
    angle_labels: list
    rose: WindRose
    config: dict

    def to_dict(self):
        return {
            "n_members": self.n_members,
            "n_grounded": self.n_grounded,
            "n_failed": self.n_failed,
            "probability": self.probability,
            "std_error": self.std_error,
            "angle_histogram": {"labels": self.angle_labels, "counts": self.angle_counts.tolist()},
            "wind_rose": self.rose.to_dict(),
            "members": [
                {"index": m.index, "grounded": m.grounded, "time": m.time, "angle": m.angle, "error": m.error}
                for m in self.members
            ],
            "config": self.config,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_text(self):
        lines = [
            f"members     {self.n_members}",
            f"grounded    {self.n_grounded}",
            f"failed      {self.n_failed}",
            f"probability {self.probability:.4f} +/- {self.std_error:.4f}",
            "",
            "grounding sectors",
        ]
        total = max(1, int(self.angle_counts.sum()))
        for lab, c in zip(self.angle_labels, self.angle_counts):
            lines.append(f"  {lab:>5} {int(c):6d} {100.0 * c / total:6.1f}%")
        return "\n".join(lines) + "\n"

    def angle_csv(self, path):
        width = 360.0 / len(self.angle_labels)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sector", "center_deg", "count"])
            for i, (lab, c) in enumerate(zip(self.angle_labels, self.angle_counts)):
                writer.writerow([lab, i * width, int(c)])

    def members_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "grounded", "time", "angle_deg", "error"])
            for m in self.members:
                writer.writerow([m.index, int(m.grounded), "" if m.time is None else repr(m.time),
                                 "" if m.angle is None else repr(m.angle), m.error or ""])


def run_ensemble(config, workers=None):
    """Grounding probability, angle histogram and wind rose of an ensemble.

    ``workers`` > 1 distributes members over processes; the report does not
    depend on it.  A failed member raises :class:`EnsembleError` unless
    ``config.skip_failures`` is set, in which case it is reported and left
    out of the probability.
    """
    indices = list(range(config.first_member, config.first_member + int(config.n_members)))
    results = _map_members(config, indices, workers)
    failed = [r for r in results if r.error is not None]
    if failed and not config.skip_failures:
        raise EnsembleError(failed[0].index, failed[0].error)
    ok = [r for r in results if r.error is None]
    n = len(ok)
    grounded = [r for r in ok if r.grounded]
    prob = len(grounded) / n if n else float("nan")
    se = math.sqrt(prob * (1.0 - prob) / n) if n else float("nan")
    angle_counts = np.bincount(
        sector_index(np.array([r.angle for r in grounded]), config.angle_bins) if grounded else np.zeros(0, int),
        minlength=config.angle_bins,
    )
    rose = wind_rose([r.wind_samples for r in ok], config.angle_bins, config.speed_classes) if n else None
    for r in results:
        r.wind_samples = None
    return GroundingReport(n, len(grounded), len(failed), prob, se, results, angle_counts,
                           sector_labels(config.angle_bins), rose, _jsonable(config.to_dict()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# error tables -----------------------------------------------------------------


@dataclass
class ErrorCell:
    mean: float
    min: float
    max: float


ERROR_COLUMNS = ("speed_order0", "speed_order1", "position_order0", "position_order1")


def sup_errors(direct, avg, fields, wind, eps, t=None):
    """Sup-norm errors ``(|V - V0|, |V - V0 - eps V1|, |X - X0|, |X - X0 - eps X1|)``."""
    t = output_grid(eps) if t is None else t
    x, v = direct.state(t)
    x0, v0 = reconstruct(t, avg, fields, wind, eps, 0)
    x1, v1 = reconstruct(t, avg, fields, wind, eps, 1)

    def sup(e):
        return float(np.max(np.linalg.norm(e, axis=-1)))

    return sup(v - v0), sup(v - v1), sup(x - x0), sup(x - x1)


@dataclass
class ErrorRow:
    eps: float
    p: float
    n_members: int
    cells: dict
    flagged: bool = False
    nfev_direct: float = 0.0
    nfev_averaged: float = 0.0

    def to_dict(self):
        return {"eps": self.eps, "p": self.p, "p_over_eps": self.p / self.eps, "n_members": self.n_members,
                "flagged": self.flagged, "nfev_direct": self.nfev_direct, "nfev_averaged": self.nfev_averaged,
                **{k: asdict(c) for k, c in self.cells.items()}}


# windows wider than one tide period smear synoptic variability
RECOMMENDED_P_OVER_EPS = 1.0


@dataclass
class ErrorTable:
    rows: list
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {"rows": [r.to_dict() for r in self.rows], "config": self.config,
                "recommended_max_p_over_eps": RECOMMENDED_P_OVER_EPS}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_text(self):
        head = f"{'eps':>8} {'p/eps':>6} {'n':>4}  " + "  ".join(f"{c:>30}" for c in ERROR_COLUMNS)
        lines = [head]
        for r in self.rows:
            cells = "  ".join(
                f"{r.cells[c].mean:.4f} [{r.cells[c].min:.4f},{r.cells[c].max:.4f}]".rjust(30) for c in ERROR_COLUMNS
            )
            flag = "  (p above recommended range)" if r.flagged else ""
            lines.append(f"{r.eps:8.5f} {r.p / r.eps:6.2f} {r.n_members:4d}  {cells}{flag}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["eps", "p", "n_members", "flagged"]
            for c in ERROR_COLUMNS:
                header += [f"{c}_mean", f"{c}_min", f"{c}_max"]
            writer.writerow(header)
            for r in self.rows:
                row = [repr(r.eps), repr(r.p), r.n_members, int(r.flagged)]
                for c in ERROR_COLUMNS:
                    row += [repr(r.cells[c].mean), repr(r.cells[c].min), repr(r.cells[c].max)]
                writer.writerow(row)


def error_member(config, eps, p_list, index, direct_tol=(DIRECT_RTOL, DIRECT_ATOL)):
    """Errors of one member for every window in ``p_list`` (one direct solve)."""
    fields = make_bundle(config.tide, config.perturbation)
    wind = member_wind(config, index, eps=eps, p=max(p_list))
    direct = integrate_direct(fields, wind, eps, config.x0, config.v0, rtol=direct_tol[0], atol=direct_tol[1])
    out = []
    for p in p_list:
        avg = integrate_averaged(fields, wind, eps, p, config.x0, config.v0, order=1,
                                 quad=QuadratureConfig(config.n_theta), rtol=config.rtol, atol=config.atol)
        out.append((sup_errors(direct, avg, fields, wind, eps), direct.meta["nfev"], avg.meta["nfev"]))
    return out


def _error_chunk(args):
    config, eps, p_list, indices = args
    return [error_member(config, eps, p_list, i) for i in indices]


def error_table(config, eps_list, p_factors, n_members=None, workers=None):
    """Mean/min/max sup-norm errors across an ensemble, per ``(eps, p)``.

    ``p_factors`` are window lengths in units of ``eps``.  Each member's
    wind is synthesized once per ``eps`` (on the span of the widest window)
    and shared by all windows.
    """
    eps_list = list(eps_list)
    p_factors = list(p_factors)
    if not eps_list:
        raise ValueError("eps list is empty")
    if not p_factors:
        raise ValueError("p list is empty")
    if any(not 0 < e < 1 for e in eps_list) or any(not f > 0 for f in p_factors):
        raise ValueError("eps values must lie in (0, 1) and p factors must be > 0")
    n = int(config.n_members if n_members is None else n_members)
    if n < 1:
        raise ValueError("n_members must be >= 1")
    indices = list(range(config.first_member, config.first_member + n))
    rows = []
    for eps in eps_list:
        p_list = [f * eps for f in p_factors]
        if workers is None or workers <= 1 or n < 2:
            per_member = [error_member(config, eps, p_list, i) for i in indices]
        else:
            chunks = [list(map(int, c)) for c in np.array_split(np.asarray(indices), min(n, 4 * workers)) if len(c)]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                per_member = [m for part in pool.map(_error_chunk, [(config, eps, p_list, c) for c in chunks])
                              for m in part]
        for j, p in enumerate(p_list):
            errs = np.array([m[j][0] for m in per_member])
            cells = {c: ErrorCell(float(errs[:, k].mean()), float(errs[:, k].min()), float(errs[:, k].max()))
                     for k, c in enumerate(ERROR_COLUMNS)}
            rows.append(ErrorRow(eps, p, n, cells, flagged=p / eps > RECOMMENDED_P_OVER_EPS + 1e-12,
                                 nfev_direct=float(np.mean([m[j][1] for m in per_member])),
                                 nfev_averaged=float(np.mean([m[j][2] for m in per_member]))))
    return ErrorTable(rows, _jsonable(replace(config, n_members=n).to_dict()))
