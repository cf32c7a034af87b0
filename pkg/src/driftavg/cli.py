"""Command-line interface: ``driftavg {simulate,error-table,ensemble,wind-gen}``.

Settings come from built-in defaults, then an optional TOML file
(``--config``), then command-line flags; flags win.  The master seed falls
back to the ``DRIFT_SEED`` environment variable when neither the file nor
the flags set it.  Every command writes a ``manifest.json`` holding the
resolved configuration, its hash, the seed and library versions.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 input/output error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy
import tomli

from . import __version__
from .averaged import AVERAGED_ATOL, AVERAGED_RTOL, QuadratureConfig, Reconstruction, integrate_averaged
from .direct import DIRECT_ATOL, DIRECT_RTOL, integrate_direct
from .fields import PERTURBATION_FIELDS, TIDE_FIELDS, make_bundle
from .mc import CoastGeometry, EnsembleConfig, EnsembleError, error_table, member_wind, run_ensemble, sup_errors
from .rk import IntegrationError
from .wind import SmallScaleParams, SynopticParams, WindSpanError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending setting."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    """Every setting of every command, fully validated by :meth:`validate`."""

    eps: float = 1.0 / 50.0
    p: float | None = None
    order: int = 1
    x0: tuple = (1.0, 1.0)
    v0: tuple = (0.0, 0.0)
    seed: int | None = None
    tide: str = "paper-tide"
    perturbation: str = "paper-perturbation"
    wind: str = "synthetic"
    synoptic: SynopticParams = field(default_factory=SynopticParams)
    small: SmallScaleParams = field(default_factory=SmallScaleParams)
    rtol: float = AVERAGED_RTOL
    atol: float = AVERAGED_ATOL
    direct_rtol: float = DIRECT_RTOL
    direct_atol: float = DIRECT_ATOL
    n_theta: int = 64
    method: str = "both"
    coast_center: tuple = (1.0, 1.0)
    coast_radius: float = 0.3
    n_members: int = 1000
    first_member: int = 0
    angle_bins: int = 16
    speed_classes: int = 4
    skip_failures: bool = False
    eps_list: tuple = (1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0)
    p_factors: tuple = (0.5,)
    output_dir: str = "driftavg-out"

    @property
    def window(self):
        return 0.5 * self.eps if self.p is None else self.p

    def validate(self):
        def check(key, ok, message):
            if not ok:
                raise ConfigError(key, message)

        for key, kinds in _TYPES.items():
            value = getattr(self, key)
            values = value if key in _TUPLES else (value,)
            if key in _TUPLES and not isinstance(value, tuple):
                raise ConfigError(key, f"must be a list, got {value!r}")
            for v in values:
                if v is None and key in ("p", "seed"):
                    continue
                check(key, isinstance(v, kinds) and not isinstance(v, bool), f"wrong type {type(v).__name__}")
        check("skip_failures", isinstance(self.skip_failures, bool), "must be true or false")
        check("eps", 0 < self.eps < 1, f"must lie in (0, 1), got {self.eps}")
        check("p", self.p is None or self.p > 0, f"must be > 0, got {self.p}")
        check("order", self.order in (0, 1), f"must be 0 or 1, got {self.order}")
        check("x0", len(self.x0) == 2, "needs two components")
        check("v0", len(self.v0) == 2, "needs two components")
        check("seed", self.seed is None or self.seed >= 0, f"must be >= 0, got {self.seed}")
        check("tide", self.tide in TIDE_FIELDS, f"unknown field {self.tide!r}; choose from {sorted(TIDE_FIELDS)}")
        check("perturbation", self.perturbation in PERTURBATION_FIELDS,
              f"unknown field {self.perturbation!r}; choose from {sorted(PERTURBATION_FIELDS)}")
        check("wind", self.wind in ("synthetic", "none"), f"must be 'synthetic' or 'none', got {self.wind!r}")
        for key in ("rtol", "atol", "direct_rtol", "direct_atol"):
            check(key, getattr(self, key) > 0, "must be > 0")
        check("n_theta", self.n_theta >= 16, f"must be >= 16, got {self.n_theta}")
        check("method", self.method in ("direct", "averaged", "both"),
              f"must be 'direct', 'averaged' or 'both', got {self.method!r}")
        check("coast_center", len(self.coast_center) == 2, "needs two components")
        check("coast_radius", self.coast_radius > 0, f"must be > 0, got {self.coast_radius}")
        check("n_members", self.n_members >= 1, f"must be >= 1, got {self.n_members}")
        check("first_member", self.first_member >= 0, "must be >= 0")
        check("angle_bins", self.angle_bins >= 1, "must be >= 1")
        check("speed_classes", self.speed_classes >= 1, "must be >= 1")
        check("eps_list", len(self.eps_list) > 0, "must not be empty")
        check("eps_list", all(0 < e < 1 for e in self.eps_list), "values must lie in (0, 1)")
        check("p_factors", len(self.p_factors) > 0, "must not be empty")
        check("p_factors", all(f > 0 for f in self.p_factors), "values must be > 0")
        for key, params in (("synoptic", self.synoptic), ("small", self.small)):
            try:
                params.validate()
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, str(exc)) from None
        return self

    def to_dict(self):
        return asdict(self)

    def ensemble_config(self, seed):
        return EnsembleConfig(
            n_members=self.n_members, master_seed=seed, eps=self.eps, p=self.p, order=self.order,
            x0=tuple(self.x0), v0=tuple(self.v0), tide=self.tide, perturbation=self.perturbation,
            wind=self.wind, synoptic=self.synoptic, small=self.small,
            coast=CoastGeometry(tuple(self.coast_center), self.coast_radius),
            rtol=self.rtol, atol=self.atol, n_theta=self.n_theta, angle_bins=self.angle_bins,
            speed_classes=self.speed_classes, skip_failures=self.skip_failures, first_member=self.first_member,
        )


_REAL = (int, float)
_TYPES = {
    "eps": _REAL, "p": _REAL, "order": int, "x0": _REAL, "v0": _REAL, "seed": int, "tide": str,
    "perturbation": str, "wind": str, "rtol": _REAL, "atol": _REAL, "direct_rtol": _REAL, "direct_atol": _REAL,
    "n_theta": int, "method": str, "coast_center": _REAL, "coast_radius": _REAL, "n_members": int,
    "first_member": int, "angle_bins": int, "speed_classes": int, "eps_list": _REAL, "p_factors": _REAL,
    "output_dir": str,
}
_TUPLES = {"x0", "v0", "coast_center", "eps_list", "p_factors"}

# config file ------------------------------------------------------------------

# TOML table -> RunConfig attribute for the flat keys
_SECTIONS = {
    "run": {"eps", "p", "p_over_eps", "order", "x0", "v0", "seed", "rtol", "atol", "direct_rtol",
            "direct_atol", "n_theta", "method", "output_dir"},
    "fields": {"tide", "perturbation"},
    "coast": {"center", "radius"},
    "ensemble": {"n_members", "first_member", "angle_bins", "speed_classes", "skip_failures"},
    "error_table": {"eps_list", "p_factors"},
}
_RENAMES = {("coast", "center"): "coast_center", ("coast", "radius"): "coast_radius"}


def _dataclass_update(cls, base, table, prefix):
    names = {f.name for f in fields(cls)}
    out = {}
    for key, value in table.items():
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
        out[key] = tuple(value) if isinstance(value, list) else value
    try:
        return replace(base, **out)
    except TypeError as exc:
        raise ConfigError(prefix, str(exc)) from None


def config_from_mapping(data, base=None):
    """Apply a parsed TOML mapping on top of ``base`` (default settings)."""
    cfg = base or RunConfig()
    updates = {}
    for section, table in data.items():
        if section == "wind":
            if not isinstance(table, dict):
                raise ConfigError("wind", "must be a table")
            for key, value in table.items():
                if key == "kind":
                    updates["wind"] = value
                elif key == "synoptic":
                    updates["synoptic"] = _dataclass_update(SynopticParams, cfg.synoptic, value, "wind.synoptic")
                elif key == "small":
                    updates["small"] = _dataclass_update(SmallScaleParams, cfg.small, value, "wind.small")
                else:
                    raise ConfigError(f"wind.{key}", "unknown key")
            continue
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")
        if not isinstance(table, dict):
            raise ConfigError(section, "must be a table")
        for key, value in table.items():
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            name = _RENAMES.get((section, key), key)
            if name in _TUPLES and isinstance(value, list):
                value = tuple(value)
            updates[name] = value
    p_over = updates.pop("p_over_eps", None)
    try:
        cfg = replace(cfg, **updates)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None
    if p_over is not None:
        if "p" in updates:
            raise ConfigError("run.p_over_eps", "give either p or p_over_eps, not both")
        cfg = replace(cfg, p=float(p_over) * cfg.eps)
    return cfg


def load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    return config_from_mapping(data)


# argument parsing -------------------------------------------------------------


def _common(parser):
    parser.add_argument("--config", type=Path, help="TOML configuration file")
    parser.add_argument("-o", "--output-dir", help="directory for output files")
    parser.add_argument("--seed", type=int, help="master seed (falls back to $DRIFT_SEED, then 0)")
    parser.add_argument("--epsilon", type=float, dest="eps", help="tide period / observation window")
    parser.add_argument("--p-window", type=float, dest="p", help="wind averaging window (default eps/2)")
    parser.add_argument("--order", type=int, choices=(0, 1))
    parser.add_argument("--x0", type=float, nargs=2, metavar=("X1", "X2"))
    parser.add_argument("--v0", type=float, nargs=2, metavar=("V1", "V2"))
    parser.add_argument("--fields", choices=("analytic", "none"), help="shortcut for both sea fields")
    parser.add_argument("--tide", choices=sorted(TIDE_FIELDS))
    parser.add_argument("--perturbation", choices=sorted(PERTURBATION_FIELDS))
    parser.add_argument("--wind", choices=("synthetic", "none"))
    parser.add_argument("--rtol", type=float)
    parser.add_argument("--atol", type=float)
    parser.add_argument("--threads", type=int, help="worker processes (default: all CPUs)")


def build_parser():
    parser = argparse.ArgumentParser(prog="driftavg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate one trajectory (direct and/or averaged)")
    _common(sim)
    sim.add_argument("--method", choices=("direct", "averaged", "both"))

    err = sub.add_parser("error-table", help="sup-norm errors of the averaged reconstruction")
    _common(err)
    err.add_argument("--eps-list", type=float, nargs="*", dest="eps_list")
    err.add_argument("--p-factors", type=float, nargs="*", dest="p_factors", help="windows in units of eps")
    err.add_argument("--members", type=int, dest="n_members")

    ens = sub.add_parser("ensemble", help="Monte Carlo grounding probability")
    _common(ens)
    ens.add_argument("--members", type=int, dest="n_members")
    ens.add_argument("--first-member", type=int, dest="first_member")
    ens.add_argument("--coast-center", type=float, nargs=2, dest="coast_center")
    ens.add_argument("--coast-radius", type=float, dest="coast_radius")
    ens.add_argument("--angle-bins", type=int, dest="angle_bins")
    ens.add_argument("--speed-classes", type=int, dest="speed_classes")
    ens.add_argument("--skip-failures", action="store_true", default=None, dest="skip_failures")

    wg = sub.add_parser("wind-gen", help="write one synthesized wind series as CSV")
    _common(wg)
    return parser


_FLAG_KEYS = ("eps", "p", "order", "x0", "v0", "tide", "perturbation", "wind", "rtol", "atol", "method",
              "n_members", "first_member", "coast_center", "coast_radius", "angle_bins", "speed_classes",
              "skip_failures", "eps_list", "p_factors", "output_dir", "seed")


def resolve_config(args, environ=None):
    """Defaults < config file < flags, then the seed fallback and validation."""
    environ = os.environ if environ is None else environ
    cfg = load_config(args.config) if args.config else RunConfig()
    updates = {}
    if getattr(args, "fields", None):
        updates["tide"] = "paper-tide" if args.fields == "analytic" else "none"
        updates["perturbation"] = "paper-perturbation" if args.fields == "analytic" else "none"
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is None:
            continue
        updates[key] = tuple(value) if key in _TUPLES else value
    cfg = replace(cfg, **updates)
    if cfg.seed is None:
        raw = environ.get("DRIFT_SEED")
        if raw is not None and raw != "":
            try:
                seed = int(raw)
            except ValueError:
                raise ConfigError("DRIFT_SEED", f"must be an integer, got {raw!r}") from None
        else:
            seed = 0
        cfg = replace(cfg, seed=seed)
    return cfg.validate()


# manifest ---------------------------------------------------------------------


def _canonical(obj):
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _run_settings(cfg):
    # where results go does not change them; leaving it out keeps manifests of
    # identical runs byte-identical wherever they are written
    data = _canonical(cfg.to_dict())
    data.pop("output_dir")
    return data


def config_hash(cfg):
    text = json.dumps(_run_settings(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_manifest(out, command, cfg, outputs, results=None):
    manifest = {
        "command": command,
        "config": _run_settings(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {"driftavg": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "outputs": sorted(outputs),
    }
    if results is not None:
        manifest["results"] = _canonical(results)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


# commands ---------------------------------------------------------------------


def _workers(args):
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        raise ConfigError("threads", f"must be >= 1, got {threads}")
    return threads if threads is not None else (os.cpu_count() or 1)


def cmd_simulate(cfg, out, workers=1):
    fields_ = make_bundle(cfg.tide, cfg.perturbation)
    wind = member_wind(cfg.ensemble_config(cfg.seed), 0)
    outputs, results = [], {}
    direct = avg = None
    if cfg.method in ("direct", "both"):
        direct = integrate_direct(fields_, wind, cfg.eps, cfg.x0, cfg.v0, rtol=cfg.direct_rtol, atol=cfg.direct_atol)
        direct.to_csv(out / "direct.csv")
        outputs.append("direct.csv")
        results["direct_nfev"] = direct.meta["nfev"]
    if cfg.method in ("averaged", "both"):
        avg = integrate_averaged(fields_, wind, cfg.eps, cfg.window, cfg.x0, cfg.v0, order=cfg.order,
                                 quad=QuadratureConfig(cfg.n_theta), rtol=cfg.rtol, atol=cfg.atol)
        avg.to_csv(out / "averaged.csv")
        Reconstruction(avg, fields_, wind, cfg.eps, order=cfg.order).to_csv(out / "reconstructed.csv")
        outputs += ["averaged.csv", "reconstructed.csv"]
        results["averaged_nfev"] = avg.meta["nfev"]
    if direct is not None and avg is not None and cfg.order == 1:
        errs = sup_errors(direct, avg, fields_, wind, cfg.eps)
        results["sup_errors"] = dict(zip(("speed_order0", "speed_order1", "position_order0", "position_order1"),
                                         errs))
    return outputs, results


def cmd_error_table(cfg, out, workers=1):
    table = error_table(cfg.ensemble_config(cfg.seed), cfg.eps_list, cfg.p_factors, cfg.n_members, workers=workers)
    table.to_json(out / "error_table.json")
    (out / "error_table.txt").write_text(table.to_text(), encoding="utf-8")
    table.to_csv(out / "error_table.csv")
    return ["error_table.json", "error_table.txt", "error_table.csv"], None


def cmd_ensemble(cfg, out, workers=1):
    report = run_ensemble(cfg.ensemble_config(cfg.seed), workers=workers)
    report.to_json(out / "grounding.json")
    (out / "grounding.txt").write_text(report.to_text(), encoding="utf-8")
    report.angle_csv(out / "grounding_angles.csv")
    report.members_csv(out / "members.csv")
    outputs = ["grounding.json", "grounding.txt", "grounding_angles.csv", "members.csv"]
    if report.rose is not None:
        report.rose.to_csv(out / "wind_rose.csv")
        outputs.append("wind_rose.csv")
    return outputs, {"probability": report.probability, "std_error": report.std_error,
                     "n_grounded": report.n_grounded, "n_members": report.n_members}


def cmd_wind_gen(cfg, out, workers=1):
    if cfg.wind == "none":
        raise ConfigError("wind", "wind-gen needs a synthetic wind")
    wind = member_wind(cfg.ensemble_config(cfg.seed), 0)
    wind.to_csv(out / "wind.csv")
    return ["wind.csv"], {"span": list(wind.span), "small_sigma": wind.small_sigma}


COMMANDS = {"simulate": cmd_simulate, "error-table": cmd_error_table, "ensemble": cmd_ensemble,
            "wind-gen": cmd_wind_gen}


def main(argv=None, environ=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args, environ)
        workers = _workers(args)
    except ConfigError as exc:
        print(f"driftavg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"driftavg: cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, results = COMMANDS[args.command](cfg, out, workers)
        write_manifest(out, args.command, cfg, outputs + ["manifest.json"], results)
    except ConfigError as exc:
        print(f"driftavg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, EnsembleError, FloatingPointError) as exc:
        print(f"driftavg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except WindSpanError as exc:
        print(f"driftavg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"driftavg: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"driftavg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"driftavg {args.command}: wrote {', '.join(sorted(outputs))} to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
