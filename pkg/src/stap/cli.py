"""Command-line front end: ``stap <scenario> [options]``.

Exit codes: 0 success, 1 a gate failed, 2 usage error, 3 numerical error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import NaturalUnits
from .errors import StapError
from .scenarios import (ExpansionScenario, ScenarioResult, SplittingScenario, run_expansion,
                        run_propagator_checks, run_quartic_infeasibility, run_splitting)

SCENARIOS = ("expand", "split", "quartic-check", "verify")
EMITTABLE = ("phase", "potential", "observables")
EXIT_OK, EXIT_GATE, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

# reference single-trap parameters (SI); frequencies are omega / 2 pi in Hz
_SPLIT = dict(mass=1.44e-25, omega_0=125.0, a=3e-6, t_f=0.08, grid_points=1024, half_width=12e-6)
_EXPAND = dict(mass=1.44e-25, omega_0=125.0, omega_f=12.5, grid_points=1024, time_steps=201)
_QUARTIC = dict(omega_0=125.0, omega_f=125.0, eta_0=1.0)


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated run description; physical values in SI, frequencies in Hz."""

    scenario: str
    t_f: Optional[float] = None
    omega_0: Optional[float] = None
    omega_f: Optional[float] = None
    a: Optional[float] = None
    mass: Optional[float] = None
    g: float = 0.0
    eta_0: Optional[float] = None
    mode: int = 0
    half_width: Optional[float] = None
    grid_points: Optional[int] = None
    time_steps: Optional[int] = None
    units: str = "si"
    out: str = "stap-out"
    emit: tuple = EMITTABLE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["emit"] = list(self.emit)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        if "scenario" not in data or data["scenario"] is None:
            raise UsageError("scenario kind is required")
        data = dict(data)
        if "emit" in data:
            data["emit"] = _parse_emit(data["emit"])
        return _fill_defaults(cls(**data))


def _parse_emit(value) -> tuple:
    items = value.split(",") if isinstance(value, str) else list(value)
    items = tuple(i.strip() for i in items if i.strip())
    bad = [i for i in items if i not in EMITTABLE]
    if bad:
        raise UsageError(f"cannot emit {', '.join(bad)}; choose from {', '.join(EMITTABLE)}")
    return items


def _fill_defaults(cfg: RunConfig) -> RunConfig:
    if cfg.scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {cfg.scenario!r}; choose from {', '.join(SCENARIOS)}")
    if cfg.units not in ("si", "natural"):
        raise UsageError("units must be 'si' or 'natural'")
    defaults = {"split": _SPLIT, "expand": _EXPAND, "quartic-check": _QUARTIC, "verify": {}}[cfg.scenario]
    filled = {k: v for k, v in defaults.items() if getattr(cfg, k) is None}
    cfg = replace(cfg, **filled)
    if cfg.scenario == "split" and cfg.time_steps is None:
        cfg = replace(cfg, time_steps=800 if cfg.t_f < 0.04 else 400)
    if cfg.scenario == "expand" and cfg.t_f is None:
        cfg = replace(cfg, t_f=5.0 / (2 * math.pi * cfg.omega_0))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    for name in ("t_f", "omega_0", "omega_f", "a", "mass", "eta_0", "half_width"):
        v = getattr(cfg, name)
        if v is not None and not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
            raise UsageError(f"{name} must be a positive number (got {v!r})")
    for name in ("omega_0", "omega_f"):
        v = getattr(cfg, name)
        if v is not None and 2 * math.pi * v > 1e12:
            warnings.warn(f"{name} = {v:g} Hz is suspiciously large; frequencies are omega/2pi in Hz",
                          stacklevel=3)
    n = cfg.grid_points
    if n is not None and (int(n) != n or n < 16 or int(n) & (int(n) - 1)):
        raise UsageError("grid-points must be a power of two >= 16")
    if cfg.time_steps is not None and (int(cfg.time_steps) != cfg.time_steps or cfg.time_steps < 5):
        raise UsageError("time-steps must be an integer >= 5")
    if cfg.scenario == "expand" and cfg.g != 0:
        raise UsageError("the expand scenario is linear (g = 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stap", description="Shortcut-to-adiabaticity potential synthesis.")
    ap.add_argument("scenario", nargs="?", choices=SCENARIOS)
    ap.add_argument("--config", metavar="FILE", help="JSON document with RunConfig keys")
    ap.add_argument("--t-f", dest="t_f", type=float, metavar="S")
    ap.add_argument("--omega-0", dest="omega_0", type=float, metavar="HZ", help="initial trap frequency / 2 pi")
    ap.add_argument("--omega-f", dest="omega_f", type=float, metavar="HZ", help="final trap frequency / 2 pi")
    ap.add_argument("--a", type=float, metavar="M", help="half separation of the final wells")
    ap.add_argument("--mass", type=float, metavar="KG")
    ap.add_argument("--g", type=float, metavar="VALUE", help="1D coupling in J m")
    ap.add_argument("--grid-points", dest="grid_points", type=int, metavar="N")
    ap.add_argument("--time-steps", dest="time_steps", type=int, metavar="N", help="number of movie slices")
    ap.add_argument("--units", choices=("si", "natural"))
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--emit", metavar="LIST", help="comma list of phase,potential,observables")
    return ap


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Merge an optional JSON config file with command-line flags (flags win)."""
    args = build_parser().parse_args(argv)
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed config JSON: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
    flags = {k: v for k, v in vars(args).items() if k != "config" and v is not None}
    data.update(flags)
    return RunConfig.from_dict(data)


def _scales(units: Optional[NaturalUnits], system: str) -> tuple[float, float, float]:
    """Multipliers from natural units to the output system for x, t and energy."""
    if units is None or system == "natural":
        return 1.0, 1.0, 1.0
    return units.length, units.time, units.energy


def emit_movie(movie, kind: str, directory, units: Optional[NaturalUnits] = None, system: str = "si",
               energy_zero: str = "") -> list[Path]:
    """Write ``<kind>.csv`` (``t,x,value`` rows, t-major) and ``<kind>.meta.json``.

    Potentials are in J (SI) or hbar*omega (natural); phases are in radians.
    """
    if kind not in ("phase", "potential"):
        raise ValueError("kind must be 'phase' or 'potential'")
    values = np.asarray(movie.values)
    if values.size == 0 or len(movie.times) == 0:
        raise ValueError("refusing to emit an empty movie")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sx, st, se = _scales(units, system)
    sv = se if kind == "potential" else 1.0
    x = (movie.grid.x * sx).tolist()
    csv_path = directory / f"{kind}.csv"
    with open(csv_path, "w") as fh:
        fh.write("t,x,value\n")
        for t, row in zip(np.asarray(movie.times) * st, values * sv):
            tr = repr(float(t))
            fh.writelines(f"{tr},{xv!r},{v!r}\n" for xv, v in zip(x, row.tolist()))
    meta = {
        "kind": kind,
        "units": system,
        "value_unit": ("rad" if kind == "phase" else ("J" if system == "si" else "hbar*omega")),
        "x_unit": "m" if system == "si" else "sqrt(hbar/(m*omega))",
        "t_unit": "s" if system == "si" else "1/omega",
        "grid": {"x_min": movie.grid.x_min * sx, "x_max": movie.grid.x_max * sx,
                 "n_points": movie.grid.n_points},
        "times": {"t_start": float(movie.times[0]) * st, "t_end": float(movie.times[-1]) * st,
                  "n_slices": len(movie.times)},
        "energy_zero": energy_zero or getattr(movie, "energy_zero", ""),
        "route": getattr(movie, "route", None),
        "natural_units": None if units is None else {"length_m": units.length, "time_s": units.time,
                                                     "energy_J": units.energy},
    }
    meta_path = directory / f"{kind}.meta.json"
    meta_path.write_text(json.dumps(meta, indent=2))
    return [csv_path, meta_path]


def _execute(cfg: RunConfig) -> ScenarioResult:
    if cfg.scenario == "verify":
        return run_propagator_checks()
    if cfg.scenario == "quartic-check":
        return run_quartic_infeasibility(1.0, cfg.omega_f / cfg.omega_0, cfg.eta_0)
    if cfg.scenario == "split":
        sc = SplittingScenario.from_si(mass=cfg.mass, omega=2 * math.pi * cfg.omega_0, a=cfg.a, t_f=cfg.t_f,
                                       half_width=cfg.half_width, n_points=cfg.grid_points,
                                       n_slices=cfg.time_steps, g=cfg.g)
        return run_splitting(sc)
    u = NaturalUnits(cfg.mass, 2 * math.pi * cfg.omega_0)
    kw = {} if cfg.half_width is None else {"half_width": cfg.half_width / u.length}
    sc = ExpansionScenario(omega0=1.0, omega_f=cfg.omega_f / cfg.omega_0, t_f=cfg.t_f / u.time, n=cfg.mode,
                           n_points=cfg.grid_points, n_slices=cfg.time_steps, params=u.params(cfg.g), **kw)
    res = run_expansion(sc)
    res.units = u
    return res


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def run(cfg: RunConfig) -> int:
    """Run a validated config, write outputs and return the exit code."""
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json())
    except OSError as exc:
        print(f"stap: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = _execute(cfg)
    except StapError as exc:
        report = {"scenario": cfg.scenario, "status": "numerical-error", "error": type(exc).__name__,
                  "message": str(exc)}
        (out / "report.json").write_text(json.dumps(report, indent=2, default=_json_default))
        print(f"stap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    emitted = []
    sx, st, se = _scales(result.units, cfg.units)
    if "phase" in cfg.emit and result.phase is not None:
        emitted += emit_movie(result.phase, "phase", out, result.units, cfg.units,
                              energy_zero="phi(anchor) = 0 at all t")
    if "potential" in cfg.emit and result.potential is not None:
        emitted += emit_movie(result.potential, "potential", out, result.units, cfg.units)
    if "observables" in cfg.emit and result.observables is not None:
        path = out / "observables.csv"
        result.observables.to_csv(path, scale_t=st, scale_e=se)
        emitted.append(path)

    report = dict(result.report)
    failed = sorted(k for k, ok in report.get("gates", {}).items() if not ok)
    report["status"] = "gate-failure" if failed else "ok"
    report["failed_gates"] = failed
    report["outputs"] = [p.name for p in emitted]
    text = json.dumps(report, indent=2, default=_json_default)
    (out / "report.json").write_text(text)
    if failed:
        print(json.dumps({"status": "gate-failure", "failed_gates": failed}), file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    except UsageError as exc:
        print(f"stap: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg)
    except ValueError as exc:
        print(f"stap: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
