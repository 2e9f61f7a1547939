"""Command-line batch runner.

Each subcommand resolves a flat parameter dict (defaults < config file <
flags), validates it before simulating, and writes CSV/JSON results plus a
manifest.json from which the run can be repeated byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import EvolutionError, top_state
from .fock import SectorError
from .hamiltonian import PRESETS, LatticeError, LatticeSpec
from .protocol import (
    DEFAULT_VIRTUAL,
    ProtocolError,
    default_hold_times,
    density_profile,
    melted_density,
    number_superposition_config,
    run_manybody_ramsey,
    run_volume_ramsey,
    volume_ed_pressure,
    volume_superposition_config,
)
from .spectro import NoPeakError, SpectroError, fft_spectrum, find_peaks, ramp_scan, untranslate
from .thermo import (
    FermionModel,
    ThermoError,
    ed_mu,
    extract_mu,
    extract_pressure,
    ff_density_profile,
    ff_mu,
    ff_pressure,
)

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_NOPEAK = 0, 2, 3, 4
CSV_SCHEMA = "1"
KINDS = ("ramsey", "ramp-scan", "thermo-sweep", "density", "volume-ramsey")

COMMON = {"lattice": {"preset": "paper-uniform"}, "seed": 0, "shots": None,
          "dephasing_T2": None, "workers": None}
DEFAULTS = {
    "ramsey": {"N": [0, 1], "V": 7, "tau": 1.0, "span": 2.7, "step": 0.004,
               "virtual_freq": DEFAULT_VIRTUAL, "prominence_sigma": 6.0},
    "ramp-scan": {"N": [0, 1], "V": 7, "taus": "logspace(1ns,1us,20)", "span": 2.7,
                  "step": 0.004, "virtual_freq": DEFAULT_VIRTUAL, "prominence_sigma": 6.0},
    "thermo-sweep": {"observable": "mu", "V": 7, "all": False, "source": "ed", "tau": 1.0},
    "density": {"N": [1, 2], "V": 7, "tau": 1.0},
    "volume-ramsey": {"N": 1, "V": 2, "tau": 1.0, "span": 2.7, "step": 0.004,
                      "virtual_freq": DEFAULT_VIRTUAL, "compensate": True, "nu_sb": None,
                      "prominence_sigma": 6.0},
}


class ConfigError(ValueError):
    pass


# -- parameter resolution -------------------------------------------------------

_UNITS = {"ns": 1e-3, "us": 1.0, "µs": 1.0, "ms": 1e3}


def _time(text: str) -> float:
    m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*(ns|us|µs|ms)?\s*", text)
    if not m:
        raise ConfigError(f"cannot parse time {text!r}")
    return float(m.group(1)) * _UNITS[m.group(2) or "us"]


def parse_taus(spec) -> np.ndarray:
    """``logspace(1ns,1us,20)``, ``linspace(a,b,n)``, a comma list, or a list (µs)."""
    if isinstance(spec, (list, tuple)):
        return np.array([float(x) for x in spec])
    m = re.fullmatch(r"\s*(logspace|linspace)\(([^,]+),([^,]+),\s*(\d+)\s*\)\s*", str(spec))
    if m:
        a, b, n = _time(m.group(2)), _time(m.group(3)), int(m.group(4))
        if m.group(1) == "logspace":
            if a <= 0 or b <= 0:
                raise ConfigError("logspace bounds must be positive")
            return np.logspace(np.log10(a), np.log10(b), n)
        return np.linspace(a, b, n)
    return np.array([_time(x) for x in str(spec).split(",")])


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def resolve(kind: str, config: dict | None = None, overrides: dict | None = None) -> dict:
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    params = {**COMMON, **DEFAULTS[kind]}
    for source in (config or {}, overrides or {}):
        for key, val in source.items():
            if key == "kind":
                continue
            if key not in params:
                raise ConfigError(f"field {key!r}: not a {kind} parameter; "
                                  f"known: {', '.join(sorted(params))}")
            params[key] = val
    if kind in ("ramsey", "ramp-scan", "density") and not isinstance(params["N"], list):
        params["N"] = [params["N"]]
    if kind == "volume-ramsey" and isinstance(params["N"], list):
        if len(params["N"]) != 1:
            raise ConfigError("field 'N': volume-ramsey takes a single particle number")
        params["N"] = params["N"][0]
    return params


def lattice_from(params: dict) -> LatticeSpec:
    lat = params["lattice"]
    if isinstance(lat, str):
        lat = {"preset": lat}
    try:
        spec = LatticeSpec.from_dict(lat)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"field 'lattice': {e}") from None
    except LatticeError as e:
        raise ConfigError(f"field 'lattice': {e}") from None
    return spec


def _sizes(params: dict, spec: LatticeSpec, extra: int = 0) -> LatticeSpec:
    V = int(params["V"]) + extra
    if V > spec.V:
        raise ConfigError(f"field 'V': {V} sites requested from a {spec.V}-site lattice")
    return spec.subchain(0, V)


def _ramsey_config(params: dict, spec: LatticeSpec, tau: float):
    Ns = sorted(int(n) for n in params["N"])
    if len(Ns) not in (1, 2) or (len(Ns) == 2 and Ns[1] != Ns[0] + 1):
        raise ConfigError("field 'N': give N or two adjacent particle numbers")
    T = default_hold_times(float(params["span"]), float(params["step"]))
    return number_superposition_config(
        _sizes(params, spec), Ns[0], tau, hold_times=tuple(T),
        virtual_freq=float(params["virtual_freq"]), dephasing_T2=params["dephasing_T2"],
        shots=params["shots"], seed=int(params["seed"]))


def _volume_config(params: dict, spec: LatticeSpec):
    T = default_hold_times(float(params["span"]), float(params["step"]))
    return volume_superposition_config(
        _sizes(params, spec, 1), int(params["N"]), float(params["tau"]),
        bool(params["compensate"]), params["nu_sb"], hold_times=tuple(T),
        virtual_freq=float(params["virtual_freq"]), dephasing_T2=params["dephasing_T2"],
        shots=params["shots"], seed=int(params["seed"]))


def validate(kind: str, params: dict) -> None:
    """Raise ConfigError before any simulation if the parameters cannot run."""
    spec = lattice_from(params)
    try:
        if kind == "ramsey":
            _ramsey_config(params, spec, float(params["tau"]))
        elif kind == "ramp-scan":
            taus = parse_taus(params["taus"])
            if len(taus) == 0 or np.any(taus <= 0):
                raise ConfigError("field 'taus': ramp times must be positive")
            _ramsey_config(params, spec, float(taus[0]))
        elif kind == "volume-ramsey":
            _volume_config(params, spec)
        elif kind == "thermo-sweep":
            if params["observable"] not in ("mu", "P"):
                raise ConfigError("field 'observable': expected 'mu' or 'P'")
            if params["source"] not in ("ed", "analytic", "ramsey"):
                raise ConfigError("field 'source': expected ed, analytic or ramsey")
            clipped = params["observable"] == "P" and params["all"]
            _sizes(params, spec, 1 if params["observable"] == "P" and not clipped else 0)
        elif kind == "density":
            sub = _sizes(params, spec)
            for N in params["N"]:
                if not 0 < int(N) < sub.V:
                    raise ConfigError(f"field 'N': {N} outside 1..{sub.V - 1}")
    except (ProtocolError, LatticeError, ValueError, TypeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None


# -- output ---------------------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "%.12g" % x
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _spectrum_outputs(out: Path, trace, params, prefix: str = "") -> dict:
    write_csv(out / f"{prefix}trace.csv", ["hold_time_us", "population", "sem"],
              zip(trace.hold_times, trace.population,
                  trace.sem if trace.sem is not None else [None] * len(trace.population)))
    spec = fft_spectrum(trace)
    write_csv(out / f"{prefix}spectrum.csv", ["freq_MHz", "magnitude"],
              zip(spec.freqs, spec.magnitude))
    peaks = find_peaks(spec, prominence_sigma=float(params["prominence_sigma"]))
    record = {"peaks": peaks.to_records(), "sigma_noise": peaks.sigma_noise,
              "threshold_sigma": peaks.threshold, "lowpass_MHz": peaks.lowpass_cut,
              "resolution_MHz": spec.resolution}
    if len(peaks):
        record["dominant_freq_MHz"] = peaks.dominant.freq
        record["dominant_fraction"] = peaks.dominant_fraction
        record["energy_difference_MHz"] = untranslate(peaks.dominant.freq, trace.virtual_freq)
    return record


# -- experiment kinds -----------------------------------------------------------

def _run_ramsey(params, spec, out):
    cfg = _ramsey_config(params, spec, float(params["tau"]))
    trace = run_manybody_ramsey(cfg)
    rec = _spectrum_outputs(out, trace, params)
    N, V = min(params["N"]), int(params["V"])
    rec["ed_mu_MHz"] = ed_mu(N, V, spec.subchain(0, V))
    write_json(out / "peaks.json", rec)
    if "dominant_freq_MHz" not in rec:
        raise NoPeakError("no qualifying peak in the fringe spectrum")
    return ["trace.csv", "spectrum.csv", "peaks.json"]


def _run_volume(params, spec, out):
    cfg = _volume_config(params, spec)
    trace = run_volume_ramsey(cfg)
    rec = _spectrum_outputs(out, trace, params)
    N, V = int(params["N"]), int(params["V"])
    lat = spec.subchain(0, V + 1)
    rec["ed_pressure_MHz"] = volume_ed_pressure(lat, N, bool(params["compensate"]))
    if "energy_difference_MHz" in rec:
        rec["pressure_MHz"] = -rec["energy_difference_MHz"]
    write_json(out / "peaks.json", rec)
    if "dominant_freq_MHz" not in rec:
        raise NoPeakError("no qualifying peak in the fringe spectrum")
    return ["trace.csv", "spectrum.csv", "peaks.json"]


def _run_scan(params, spec, out):
    taus = parse_taus(params["taus"])
    cfg = _ramsey_config(params, spec, float(taus[0]))
    res = ramp_scan(cfg, taus, prominence_sigma=float(params["prominence_sigma"]),
                    workers=_workers(params))
    freqs = res.spectra[0].freqs
    write_csv(out / "ramp_scan.csv", ["tau_us"] + ["%.12g" % f for f in freqs],
              ([t, *s.magnitude] for t, s in zip(res.taus, res.spectra)))
    write_json(out / "peaks.json", [
        {"tau_us": t, "n_peaks": len(p), "dominant_fraction": p.dominant_fraction if len(p)
         else 0.0, "peaks": p.to_records()} for t, p in zip(res.taus, res.peaks)])
    return ["ramp_scan.csv", "peaks.json"]


def _thermo_point(job):
    obs, N, V, source, spec_dict, tau = job
    spec = LatticeSpec.from_dict(spec_dict)
    kw = {"tau": tau} if source == "ramsey" else {}
    if obs == "mu":
        p = extract_mu(N, V, source, spec, **kw)
        ref = ff_mu(N, FermionModel(V, spec.J))
    else:
        p = extract_pressure(N, V, source, spec, **kw)
        ref = ff_pressure(N, FermionModel(V, spec.J))
    return p, ref


def _run_thermo(params, spec, out):
    obs = params["observable"]
    Vmax = int(params["V"])
    Vs = range(1, Vmax + 1) if params["all"] else [Vmax]
    if obs == "P" and params["all"]:
        Vs = range(1, min(Vmax, spec.V - 1) + 1)
    jobs = [(obs, N, V, params["source"], spec.to_dict(), float(params["tau"]))
            for V in Vs for N in range(V if obs == "mu" else V + 1)]
    workers = _workers(params)
    if workers > 1 and params["source"] == "ramsey":
        with ProcessPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(_thermo_point, jobs))
    else:
        res = [_thermo_point(j) for j in jobs]
    write_csv(out / "thermo.csv",
              ["N", "V", "rho", "value_MHz", "source", "sem", "observable", "ff_discrete_MHz"],
              ([p.N, p.V, p.rho, p.value, p.source, p.sem, p.observable, ref]
               for p, ref in res))
    return ["thermo.csv"]


def _run_density(params, spec, out):
    lat = _sizes(params, spec)
    tau = float(params["tau"])
    cols, header = [np.arange(lat.V)], ["site"]
    for N in sorted(int(n) for n in params["N"]):
        cols += [melted_density(lat, N, tau), density_profile(top_state(lat, N)),
                 ff_density_profile(N, FermionModel(lat.V, lat.J))]
        header += [f"melted_N{N}", f"top_state_N{N}", f"ff_N{N}"]
    if len(params["N"]) == 2 and abs(params["N"][0] - params["N"][1]) == 1:
        cols.append(melted_density(lat, min(params["N"]), tau, superpose=True))
        header.append("superposition")
    write_csv(out / "density.csv", header, zip(*cols))
    return ["density.csv"]


RUNNERS = {"ramsey": _run_ramsey, "volume-ramsey": _run_volume, "ramp-scan": _run_scan,
           "thermo-sweep": _run_thermo, "density": _run_density}


def _workers(params) -> int:
    return int(params["workers"] or os.cpu_count() or 1)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(kind: str, params: dict, out: Path) -> list[str]:
    """Run one experiment and write its data files and manifest into ``out``."""
    validate(kind, params)
    spec = lattice_from(params)
    out.mkdir(parents=True, exist_ok=True)
    files = RUNNERS[kind](params, spec, out)
    manifest = {"kind": kind, "params": {k: v for k, v in params.items() if k != "workers"},
                "lattice_resolved": spec.to_dict(), "seed": params["seed"],
                "tool": "mbramsey", "version": __version__, "csv_schema": CSV_SCHEMA,
                "float_format": "%.12g",
                "outputs": {f: _sha256(out / f) for f in files}}
    write_json(out / "manifest.json", manifest)
    return files


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbramsey", description="Manybody Ramsey simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS + ("validate",):
        s = sub.add_parser(kind)
        if kind == "validate":
            s.add_argument("kind", nargs="?", choices=KINDS)
        s.add_argument("--config", type=Path, help="JSON config file")
        s.add_argument("--manifest", type=Path, help="rerun from a manifest.json")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config field (value parsed as JSON)")
        s.add_argument("--preset", choices=sorted(PRESETS))
        s.add_argument("--N", type=int, nargs="+")
        s.add_argument("--V", type=int)
        s.add_argument("--tau", type=float, help="melt time, µs")
        s.add_argument("--taus", help="e.g. logspace(1ns,1us,20)")
        s.add_argument("--observable", choices=("mu", "P"))
        s.add_argument("--source", choices=("ed", "analytic", "ramsey"))
        s.add_argument("--all", action="store_true", default=None)
        s.add_argument("--seed", type=int)
        s.add_argument("--shots", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--out", type=Path, default=Path("results"))
    return p


def _overrides(args) -> dict:
    ov = {}
    for key in ("N", "V", "tau", "taus", "observable", "source", "all", "seed", "shots",
                "workers"):
        val = getattr(args, key)
        if val is not None:
            ov[key] = val
    if args.preset:
        ov["lattice"] = {"preset": args.preset}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = _value(v)
    return ov


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = {}
        kind = args.command
        if args.manifest:
            man = load_config(args.manifest)
            config, kind = man.get("params", {}), man.get("kind", kind)
        elif args.config:
            config = load_config(args.config)
        if kind == "validate":
            kind = args.kind or config.get("kind")
            if kind is None:
                raise ConfigError("validate needs an experiment kind or a config with 'kind'")
        elif args.config and config.get("kind", kind) != kind:
            raise ConfigError(f"config kind {config['kind']!r} does not match '{kind}'")
        params = resolve(kind, config, _overrides(args))
        if args.command == "validate":
            validate(kind, params)
            print(f"{kind}: config ok")
            return EXIT_OK
        files = run(kind, params, args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NoPeakError as e:
        print(f"no qualifying peak: {e}", file=sys.stderr)
        return EXIT_NOPEAK
    except (EvolutionError, SectorError, ThermoError, SpectroError, ProtocolError,
            LatticeError) as e:
        print(f"simulation error ({type(e).__module__}.{type(e).__name__}): {e}",
              file=sys.stderr)
        return EXIT_SIM
    print(f"{kind}: wrote {', '.join(files)} and manifest.json to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
