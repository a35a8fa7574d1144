"""Command-line entry point: ``qdsdc {simulate,sweep,validate,oracle}``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 runtime failure (including sweeps with failed columns).
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, serialize
from .model import BiasRangeError
from .spectrum import simulate_spectrum
from .sweep import (SCENARIOS, Scenario, SweepConfig, classify_tracks,
                    crossing_partner, line_splitting, run_sweep, scenario,
                    track_peaks)
from .validation import oracle_comparison, run_all
from .writers import render_heatmap, write_map, write_spectrum, write_tracks

log = logging.getLogger("qdsdc")

EXIT_OK, EXIT_INVALID, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def build_scenario(cfg: RunConfig, name: str) -> Scenario:
    """The sweep described by ``cfg`` under preset ``name``.

    Presets place the control laser themselves; ``pulses.control_energy``
    is only honoured by ``custom``, which also needs ``sweep.v_start`` and
    ``sweep.v_stop``.
    """
    sw = cfg["sweep"]
    grid = dict(energies=cfg.energies(), dt=cfg.get("grid", "dt"),
                dtau=cfg.get("grid", "dtau"), filter=cfg.filter_spec())
    try:
        if name != "custom":
            return scenario(name, cfg.device_model(), v_res=sw["v_res"],
                            n_voltages=sw["n_voltages"], **grid)
        if sw["v_start"] is None or sw["v_stop"] is None:
            raise ConfigError("scenario custom needs sweep.v_start and "
                              "sweep.v_stop")
        if not sw["v_start"] < sw["v_stop"]:
            raise ConfigError("sweep.v_start must be below sweep.v_stop")
        m = cfg.device_model()
        voltages = tuple(float(v) for v in np.round(np.linspace(
            sw["v_start"], sw["v_stop"], sw["n_voltages"]), 9))
        e_c = m.control.energy if m.control.amplitude > 0 else None
        return Scenario("custom", SweepConfig(voltages, m, **grid),
                        sw["v_res"], e_c, ())
    except (BiasRangeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def resolved_config(cfg: RunConfig, sc: Scenario) -> RunConfig:
    """``cfg`` with every deferred default replaced by the value in use."""
    m = sc.config.model
    out = cfg.with_value("pulses", "tpe_energy", m.tpe.energy)
    out = out.with_value("pulses", "control_energy", m.control.energy)
    out = out.with_value("pulses", "control_amplitude", m.control.amplitude)
    out = out.with_value("sweep", "v_res", sc.resonance_bias)
    out = out.with_value("grid", "energy_center",
                         float(np.mean(sc.config.energies[[0, -1]])))
    return out.with_value("filter", "window_end", sc.config.filter.window_end)


def run_text(cfg: RunConfig, name: str) -> tuple[str, str]:
    """(parameter text, hash) identifying a run; the hash covers both."""
    text = f"# scenario = {name}\n" + serialize(cfg)
    return text, hashlib.sha256(text.encode()).hexdigest()[:16]


def notch_centers(sc: Scenario) -> tuple[float, ...]:
    m = sc.config.model
    centers = [m.tpe.energy] if m.tpe.amplitude > 0 else []
    if m.control.amplitude > 0:
        centers.append(m.control.energy)
    return tuple(centers)


def _load(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------- subcommands


def cmd_simulate(args) -> int:
    cfg = _load(args)
    sc = build_scenario(cfg, args.scenario)
    bias = cfg.get("device", "bias")
    try:
        m = sc.config.model.at_bias(bias)
        m.stark._check(bias)
    except BiasRangeError as exc:
        raise ConfigError(f"device.bias: {exc}") from None
    text, digest = run_text(resolved_config(cfg, sc), sc.name)
    t0 = time.perf_counter()
    s = simulate_spectrum(m, sc.config.energies, dt=sc.config.dt,
                          dtau=sc.config.dtau, f=sc.config.filter)
    if not np.all(np.isfinite(s.intensity)):
        raise FloatingPointError("non-finite spectrum")
    path = write_spectrum(s, _outdir(args) / "spectrum.tsv", digest,
                          [f"scenario\t{sc.name}", f"bias_V\t{bias:.9g}"]
                          + [ln for ln in text.splitlines()
                             if ln and not ln.startswith("#")])
    k = int(np.argmax(s.intensity))
    print(f"spectrum at V = {bias:+.4f} V written to {path} "
          f"({time.perf_counter() - t0:.1f} s); strongest bin "
          f"{s.energies[k]:.4f} meV")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    sc = build_scenario(cfg, args.scenario)
    if args.mask_notches:
        sc = replace(sc, config=replace(
            sc.config, notch_centers=notch_centers(sc),
            notch_half_width=cfg.get("sweep", "notch_half_width")))
    text, digest = run_text(resolved_config(cfg, sc), sc.name)
    out = _outdir(args)
    t0 = time.perf_counter()
    smap = run_sweep(sc.config, args.workers)
    log.info("sweep of %d columns took %.1f s", len(smap.voltages),
             time.perf_counter() - t0)
    sw = cfg["sweep"]
    tracks = classify_tracks(
        track_peaks(smap, sw["prominence"], sw["max_jump"]),
        sc.config.model, sc.control_energy)
    tsv, meta = write_map(smap, out / "map.tsv", digest, text)
    write_tracks(tracks, out / "tracks.tsv", digest)
    render_heatmap(smap, out / "heatmap.pgm",
                   cfg.get("output", "heatmap_gamma"))
    print(f"{sc.name}: {len(smap.voltages)} voltages x "
          f"{len(smap.energies)} energies -> {tsv}, {meta.name}, "
          f"tracks.tsv, heatmap.pgm")
    for t in tracks:
        if t.label != "UNKNOWN":
            print(f"  {t.label:4s} track {t.voltages[0]:+.3f}..."
                  f"{t.voltages[-1]:+.3f} V, slope {t.slope:+.4f} meV/V")
    if sc.control_energy is not None:
        partner, gap = crossing_partner(tracks)
        if partner:
            print(f"  SDC comes closest to {partner} ({gap * 1e3:.0f} ueV)")
        st = sc.config.model.stark
        line = st.e_x(sc.resonance_bias) if sc.name != "fig5a" else \
            st.e_xx(sc.resonance_bias)
        gap, _, _ = line_splitting(smap, sc.resonance_bias, line)
        if np.isfinite(gap):
            print(f"  splitting at V = {sc.resonance_bias:+.3f} V: "
                  f"{gap * 1e3:.0f} ueV")
    for d in smap.diagnostics:
        print(f"  diagnostic: {d}", file=sys.stderr)
    return EXIT_OK if smap.complete else EXIT_RUNTIME


def cmd_validate(args) -> int:
    results = run_all(quick=args.quick, workers=args.workers)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  "
              f"{r.seconds:6.1f} s  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_INVALID if failed else EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load(args)
    m = cfg.device_model()
    t0 = time.perf_counter()
    r = oracle_comparison(m, args.dt, args.horizon, args.substeps)
    elapsed = time.perf_counter() - t0
    dev_ok = r["max_dev"] < args.tolerance
    order_ok = 8 <= r["ratio"] <= 32
    print(f"RK4 vs piecewise matrix exponential, V = {m.bias:+.4f} V, "
          f"{r['horizon']:g} ps, {r['substeps']} substeps per step")
    print(f"  max Frobenius deviation, dt = {r['dt']:g} ps: "
          f"{r['max_dev']:.3e} ({'PASS' if dev_ok else 'FAIL'} "
          f"< {args.tolerance:g})")
    print(f"  max Frobenius deviation, dt = {2 * r['dt']:g} ps: "
          f"{r['max_dev_coarse']:.3e}")
    print(f"  endpoint error ratio under halving: {r['ratio']:.2f} "
          f"({'PASS' if order_ok else 'FAIL'} in [8, 32])")
    print(f"  oracle trace deviation: {r['oracle_trace_dev']:.1e}")
    print(f"  {elapsed:.1f} s")
    return EXIT_OK if dev_ok and order_ok else EXIT_INVALID


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--workers", type=int, default=1,
                        help="worker processes for sweeps")
    common.add_argument("--scenario", default="fig5a",
                        choices=SCENARIOS + ("custom",),
                        help="control-laser placement and voltage axis")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="qdsdc",
        description="Stimulated down-conversion spectra of a quantum dot "
                    "biexciton cascade.")
    p.add_argument("--version", action="version",
                   version=f"qdsdc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common],
                   help="spectrum at device.bias")
    sw = sub.add_parser("sweep", parents=[common],
                        help="bias sweep: map, tracks and heatmap")
    sw.add_argument("--mask-notches", action="store_true",
                    help="zero the bands around the laser energies")
    va = sub.add_parser("validate", parents=[common],
                        help="run the invariant suite")
    va.add_argument("--quick", action="store_true",
                    help="skip the oracle and the bias sweeps")
    orc = sub.add_parser("oracle", parents=[common],
                         help="RK4 against the matrix-exponential oracle")
    orc.add_argument("--dt", type=float, default=0.1)
    orc.add_argument("--horizon", type=float, default=600.0)
    orc.add_argument("--substeps", type=int, default=20)
    orc.add_argument("--tolerance", type=float, default=1e-6)
    return p


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep,
            "validate": cmd_validate, "oracle": cmd_oracle}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else
                        logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
