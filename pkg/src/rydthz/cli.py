"""Command-line harness: ``rydthz <command> --config FILE --out DIR``.

Each command writes ``<command>.csv`` (``#`` header lines, 17 significant
digits), ``<command>.json`` (scalar summary) and ``manifest.json`` (canonical
config + seed; usable as ``--config`` to replay the run).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import MANIFEST_VERSION, ExperimentConfig, load_config, parse_config, preset_text
from .errors import ConfigurationError, InsufficientDataError, PhysicsError, RydThzError
from .levels import TWO_PI, with_field
from .metrics import (
    DynamicRange,
    UnsaturatedCurveError,
    dynamic_range,
    nep,
    saturable_curve,
    saturable_dynamic_range,
    thz_count_rate,
    thz_intensity,
)
from .mixing import analytic_beta, coupled_mode_propagate, eta_qe_analytic
from .photons import detect, g2_cross, g2_single_autocorr, gen_coherent, gen_thermal, hbt_split
from .spectra import (
    ConverterSetup,
    SpectrumError,
    extract_bandwidth,
    nonlinear_response_curve,
    signal_spectrum,
    transmission_spectrum,
)

log = logging.getLogger("rydthz")

COMMANDS = ("spectrum", "transmission", "efficiency", "response", "metrics", "g2",
            "bandwidth-sweep")
UNITS_NOTE = "angular frequencies are written as Hz with an _over_2pi suffix"


# -- output helpers ----------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return "nan"
    return "%.17g" % v


def write_csv(path, columns, rows, comments=()):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(f"# {UNITS_NOTE}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def manifest(cfg: ExperimentConfig, command: str) -> dict:
    return {
        "manifest_version": MANIFEST_VERSION,
        "tool": "rydthz",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }


# -- commands ----------------------------------------------------------------

def _setup(cfg: ExperimentConfig) -> ConverterSetup:
    scheme = cfg.build_scheme()
    return ConverterSetup(scheme, cfg.build_fields(scheme), cfg.build_vapor(),
                          cfg.geometry.length_m, cfg.geometry.loss_s_per_m,
                          cfg.geometry.loss_t_per_m, cfg.doppler.method, cfg.doppler.n_nodes)


def _sweep_grid(cfg):
    sw = cfg.sweep
    return TWO_PI * np.linspace(sw.start_over_2pi, sw.stop_over_2pi, sw.points)


def _bandwidth_summary(trace):
    try:
        bw = extract_bandwidth(trace)
    except SpectrumError as exc:
        return {"fwhm_over_2pi_hz": None, "shape": None, "bandwidth_error": str(exc)}
    return {"fwhm_over_2pi_hz": bw.fwhm / TWO_PI, "shape": bw.shape,
            "n_peaks": int(len(bw.peaks)), "dip_ratio": bw.dip_ratio}


def cmd_spectrum(cfg, out):
    setup = _setup(cfg)
    tr = signal_spectrum(setup, _sweep_grid(cfg), cfg.sweep.variable, workers=cfg.threads)
    rows = [(x / TWO_PI, y) for x, y in zip(tr.x, tr.y)]
    write_csv(os.path.join(out, "spectrum.csv"),
              [f"detuning_{cfg.sweep.variable}_over_2pi_hz", "eta_qe"], rows,
              [f"linearised conversion efficiency vs {cfg.sweep.variable} detuning"])
    i = int(np.argmax(tr.y))
    summary = {"eta_qe_max": tr.y[i], "detuning_at_max_over_2pi_hz": tr.x[i] / TWO_PI,
               "sweep": cfg.sweep.variable}
    summary.update(_bandwidth_summary(tr))
    return summary


def cmd_transmission(cfg, out):
    setup = _setup(cfg)
    grid = _sweep_grid(cfg)
    on = transmission_spectrum(setup.scheme, setup.fields, setup.vapor, grid, setup.length,
                               setup.method, setup.n_nodes, workers=cfg.threads)
    off_fields = with_field(setup.fields, "A2", rabi=0.0)
    off = transmission_spectrum(setup.scheme, off_fields, setup.vapor, grid, setup.length,
                                setup.method, setup.n_nodes, workers=cfg.threads)
    rows = [(x / TWO_PI, a, b) for x, a, b in zip(grid, on.y, off.y)]
    write_csv(os.path.join(out, "transmission.csv"),
              ["detuning_A1_over_2pi_hz", "transmission", "transmission_a2_off"], rows,
              ["A1 probe transmission exp(-alpha L), with and without A2"])
    i0 = int(np.argmin(np.abs(grid)))
    return {"transmission_min": on.y.min(), "transmission_at_zero": on.y[i0],
            "transmission_a2_off_at_zero": off.y[i0],
            "eit_contrast_at_zero": on.y[i0] - off.y[i0]}


def cmd_efficiency(cfg, out):
    setup = _setup(cfg)
    beta = setup.beta()
    mc = setup.mixing_config()
    res = coupled_mode_propagate(beta, mc, n_profile=101)
    rows = [(z, abs(a[0]) ** 2, abs(a[1]) ** 2) for z, a in zip(res.z, res.profile)]
    write_csv(os.path.join(out, "efficiency.csv"), ["z_m", "flux_s", "flux_t"], rows,
              ["photon-flux profile along the medium for unit THz input flux"])
    closed = {}
    if mc.big_g_s > 0:
        closed = {"eta_qe_analytic": eta_qe_analytic(mc), "alpha_bar_per_m": mc.alpha_bar,
               "alpha_bar_l": mc.alpha_bar * mc.length}
    return {"eta_qe": res.eta_qe, "flux_out": res.flux_out, "delta_k_per_m": mc.delta_k,
            "g_s": mc.g_s, "g_t": mc.g_t, "big_g_s": mc.big_g_s, "big_g_t": mc.big_g_t,
            "gamma_th": mc.gamma_th,
            "beta_real": beta.real.tolist(), "beta_imag": beta.imag.tolist(), **closed}


def cmd_response(cfg, out):
    setup = _setup(cfg)
    det = cfg.build_detector()
    r = cfg.response
    om = TWO_PI * np.geomspace(r.rabi_t_min_over_2pi, r.rabi_t_max_over_2pi, r.points)
    tr = nonlinear_response_curve(setup, om, det.s_eff, workers=cfg.threads)
    r_t = thz_count_rate(tr.x, det)
    eff = tr.y / r_t
    rows = [(o / TWO_PI, i, rt, rs, e) for o, i, rt, rs, e in zip(om, tr.x, r_t, tr.y, eff)]
    write_csv(os.path.join(out, "response.csv"),
              ["rabi_t_over_2pi_hz", "intensity_w_m2", "r_t_hz", "r_s_hz", "eta_qe"], rows,
              ["signal photon rate vs THz input (full steady state along z)"])
    slopes = np.diff(np.log(tr.y)) / np.diff(np.log(tr.x))
    summary = {"eta_qe_small_signal": eff[0], "eta_qe_linearised": setup.efficiency().eta_qe,
               "log_slope_first": slopes[0], "log_slope_min": slopes.min(),
               "slopes_nonincreasing": bool(np.all(np.diff(slopes) <= 1e-9))}
    try:
        dr = dynamic_range(tr, det, cfg.detector.integration_time_s)
        summary.update(dynamic_range_db=dr.db, saturated=True)
    except UnsaturatedCurveError as exc:
        summary.update(dynamic_range_db=exc.result.db, saturated=False)
    except InsufficientDataError as exc:
        summary.update(dynamic_range_db=None, dynamic_range_error=str(exc))
    return summary


def cmd_metrics(cfg, out):
    det = cfg.build_detector()
    m = cfg.metrics
    i_sat = thz_intensity(m.synthetic_r_t_sat_hz, det)
    grid = np.geomspace(i_sat * 10 ** -m.synthetic_decades_below,
                        i_sat * 10 ** m.synthetic_decades_above, m.synthetic_points)
    curve = saturable_curve(grid, det, m.synthetic_eta0, i_sat)
    tau = cfg.detector.integration_time_s
    dr: DynamicRange = dynamic_range(curve, det, tau)
    rows = [(i, r) for i, r in zip(curve.x, curve.y)]
    write_csv(os.path.join(out, "metrics.csv"), ["intensity_w_m2", "r_s_hz"], rows,
              ["synthetic saturable response R_S = eta0 R_T / (1 + I / I_sat)"])
    return {"nep_w_per_sqrt_hz": nep(det), "eta_total": det.eta, "eta_qe": det.eta_qe,
            "eta_loss": det.eta_loss, "dark_rate_hz": det.dark_rate,
            "dynamic_range_db": dr.db, "dynamic_range_closed_form_db":
            saturable_dynamic_range(det, m.synthetic_eta0, i_sat, tau),
            "i_min_w_m2": dr.i_min, "i_max_w_m2": dr.i_max}


def cmd_g2(cfg, out):
    p = cfg.photons
    seed = cfg.seed
    if p.source == "coherent":
        src = gen_coherent(p.rate_hz, p.duration_s, seed)
    else:
        src = gen_thermal(p.rate_hz, p.tau_c_s, p.duration_s, seed)
    det = detect(src, p.eta, p.dark_rate_hz, p.dead_time_s, seed)
    a, b = hbt_split(det, seed)
    hist = g2_cross(a, b, p.bin_width_s, p.tau_max_s)
    rows = [(t, c, g) for t, c, g in zip(hist.centers, hist.counts, hist.g2)]
    write_csv(os.path.join(out, "g2.csv"), ["tau_s", "pairs", "g2"], rows,
              [f"HBT cross-correlation of a {p.source} stream"])
    # single detector: same stream through the configured autocorrelation dead time
    single = detect(src, p.eta, p.dark_rate_hz, p.autocorr_dead_time_s, seed)
    auto = []
    for res in p.resolutions_s:
        try:
            e = g2_single_autocorr(single, res, p.autocorr_dead_time_s)
            auto.append({"resolution_s": res, "raw": e.raw, "corrected": e.corrected,
                         "stderr": e.stderr})
        except InsufficientDataError as exc:
            auto.append({"resolution_s": res, "error": str(exc)})
    return {"source": p.source, "counts_a": hist.n_a, "counts_b": hist.n_b,
            "g2_zero": hist.g2_zero, "autocorrelation": auto}


def cmd_bandwidth_sweep(cfg, out):
    base = _setup(cfg)
    grid = _sweep_grid(cfg)
    rows, points = [], []
    for om in cfg.bandwidth.rabi_a1_over_2pi:
        fields = with_field(base.fields, "A1", rabi=TWO_PI * om)
        tr = signal_spectrum(replace(base, fields=fields), grid, cfg.sweep.variable,
                             workers=cfg.threads)
        s = _bandwidth_summary(tr)
        s["rabi_a1_over_2pi_hz"] = om
        s["eta_qe_max"] = float(tr.y.max())
        points.append(s)
        rows.append((om, s["fwhm_over_2pi_hz"], s["shape"] or "none", s["eta_qe_max"]))
    write_csv(os.path.join(out, "bandwidth-sweep.csv"),
              ["rabi_a1_over_2pi_hz", "fwhm_over_2pi_hz", "shape", "eta_qe_max"], rows,
              [f"conversion bandwidth vs A1 Rabi frequency ({cfg.sweep.variable} sweep)"])
    fw = [p["fwhm_over_2pi_hz"] for p in points]
    ok = None not in fw and all(b >= a for a, b in zip(fw, fw[1:]))
    return {"points": points, "fwhm_nondecreasing": ok,
            "shapes": [p["shape"] for p in points]}


HANDLERS = {
    "spectrum": cmd_spectrum,
    "transmission": cmd_transmission,
    "efficiency": cmd_efficiency,
    "response": cmd_response,
    "metrics": cmd_metrics,
    "g2": cmd_g2,
    "bandwidth-sweep": cmd_bandwidth_sweep,
}


def run_experiment(cfg: ExperimentConfig, command: str, out: str) -> dict:
    """Run one command and write its CSV, JSON summary and manifest into ``out``."""
    if command not in HANDLERS:
        raise ConfigurationError(f"unknown command {command!r}")
    os.makedirs(out, exist_ok=True)
    try:
        summary = HANDLERS[command](cfg, out)
    except RydThzError as exc:
        exc.args = (f"{command}: {exc}",) + exc.args[1:]
        raise
    summary = {"command": command, **summary}
    write_json(os.path.join(out, f"{command}.json"), summary)
    write_json(os.path.join(out, "manifest.json"), manifest(cfg, command))
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rydthz", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", help="YAML/JSON config or a manifest.json to replay")
    src.add_argument("--preset", help="shipped preset name (e.g. reference, converter)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--threads", type=int, help="cap on concurrent sweep points")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.preset:
            cfg = parse_config(preset_text(args.preset))
        else:
            cfg = parse_config(None)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("--seed: must be >= 0")
            cfg.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigurationError("--threads: must be >= 1")
            cfg.threads = args.threads
        summary = run_experiment(cfg, args.command, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RydThzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(_clean(summary), sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
