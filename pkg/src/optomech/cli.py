"""Command-line interface: analytic spectra, noise-sweep families,
cross-correlation curves, Monte Carlo campaigns, record analysis, stability
reports, and CSV-to-SVG plotting.

All commands are deterministic given their flags (and seed); rerunning a
command overwrites its outputs bit-identically.  Exit codes: 0 success,
2 configuration or argument error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, crosscorr, dynamics, montecarlo, params, response

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _load_config(args) -> params.DeviceConfig:
    if args.config:
        cfg = params.load_config(args.config)
    else:
        cfg = params.load_preset(args.preset)
    if getattr(args, "ns", None) is not None:
        cfg = params.with_signal_photons(cfg, args.ns)
    violations = params.validate(cfg)
    if violations:
        raise ValueError("invalid config: " + "; ".join(violations))
    return cfg


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default="device1",
                   help="bundled or OPTOMECH_PRESET_DIR preset name")
    p.add_argument("--config", default=None,
                   help="path to a flat key=value config file (overrides --preset)")


def _parse_duration(text: str) -> float:
    """'20ms', '0.5s', or plain seconds."""
    text = text.strip()
    if text.endswith("ms"):
        return float(text[:-2]) * 1e-3
    if text.endswith("s"):
        return float(text[:-1])
    return float(text)


def _parse_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _write_csv(path: str | None, header: list[str], rows: np.ndarray) -> None:
    lines = [",".join(header)]
    for row in np.atleast_2d(rows):
        lines.append(",".join(f"{v:.12g}" for v in row))
    text = "\n".join(lines) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _complex_rows(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.column_stack([
        grid / TWO_PI, values.real, values.imag, np.abs(values) ** 2,
        np.degrees(np.angle(values))])


_CROSS_HEADER = ["omega_hz", "re", "im", "abs2", "phase_deg"]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_spectrum(args) -> int:
    cfg = _load_config(args)
    gamma_m = dynamics.total_damping(cfg)
    if gamma_m <= 0:
        raise RuntimeError("dynamically unstable configuration")
    grid = response.default_grid(cfg, gamma_m, n_points=args.points,
                                 half_width_linewidths=args.span_linewidths)
    dec = response.displacement_spectrum(grid, cfg)
    rows = np.column_stack([grid / TWO_PI, dec.thermal, dec.rpsn_signal,
                            dec.meter_backaction_zp, dec.classical])
    _write_csv(args.out, ["omega_hz", "thermal", "rpsn_signal",
                          "meter_backaction_zp", "classical"], rows)
    return 0


def cmd_sweep_power(args) -> int:
    cfg = _load_config(args)
    ns_values = _parse_list(args.ns_list)
    rows = []
    for n_s in ns_values:
        cfg_n = params.with_signal_photons(cfg, n_s)
        gamma_m = dynamics.total_damping(cfg_n)
        if gamma_m <= 0:
            raise RuntimeError(f"unstable at N_S={n_s:g}")
        grid = response.default_grid(cfg_n, gamma_m, n_points=2001,
                                     half_width_linewidths=8.0)
        dec = response.displacement_spectrum(grid, cfg_n)
        i = int(np.argmax(dec.total))
        rows.append([n_s, dec.total[i], dec.thermal[i], dec.rpsn_signal[i],
                     dec.classical[i], gamma_m / TWO_PI])
    _write_csv(args.out, ["n_s", "peak_total", "thermal", "rpsn_signal",
                          "classical", "gamma_m_hz"], np.array(rows))
    return 0


def cmd_crosscorr(args) -> int:
    cfg = _load_config(args)
    gamma_m = dynamics.total_damping(cfg)
    if gamma_m <= 0:
        raise RuntimeError("dynamically unstable configuration")
    grid = response.default_grid(cfg, gamma_m, n_points=args.points,
                                 half_width_linewidths=args.span_linewidths)
    if args.mode == "single":
        spec = crosscorr.cross_spectrum_full(
            grid, cfg, phase_offset_deg=args.phase_offset_deg)
        _write_csv(args.out, _CROSS_HEADER, _complex_rows(grid, spec.values))
    elif args.mode == "sweep-detuning":
        rows = []
        for det_hz in _parse_list(args.detunings_hz):
            cfg_d = replace(cfg, signal=replace(cfg.signal,
                                                detuning=TWO_PI * det_hz))
            spec = crosscorr.cross_spectrum_full(
                grid, cfg_d, phase_offset_deg=args.phase_offset_deg)
            block = _complex_rows(grid, spec.values)
            rows.append(np.column_stack(
                [np.full(grid.size, det_hz), block]))
        _write_csv(args.out, ["detuning_hz"] + _CROSS_HEADER, np.vstack(rows))
    elif args.mode == "sweep-classical":
        rows = []
        for b in _parse_list(args.b_list):
            cfg_b = replace(cfg, signal=replace(cfg.signal,
                                                classical_noise_B=b,
                                                detuning=0.0))
            spec = crosscorr.cross_spectrum_resonant(
                grid, cfg_b, phase_offset_deg=args.phase_offset_deg)
            block = _complex_rows(grid, spec.total)
            rows.append(np.column_stack([np.full(grid.size, b), block]))
        _write_csv(args.out, ["classical_b"] + _CROSS_HEADER, np.vstack(rows))
    else:
        raise ValueError(f"unknown crosscorr mode {args.mode!r}")
    return 0


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args)
    duration = _parse_duration(args.len)
    fs = args.fs if args.fs else montecarlo.min_sample_rate(cfg)
    if fs < montecarlo.min_sample_rate(cfg):
        raise ValueError(f"--fs below the minimum usable rate "
                         f"{montecarlo.min_sample_rate(cfg):.3g} S/s")
    extra = ()
    if args.piezo_psd > 0:
        extra = (montecarlo.NoiseChannel(kind="piezo_drive",
                                         psd_level=args.piezo_psd),)
    manifest = montecarlo.run_campaign(
        cfg, args.records, duration, fs, args.seed, args.out,
        extra_channels=extra, method=args.method)
    print(f"campaign: {len(manifest['records'])} records in {args.out}")
    return 0


def _fit_report(name: str, fit: analysis.FitResult) -> dict:
    return {
        "task": name,
        "center_hz": fit.center / TWO_PI,
        "center_err_hz": fit.center_err / TWO_PI,
        "fwhm_hz": fit.fwhm / TWO_PI,
        "fwhm_err_hz": fit.fwhm_err / TWO_PI,
        "peak": fit.peak,
        "peak_err": fit.peak_err,
        "offset": fit.offset,
        "area": fit.area,
        "area_err": fit.area_err,
        "converged": fit.converged,
        "residual_rms": fit.residual_rms,
    }


def _print_report(report: dict) -> None:
    for key, val in report.items():
        if isinstance(val, float):
            print(f"{key} = {val:.10g}")
        else:
            print(f"{key} = {val}")


def _fit_window(cfg: params.DeviceConfig, linewidths: float) -> tuple[float, float]:
    gamma_m = dynamics.total_damping(cfg)
    wm = cfg.mechanics.omega_m
    return (wm - linewidths * gamma_m, wm + linewidths * gamma_m)


def cmd_analyze(args) -> int:
    dirs = [Path(d) for d in args.records]
    for d in dirs:
        if not (d / "manifest.json").exists():
            raise FileNotFoundError(f"no campaign manifest in {d}")

    def records(d):
        return montecarlo.load_campaign(d)

    def campaign_config(d):
        return params.load_config(d / "config.cfg")

    if args.task == "spectrum":
        ps_s = analysis.power_spectrum(records(dirs[0]), channel="signal",
                                       window=args.window)
        ps_m = analysis.power_spectrum(records(dirs[0]), channel="meter",
                                       window=args.window)
        rows = np.column_stack([ps_s.grid / TWO_PI, ps_s.values, ps_s.stderr,
                                ps_m.values, ps_m.stderr])
        _write_csv(args.out, ["omega_hz", "psd_signal", "se_signal",
                              "psd_meter", "se_meter"], rows)
        print(f"rbw_hz = {ps_s.rbw:.10g}")
        print(f"n_records = {ps_s.n_records}")
        return 0

    if args.task == "fit":
        cfg = campaign_config(dirs[0])
        ps = analysis.power_spectrum(records(dirs[0]), channel=args.channel,
                                     window=args.window)
        fit = analysis.lorentzian_fit(ps.grid, ps.values,
                                      window=_fit_window(cfg, args.fit_window),
                                      stderr=ps.stderr)
        _print_report(_fit_report("fit", fit))
        if args.out:
            lo, hi = _fit_window(cfg, args.fit_window)
            mask = (ps.grid >= lo) & (ps.grid <= hi)
            model = fit.offset + fit.peak * (fit.fwhm / 2) ** 2 / (
                (fit.fwhm / 2) ** 2 + (ps.grid[mask] - fit.center) ** 2)
            rows = np.column_stack([ps.grid[mask] / TWO_PI, ps.values[mask],
                                    model, ps.values[mask] - model])
            _write_csv(args.out, ["omega_hz", "psd", "model", "residual"], rows)
        return 0

    if args.task == "crosscorr":
        cfg = campaign_config(dirs[0])
        xs = analysis.cross_spectrum(records(dirs[0]), window=args.window)
        rows = np.column_stack([_complex_rows(xs.grid, xs.cross),
                                xs.cross_stderr, xs.s_signal, xs.s_meter])
        if args.out:
            _write_csv(args.out, _CROSS_HEADER + ["se", "psd_signal",
                                                  "psd_meter"], rows)
        band = _fit_window(cfg, 1.0)
        mask = (xs.grid >= band[0]) & (xs.grid <= band[1])
        i = np.flatnonzero(mask)[int(np.argmax(np.abs(xs.cross[mask])))]
        c_peak = float(np.abs(xs.cross[i]) ** 2
                       / (xs.s_signal[i] * xs.s_meter[i]))
        # remove the incoherent-noise bias of the squared vector average
        c_unbiased = float((np.abs(xs.cross[i]) ** 2 - xs.cross_stderr[i] ** 2)
                           / (xs.s_signal[i] * xs.s_meter[i]))
        print(f"peak_omega_hz = {xs.grid[i] / TWO_PI:.10g}")
        print(f"c_peak = {c_peak:.10g}")
        print(f"c_peak_unbiased = {c_unbiased:.10g}")
        print(f"n_records = {xs.n_records}")
        print(f"rbw_hz = {xs.rbw:.10g}")
        return 0

    if args.task == "power-sweep":
        if len(dirs) < 4:
            raise ValueError("power-sweep needs at least 4 campaign dirs")
        ns, peaks, gammas = [], [], []
        for d in dirs:
            cfg = campaign_config(d)
            ps = analysis.power_spectrum(records(d), channel="meter",
                                         window=args.window)
            fit = analysis.lorentzian_fit(
                ps.grid, ps.values, window=_fit_window(cfg, args.fit_window),
                stderr=ps.stderr)
            # floor-subtracted relative peak -> displacement units
            peak_z = float(response.invert_meter_spectrum(
                np.array([fit.center]), np.array([fit.peak]), cfg)[0])
            ns.append(cfg.signal.photon_number)
            peaks.append(peak_z)
            gammas.append(fit.fwhm)
        order = np.argsort(ns)
        ns = np.asarray(ns)[order]
        peaks = np.asarray(peaks)[order]
        gammas = np.asarray(gammas)[order]
        corr = analysis.correct_damping(ns, peaks, gammas)
        if corr.warning:
            print(f"warning = {corr.warning}")
        dec = analysis.power_sweep_decomposition(ns, corr.corrected_peaks)
        report = {
            "task": "power-sweep",
            "gamma_at_zero_hz": corr.gamma_at_zero / TWO_PI,
            "thermal_share": dec.shares_at_max[0],
            "rpsn_share": dec.shares_at_max[1],
            "classical_share": dec.shares_at_max[2],
        }
        _print_report(report)
        if args.out:
            rows = np.column_stack([ns, peaks, corr.corrected_peaks,
                                    gammas / TWO_PI])
            _write_csv(args.out, ["n_s", "peak", "corrected_peak",
                                  "gamma_m_hz"], rows)
        return 0

    raise ValueError(f"unknown task {args.task!r}")


def cmd_stability(args) -> int:
    cfg = _load_config(args)
    modeset = dynamics.default_modeset(cfg.mechanics)
    report = dynamics.stability_check(cfg, modeset)
    bist = dynamics.bistability_threshold(modeset, cfg.cavity, cfg.mechanics,
                                          cfg.signal.coupling_g)
    lines = ["mode,omega_hz,relative_G,gamma_net_hz,status"]
    for entry in report:
        lines.append(f"({entry.mode[0]};{entry.mode[1]}),"
                     f"{entry.omega / TWO_PI:.12g},"
                     f"{entry.relative_G:.12g},"
                     f"{entry.gamma_net / TWO_PI:.12g},"
                     f"{'stable' if entry.stable else 'UNSTABLE'}")
    lines.append(f"# bistability_n_critical = {bist.n_critical:.12g}")
    text = "\n".join(lines) + "\n"
    if args.out and args.out != "-":
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if all(e.stable for e in report) else 3


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "optomech"
    import matplotlib.pyplot as plt

    raw = Path(args.input).read_text().strip().splitlines()
    header = raw[0].split(",")
    data = np.array([[float(v) for v in line.split(",")]
                     for line in raw[1:] if not line.startswith("#")])
    fig, ax = plt.subplots(figsize=(6, 4))
    x = data[:, 0]
    for j in range(1, data.shape[1]):
        ax.plot(x, data[:, j], label=header[j], linewidth=1.0)
    if args.logy:
        ax.set_yscale("log")
    ax.set_xlabel(header[0])
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return 0


# ---------------------------------------------------------------------------
# Argument parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optomech",
        description="Two-beam cavity optomechanics: spectra, correlations, "
                    "Monte Carlo synthesis, and analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="analytic displacement spectrum CSV")
    _add_config_flags(p)
    p.add_argument("--ns", type=float, default=None,
                   help="override signal-beam photon number")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--span-linewidths", type=float, default=8.0)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("sweep-power",
                       help="peak spectral density versus signal power")
    _add_config_flags(p)
    p.add_argument("--ns-list", required=True,
                   help="comma-separated signal photon numbers")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep_power)

    p = sub.add_parser("crosscorr", help="photocurrent cross-correlation CSV")
    _add_config_flags(p)
    p.add_argument("--ns", type=float, default=None)
    p.add_argument("--mode", default="single",
                   choices=["single", "sweep-detuning", "sweep-classical"])
    p.add_argument("--detunings-hz",
                   default="-10000,-5000,-2000,0,2000,5000,10000")
    p.add_argument("--b-list", default="0,0.1,0.3,1,3,10")
    p.add_argument("--phase-offset-deg", type=float, default=0.0)
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--span-linewidths", type=float, default=8.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_crosscorr)

    p = sub.add_parser("montecarlo", help="synthesize a photocurrent campaign")
    _add_config_flags(p)
    p.add_argument("--ns", type=float, default=None)
    p.add_argument("--records", type=int, required=True)
    p.add_argument("--len", default="10ms", help="record length, e.g. 20ms")
    p.add_argument("--fs", type=float, default=None,
                   help="sample rate (S/s); default: minimum usable rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--piezo-psd", type=float, default=0.0,
                   help="extra piezo drive PSD on the mechanics")
    p.add_argument("--method", default="exact", choices=["exact", "euler"])
    p.add_argument("--out", required=True, help="campaign directory")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("analyze", help="estimate spectra and fits from records")
    p.add_argument("--records", nargs="+", required=True,
                   help="one or more campaign directories")
    p.add_argument("--task", required=True,
                   choices=["spectrum", "fit", "crosscorr", "power-sweep"])
    p.add_argument("--channel", default="meter",
                   choices=["signal", "meter"])
    p.add_argument("--window", default="rectangular",
                   choices=["rectangular", "hann"])
    p.add_argument("--fit-window", type=float, default=5.0,
                   help="half-width of the Lorentzian fit window in linewidths")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("stability", help="per-mode stability and bistability")
    _add_config_flags(p)
    p.add_argument("--ns", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("plot", help="render a command's CSV as an SVG figure")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--logy", action="store_true")
    p.add_argument("--format", default="svg", choices=["svg"])
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
