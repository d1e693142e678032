"""Command line interface: scenario execution and reproducible CSV emission.

    heraldsim SCENARIO [--config PATH | --preset NAME] [--seed N] [--out DIR]
              [--threads N] [--set key=value]... [--plot] [scenario options]

Scenarios: fit-scan, phase-scan, simulate, correlations, error-budget,
detuning-design.  Every run writes its CSV products plus a manifest.json
recording the configuration hash, seed, code version and output checksums.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import BUDGET_ROWS, CorrelationData, bell_fidelity, \
    concurrence_lower_bound, error_budget
from .cqed import SPIN_BASIS, TWO_PI, DomainError, contrast_bandwidth, \
    optimal_detunings
from .config import ConfigError, FullConfig, load_config
from .fitting import FitNonConvergence, FitOptions, RankDeficiencyError, ScanModel, \
    fit_scan, shot_noise_weights, simulate_scan
from .interferometer import phase_scan
from .model import BASES
from .protocol import (
    correlations_from_dataset,
    entanglement_rate,
    herald_probability,
    postselect,
    run_experiment,
    simulate_jump_trace,
    substream,
)

SCENARIOS = ("fit-scan", "phase-scan", "simulate", "correlations",
             "error-budget", "detuning-design")
STOCHASTIC = {"fit-scan", "simulate"}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heraldsim",
        description="Heralded-entanglement simulator and analysis toolkit")
    parser.add_argument("scenario", choices=SCENARIOS)
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--config", type=Path, help="configuration file")
    group.add_argument("--preset", default=None,
                       help="named preset (e.g. paper_tableS1)")
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (required for stochastic scenarios)")
    parser.add_argument("--out", type=Path, default=Path("."),
                        help="output directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="configuration override, repeatable")
    parser.add_argument("--plot", action="store_true",
                        help="also render SVG plots (requires matplotlib)")
    parser.add_argument("--trials", type=int, default=20000,
                        help="simulate: number of Monte Carlo trials")
    parser.add_argument("--mode", choices=("trials", "jumps"), default="trials",
                        help="simulate: trial stream or continuous-probe jump trace")
    parser.add_argument("--input", type=Path, default=None,
                        help="fit-scan: measured scan CSV (freq_hz, counts); "
                             "synthetic data generated when omitted")
    parser.add_argument("--phase-points", type=int, default=181,
                        help="phase-scan: number of grid points")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None and args.preset is None:
            args.preset = "paper_tableS1"
        if args.scenario in STOCHASTIC and args.seed is None:
            raise ConfigError(f"scenario {args.scenario} requires --seed")
        cfg = load_config(path=args.config, preset=args.preset, overrides=args.set)
    except ConfigError as exc:
        _error_record(args, f"configuration error: {exc}")
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else 0
    try:
        out_files = _dispatch(args, cfg, seed)
    except (ConfigError, DomainError) as exc:
        _error_record(args, f"configuration error: {exc}")
        return EXIT_CONFIG
    except (FitNonConvergence, RankDeficiencyError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        _error_record(args, f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    _write_manifest(args, cfg, seed, out_files)
    return EXIT_OK


def _dispatch(args, cfg: FullConfig, seed: int) -> list[Path]:
    args.out.mkdir(parents=True, exist_ok=True)
    runner = {
        "phase-scan": _run_phase_scan,
        "correlations": _run_correlations,
        "error-budget": _run_error_budget,
        "detuning-design": _run_detuning_design,
        "simulate": _run_simulate,
        "fit-scan": _run_fit_scan,
    }[args.scenario]
    return runner(args, cfg, seed)


# --- CSV helpers -------------------------------------------------------------

def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(args, cfg: FullConfig, seed: int, files: list[Path]):
    manifest = {
        "scenario": args.scenario,
        "config_hash": cfg.hash(),
        "seed": seed,
        "threads": args.threads,
        "version": __version__,
        "outputs": {f.name: _sha256(f) for f in files},
    }
    path = args.out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _error_record(args, message: str):
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "error.json").write_text(
            json.dumps({"scenario": args.scenario, "error": message}) + "\n")
    except OSError:
        pass
    print(message, file=sys.stderr)


# --- scenarios ---------------------------------------------------------------

def _run_phase_scan(args, cfg: FullConfig, seed: int) -> list[Path]:
    from dataclasses import replace

    grid = np.linspace(0.0, TWO_PI, args.phase_points)
    scan_cfg = replace(cfg.sideband, phi_c=cfg.model.phi_c_scan)
    result = phase_scan(SPIN_BASIS, grid, scan_cfg, cfg.system,
                        order=cfg.model.quad_order)
    path = _write_csv(args.out / "phase_scan.csv",
                      ("phase_rad", "state", "mean_T2", "var_T2"), result.rows())
    files = [path]
    if args.plot:
        files.append(_plot_phase_scan(args.out, result))
    return files


def _run_correlations(args, cfg: FullConfig, seed: int) -> list[Path]:
    probs, weight = cfg.model.predict_correlations()
    rows = []
    for basis in BASES:
        labels = ("uu", "ud", "du", "dd") if basis == "ZZ" else ("++", "+-", "-+", "--")
        for lab, p in zip(labels, probs[basis]):
            rows.append((basis, lab, float(p)))
    path = _write_csv(args.out / "correlations.csv",
                      ("basis", "outcome", "probability"), rows)
    data = CorrelationData.from_probs(probs)
    fid, err = bell_fidelity(data)
    summary = _write_csv(args.out / "correlations_summary.csv",
                         ("quantity", "value"),
                         [("fidelity", fid),
                          ("concurrence_lower_bound", concurrence_lower_bound(data)),
                          ("herald_weight", weight)])
    return [path, summary]


def _run_error_budget(args, cfg: FullConfig, seed: int) -> list[Path]:
    budget = error_budget(cfg.model, total_observed=cfg.total_observed)
    rows = [(e.source, e.label, e.marginal, e.spread) for e in budget.entries]
    rows.append(("total_expected", "Total expected", budget.total_expected,
                 budget.fidelity_spread))
    rows.append(("total_observed", "Total observed (reference)",
                 budget.total_observed, 0.0))
    rows.append(("sum_of_marginals", "Sum of marginals (correlated)",
                 budget.sum_of_marginals(), 0.0))
    path = _write_csv(args.out / "error_budget.csv",
                      ("source", "label", "marginal", "systematic_spread"), rows)
    (args.out / "error_budget.txt").write_text(budget.summary() + "\n")
    return [path, args.out / "error_budget.txt"]


def _run_detuning_design(args, cfg: FullConfig, seed: int) -> list[Path]:
    rows = []
    cav = cfg.system.cavity
    for name, em in (("a", cfg.system.emitter_a), ("b", cfg.system.emitter_b)):
        det = optimal_detunings(em.g, em.gamma, cav.kappa_w, cav.kappa_l)
        rows.append((name, det.delta_a / TWO_PI, det.delta_c / TWO_PI,
                     det.delta / TWO_PI, det.delta_approx / TWO_PI))
    path = _write_csv(args.out / "detuning_design.csv",
                      ("emitter", "delta_a_hz", "delta_c_hz", "delta_hz",
                       "delta_approx_hz"), rows)
    bw_rows = [(c, contrast_bandwidth(cav.kappa_w, c) / TWO_PI)
               for c in (2.0, 5.0, 10.0, 20.0)]
    path2 = _write_csv(args.out / "contrast_bandwidth.csv",
                       ("contrast", "max_detuning_hz"), bw_rows)
    for row in rows:
        print("emitter %s: delta_a=%.4g GHz delta_c=%.4g GHz delta=%.4g GHz "
              "(approx %.4g GHz)" % (row[0], row[1] / 1e9, row[2] / 1e9,
                                     row[3] / 1e9, row[4] / 1e9))
    return [path, path2]


def _run_simulate(args, cfg: FullConfig, seed: int) -> list[Path]:
    if args.mode == "jumps":
        trace = simulate_jump_trace(seed, args.trials, cfg.protocol.herald_window,
                                    cfg.model, cfg.protocol)
        path = _write_csv(args.out / "jump_trace.csv",
                          ("time_s", "counts", "parity"),
                          [(float(t), int(c), int(p)) for t, c, p in trace])
        return [path]
    dataset = run_experiment(seed, args.trials, "alternating", cfg.model,
                             cfg.protocol, threads=args.threads)
    header_meta = f"# config_hash={cfg.hash()} seed={seed}\n"
    path = args.out / "dataset.csv"
    with path.open("w", newline="") as fh:
        fh.write(header_meta)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("trial", "basis", "heralded", "counts_a", "counts_b",
                         "readout_a", "readout_b", "init_ok"))
        for t in dataset:
            writer.writerow((t.trial, t.basis, int(t.heralded), t.counts_a,
                             t.counts_b, t.readout_a, t.readout_b, int(t.init_ok)))
    selected = postselect(dataset, cfg.postselect_window, cfg.postselect_max_a,
                          cfg.postselect_max_b) \
        if _enough_for_postselect(dataset, cfg) else dataset
    data = correlations_from_dataset(selected)
    fid, err = bell_fidelity(data)
    stats = _write_csv(args.out / "simulate_summary.csv",
                       ("quantity", "value"),
                       [("n_trials", len(dataset)),
                        ("n_heralded", sum(t.heralded for t in dataset)),
                        ("herald_probability_analytic",
                         herald_probability(cfg.model, cfg.protocol)),
                        ("entanglement_rate_hz",
                         entanglement_rate(cfg.model, cfg.protocol)),
                        ("heralded_fidelity", fid),
                        ("heralded_fidelity_err", err)])
    return [path, stats]


def _enough_for_postselect(dataset, cfg: FullConfig) -> bool:
    n_xx = sum(1 for t in dataset if t.basis == "XX" and not t.heralded)
    return n_xx >= cfg.postselect_window


def _run_fit_scan(args, cfg: FullConfig, seed: int) -> list[Path]:
    # count scale of the synthetic scans: dense averaged scans; high enough
    # that the diffusion widths are identifiable at the few-percent level
    model0 = ScanModel(system=cfg.system, scale=2e5, background=2.5e3,
                       quad_order=cfg.fit_quad_order)
    if args.input is not None:
        freqs_hz, counts = _read_scan_csv(args.input)
        freqs = TWO_PI * freqs_hz
        datasets = (freqs, counts)
        preparations = "unpolarized"
    else:
        datasets, preparations, truth = _synthetic_scans(cfg, model0, seed)
    free = ("kappa_w", "kappa_l", "g_a", "gamma_a", "sigma_a",
            "g_b", "gamma_b", "sigma_b", "scale", "background")
    result = fit_scan(datasets, model0, free, prepared=preparations,
                      options=cfg.fit_options)
    rows = [(name, result.estimates[name] / TWO_PI if _is_freq(name)
             else result.estimates[name],
             result.errors.get(name, 0.0) / TWO_PI if _is_freq(name)
             else result.errors.get(name, 0.0),
             "free" if name in result.free else "fixed")
            for name in result.estimates]
    path = _write_csv(args.out / "fit_result.csv",
                      ("parameter", "value", "stderr", "status"), rows)
    report = [
        f"residual norm     : {result.residual_norm:.6g}",
        f"iterations        : {result.iterations}",
        f"final gradient    : {result.grad_norm:.3e}",
        f"converged         : {result.converged}",
    ]
    (args.out / "fit_report.txt").write_text("\n".join(report) + "\n")
    return [path, args.out / "fit_report.txt"]


def _is_freq(name: str) -> bool:
    return name.split("_")[0] in ("kappa", "g", "gamma", "sigma", "omega")


def _read_scan_csv(path: Path):
    freqs, counts = [], []
    with path.open() as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "freq_hz":
                continue
            freqs.append(float(row[0]))
            counts.append(float(row[1]))
    return np.asarray(freqs), np.asarray(counts)


def _synthetic_scans(cfg: FullConfig, model0: ScanModel, seed: int):
    """Broad unpolarized scan plus one spin-initialized narrow scan across
    each emitter's scattering feature, as in the calibration procedure."""
    from .cqed import Spin, SpinConfig

    cav = cfg.system.cavity
    rng = substream(seed, "fit-scan")
    broad = np.linspace(cav.omega_c - TWO_PI * 25e9, cav.omega_c + TWO_PI * 12e9, 600)
    down_a = cfg.system.emitter_a.omega_down
    down_b = cfg.system.emitter_b.omega_down
    narrow_a = np.linspace(down_a - TWO_PI * 2.5e9, down_a + TWO_PI * 1.2e9, 500)
    narrow_b = np.linspace(down_b - TWO_PI * 2.0e9, down_b + TWO_PI * 1.2e9, 500)
    ws = [broad, narrow_a, narrow_b]
    preparations = ["unpolarized",
                    SpinConfig(Spin.DOWN, Spin.UP),
                    SpinConfig(Spin.UP, Spin.DOWN)]
    datasets = []
    for w, prep in zip(ws, preparations):
        expected = simulate_scan(model0, w, prep)
        counts = rng.poisson(np.clip(expected, 0.0, None)).astype(float)
        datasets.append((w, counts, shot_noise_weights(counts)))
    return datasets, preparations, model0


def _plot_phase_scan(out: Path, result) -> Path:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for spin in result.states:
        mean = result.mean_t2[spin]
        band = np.sqrt(result.var_t2[spin])
        ax.plot(result.phases, mean, label=str(spin))
        ax.fill_between(result.phases, mean - band, mean + band, alpha=0.2)
    ax.set_xlabel("interferometer phase (rad)")
    ax.set_ylabel("|T|^2 (arb.)")
    ax.set_yscale("log")
    ax.legend()
    path = out / "phase_scan.svg"
    fig.savefig(path)
    plt.close(fig)
    return path


if __name__ == "__main__":
    sys.exit(main())
