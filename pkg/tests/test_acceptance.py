"""Acceptance suite: one test per release criterion, each printing a
PASS line with the measured value so the full gate is auditable from the
pytest -s output."""
import math
from dataclasses import replace

import numpy as np
import pytest

from heraldsim.analysis import (bell_fidelity, concurrence_lower_bound,
                                error_budget, wootters_concurrence,
                                BasisCounts, CorrelationData)
from heraldsim.cli import main as cli_main
from heraldsim.config import load_config
from heraldsim.cqed import (SPIN_BASIS, TWO_PI, CavityParams, EmitterParams,
                            Spin, contrast_bandwidth, cooperativity,
                            optimal_detunings, reflection_amplitude)
from heraldsim.fitting import ScanModel, fit_scan, _get_param
from heraldsim.interferometer import phase_scan
from heraldsim.model import ERROR_SOURCES
from heraldsim.protocol import (herald_probability, entanglement_rate,
                                readout_errors, run_experiment, substream)
from heraldsim.register import (BELL_PSI_PLUS, EchoSequence, LocalErrorModel,
                                TwoQubitState, apply_dephasing, apply_rotation,
                                averaged_herald_channel, heralded_projection,
                                measure_correlations, run_echo_sequence,
                                two_photon_dephasing, PulseSpec)

GHZ = TWO_PI * 1e9


@pytest.fixture(scope="module")
def cfg():
    return load_config(preset="paper_tableS1")


def _report(name: str, detail: str):
    print(f"PASS {name}: {detail}")


def test_criterion_01_cooperativity_arithmetic():
    c_a = cooperativity(4.1 * GHZ, 14.5 * GHZ, 0.080 * GHZ)
    c_b = cooperativity(2.9 * GHZ, 14.5 * GHZ, 0.097 * GHZ)
    assert abs(c_a - 14.5) <= 0.2
    assert abs(c_b - 5.98) <= 0.2
    # documented label swap: the published table pairs these values with the
    # opposite emitters; they bracket the main-text 14.4(1) and 6.1(1)
    _report("criterion 1", f"C = {c_a:.2f} (14.5 +- 0.2), {c_b:.2f} (5.98 +- 0.2)")


def test_criterion_02_zero_reflection_closure():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        kappa_w = rng.uniform(1.0, 20.0) * GHZ
        kappa_l = rng.uniform(0.0, 0.95) * kappa_w
        gamma = rng.uniform(0.01, 0.2) * GHZ
        g_min = math.sqrt(gamma * (kappa_w - kappa_l))
        g = g_min * rng.uniform(1.05, 5.0)
        det = optimal_detunings(g, gamma, kappa_w, kappa_l)
        # frequencies relative to the cavity: the formula depends only on
        # detunings and absolute THz offsets would waste double precision
        cav = CavityParams(0.0, kappa_w, kappa_l)
        em = EmitterParams(omega_up=det.delta + 3 * GHZ,
                           omega_down=det.delta, g=g, gamma=gamma)
        r = abs(reflection_amplitude(det.delta_c, cav, [(em, Spin.DOWN)]))
        worst = max(worst, r)
    assert worst < 1e-9
    _report("criterion 2", f"worst |R| over 100 overcoupled sets = {worst:.2e}")


def test_criterion_03_contrast_bandwidth():
    kappa_w = 9.0 * GHZ
    exact = contrast_bandwidth(kappa_w, 10.0)
    assert exact == pytest.approx(2.0 * kappa_w / 3.0, rel=1e-14)

    def power(delta):
        return abs(1.0 - 2.0 * kappa_w / (2.0 * kappa_w + 1j * delta)) ** 2

    lo, hi = 1e-6 * kappa_w, 1e4 * kappa_w
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if power(mid) < 0.1:
            lo = mid
        else:
            hi = mid
    assert exact == pytest.approx(mid, rel=1e-9)
    _report("criterion 3", f"delta_c(contrast 10) = (2/3) kappa_w, "
                           f"root-find deviation {abs(exact / mid - 1):.1e}")


def test_criterion_04_phase_scan_shape(cfg):
    grid = np.linspace(0.0, TWO_PI, 1440, endpoint=False)
    scan_cfg = replace(cfg.sideband, phi_c=cfg.model.phi_c_scan)
    scan = phase_scan(SPIN_BASIS, grid, scan_cfg, cfg.system,
                      order=cfg.model.quad_order)
    uu = SPIN_BASIS[0]
    i0 = int(np.argmin(scan.mean_t2[uu]))
    rat = {s: scan.mean_t2[s][i0] / scan.mean_t2[uu][i0] for s in SPIN_BASIS}
    t_ud, t_du, t_dd = rat[SPIN_BASIS[1]], rat[SPIN_BASIS[2]], rat[SPIN_BASIS[3]]
    # within a factor of two of 1 : 14 : 22 : 1.2 componentwise
    assert 14 / 2 <= t_ud <= 14 * 2
    assert 22 / 2 <= t_du <= 22 * 2
    assert 1.2 / 2 <= t_dd <= 1.2 * 2
    # ordering as published: odd-parity states highest, up-up lowest
    assert min(t_ud, t_du) > t_dd > 1.0
    _report("criterion 4", f"ratios 1 : {t_ud:.1f} : {t_du:.1f} : {t_dd:.2f}")


def test_criterion_05_heralded_model_fidelity(cfg):
    pred = cfg.model.predict()
    assert cfg.model.n_mw_phases == 24
    assert 0.660 <= pred.fidelity <= 0.680
    assert np.all(pred.per_phase >= 0.643) and np.all(pred.per_phase <= 0.695)
    _report("criterion 5", f"<F> = {pred.fidelity:.4f} "
                           f"(range {pred.per_phase.min():.4f}"
                           f"..{pred.per_phase.max():.4f})")


BUDGET_BANDS = {
    # published value, systematic band, plus one percentage point
    "decoherence": (0.107 - 0.008 - 0.01, 0.107 + 0.005 + 0.01),
    "microwave": (max(0.015 - 0.013 - 0.01, -1e-9), 0.015 + 0.016 + 0.01),
    "two_photon": (0.053 - 0.002 - 0.01, 0.053 + 0.002 + 0.01),
    "detuning": (0.075 - 0.006 - 0.01, 0.075 + 0.006 + 0.01),
    "phase": (0.074 - 0.009 - 0.01, 0.074 + 0.009 + 0.01),
    "carrier": (max(0.016 - 0.006 - 0.01, 0.0), 0.016 + 0.006 + 0.01),
    "diffusion": (max(0.003 - 0.001 - 0.01, 0.0), 0.003 + 0.001 + 0.01),
    "contrast": (0.0, 0.007 + 0.01),
}


def test_criterion_06_error_budget(cfg):
    budget = error_budget(cfg.model, total_observed=cfg.total_observed)
    lines = []
    for entry in budget.entries:
        lo, hi = BUDGET_BANDS[entry.source]
        assert lo <= entry.marginal <= hi, \
            f"{entry.source}: {entry.marginal:.4f} outside [{lo:.4f}, {hi:.4f}]"
        lines.append(f"{entry.source}={100 * entry.marginal:.1f}%")
    total = budget.total_expected
    assert 0.330 - 0.017 - 0.01 <= total <= 0.330 + 0.014 + 0.01
    # the discrepancy between the marginal sum and the total is reported,
    # never asserted equal
    assert "need not equal the total" in budget.summary()
    _report("criterion 6", f"total={100 * total:.1f}%  " + " ".join(lines))


def test_criterion_07_ideal_protocol_sanity():
    t = 0.38
    t_map = np.array([0.0, t, -t, 0.0], dtype=complex)
    channel = averaged_herald_channel(np.outer(t_map, t_map.conj()))
    final, weight = run_echo_sequence(TwoQubitState.computational("ud"),
                                      EchoSequence(basis="ZZ"),
                                      LocalErrorModel(), probe=channel)
    fid = final.fidelity_with_ket(BELL_PSI_PLUS)
    conc = wootters_concurrence(final)
    assert abs(fid - 1.0) < 1e-10
    assert abs(conc - 1.0) < 1e-10
    _report("criterion 7", f"F - 1 = {fid - 1:.1e}, C - 1 = {conc - 1:.1e}")


def test_criterion_08_readout_statistics():
    closed_a = readout_errors(1.9, 17.7, 7)
    closed_b = readout_errors(1.7, 17.0, 7)
    assert closed_a.identification_fidelity == pytest.approx(0.9989, abs=2e-4)
    assert closed_b.identification_fidelity == pytest.approx(0.9987, abs=2e-4)
    rng = substream(808, "acceptance-readout")
    n = 10**6
    for means, closed in (((1.9, 17.7), closed_a), ((1.7, 17.0), closed_b)):
        dark = rng.poisson(means[0], size=n)
        bright = rng.poisson(means[1], size=n)
        mc = 0.25 * ((dark > 7).mean() + (bright <= 7).mean())
        p = closed.identification_error
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(mc - p) < 3 * sigma + 2e-6
    _report("criterion 8",
            f"identification {100 * closed_a.identification_fidelity:.2f}% / "
            f"{100 * closed_b.identification_fidelity:.2f}%, MC within 3 sigma")


def test_criterion_09_two_photon_channel():
    n_mean = 0.106
    probe = TwoQubitState.from_ket([1, 0, 1, 0])
    out = two_photon_dephasing(probe, n_mean)
    scale = (out.rho[0, 2] / probe.rho[0, 2]).real
    p = 0.5 * (1.0 - scale)
    assert p == pytest.approx(0.053, abs=1e-15)
    _report("criterion 9", f"per-qubit dephasing probability = {p:.3f} exactly")


def test_criterion_10_fit_round_trip(cfg):
    from heraldsim.cli import _synthetic_scans

    model0 = ScanModel(system=cfg.system, scale=2e5, background=2.5e3,
                       quad_order=cfg.fit_quad_order)
    free = ("kappa_w", "kappa_l", "g_a", "gamma_a", "sigma_a",
            "g_b", "gamma_b", "sigma_b", "scale", "background")
    targets = free[:8]
    successes = 0
    worst_overall = 0.0
    for seed in range(20):
        datasets, preparations, _ = _synthetic_scans(cfg, model0, seed)
        res = fit_scan(datasets, model0, free, prepared=preparations,
                       options=cfg.fit_options)
        errs = [abs(res.estimates[n] / _get_param(model0, n) - 1.0)
                for n in targets]
        worst_overall = max(worst_overall, max(errs))
        successes += all(e <= 0.05 for e in errs)
    assert successes >= 18
    _report("criterion 10", f"{successes}/20 seeds within 5% "
                            f"(worst deviation {100 * worst_overall:.1f}%)")


def test_criterion_11_density_matrix_contracts():
    rng = np.random.default_rng(1111)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    state = TwoQubitState(m @ m.conj().T / np.trace(m @ m.conj().T).real)
    worst_proj = 0.0
    for i in range(10_000):
        op = rng.integers(4)
        if op == 0:
            state = apply_rotation(state, PulseSpec(
                "a" if rng.random() < 0.5 else "b",
                ("x", "y", "-x", "-y")[rng.integers(4)],
                rng.uniform(0, 2 * math.pi), duration=20e-9,
                rabi_error=rng.uniform(-0.1, 0.1),
                detuning=rng.uniform(-5e7, 5e7)))
        elif op == 1:
            state = apply_dephasing(state, "a" if rng.random() < 0.5 else "b",
                                    rng.uniform(0, 1))
        elif op == 2:
            state = two_photon_dephasing(state, rng.uniform(0, 0.4))
        else:
            t = rng.normal(size=4) + 1j * rng.normal(size=4)
            mm = np.diag(t)
            expected = mm @ state.rho @ mm.conj().T
            w = np.trace(expected).real
            if w <= 1e-12:
                continue
            out, weight = heralded_projection(state, t)
            worst_proj = max(worst_proj,
                             float(np.max(np.abs(out.rho - expected / w))))
            state = out
        state.validate()  # trace, hermiticity, positivity within tolerances
    assert worst_proj < 1e-12
    _report("criterion 11", f"10^4 compositions valid; projection vs dense "
                            f"oracle max dev {worst_proj:.1e}")


def test_criterion_12_concurrence():
    rng = np.random.default_rng(1212)
    for _ in range(10_000):
        m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = m @ m.conj().T
        state = TwoQubitState(rho / np.trace(rho).real)
        data = CorrelationData(
            xx=BasisCounts(measure_correlations(state, "XX")),
            yy=BasisCounts(measure_correlations(state, "YY")),
            zz=BasisCounts(measure_correlations(state, "ZZ")))
        assert concurrence_lower_bound(data) <= wootters_concurrence(state) + 1e-10
    bell = TwoQubitState.bell_psi_plus().rho
    werner_dev = 0.0
    for p in np.linspace(0, 1, 11):
        state = TwoQubitState(p * bell + (1 - p) * np.eye(4) / 4)
        expect = max(0.0, (3 * p - 1) / 2)
        werner_dev = max(werner_dev,
                         abs(wootters_concurrence(state) - expect))
    assert werner_dev < 1e-10
    _report("criterion 12", f"bound <= exact on 10^4 states; Werner closed "
                            f"form dev {werner_dev:.1e}")


def test_criterion_13_herald_economics(cfg):
    p = herald_probability(cfg.model, cfg.protocol)
    rate = entanglement_rate(cfg.model, cfg.protocol)
    assert 4e-4 <= p <= 8e-4
    # the repetition period is inferred, not published; the rate band mirrors
    # the probability band around the quoted 0.9 Hz
    assert 0.9 * (4 / 6) <= rate <= 0.9 * (8 / 6)
    _report("criterion 13", f"p_herald = {p:.2e}/attempt, rate = {rate:.2f} Hz "
                            f"(inference-dependent rep period)")


def test_criterion_14_determinism_across_threads(tmp_path):
    digests = []
    for threads in (1, 2, 8):
        out = tmp_path / f"t{threads}"
        rc = cli_main(["simulate", "--seed", "31", "--trials", "2400",
                       "--threads", str(threads), "--out", str(out)])
        assert rc == 0
        digests.append((out / "dataset.csv").read_bytes())
    assert digests[0] == digests[1] == digests[2]
    _report("criterion 14", "byte-identical datasets for 1/2/8 worker threads")
