"""Monte Carlo simulation of the full experimental sequence.

Each trial: feedback initialization from the previous readout, interleaved
echo with the heralding probe, Poisson photon-count heralding through the
efficiency chain, basis-selected threshold readout with cyclicity-limited
back-action.  Randomness flows from one seed through counter-based Philox
substreams keyed by (seed, stream tag, trial index), so results are
bit-identical for any worker partitioning.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cqed import DomainError, Spin, SPIN_BASIS
from .interferometer import transmission_amplitude
from .model import EntangleModel
from .register import TwoQubitState

BASIS_LABELS = ("uu", "ud", "du", "dd")

#: Default alternating basis schedule: an XX block between every YY and ZZ.
ALTERNATING_SCHEDULE = ("YY", "XX", "ZZ", "XX")


@dataclass(frozen=True)
class ProtocolConfig:
    """Counting, efficiency and sequencing constants of the experiment."""

    n_mean_at_cavity: float = 0.106
    eta_wg: float = 0.85
    eta_cav: float = 0.09
    eta_det: float = 0.523
    herald_calibration: float = 1.0
    readout_means_a: tuple[float, float] = (1.9, 17.7)   # (dark, bright)
    readout_means_b: tuple[float, float] = (1.7, 17.0)
    readout_threshold: int = 7
    init_threshold: int = 7
    photons_per_flip_a: float = 3.8e3
    photons_per_flip_b: float = 9.2e3
    readout_path_efficiency: float = 0.30
    spin_flip_per_cycle: float = 2.3e-4
    dark_counts: float = 0.0
    trial_block: int = 200
    rep_period: float = 6.7e-4
    herald_window: float = 200e-9
    ionization_rate: float = 0.0     # per-trial probability that emitter A ionizes
    ionization_reset: int = 200      # trials until a green reset revives it

    def __post_init__(self):
        for name in ("eta_wg", "eta_cav", "eta_det", "readout_path_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must be in [0, 1], got {v}")
        if self.readout_threshold < 0 or self.init_threshold < 0:
            raise DomainError("thresholds must be >= 0")
        for name in ("n_mean_at_cavity", "photons_per_flip_a", "photons_per_flip_b",
                     "dark_counts", "rep_period", "herald_window"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")

    def herald_efficiency(self) -> float:
        return self.eta_cav * self.eta_det


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    basis: str
    heralded: bool
    counts_a: int
    counts_b: int
    readout_a: str   # "up" or "down" from threshold comparison
    readout_b: str
    init_ok: bool


# --- reproducible substreams -------------------------------------------------

def _stream_key(seed: int, tag: str) -> list[int]:
    digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
    return [seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest, "little")]


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Counter-based Philox substream keyed by (seed, tag, index)."""
    bits = np.random.Philox(counter=[index, 0, 0, 0], key=_stream_key(seed, tag))
    return np.random.Generator(bits)


# --- Poisson readout closed forms ---------------------------------------------

def poisson_cdf(k: int, mean: float) -> float:
    """P(X <= k) for X ~ Poisson(mean), by direct term summation."""
    if mean < 0:
        raise DomainError(f"Poisson mean must be >= 0, got {mean}")
    if k < 0:
        return 0.0
    if mean == 0.0:
        return 1.0
    term = math.exp(-mean)
    total = term
    for i in range(1, k + 1):
        term *= mean / i
        total += term
    return min(total, 1.0)


@dataclass(frozen=True)
class ReadoutErrors:
    """Threshold-discrimination statistics for one emitter.

    p_dark_as_bright and p_bright_as_dark are the conditional misread
    probabilities; identification_fidelity is the probability of correctly
    identifying the state reported as the mean of the two joint misread
    probabilities for an unpolarized (half dark, half bright) input:
    1 - (1/2 p_dark_as_bright + 1/2 p_bright_as_dark) / 2.
    """

    p_dark_as_bright: float
    p_bright_as_dark: float

    @property
    def identification_fidelity(self) -> float:
        return 1.0 - 0.25 * (self.p_dark_as_bright + self.p_bright_as_dark)

    @property
    def identification_error(self) -> float:
        return 1.0 - self.identification_fidelity


def readout_errors(mean_dark: float, mean_bright: float, threshold: int) -> ReadoutErrors:
    """Closed-form misread probabilities: counts > threshold read as bright."""
    return ReadoutErrors(
        p_dark_as_bright=1.0 - poisson_cdf(threshold, mean_dark),
        p_bright_as_dark=poisson_cdf(threshold, mean_bright),
    )


# --- analytic herald economics -------------------------------------------------

def herald_probability(model: EntangleModel, config: ProtocolConfig,
                       state: TwoQubitState | None = None) -> float:
    """Analytic herald probability per attempt.

    The detection mean is calibration * success_weight * n_mean * eta_cav *
    eta_det, with the success weight evaluated on the given state (default:
    the equal mixture of the four Bell states, i.e. the maximally mixed
    state used for the photon-number calibration).
    """
    if state is None:
        state = TwoQubitState.maximally_mixed()
    tt = model.herald_tt(model.dphi_entangle)
    weight = float(np.real(np.einsum("kk,kk->", tt, state.rho)))
    mean = (config.herald_calibration * weight * config.n_mean_at_cavity
            * config.herald_efficiency()) + config.dark_counts
    return 1.0 - math.exp(-mean)


def entanglement_rate(model: EntangleModel, config: ProtocolConfig) -> float:
    """Heralds per second at the configured repetition period."""
    return herald_probability(model, config) / config.rep_period


# --- trial machinery -----------------------------------------------------------

_SPIN_LABEL = {Spin.UP: "up", Spin.DOWN: "down"}


def _sample_counts(rng, spin: Spin, means: tuple[float, float]) -> int:
    mean = means[1] if spin == Spin.UP else means[0]
    return int(rng.poisson(mean))


def _flip_from_backaction(rng, counts: int, photons_per_flip: float,
                          path_eff: float) -> bool:
    if photons_per_flip <= 0 or path_eff <= 0:
        return False
    reflected = counts / path_eff
    return bool(rng.random() < min(reflected / photons_per_flip, 1.0))


@dataclass
class _TrialState:
    """Mutable per-worker bookkeeping carried between consecutive trials."""

    spin_a: Spin = Spin.DOWN
    spin_b: Spin = Spin.UP
    prev_counts_a: int | None = None
    prev_counts_b: int | None = None
    ionized_until: int = -1


def initialize_with_feedback(rng, trial_state: _TrialState,
                             config: ProtocolConfig) -> bool:
    """Conditional pi pulses from the previous readout, with back-action.

    Targets |up, down>: a pi pulse is applied to A when its counts fall
    below the threshold and to B when its counts exceed it.  Readout photons
    flip each spin with probability (reflected photons)/r.  Returns whether
    the register actually reached the target state.
    """
    if trial_state.prev_counts_a is None:
        counts_a = _sample_counts(rng, trial_state.spin_a, config.readout_means_a)
        counts_b = _sample_counts(rng, trial_state.spin_b, config.readout_means_b)
    else:
        counts_a = trial_state.prev_counts_a
        counts_b = trial_state.prev_counts_b
    # decide the pulses from the counts, then account for measurement back-action
    flip_a = counts_a <= config.init_threshold      # A targets the bright state
    flip_b = counts_b > config.init_threshold       # B targets the dark state
    if trial_state.prev_counts_a is None:
        # dedicated initialization readout scatters photons off both emitters
        if _flip_from_backaction(rng, counts_a, config.photons_per_flip_a,
                                 config.readout_path_efficiency):
            trial_state.spin_a = Spin.DOWN if trial_state.spin_a == Spin.UP else Spin.UP
        if _flip_from_backaction(rng, counts_b, config.photons_per_flip_b,
                                 config.readout_path_efficiency):
            trial_state.spin_b = Spin.DOWN if trial_state.spin_b == Spin.UP else Spin.UP
    if flip_a:
        trial_state.spin_a = Spin.DOWN if trial_state.spin_a == Spin.UP else Spin.UP
    if flip_b:
        trial_state.spin_b = Spin.DOWN if trial_state.spin_b == Spin.UP else Spin.UP
    return trial_state.spin_a == Spin.UP and trial_state.spin_b == Spin.DOWN


def herald_sample(rng, success_weight: float, config: ProtocolConfig) -> tuple[bool, int]:
    """Sample the heralding detector: (detected, extra undetected photons).

    Detection is Poisson with mean calibration * weight * n_mean * eta_cav *
    eta_det (plus dark counts); a herald is one or more counts.
    """
    if success_weight < 0:
        raise DomainError(f"success weight must be >= 0, got {success_weight}")
    mean = (config.herald_calibration * success_weight * config.n_mean_at_cavity
            * config.herald_efficiency()) + config.dark_counts
    detected = int(rng.poisson(mean))
    extra = int(rng.poisson(config.n_mean_at_cavity)) if detected >= 1 else 0
    return detected >= 1, extra


class _TrialEngine:
    """Precomputed sequence operators shared by all trials (read-only)."""

    def __init__(self, model: EntangleModel, config: ProtocolConfig):
        self.model = model
        self.config = config
        self.sig_a = model.sigma_entangle_a if model.sigma_entangle_a is not None \
            else model.system.emitter_a.sigma
        self.sig_b = model.sigma_entangle_b if model.sigma_entangle_b is not None \
            else model.system.emitter_b.sigma
        self.ops = {}
        for basis in ("XX", "YY", "ZZ"):
            seq = model._sequence(basis, 0.0, model.crosstalk)
            self.ops[basis] = (
                self._compose(seq.opening_pulses(model.errors)),
                self._compose(seq.refocusing_pulses(model.errors)),
                self._compose(seq.closing_pulses(model.errors)),
            )
        self.z_a = np.diag([1.0 + 0j, 1.0, -1.0, -1.0])
        self.z_b = np.diag([1.0 + 0j, -1.0, 1.0, -1.0])
        # flattened (spin, frequency) arrays for one-shot reflection evaluation
        sba = model.sideband.omega_carrier - model.sideband.omega_mw
        sbb = model.sideband.omega_carrier + model.sideband.omega_mw
        car = model.sideband.omega_carrier
        ea, eb = model.system.emitter_a, model.system.emitter_b
        freqs, wa, wb = [], [], []
        for s in SPIN_BASIS:
            for f in (sba, sbb, car):
                freqs.append(f)
                wa.append(ea.omega(s.spin_a))
                wb.append(eb.omega(s.spin_b))
        self._freqs = np.array(freqs)
        self._wa = np.array(wa)
        self._wb = np.array(wb)
        dphi = model.dphi_entangle
        cs, cc = model.sideband.c_sideband, model.sideband.c_carrier
        self._phase = np.tile([cs * np.exp(-0.5j * dphi),
                               cs * np.exp(+0.5j * dphi),
                               cc * np.exp(1j * model.sideband.phi_c)], 4)

    @staticmethod
    def _compose(pulses) -> np.ndarray:
        from .register import rotation_unitary, _embed

        u = np.eye(4, dtype=complex)
        for pulse in pulses:
            u = _embed(rotation_unitary(pulse), pulse.target) @ u
        return u

    def dephase_half(self, rho: np.ndarray) -> np.ndarray:
        pa = 0.5 * self.model.errors.dephasing_a
        pb = 0.5 * self.model.errors.dephasing_b
        if pa:
            rho = (1.0 - pa) * rho + pa * (self.z_a @ rho @ self.z_a)
        if pb:
            rho = (1.0 - pb) * rho + pb * (self.z_b @ rho @ self.z_b)
        return rho

    def t_diag(self, rng, ionized: bool) -> np.ndarray:
        model = self.model
        off_a = model.line_shift_a + (rng.normal(0.0, self.sig_a) if self.sig_a > 0 else 0.0)
        off_b = model.line_shift_b + (rng.normal(0.0, self.sig_b) if self.sig_b > 0 else 0.0)
        if ionized:
            # emitter A loses its optical feature entirely until a green
            # reset; push its line far off-resonant so its spin is invisible
            off_a += 2.0 * math.pi * 500e9
        cav = model.system.cavity
        ea, eb = model.system.emitter_a, model.system.emitter_b
        denom = (1j * (self._freqs - cav.omega_c) + cav.kappa_tot
                 + ea.g**2 / (1j * (self._freqs - self._wa - off_a) + ea.gamma)
                 + eb.g**2 / (1j * (self._freqs - self._wb - off_b) + eb.gamma))
        refl = 1.0 - 2.0 * cav.kappa_w / denom
        return (refl * self._phase).reshape(4, 3).sum(axis=1)


def _run_single_trial(idx: int, basis: str, seed: int, engine: _TrialEngine,
                      trial_state: _TrialState) -> TrialOutcome:
    model, config = engine.model, engine.config
    rng = substream(seed, "trial", idx)
    init_ok = initialize_with_feedback(rng, trial_state, config)

    ionized = idx <= trial_state.ionized_until
    if config.ionization_rate > 0 and not ionized:
        if rng.random() < config.ionization_rate:
            trial_state.ionized_until = idx + config.ionization_reset
            ionized = True

    t_diag = engine.t_diag(rng, ionized)

    ia = 0 if trial_state.spin_a == Spin.UP else 2
    ib = 0 if trial_state.spin_b == Spin.UP else 1
    rho = np.zeros((4, 4), dtype=complex)
    rho[ia + ib, ia + ib] = 1.0

    u_open, u_refocus, u_close = engine.ops[basis]
    rho = u_open @ rho @ u_open.conj().T
    rho = engine.dephase_half(rho)

    weight = float(np.real(np.abs(t_diag) ** 2 @ np.diag(rho).real))
    heralded, _extra = herald_sample(rng, weight, config)
    if heralded:
        m = t_diag[:, None] * t_diag.conj()[None, :]
        rho = (m * rho)
        rho = rho / np.trace(rho).real
        p2 = 0.5 * config.n_mean_at_cavity
        rho = (1.0 - p2) * rho + p2 * (engine.z_a @ rho @ engine.z_a)
        rho = (1.0 - p2) * rho + p2 * (engine.z_b @ rho @ engine.z_b)

    rho = u_refocus @ rho @ u_refocus.conj().T
    rho = engine.dephase_half(rho)
    rho = u_close @ rho @ u_close.conj().T

    # projective Z readout of both spins
    probs = np.clip(np.diag(rho).real, 0.0, None)
    probs = probs / probs.sum()
    k = int((rng.random() < np.cumsum(probs)).argmax())
    spin_a = Spin.UP if BASIS_LABELS[k][0] == "u" else Spin.DOWN
    spin_b = Spin.UP if BASIS_LABELS[k][1] == "u" else Spin.DOWN

    counts_a = _sample_counts(rng, spin_a, config.readout_means_a)
    counts_b = _sample_counts(rng, spin_b, config.readout_means_b)
    if _flip_from_backaction(rng, counts_a, config.photons_per_flip_a,
                             config.readout_path_efficiency):
        spin_a = Spin.DOWN if spin_a == Spin.UP else Spin.UP
    if _flip_from_backaction(rng, counts_b, config.photons_per_flip_b,
                             config.readout_path_efficiency):
        spin_b = Spin.DOWN if spin_b == Spin.UP else Spin.UP

    trial_state.spin_a = spin_a
    trial_state.spin_b = spin_b
    trial_state.prev_counts_a = counts_a
    trial_state.prev_counts_b = counts_b

    return TrialOutcome(
        trial=idx, basis=basis, heralded=heralded,
        counts_a=counts_a, counts_b=counts_b,
        readout_a="up" if counts_a > config.readout_threshold else "down",
        readout_b="up" if counts_b > config.readout_threshold else "down",
        init_ok=init_ok,
    )


def resolve_schedule(basis_schedule, n_trials: int) -> list[str]:
    if basis_schedule == "alternating":
        pattern = ALTERNATING_SCHEDULE
    elif isinstance(basis_schedule, str):
        pattern = (basis_schedule,)
    else:
        pattern = tuple(basis_schedule)
    for b in pattern:
        if b not in ("XX", "YY", "ZZ"):
            raise DomainError(f"unknown basis {b!r} in schedule")
    return [pattern[i % len(pattern)] for i in range(n_trials)]


def run_experiment(
    seed: int,
    n_trials: int,
    basis_schedule,
    model: EntangleModel,
    config: ProtocolConfig,
    threads: int = 1,
) -> list[TrialOutcome]:
    """Seed-deterministic stream of trials.

    Trials are grouped into blocks of config.trial_block; each block carries
    its initialization state forward trial-to-trial, while blocks are
    independent, so blocks may run on concurrent workers without changing
    any output.
    """
    bases = resolve_schedule(basis_schedule, n_trials)
    block = max(int(config.trial_block), 1)
    starts = list(range(0, n_trials, block))
    engine = _TrialEngine(model, config)

    def run_block(start: int) -> list[TrialOutcome]:
        trial_state = _TrialState()
        out = []
        for idx in range(start, min(start + block, n_trials)):
            out.append(_run_single_trial(idx, bases[idx], seed, engine,
                                         trial_state))
        return out

    if threads <= 1 or len(starts) <= 1:
        blocks = [run_block(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(run_block, starts))
    return [t for b in blocks for t in b]


def postselect(
    dataset: list[TrialOutcome],
    window_n: int = 500,
    max_infidelity_a: float = 0.17,
    max_infidelity_b: float = 0.15,
) -> list[TrialOutcome]:
    """Keep heralded trials whose surrounding unheralded-XX window is healthy.

    For each heralded trial, the window_n unheralded XX trials nearest in
    trial index estimate each spin's echo recovery fidelity (fraction reading
    back its initialization target).  Heralds with 1 - F_A > max_infidelity_a
    or 1 - F_B > max_infidelity_b are dropped; everything unheralded passes
    through untouched.
    """
    xx = [t for t in dataset if t.basis == "XX" and not t.heralded]
    if window_n > len(xx):
        raise DomainError(
            f"postselect window ({window_n}) exceeds the {len(xx)} unheralded XX trials")
    xx_idx = np.array([t.trial for t in xx])
    ok_a = np.array([t.readout_a == "up" for t in xx], dtype=float)
    ok_b = np.array([t.readout_b == "down" for t in xx], dtype=float)
    kept = []
    for t in dataset:
        if not t.heralded:
            kept.append(t)
            continue
        order = np.argsort(np.abs(xx_idx - t.trial), kind="stable")[:window_n]
        f_a = float(ok_a[order].mean())
        f_b = float(ok_b[order].mean())
        if (1.0 - f_a) <= max_infidelity_a and (1.0 - f_b) <= max_infidelity_b:
            kept.append(t)
    return kept


def correlations_from_dataset(dataset: list[TrialOutcome],
                              heralded_only: bool = True):
    """Outcome probabilities per basis from trial readouts.

    The refocusing pulses leave the ZZ readout inverted relative to the
    heralded state; outcomes are relabeled accordingly (as in the published
    analysis).
    """
    from .analysis import BasisCounts, CorrelationData

    per_basis = {}
    for basis in ("XX", "YY", "ZZ"):
        sel = [t for t in dataset if t.basis == basis
               and (t.heralded if heralded_only else not t.heralded)]
        counts = np.zeros(4)
        for t in sel:
            ia = 0 if t.readout_a == "up" else 1
            ib = 0 if t.readout_b == "up" else 1
            if basis == "ZZ":
                ia, ib = 1 - ia, 1 - ib
            counts[2 * ia + ib] += 1
        n = int(counts.sum())
        probs = counts / n if n else np.full(4, 0.25)
        per_basis[basis] = BasisCounts(probs, n)
    return CorrelationData(xx=per_basis["XX"], yy=per_basis["YY"],
                           zz=per_basis["ZZ"])


def simulate_jump_trace(
    seed: int,
    n_bins: int,
    bin_time: float,
    model: EntangleModel,
    config: ProtocolConfig,
) -> np.ndarray:
    """Continuous-probe quantum-jump record.

    Returns an array of rows (time, counts, parity) where counts are heralding
    detector clicks per bin and parity is the instantaneous spin parity (+1
    even, -1 odd).  Spin flips occur per scattered probe photon with the
    configured cycling probability.
    """
    rng = substream(seed, "jumps", 0)
    photon_rate = config.n_mean_at_cavity / config.herald_window
    tt = {s: None for s in SPIN_BASIS}
    for s in SPIN_BASIS:
        tt[s] = transmission_amplitude(s, model.sideband, model.system,
                                       dphi=model.dphi_entangle,
                                       line_offsets=(model.line_shift_a,
                                                     model.line_shift_b))
    spins = [Spin.UP, Spin.UP]
    rows = np.zeros((n_bins, 3))
    for i in range(n_bins):
        cfg = SPIN_BASIS[(0 if spins[0] == Spin.UP else 2)
                         + (0 if spins[1] == Spin.UP else 1)]
        rate = (config.herald_calibration * abs(tt[cfg]) ** 2
                * photon_rate * config.herald_efficiency())
        counts = rng.poisson(rate * bin_time)
        parity = 1.0 if spins[0] == spins[1] else -1.0
        rows[i] = (i * bin_time, counts, parity)
        photons = photon_rate * bin_time
        if rng.random() < min(photons * config.spin_flip_per_cycle, 1.0):
            which = int(rng.integers(2))
            spins[which] = Spin.DOWN if spins[which] == Spin.UP else Spin.UP
    return rows
