"""Two-qubit density-matrix register with rotations, noise channels and the
heralding projection.

Basis order everywhere: (|uu>, |ud>, |du>, |dd>) with qubit A first.  States
are value objects; every operation returns a new state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cqed import DomainError, SPIN_BASIS, SpinConfig

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = -1e-10

AXIS_PHASES = {"x": 0.0, "y": 0.5 * math.pi, "-x": math.pi, "-y": -0.5 * math.pi}


class ContractError(ValueError):
    """A density-matrix invariant (hermiticity, trace, positivity) failed."""


class HeraldImpossibleError(ValueError):
    """The heralding projector annihilates the state (zero success weight)."""


def _ket(label: str) -> np.ndarray:
    single = {"u": np.array([1.0, 0.0], dtype=complex),
              "d": np.array([0.0, 1.0], dtype=complex)}
    return np.kron(single[label[0]], single[label[1]])


BELL_PSI_PLUS = (_ket("ud") + _ket("du")) / math.sqrt(2.0)
BELL_PSI_MINUS = (_ket("ud") - _ket("du")) / math.sqrt(2.0)


@dataclass(frozen=True)
class TwoQubitState:
    """4x4 density matrix over the two-spin computational basis."""

    rho: np.ndarray

    @classmethod
    def from_ket(cls, ket) -> "TwoQubitState":
        v = np.asarray(ket, dtype=complex).reshape(4)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def computational(cls, label: str) -> "TwoQubitState":
        return cls.from_ket(_ket(label))

    @classmethod
    def bell_psi_plus(cls) -> "TwoQubitState":
        return cls.from_ket(BELL_PSI_PLUS)

    @classmethod
    def maximally_mixed(cls) -> "TwoQubitState":
        return cls(np.eye(4, dtype=complex) / 4.0)

    def validate(self) -> "TwoQubitState":
        r = self.rho
        if r.shape != (4, 4):
            raise ContractError(f"density matrix must be 4x4, got {r.shape}")
        if np.max(np.abs(r - r.conj().T)) >= HERMITICITY_TOL:
            raise ContractError("density matrix is not Hermitian within 1e-12")
        if abs(np.trace(r).real - 1.0) >= TRACE_TOL or abs(np.trace(r).imag) >= TRACE_TOL:
            raise ContractError(f"trace(rho) = {np.trace(r):.3e}, expected 1")
        if np.min(np.linalg.eigvalsh(0.5 * (r + r.conj().T))) <= POSITIVITY_TOL:
            raise ContractError("density matrix has a negative eigenvalue beyond -1e-10")
        return self

    def fidelity_with_ket(self, ket) -> float:
        v = np.asarray(ket, dtype=complex).reshape(4)
        v = v / np.linalg.norm(v)
        return float(np.real(v.conj() @ self.rho @ v))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho))


@dataclass(frozen=True)
class PulseSpec:
    """One microwave pulse on one qubit.

    rabi_error is the fractional amplitude miscalibration; detuning (rad/s)
    tilts the rotation axis out of the equator (requires duration > 0 to have
    an effect); phase_offset adds to the nominal axis phase.
    """

    target: str  # "a" or "b"
    axis: str    # "x", "y", "-x", "-y"
    angle: float
    duration: float = 0.0
    rabi_error: float = 0.0
    detuning: float = 0.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if self.target not in ("a", "b"):
            raise DomainError(f"pulse target must be 'a' or 'b', got {self.target!r}")
        if self.axis not in AXIS_PHASES:
            raise DomainError(f"unknown pulse axis {self.axis!r}")
        if self.duration < 0:
            raise DomainError(f"pulse duration must be >= 0, got {self.duration}")
        if not math.isfinite(self.angle):
            raise DomainError("pulse angle must be finite")


def rotation_unitary(pulse: PulseSpec) -> np.ndarray:
    """Single-qubit unitary of a Rabi drive with amplitude and detuning errors.

    The nominal Rabi rate is angle/duration; the actual drive has amplitude
    (1 + rabi_error) times that and detuning `detuning`, giving a rotation by
    angle * sqrt((1+eps)^2 + (delta/Omega)^2) about the tilted axis
    ((1+eps) cos phi, (1+eps) sin phi, -delta/Omega) / norm.
    """
    phi = AXIS_PHASES[pulse.axis] + pulse.phase_offset
    amp = 1.0 + pulse.rabi_error
    if pulse.detuning != 0.0:
        if pulse.duration <= 0 or pulse.angle == 0:
            raise DomainError("detuned pulse requires duration > 0 and angle != 0")
        omega_nominal = pulse.angle / pulse.duration
        det_ratio = pulse.detuning / omega_nominal
    else:
        det_ratio = 0.0
    eff = math.sqrt(amp * amp + det_ratio * det_ratio)
    theta = pulse.angle * eff
    if eff == 0.0:
        return I2.copy()
    nx = amp * math.cos(phi) / eff
    ny = amp * math.sin(phi) / eff
    nz = -det_ratio / eff
    n_dot_sigma = nx * SX + ny * SY + nz * SZ
    return math.cos(0.5 * theta) * I2 - 1j * math.sin(0.5 * theta) * n_dot_sigma


def _embed(u: np.ndarray, target: str) -> np.ndarray:
    return np.kron(u, I2) if target == "a" else np.kron(I2, u)


def apply_rotation(state: TwoQubitState, pulse: PulseSpec) -> TwoQubitState:
    """Apply a single-qubit rotation (identity on the other qubit)."""
    state.validate()
    u = _embed(rotation_unitary(pulse), pulse.target)
    return TwoQubitState(u @ state.rho @ u.conj().T)


def apply_unitary(state: TwoQubitState, u: np.ndarray) -> TwoQubitState:
    return TwoQubitState(u @ state.rho @ u.conj().T)


def apply_dephasing(state: TwoQubitState, target: str, p: float) -> TwoQubitState:
    """Phase-flip channel rho -> (1-p) rho + p Z rho Z on the target qubit.

    Off-diagonals in the target qubit are scaled by (1 - 2p).
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"dephasing probability must be in [0, 1], got {p}")
    z = _embed(SZ, target)
    return TwoQubitState((1.0 - p) * state.rho + p * (z @ state.rho @ z))


def two_photon_dephasing(state: TwoQubitState, n_mean: float) -> TwoQubitState:
    """Decoherence from extra undetected heralding photons.

    A mean photon number n at the cavity leaves, per heralded event, a
    residual scattering probability of n/2 on each spin; this is applied as a
    phase-flip channel of probability n_mean/2 on each qubit, flipping the
    sign of the odd-parity (|ud>, |du>) coherence.
    """
    if n_mean < 0:
        raise DomainError(f"n_mean must be >= 0, got {n_mean}")
    p = 0.5 * n_mean
    out = apply_dephasing(state, "a", p)
    return apply_dephasing(out, "b", p)


def heralded_projection(state: TwoQubitState, t_map) -> tuple[TwoQubitState, float]:
    """Project the state on detection of a heralding photon.

    t_map maps each SpinConfig (or a length-4 sequence in SPIN_BASIS order)
    to the complex transmission amplitude of that spin state.  The Kraus
    operator M = diag(T_uu, T_ud, T_du, T_dd) acts as rho -> M rho M† / w
    with success weight w = tr(M rho M†) (relative herald probability in the
    unnormalized units of the transmission amplitudes).
    """
    state.validate()
    if isinstance(t_map, dict):
        diag = np.array([t_map[s] for s in SPIN_BASIS], dtype=complex)
    else:
        diag = np.asarray(t_map, dtype=complex).reshape(4)
    m = np.diag(diag)
    out = m @ state.rho @ m.conj().T
    weight = float(np.trace(out).real)
    if weight <= 0.0:
        raise HeraldImpossibleError("herald projector annihilates the state")
    return TwoQubitState(out / weight), weight


def averaged_herald_channel(tt_matrix: np.ndarray):
    """Heralding channel averaged over classical transmission uncertainty.

    tt_matrix[k, l] = <T_k conj(T_l)> over the (diffusion) ensemble.  Returns
    a function rho -> unnormalized heralded rho, elementwise
    rho'_{kl} = tt_matrix[k, l] * rho_{kl}.
    """
    tt = np.asarray(tt_matrix, dtype=complex)

    def channel(rho: np.ndarray) -> np.ndarray:
        return tt * rho

    return channel


# --- echo sequencing -------------------------------------------------------

#: SI pulse durations (s): pi/2 then pi, per qubit.
DEFAULT_DURATIONS = {"a": (11e-9, 22e-9), "b": (14e-9, 28e-9)}


@dataclass(frozen=True)
class CrosstalkModel:
    """Coherent off-resonant drive of the other qubit during each pulse.

    While addressing one qubit, the other sees the same tone detuned by the
    Zeeman-splitting difference, with a relative Rabi amplitude `amplitude`
    and an axis phase offset by the relative microwave phase.  Off by
    default; the residual detuned rotation is small but microwave-phase
    dependent.
    """

    enabled: bool = False
    amplitude: float = 1.0
    detuning: float = 2.0 * math.pi * 342e6


@dataclass(frozen=True)
class LocalErrorModel:
    """Per-qubit pulse imperfections and per-sequence dephasing."""

    rabi_error_a: float = 0.0
    rabi_error_b: float = 0.0
    detuning_a: float = 0.0
    detuning_b: float = 0.0
    dephasing_a: float = 0.0
    dephasing_b: float = 0.0

    def rabi_error(self, target: str) -> float:
        return self.rabi_error_a if target == "a" else self.rabi_error_b

    def detuning(self, target: str) -> float:
        return self.detuning_a if target == "a" else self.detuning_b


@dataclass(frozen=True)
class EchoSequence:
    """Interleaved two-qubit Hahn echo bracketing an optical probe window.

    The pulse ordering is: pi/2(Y) on A then B, wait, [probe window],
    pi(X) on A then B, wait, closing pi/2 on A then B.  The closing axis
    selects the readout basis: -Y for XX, X for YY, omitted for ZZ.
    """

    tau_a: float = 426e-9
    tau_b: float = 437e-9
    probe_window: tuple[float, float] = (100e-9, 200e-9)
    durations: dict = field(default_factory=lambda: dict(DEFAULT_DURATIONS))
    basis: str = "XX"
    mw_phase_b: float = 0.0  # relative phase of qubit B's drive at the device
    crosstalk: CrosstalkModel = field(default_factory=CrosstalkModel)

    def __post_init__(self):
        if self.tau_a < 0 or self.tau_b < 0:
            raise DomainError("echo half-periods must be >= 0")
        if self.probe_window[0] < 0 or self.probe_window[1] < 0:
            raise DomainError("probe window must be non-negative")
        if self.basis not in ("XX", "YY", "ZZ"):
            raise DomainError(f"unknown readout basis {self.basis!r}")

    def _pulse(self, target, axis, angle, which, errors: LocalErrorModel):
        dur = self.durations[target][0 if abs(angle) < 0.6 * math.pi else 1]
        return PulseSpec(
            target=target, axis=axis, angle=angle, duration=dur,
            rabi_error=errors.rabi_error(target),
            detuning=errors.detuning(target),
            phase_offset=self.mw_phase_b if target == "b" else 0.0,
        )

    def opening_pulses(self, errors: LocalErrorModel) -> list[PulseSpec]:
        return [self._pulse("a", "y", 0.5 * math.pi, 0, errors),
                self._pulse("b", "y", 0.5 * math.pi, 0, errors)]

    def refocusing_pulses(self, errors: LocalErrorModel) -> list[PulseSpec]:
        return [self._pulse("a", "x", math.pi, 1, errors),
                self._pulse("b", "x", math.pi, 1, errors)]

    def closing_pulses(self, errors: LocalErrorModel) -> list[PulseSpec]:
        if self.basis == "ZZ":
            return []
        axis = "-y" if self.basis == "XX" else "x"
        return [self._pulse("a", axis, 0.5 * math.pi, 0, errors),
                self._pulse("b", axis, 0.5 * math.pi, 0, errors)]


def run_echo_sequence(
    initial: TwoQubitState,
    seq: EchoSequence,
    errors: LocalErrorModel = LocalErrorModel(),
    probe=None,
    n_mean: float = 0.0,
) -> tuple[TwoQubitState, float | None]:
    """Execute the echo; optionally insert the heralding probe mid-window.

    probe may be a t_map (dict or 4-sequence) for an exact projection, or a
    precomputed averaged herald channel (callable on rho).  Returns the final
    state and, when a probe was given, the herald success weight.

    With ideal pulses, no noise and no probe the sequence acts as Z (x) Z,
    which is the identity process on any computational-basis input and
    restores every input after the closing rotations of the matching basis.
    """
    def _apply(state: TwoQubitState, pulse: PulseSpec) -> TwoQubitState:
        state = apply_rotation(state, pulse)
        ct = seq.crosstalk
        if ct.enabled and ct.amplitude != 0.0:
            other = "b" if pulse.target == "a" else "a"
            companion = PulseSpec(
                target=other, axis=pulse.axis,
                angle=pulse.angle * ct.amplitude,
                duration=pulse.duration,
                detuning=-ct.detuning if pulse.target == "a" else ct.detuning,
                phase_offset=pulse.phase_offset
                - (seq.mw_phase_b if other == "b" else 0.0),
            )
            state = apply_rotation(state, companion)
        return state

    state = initial.validate()
    for pulse in seq.opening_pulses(errors):
        state = _apply(state, pulse)
    state = apply_dephasing(state, "a", 0.5 * errors.dephasing_a)
    state = apply_dephasing(state, "b", 0.5 * errors.dephasing_b)

    weight = None
    if probe is not None:
        if callable(probe):
            rho = probe(state.rho)
            weight = float(np.trace(rho).real)
            if weight <= 0.0:
                raise HeraldImpossibleError("herald channel annihilates the state")
            state = TwoQubitState(rho / weight)
        else:
            state, weight = heralded_projection(state, probe)
        if n_mean > 0.0:
            state = two_photon_dephasing(state, n_mean)

    for pulse in seq.refocusing_pulses(errors):
        state = _apply(state, pulse)
    state = apply_dephasing(state, "a", 0.5 * errors.dephasing_a)
    state = apply_dephasing(state, "b", 0.5 * errors.dephasing_b)
    for pulse in seq.closing_pulses(errors):
        state = _apply(state, pulse)
    return state, weight


# --- measurement -----------------------------------------------------------

def _basis_unitary(basis: str) -> np.ndarray:
    """Unitary mapping the product measurement basis onto the Z basis."""
    if basis == "ZZ":
        u1 = I2
    elif basis == "XX":
        # |x+> -> |u>: rotation by -pi/2 about Y
        u1 = np.array([[1, 1], [-1, 1]], dtype=complex) / math.sqrt(2.0)
    elif basis == "YY":
        # |y+> -> |u>: rotation about X
        u1 = np.array([[1, -1j], [-1j, 1]], dtype=complex) / math.sqrt(2.0)
    else:
        raise DomainError(f"unknown measurement basis {basis!r}")
    return np.kron(u1, u1)


def measure_correlations(state: TwoQubitState, basis: str) -> np.ndarray:
    """Outcome probabilities (p_{++}, p_{+-}, p_{-+}, p_{--}) in a product basis.

    For ZZ the outcomes are ordered (uu, ud, du, dd).  Probabilities sum to 1.
    """
    state.validate()
    u = _basis_unitary(basis)
    probs = np.real(np.diag(u @ state.rho @ u.conj().T))
    return np.clip(probs, 0.0, None)
