"""Electro-optic sideband generation and the frequency-bin interferometer.

Two EOMs split the probe into sidebands at omega_carrier -/+ omega_mw,
bounce them off the spin-dependent cavity reflection, and recombine them.
The amplitude reaching the heralding port for a given joint spin state is

    T = c_carrier * R(w_car) e^{i phi_c}
      + c_sideband * R(w_sbA) e^{-i dphi/2}
      + c_sideband * R(w_sbB) e^{+i dphi/2}

with dphi = 2 phi_mu set by the relative microwave phase.  T is an
unnormalized proportionality; physical count rates attach a single
calibration constant in the protocol layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cqed import (
    SPEED_OF_LIGHT,
    TWO_PI,
    CqedSystem,
    DomainError,
    SPIN_BASIS,
    SpinConfig,
    gauss_hermite_offsets,
    reflection_amplitude,
)

DEFAULT_QUADRATURE_ORDER = 21


@dataclass(frozen=True)
class SidebandConfig:
    """EOM drive and recombination settings.  Frequencies in rad/s."""

    omega_carrier: float
    omega_mw: float
    c_carrier: float
    c_sideband: float
    phi_c: float = 0.0
    phi_mu: float = 0.0
    delta_L: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.c_carrier <= 1.0:
            raise DomainError(f"c_carrier must be in [0, 1], got {self.c_carrier}")
        if not 0.0 <= self.c_sideband <= 1.0:
            raise DomainError(f"c_sideband must be in [0, 1], got {self.c_sideband}")
        if self.omega_mw < 0:
            raise DomainError(f"omega_mw must be >= 0, got {self.omega_mw}")

    @property
    def dphi(self) -> float:
        """Interferometer phase between the two frequency arms."""
        return 2.0 * self.phi_mu


@dataclass(frozen=True)
class FilterCavity:
    """Fabry-Perot filter modeled as a Lorentzian comb."""

    omega_0: float
    fwhm: float
    fsr: float
    peak_transmission: float

    def __post_init__(self):
        if not self.fwhm < self.fsr:
            raise DomainError(f"FilterCavity requires fwhm < fsr ({self.fwhm} >= {self.fsr})")
        if not 0.0 <= self.peak_transmission <= 1.0:
            raise DomainError(
                f"peak_transmission must be in [0, 1], got {self.peak_transmission}"
            )


def sideband_frequencies(cfg: SidebandConfig) -> tuple[float, float, float]:
    """Frequencies (omega_sbA, omega_sbB, omega_carrier) of the probe comb.

    The carrier is exactly midway: omega_carrier = (omega_sbA + omega_sbB)/2.
    """
    if cfg.omega_mw <= 0:
        raise DomainError("sideband_frequencies requires omega_mw > 0")
    return (cfg.omega_carrier - cfg.omega_mw, cfg.omega_carrier + cfg.omega_mw,
            cfg.omega_carrier)


def phase_from_mw_frequency(omega_mw: float, delta_L: float) -> float:
    """Microwave phase phi_mu = omega_mw * delta_L / c, reduced mod 2 pi.

    Increasing the drive by the interferometer free spectral range c/delta_L
    (ordinary frequency) advances phi_mu by exactly 2 pi.
    """
    if delta_L <= 0:
        raise DomainError(f"phase_from_mw_frequency requires delta_L > 0, got {delta_L}")
    return (omega_mw * delta_L / SPEED_OF_LIGHT) % TWO_PI


def transmission_amplitude(
    spin: SpinConfig,
    cfg: SidebandConfig,
    system: CqedSystem,
    dphi: float | np.ndarray | None = None,
    line_offsets=(),
):
    """Heralding-port amplitude for one joint spin state (unnormalized).

    dphi overrides the config's 2*phi_mu (used by phase scans); line_offsets
    shift the two emitters' active lines (used by diffusion averaging).
    """
    sba, sbb, car = sideband_frequencies(cfg)
    if dphi is None:
        dphi = cfg.dphi
    dphi = np.asarray(dphi)
    emitters = system.emitters_for(spin)
    r_car = reflection_amplitude(car, system.cavity, emitters, line_offsets)
    r_sba = reflection_amplitude(sba, system.cavity, emitters, line_offsets)
    r_sbb = reflection_amplitude(sbb, system.cavity, emitters, line_offsets)
    out = (cfg.c_carrier * r_car * np.exp(1j * cfg.phi_c)
           + cfg.c_sideband * r_sba * np.exp(-0.5j * dphi)
           + cfg.c_sideband * r_sbb * np.exp(+0.5j * dphi))
    if np.ndim(out) == 0:
        return complex(out)
    return out


class DiffusionGrid:
    """Gauss-Hermite grid over the two emitters' line offsets.

    Exposes the transmission of every spin state on the grid so that means,
    variances and herald-weighted state averages share one set of reflection
    evaluations.
    """

    def __init__(self, system: CqedSystem, order: int = DEFAULT_QUADRATURE_ORDER):
        self.system = system
        oa, wa = gauss_hermite_offsets(system.emitter_a.sigma, order) \
            if system.emitter_a.sigma > 0 else (np.zeros(1), np.ones(1))
        ob, wb = gauss_hermite_offsets(system.emitter_b.sigma, order) \
            if system.emitter_b.sigma > 0 else (np.zeros(1), np.ones(1))
        self.offsets_a = oa[:, None]
        self.offsets_b = ob[None, :]
        w = wa[:, None] * wb[None, :]
        self.weights = w / w.sum()

    def tmap(self, cfg: SidebandConfig, dphi=None):
        """dict spin -> array (..., nA, nB) of amplitudes on the grid."""
        out = {}
        for spin in SPIN_BASIS:
            out[spin] = transmission_amplitude(
                spin, cfg, self.system,
                dphi=np.atleast_1d(dphi if dphi is not None else cfg.dphi)[:, None, None],
                line_offsets=(self.offsets_a, self.offsets_b),
            )
        return out

    def mean(self, values):
        """Average grid-shaped (..., nA, nB) values over the Gaussian weights."""
        return np.einsum("ij,...ij->...", self.weights, values)


def spin_transmission_map(
    cfg: SidebandConfig,
    system: CqedSystem,
    dphi: float | None = None,
) -> dict[SpinConfig, complex]:
    """Nominal (no diffusion) T for the four spin basis states."""
    return {spin: transmission_amplitude(spin, cfg, system, dphi=dphi)
            for spin in SPIN_BASIS}


@dataclass(frozen=True)
class PhaseScanResult:
    """Per-state transmission curves over an interferometer phase grid."""

    phases: np.ndarray
    states: tuple[SpinConfig, ...]
    mean_t2: dict[SpinConfig, np.ndarray]
    var_t2: dict[SpinConfig, np.ndarray]

    def dark_phase(self, state: SpinConfig = SPIN_BASIS[0]) -> float:
        """Grid phase minimizing the chosen state's mean transmission."""
        return float(self.phases[int(np.argmin(self.mean_t2[state]))])

    def rows(self):
        for spin in self.states:
            for i, phase in enumerate(self.phases):
                yield (float(phase), str(spin),
                       float(self.mean_t2[spin][i]), float(self.var_t2[spin][i]))


def phase_scan(
    spin_states,
    phases,
    cfg: SidebandConfig,
    system: CqedSystem,
    sigma_average: bool = True,
    order: int = DEFAULT_QUADRATURE_ORDER,
) -> PhaseScanResult:
    """Transmission |T|^2 versus interferometer phase for the given states.

    With sigma_average the curves carry the mean and variance of |T|^2 over
    the Gaussian spectral-diffusion distribution of both emitters.
    """
    phases = np.asarray(phases, dtype=float)
    if phases.size == 0:
        raise DomainError("phase_scan requires a non-empty phase grid")
    if not np.all(np.isfinite(phases)):
        raise DomainError("phase_scan requires finite phases")
    mean_t2, var_t2 = {}, {}
    if sigma_average:
        grid = DiffusionGrid(system, order)
        tm = grid.tmap(cfg, dphi=phases)
        for spin in spin_states:
            t2 = np.abs(tm[spin]) ** 2
            m1 = grid.mean(t2)
            m2 = grid.mean(t2**2)
            mean_t2[spin] = m1
            var_t2[spin] = np.maximum(m2 - m1**2, 0.0)
    else:
        for spin in spin_states:
            t = transmission_amplitude(spin, cfg, system, dphi=phases)
            mean_t2[spin] = np.abs(t) ** 2
            var_t2[spin] = np.zeros_like(phases)
    return PhaseScanResult(phases, tuple(spin_states), mean_t2, var_t2)


def dark_port_phase(
    cfg: SidebandConfig,
    system: CqedSystem,
    order: int = DEFAULT_QUADRATURE_ORDER,
    n_grid: int = 2880,
    near: float | None = None,
) -> float:
    """Interferometer phase minimizing the diffusion-averaged up-up
    transmission (the experimental dark-port tuning procedure).

    With carrier leakage the transmission is 4 pi periodic in dphi (the
    sideband terms carry half-angle phases, the carrier does not), so the
    search covers the full physical period.  When `near` is given, only the
    surrounding branch (near +- pi) is searched, modeling a local re-tune
    from an existing operating point.
    """
    if near is None:
        grid = np.linspace(0.0, 2.0 * TWO_PI, n_grid, endpoint=False)
    else:
        grid = np.linspace(near - math.pi, near + math.pi, n_grid // 2,
                           endpoint=False)
    scan = phase_scan([SPIN_BASIS[0]], grid, cfg, system, order=order)
    coarse = scan.dark_phase()
    # parabolic refinement on the grid minimum
    step = grid[1] - grid[0]
    fine = np.linspace(coarse - step, coarse + step, 41)
    scan2 = phase_scan([SPIN_BASIS[0]], fine, cfg, system, order=order)
    return scan2.dark_phase()


def filter_transmission(omega, filt: FilterCavity):
    """Lorentzian comb power transmission at the nearest resonance."""
    w = np.asarray(omega, dtype=float)
    delta = np.mod(w - filt.omega_0 + 0.5 * filt.fsr, filt.fsr) - 0.5 * filt.fsr
    out = filt.peak_transmission / (1.0 + (2.0 * delta / filt.fwhm) ** 2)
    if np.ndim(omega) == 0:
        return float(out)
    return out


def with_phase(cfg: SidebandConfig, phi_mu: float) -> SidebandConfig:
    return replace(cfg, phi_mu=phi_mu)
