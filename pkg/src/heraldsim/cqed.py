"""Spin-dependent reflection of a waveguide-coupled cavity with detuned emitters.

All spectral quantities (frequencies, rates, detunings, diffusion widths) are
angular frequencies in rad/s.  Detunings follow the convention
``delta = omega_laser - omega_resonance``.

The central object is the one-sided input-output reflection amplitude

    R(w) = 1 - 2 kappa_w / (i(w - w_c) + kappa_tot + sum_k g_k^2 / (i(w - w_k) + gamma_k))

with kappa_tot always derived as kappa_w + kappa_l.  No clamping of |R| is
applied: unphysical parameter sets surface as unphysical outputs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss

TWO_PI = 2.0 * math.pi
SPEED_OF_LIGHT = 299_792_458.0  # m/s

DEFAULT_QUADRATURE_ORDER = 21


class DomainError(ValueError):
    """Raised when an operation is called outside its validity domain."""


class Spin(str, enum.Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class SpinConfig:
    """Joint spin state of the two emitters, ordered (A, B)."""

    spin_a: Spin
    spin_b: Spin

    def __str__(self) -> str:
        arrow = {Spin.UP: "u", Spin.DOWN: "d"}
        return arrow[self.spin_a] + arrow[self.spin_b]


#: Basis order used everywhere a four-component spin object appears:
#: (up-up, up-down, down-up, down-down).
SPIN_BASIS = (
    SpinConfig(Spin.UP, Spin.UP),
    SpinConfig(Spin.UP, Spin.DOWN),
    SpinConfig(Spin.DOWN, Spin.UP),
    SpinConfig(Spin.DOWN, Spin.DOWN),
)


@dataclass(frozen=True)
class CavityParams:
    """One-sided cavity: resonance, waveguide coupling and scattering loss."""

    omega_c: float
    kappa_w: float
    kappa_l: float

    def __post_init__(self):
        for name in ("omega_c", "kappa_w", "kappa_l"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"CavityParams.{name} must be finite, got {v!r}")
        if self.kappa_w <= 0:
            raise DomainError(f"CavityParams.kappa_w must be > 0, got {self.kappa_w}")
        if self.kappa_l < 0:
            raise DomainError(f"CavityParams.kappa_l must be >= 0, got {self.kappa_l}")

    @property
    def kappa_tot(self) -> float:
        # always derived, never stored
        return self.kappa_w + self.kappa_l


@dataclass(frozen=True)
class EmitterParams:
    """One emitter with Zeeman-split spin-conserving optical transitions."""

    omega_up: float
    omega_down: float
    g: float
    gamma: float
    sigma: float = 0.0

    def __post_init__(self):
        for name in ("omega_up", "omega_down", "g", "gamma", "sigma"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"EmitterParams.{name} must be finite, got {v!r}")
        if self.g <= 0:
            raise DomainError(f"EmitterParams.g must be > 0, got {self.g}")
        if self.gamma <= 0:
            raise DomainError(f"EmitterParams.gamma must be > 0, got {self.gamma}")
        if self.sigma < 0:
            raise DomainError(f"EmitterParams.sigma must be >= 0, got {self.sigma}")
        if self.omega_up == self.omega_down:
            raise DomainError("EmitterParams requires omega_up != omega_down")

    def omega(self, spin: Spin) -> float:
        return self.omega_up if spin == Spin.UP else self.omega_down


@dataclass(frozen=True)
class CqedSystem:
    """Cavity plus the two emitters whose joint spin state is tracked."""

    cavity: CavityParams
    emitter_a: EmitterParams
    emitter_b: EmitterParams

    def emitters_for(self, spin: SpinConfig) -> list[tuple[EmitterParams, Spin]]:
        return [(self.emitter_a, spin.spin_a), (self.emitter_b, spin.spin_b)]


def reflection_amplitude(
    omega_laser,
    cavity: CavityParams,
    emitters: Sequence[tuple[EmitterParams, Spin]] = (),
    line_offsets: Sequence = (),
):
    """Complex reflection amplitude R(omega_laser).

    Parameters
    ----------
    omega_laser : float or ndarray
        Probe angular frequency (rad/s).  Arrays broadcast.
    cavity : CavityParams
    emitters : sequence of (EmitterParams, Spin)
        Emitters inside the cavity with their current spin state.  May be
        empty (bare cavity).
    line_offsets : sequence of float or ndarray, optional
        Per-emitter additive shifts of the active resonance (rad/s), used by
        spectral-diffusion averaging.  Broadcasts against omega_laser.

    Returns
    -------
    complex or ndarray
        R is not clamped; |R| <= 1 is not guaranteed for unphysical input.
    """
    w = np.asarray(omega_laser)
    if not np.all(np.isfinite(w)):
        raise DomainError("reflection_amplitude: non-finite probe frequency")
    denom = 1j * (w - cavity.omega_c) + cavity.kappa_tot
    for k, (em, spin) in enumerate(emitters):
        w0 = em.omega(spin)
        if len(line_offsets) > k:
            w0 = w0 + line_offsets[k]
        denom = denom + em.g**2 / (1j * (w - w0) + em.gamma)
    out = 1.0 - 2.0 * cavity.kappa_w / denom
    if np.ndim(omega_laser) == 0 and np.ndim(out) == 0:
        return complex(out)
    return out


def cooperativity(g: float, kappa_tot: float, gamma: float) -> float:
    """Single-emitter cooperativity g^2 / (kappa_tot * gamma)."""
    if kappa_tot <= 0 or gamma <= 0 or g <= 0:
        raise DomainError("cooperativity requires g, kappa_tot, gamma > 0")
    return g * g / (kappa_tot * gamma)


@dataclass(frozen=True)
class OptimalDetunings:
    """Detunings at which the emitter feature dips to exactly zero reflection.

    delta_a is the laser-emitter detuning, delta_c the laser-cavity detuning,
    delta = delta_c - delta_a the emitter-cavity detuning.  delta_approx is
    the wide-splitting approximation g * sqrt((kappa_w - kappa_l) / gamma).
    """

    delta_a: float
    delta_c: float
    delta: float
    delta_approx: float


def optimal_detunings(g: float, gamma: float, kappa_w: float, kappa_l: float) -> OptimalDetunings:
    """Solve the zero-reflection condition for an overcoupled cavity.

    Raises DomainError naming the violated condition when the cavity is not
    overcoupled (2 kappa_w <= kappa_tot) or the radicand g^2 gamma / (2 kappa_w
    - kappa_tot) - gamma^2 is negative.
    """
    kappa_tot = kappa_w + kappa_l
    excess = 2.0 * kappa_w - kappa_tot
    if excess <= 0:
        raise DomainError(
            "optimal_detunings: cavity not overcoupled (2*kappa_w - kappa_tot = "
            f"{excess:.4g} <= 0)"
        )
    radicand = g * g * gamma / excess - gamma * gamma
    if radicand < 0:
        raise DomainError(
            "optimal_detunings: negative radicand g^2*gamma/(2*kappa_w - kappa_tot)"
            f" - gamma^2 = {radicand:.4g}"
        )
    delta_a = math.sqrt(radicand)
    delta_c = excess / gamma * delta_a
    delta = delta_c - delta_a
    delta_approx = g * math.sqrt((kappa_w - kappa_l) / gamma)
    return OptimalDetunings(delta_a, delta_c, delta, delta_approx)


def contrast_bandwidth(kappa_w: float, contrast: float) -> float:
    """Largest cavity detuning excursion preserving a 1:contrast dip.

    Solves |1 - 2 kappa_w / (2 kappa_w + i delta_c)|^2 <= 1/contrast
    analytically: delta_c = 2 kappa_w / sqrt(contrast - 1).
    """
    if contrast < 1:
        raise DomainError(f"contrast_bandwidth requires contrast >= 1, got {contrast}")
    if contrast == 1:
        return math.inf
    return 2.0 * kappa_w / math.sqrt(contrast - 1.0)


def gauss_hermite_offsets(sigma: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (as resonance offsets) and normalized weights for a Gaussian of
    standard deviation sigma."""
    if order < 1:
        raise DomainError(f"quadrature order must be >= 1, got {order}")
    nodes, weights = hermgauss(order)
    return math.sqrt(2.0) * sigma * nodes, weights / math.sqrt(math.pi)


def diffusion_average(
    f: Callable,
    center: float,
    sigma: float,
    order: int = DEFAULT_QUADRATURE_ORDER,
):
    """Average f(omega) over a Gaussian resonance distribution N(center, sigma).

    Uses Gauss-Hermite quadrature of the given order; sigma = 0 returns
    f(center) exactly.  f may return scalars or arrays (averaged elementwise).
    """
    if sigma < 0:
        raise DomainError(f"diffusion_average requires sigma >= 0, got {sigma}")
    if sigma == 0:
        return f(center)
    offsets, weights = gauss_hermite_offsets(sigma, order)
    acc = None
    for x, w in zip(offsets, weights):
        val = w * np.asarray(f(center + x))
        acc = val if acc is None else acc + val
    if np.ndim(acc) == 0:
        return acc.item()
    return acc
