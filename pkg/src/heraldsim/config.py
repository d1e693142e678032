"""Configuration ingestion: unit-suffixed key-value files, presets, overrides.

The file format is one `key = value [unit]` assignment per line, with `#`
comments.  Frequencies and rates take Hz-family units (THz, GHz, MHz, kHz,
Hz) and are converted to angular frequency (multiplied by 2 pi); times take
s/ms/us/ns; phases rad; lengths m.  Dimensionless keys reject any unit.
Unknown keys, missing units and invariant violations raise ConfigError
naming the key.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .cqed import CavityParams, CqedSystem, DomainError, EmitterParams, TWO_PI
from .fitting import FitOptions
from .interferometer import FilterCavity, SidebandConfig
from .model import CrosstalkModel, EntangleModel
from .protocol import ProtocolConfig
from .register import LocalErrorModel


class ConfigError(ValueError):
    pass


_FREQ_UNITS = {"THz": 1e12, "GHz": 1e9, "MHz": 1e6, "kHz": 1e3, "Hz": 1.0}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}

# key -> kind; kinds: freq (rad/s, 2*pi applied), time (s), rad, length (m),
# float, fraction ([0,1]), int, bool
SCHEMA = {
    "cavity.omega_c": "freq",
    "cavity.kappa_w": "freq",
    "cavity.kappa_l": "freq",
    "emitter_a.omega_up": "freq",
    "emitter_a.omega_down": "freq",
    "emitter_a.g": "freq",
    "emitter_a.gamma": "freq",
    "emitter_a.sigma": "freq",
    "emitter_a.sigma_entangle": "freq",
    "emitter_a.entangle_shift": "freq",
    "emitter_b.omega_up": "freq",
    "emitter_b.omega_down": "freq",
    "emitter_b.g": "freq",
    "emitter_b.gamma": "freq",
    "emitter_b.sigma": "freq",
    "emitter_b.sigma_entangle": "freq",
    "emitter_b.entangle_shift": "freq",
    "interferometer.omega_carrier": "freq",
    "interferometer.omega_mw": "freq",
    "interferometer.c_carrier": "fraction",
    "interferometer.c_sideband": "fraction",
    "interferometer.phi_c": "rad",
    "interferometer.phi_c_scan": "rad",
    "interferometer.phase_offset": "rad",
    "interferometer.delta_L": "length",
    "filter.fwhm": "freq",
    "filter.fsr": "freq",
    "filter.peak_transmission": "fraction",
    "register.dephasing_a": "fraction",
    "register.dephasing_b": "fraction",
    "register.rabi_error_a": "float",
    "register.rabi_error_b": "float",
    "register.drive_detuning_a": "freq",
    "register.drive_detuning_b": "freq",
    "register.tau_a": "time",
    "register.tau_b": "time",
    "register.pi_half_a": "time",
    "register.pi_half_b": "time",
    "register.pi_a": "time",
    "register.pi_b": "time",
    "register.zeeman_a": "freq",
    "register.zeeman_b": "freq",
    "register.crosstalk_enabled": "bool",
    "register.crosstalk_amplitude": "float",
    "register.readout_tilt": "rad",
    "register.readout_tilt_enabled": "bool",
    "register.n_mw_phases": "int",
    "protocol.n_mean": "float",
    "protocol.eta_wg": "fraction",
    "protocol.eta_cav": "fraction",
    "protocol.eta_det": "fraction",
    "protocol.herald_calibration": "float",
    "protocol.readout_dark_a": "float",
    "protocol.readout_bright_a": "float",
    "protocol.readout_dark_b": "float",
    "protocol.readout_bright_b": "float",
    "protocol.readout_threshold": "int",
    "protocol.init_threshold": "int",
    "protocol.photons_per_flip_a": "float",
    "protocol.photons_per_flip_b": "float",
    "protocol.readout_path_efficiency": "fraction",
    "protocol.spin_flip_per_cycle": "fraction",
    "protocol.dark_counts": "float",
    "protocol.trial_block": "int",
    "protocol.rep_period": "time",
    "protocol.herald_window": "time",
    "protocol.ionization_rate": "fraction",
    "protocol.ionization_reset": "int",
    "postselect.window": "int",
    "postselect.max_infidelity_a": "fraction",
    "postselect.max_infidelity_b": "fraction",
    "model.quad_order": "int",
    "fit.quad_order": "int",
    "fit.center_weight": "float",
    "fit.center_window_frac": "float",
    "fit.outlier_sigma": "float",
    "analysis.total_observed": "fraction",
}

_UNITLESS_KINDS = {"float", "fraction", "int", "bool"}


def parse_value(key: str, text: str):
    kind = SCHEMA.get(key)
    if kind is None:
        raise ConfigError(f"unknown configuration key {key!r}")
    parts = text.split()
    if kind in _UNITLESS_KINDS:
        if len(parts) != 1:
            raise ConfigError(f"{key}: dimensionless value must carry no unit, got {text!r}")
        raw = parts[0]
        if kind == "bool":
            if raw.lower() in ("true", "yes", "on", "1"):
                return True
            if raw.lower() in ("false", "no", "off", "0"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
        if kind == "int":
            if value != int(value):
                raise ConfigError(f"{key}: expected an integer, got {raw!r}")
            return int(value)
        if kind == "fraction" and not 0.0 <= value <= 1.0:
            raise ConfigError(f"{key}: must lie in [0, 1], got {value}")
        return value
    if kind == "rad" and len(parts) == 1:
        # phases are radians by definition; a bare number is accepted
        parts = [parts[0], "rad"]
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected 'value unit', got {text!r} (missing unit?)")
    raw, unit = parts
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if kind == "freq":
        if unit not in _FREQ_UNITS:
            raise ConfigError(f"{key}: unknown frequency unit {unit!r}")
        return TWO_PI * value * _FREQ_UNITS[unit]
    if kind == "time":
        if unit not in _TIME_UNITS:
            raise ConfigError(f"{key}: unknown time unit {unit!r}")
        return value * _TIME_UNITS[unit]
    if kind == "rad":
        if unit != "rad":
            raise ConfigError(f"{key}: phase values take 'rad', got {unit!r}")
        return value
    if kind == "length":
        if unit != "m":
            raise ConfigError(f"{key}: lengths take 'm', got {unit!r}")
        return value
    raise ConfigError(f"{key}: unsupported kind {kind!r}")


def format_value(key: str, value) -> str:
    kind = SCHEMA[key]
    if kind == "bool":
        return "true" if value else "false"
    if kind == "int":
        return str(int(value))
    if kind in ("float", "fraction"):
        return repr(float(value))
    if kind == "freq":
        return f"{value / TWO_PI / 1e9!r} GHz"
    if kind == "time":
        return f"{value / 1e-9!r} ns"
    if kind == "rad":
        return f"{value!r} rad"
    if kind == "length":
        return f"{value!r} m"
    raise ConfigError(f"cannot format kind {kind!r}")


def parse_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, rhs = stripped.partition("=")
        key = key.strip()
        values[key] = parse_value(key, rhs.strip())
    return values


@dataclass(frozen=True)
class FullConfig:
    """Validated configuration bundle with assembled model objects."""

    values: dict
    system: CqedSystem
    sideband: SidebandConfig
    filter: FilterCavity
    model: EntangleModel
    protocol: ProtocolConfig
    fit_options: FitOptions
    fit_quad_order: int
    postselect_window: int
    postselect_max_a: float
    postselect_max_b: float
    total_observed: float

    def hash(self) -> str:
        # hash the parsed values (internal units) so the identity is exact
        # even though the human-readable dump is unit-converted
        canonical = "\n".join(f"{k}={self.values[k]!r}" for k in sorted(self.values))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _build(values: dict) -> FullConfig:
    missing = [k for k in SCHEMA if k not in values]
    if missing:
        raise ConfigError(f"missing configuration keys: {missing[:6]}"
                          + ("..." if len(missing) > 6 else ""))
    v = values
    try:
        cavity = CavityParams(v["cavity.omega_c"], v["cavity.kappa_w"],
                              v["cavity.kappa_l"])
        emitter_a = EmitterParams(v["emitter_a.omega_up"], v["emitter_a.omega_down"],
                                  v["emitter_a.g"], v["emitter_a.gamma"],
                                  v["emitter_a.sigma"])
        emitter_b = EmitterParams(v["emitter_b.omega_up"], v["emitter_b.omega_down"],
                                  v["emitter_b.g"], v["emitter_b.gamma"],
                                  v["emitter_b.sigma"])
        system = CqedSystem(cavity, emitter_a, emitter_b)
        sideband = SidebandConfig(
            omega_carrier=v["interferometer.omega_carrier"],
            omega_mw=v["interferometer.omega_mw"],
            c_carrier=v["interferometer.c_carrier"],
            c_sideband=v["interferometer.c_sideband"],
            phi_c=v["interferometer.phi_c"],
            delta_L=v["interferometer.delta_L"],
        )
        filt = FilterCavity(
            omega_0=v["interferometer.omega_carrier"],
            fwhm=v["filter.fwhm"], fsr=v["filter.fsr"],
            peak_transmission=v["filter.peak_transmission"],
        )
        errors = LocalErrorModel(
            rabi_error_a=v["register.rabi_error_a"],
            rabi_error_b=v["register.rabi_error_b"],
            detuning_a=v["register.drive_detuning_a"],
            detuning_b=v["register.drive_detuning_b"],
            dephasing_a=v["register.dephasing_a"],
            dephasing_b=v["register.dephasing_b"],
        )
        crosstalk = CrosstalkModel(
            enabled=v["register.crosstalk_enabled"],
            amplitude=v["register.crosstalk_amplitude"],
            detuning=abs(v["register.zeeman_a"] - v["register.zeeman_b"]),
        )
        model = EntangleModel(
            system=system,
            sideband=sideband,
            phi_c_scan=v["interferometer.phi_c_scan"],
            phase_offset=v["interferometer.phase_offset"],
            line_shift_a=v["emitter_a.entangle_shift"],
            line_shift_b=v["emitter_b.entangle_shift"],
            sigma_entangle_a=v["emitter_a.sigma_entangle"],
            sigma_entangle_b=v["emitter_b.sigma_entangle"],
            errors=errors,
            n_mean=v["protocol.n_mean"],
            tau_a=v["register.tau_a"],
            tau_b=v["register.tau_b"],
            durations=((v["register.pi_half_a"], v["register.pi_a"]),
                       (v["register.pi_half_b"], v["register.pi_b"])),
            n_mw_phases=v["register.n_mw_phases"],
            quad_order=v["model.quad_order"],
            crosstalk=crosstalk,
        )
        protocol = ProtocolConfig(
            n_mean_at_cavity=v["protocol.n_mean"],
            eta_wg=v["protocol.eta_wg"],
            eta_cav=v["protocol.eta_cav"],
            eta_det=v["protocol.eta_det"],
            herald_calibration=v["protocol.herald_calibration"],
            readout_means_a=(v["protocol.readout_dark_a"], v["protocol.readout_bright_a"]),
            readout_means_b=(v["protocol.readout_dark_b"], v["protocol.readout_bright_b"]),
            readout_threshold=v["protocol.readout_threshold"],
            init_threshold=v["protocol.init_threshold"],
            photons_per_flip_a=v["protocol.photons_per_flip_a"],
            photons_per_flip_b=v["protocol.photons_per_flip_b"],
            readout_path_efficiency=v["protocol.readout_path_efficiency"],
            spin_flip_per_cycle=v["protocol.spin_flip_per_cycle"],
            dark_counts=v["protocol.dark_counts"],
            trial_block=v["protocol.trial_block"],
            rep_period=v["protocol.rep_period"],
            herald_window=v["protocol.herald_window"],
            ionization_rate=v["protocol.ionization_rate"],
            ionization_reset=v["protocol.ionization_reset"],
        )
        fit_options = FitOptions(
            center_weight=v["fit.center_weight"],
            center_window_frac=v["fit.center_window_frac"],
            outlier_sigma=v["fit.outlier_sigma"],
        )
    except DomainError as exc:
        raise ConfigError(f"invariant violation: {exc}") from exc
    return FullConfig(
        values=dict(values),
        system=system,
        sideband=sideband,
        filter=filt,
        model=model,
        protocol=protocol,
        fit_options=fit_options,
        fit_quad_order=v["fit.quad_order"],
        postselect_window=v["postselect.window"],
        postselect_max_a=v["postselect.max_infidelity_a"],
        postselect_max_b=v["postselect.max_infidelity_b"],
        total_observed=v["analysis.total_observed"],
    )


def preset_path(name: str) -> Path:
    candidate = resources.files("heraldsim").joinpath(f"presets/{name}.cfg")
    if not candidate.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return Path(str(candidate))


def load_config(path=None, preset: str | None = None, overrides=()) -> FullConfig:
    """Load and validate a configuration file or a named preset.

    overrides is an iterable of 'key=value[ unit]' strings applied on top.
    """
    if (path is None) == (preset is None):
        raise ConfigError("provide exactly one of path or preset")
    if preset is not None:
        path = preset_path(preset)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    values = parse_text(path.read_text())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, rhs = item.partition("=")
        values[key.strip()] = parse_value(key.strip(), rhs.strip())
    return _build(values)


def dump_config(values: dict) -> str:
    """Canonical text for a parsed value dictionary (round-trips exactly)."""
    lines = [f"{key} = {format_value(key, values[key])}" for key in sorted(values)]
    return "\n".join(lines) + "\n"
