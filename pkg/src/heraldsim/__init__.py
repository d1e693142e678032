"""heraldsim: heralded entanglement of two spectrally distinct emitters.

A numpy/scipy toolkit modeling a two-emitter cavity system probed through a
frequency-bin interferometer: spin-dependent reflection spectra, heralded
Bell-state preparation, Monte Carlo photon-counting protocol runs, spectral
fits, and the marginal error budget of the heralded state.
"""

from .cqed import (
    CavityParams,
    CqedSystem,
    DomainError,
    EmitterParams,
    SPIN_BASIS,
    Spin,
    SpinConfig,
    contrast_bandwidth,
    cooperativity,
    diffusion_average,
    optimal_detunings,
    reflection_amplitude,
)
from .interferometer import (
    FilterCavity,
    SidebandConfig,
    dark_port_phase,
    filter_transmission,
    phase_from_mw_frequency,
    phase_scan,
    sideband_frequencies,
    spin_transmission_map,
    transmission_amplitude,
)
from .register import (
    CrosstalkModel,
    EchoSequence,
    LocalErrorModel,
    PulseSpec,
    TwoQubitState,
    apply_dephasing,
    apply_rotation,
    heralded_projection,
    measure_correlations,
    run_echo_sequence,
    two_photon_dephasing,
)
from .model import EntangleModel, Prediction

__version__ = "0.1.0"

__all__ = [
    "CavityParams", "CqedSystem", "DomainError", "EmitterParams", "SPIN_BASIS",
    "Spin", "SpinConfig", "contrast_bandwidth", "cooperativity",
    "diffusion_average", "optimal_detunings", "reflection_amplitude",
    "FilterCavity", "SidebandConfig", "dark_port_phase", "filter_transmission",
    "phase_from_mw_frequency", "phase_scan", "sideband_frequencies",
    "spin_transmission_map", "transmission_amplitude",
    "CrosstalkModel", "EchoSequence", "LocalErrorModel", "PulseSpec",
    "TwoQubitState", "apply_dephasing", "apply_rotation", "heralded_projection",
    "measure_correlations", "run_echo_sequence", "two_photon_dephasing",
    "EntangleModel", "Prediction",
    "__version__",
]
