"""Spin-dependent reflection spectra of the two-emitter cavity.

Walks through the core optical physics: the bare-cavity dip, the emitter
features it grows when an emitter is coupled, and how the joint spin state
switches the reflection seen by each probe sideband.  Run with

    python demos/01_reflection_spectra.py

to print a few landmark numbers and (with matplotlib installed) to write
reflection_spectra.svg next to this script.
"""
import numpy as np

from heraldsim import SPIN_BASIS, reflection_amplitude, sideband_frequencies
from heraldsim.config import load_config
from heraldsim.cqed import TWO_PI

cfg = load_config(preset="paper_tableS1")
system = cfg.system
cavity = system.cavity

# The bare cavity reflects |1 - 2 kappa_w/kappa_tot| on resonance: with the
# preset rates that amplitude is negative (overcoupled side).
r0 = reflection_amplitude(cavity.omega_c, cavity)
print(f"bare cavity on resonance: R = {r0:.3f}")

# Each spin configuration selects one optical line per emitter; the probe
# sidebands sit near the scattering-state dips.
sba, sbb, car = sideband_frequencies(cfg.sideband)
print("\n|R| at (sideband A, sideband B, carrier):")
for spin in SPIN_BASIS:
    vals = [abs(reflection_amplitude(w, cavity, system.emitters_for(spin)))
            for w in (sba, sbb, car)]
    print(f"  {spin}: " + "  ".join(f"{v:.3f}" for v in vals))

# A full scan across the cavity makes the Fano features visible.
grid = np.linspace(cavity.omega_c - TWO_PI * 22e9, cavity.omega_c + TWO_PI * 8e9, 2000)
spectra = {spin: np.abs(reflection_amplitude(grid, cavity, system.emitters_for(spin))) ** 2
           for spin in (SPIN_BASIS[1], SPIN_BASIS[2])}

try:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not installed; skipping the plot")
else:
    fig, ax = plt.subplots(figsize=(7, 4))
    x = (grid - cavity.omega_c) / TWO_PI / 1e9
    for spin, r2 in spectra.items():
        ax.plot(x, r2, label=f"|{spin}>")
    for w, name in ((sba, "sideband A"), (sbb, "sideband B"), (car, "carrier")):
        ax.axvline((w - cavity.omega_c) / TWO_PI / 1e9, ls=":", color="gray")
        ax.text((w - cavity.omega_c) / TWO_PI / 1e9, 1.02, name, rotation=90,
                fontsize=7, ha="right")
    ax.set_xlabel("detuning from cavity (GHz)")
    ax.set_ylabel(r"reflection $|R|^2$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(__file__.replace("01_reflection_spectra.py", "reflection_spectra.svg"))
    print("\nwrote reflection_spectra.svg")
