"""Heralding-port transmission versus interferometer phase.

The four joint spin states transmit very differently once the interferometer
phase is tuned so the up-up state interferes destructively: the odd-parity
states dominate, which is what makes a single transmitted photon herald a
parity measurement.
"""
from dataclasses import replace

import numpy as np

from heraldsim import SPIN_BASIS, phase_scan
from heraldsim.config import load_config
from heraldsim.cqed import TWO_PI

cfg = load_config(preset="paper_tableS1")
scan_cfg = replace(cfg.sideband, phi_c=cfg.model.phi_c_scan)

phases = np.linspace(0.0, TWO_PI, 721)
result = phase_scan(SPIN_BASIS, phases, scan_cfg, cfg.system,
                    order=cfg.model.quad_order)

dark = result.dark_phase()
uu = SPIN_BASIS[0]
print(f"dark-port phase (up-up minimum): {dark:.3f} rad")
print("\ntransmission relative to |uu> at the dark phase:")
i0 = int(np.argmin(result.mean_t2[uu]))
for spin in SPIN_BASIS:
    ratio = result.mean_t2[spin][i0] / result.mean_t2[uu][i0]
    print(f"  |{spin}> : {ratio:7.2f}")

try:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not installed; skipping the plot")
else:
    fig, ax = plt.subplots(figsize=(7, 4))
    for spin in SPIN_BASIS:
        mean = result.mean_t2[spin]
        band = np.sqrt(result.var_t2[spin])
        line, = ax.plot(result.phases, mean, label=f"|{spin}>")
        ax.fill_between(result.phases, np.clip(mean - band, 1e-6, None),
                        mean + band, alpha=0.25, color=line.get_color())
    ax.axvline(dark, color="k", lw=1)
    ax.set_yscale("log")
    ax.set_xlabel("interferometer phase (rad)")
    ax.set_ylabel(r"$|T|^2$ (arb. units)")
    ax.legend(ncol=2)
    fig.tight_layout()
    fig.savefig(__file__.replace("02_phase_scan.py", "phase_scan.svg"))
    print("\nwrote phase_scan.svg  (bands: spectral-diffusion variance)")
