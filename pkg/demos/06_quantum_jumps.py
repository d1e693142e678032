"""Quantum jumps under a continuous probe.

With the heralding laser applied continuously, the filter-cavity
transmission telegraphs the spin parity: odd-parity intervals transmit,
even-parity intervals are dark.  Jump statistics are set by the optical
cycling probability per scattered photon.
"""
import numpy as np

from heraldsim.config import load_config
from heraldsim.protocol import simulate_jump_trace

cfg = load_config(preset="paper_tableS1")

trace = simulate_jump_trace(seed=4, n_bins=4000, bin_time=2e-4,
                            model=cfg.model, config=cfg.protocol)
t, counts, parity = trace.T
odd = parity < 0
print(f"bins: {len(t)}; odd-parity fraction: {odd.mean():.2f}")
print(f"mean counts/bin  odd: {counts[odd].mean():.2f}   even: {counts[~odd].mean():.2f}")
jumps = int(np.sum(np.abs(np.diff(parity)) > 0))
print(f"parity jumps observed: {jumps}")

try:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping the plot")
else:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 4), sharex=True)
    ax1.plot(t, counts, lw=0.5)
    ax1.set_ylabel("herald counts / bin")
    ax2.step(t, parity, lw=0.8, color="tab:red")
    ax2.set_ylabel("spin parity")
    ax2.set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(__file__.replace("06_quantum_jumps.py", "quantum_jumps.svg"))
    print("wrote quantum_jumps.svg")
