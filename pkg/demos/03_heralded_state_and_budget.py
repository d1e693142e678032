"""Predicted heralded state, its Bell fidelity, and the error budget.

Builds the full deterministic model (optics + pulse sequence + calibrated
noise), predicts the correlations a heralding event produces, and then
idealizes the error sources one at a time to attribute the infidelity.
"""
import numpy as np

from heraldsim.analysis import (CorrelationData, bell_fidelity,
                                concurrence_lower_bound, error_budget,
                                wootters_concurrence)
from heraldsim.config import load_config

cfg = load_config(preset="paper_tableS1")
model = cfg.model

pred = model.predict()
print(f"predicted Bell fidelity   : {pred.fidelity:.4f} "
      f"(+- {pred.spread:.4f} over {model.n_mw_phases} microwave phases)")

probs, weight = model.predict_correlations()
data = CorrelationData.from_probs(probs)
fid, err = bell_fidelity(data)
print(f"fidelity from correlations: {fid:.4f}")
print(f"concurrence lower bound   : {concurrence_lower_bound(data):.3f}")
state = model.heralded_state()
print(f"exact concurrence         : {wootters_concurrence(state):.3f}")

print("\ncorrelations (outcome probabilities):")
for basis in ("XX", "YY", "ZZ"):
    labels = ("uu", "ud", "du", "dd") if basis == "ZZ" else ("++", "+-", "-+", "--")
    row = "  ".join(f"{lab}={p:.3f}" for lab, p in zip(labels, probs[basis]))
    print(f"  {basis}: {row}")

print()
budget = error_budget(model, total_observed=cfg.total_observed)
print(budget.summary())
