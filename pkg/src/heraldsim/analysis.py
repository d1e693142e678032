"""Entanglement metrics and the marginal error budget.

The Bell-state fidelity is estimated from product-basis correlations,

    F = (2 p_ud + 2 p_du + K_XX + K_YY) / 4,

where p_ud, p_du are ZZ outcome probabilities and K_BB = p_++ + p_-- - p_+-
- p_-+ is the contrast in basis B.  On exact probabilities this equals the
overlap with |psi+>.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cqed import DomainError
from .model import ERROR_SOURCES, EntangleModel
from .register import SY, TwoQubitState

BASES = ("XX", "YY", "ZZ")


@dataclass(frozen=True)
class BasisCounts:
    """Outcome statistics of one measurement basis.

    probs is ordered (++, +-, -+, --), or (uu, ud, du, dd) for ZZ.  counts
    may be zero when the probabilities are exact (model predictions).
    """

    probs: np.ndarray
    n_total: int = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (4,):
            raise DomainError("BasisCounts.probs must have four entries")
        if abs(p.sum() - 1.0) > 1e-6:
            raise DomainError(f"basis probabilities sum to {p.sum():.8f}, expected 1")

    def errors(self) -> np.ndarray:
        """Binomial standard errors of the four probabilities."""
        p = np.asarray(self.probs, dtype=float)
        if self.n_total <= 0:
            return np.zeros(4)
        return np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / self.n_total)

    def contrast(self) -> float:
        p = self.probs
        return float(p[0] - p[1] - p[2] + p[3])

    def contrast_error(self) -> float:
        if self.n_total <= 0:
            return 0.0
        # variance of a +/-1-valued observable estimated from n_total shots
        k = self.contrast()
        return math.sqrt(max(1.0 - k * k, 0.0) / self.n_total)


@dataclass(frozen=True)
class CorrelationData:
    """Measured (or predicted) correlations in the XX, YY and ZZ bases."""

    xx: BasisCounts
    yy: BasisCounts
    zz: BasisCounts

    @classmethod
    def from_probs(cls, probs: dict, n_total: int = 0) -> "CorrelationData":
        missing = [b for b in BASES if b not in probs]
        if missing:
            raise DomainError(f"missing basis data: {missing}")
        return cls(xx=BasisCounts(np.asarray(probs["XX"]), n_total),
                   yy=BasisCounts(np.asarray(probs["YY"]), n_total),
                   zz=BasisCounts(np.asarray(probs["ZZ"]), n_total))

    def basis(self, name: str) -> BasisCounts:
        return {"XX": self.xx, "YY": self.yy, "ZZ": self.zz}[name]


def bell_fidelity(data: CorrelationData) -> tuple[float, float]:
    """Fidelity with |psi+> from the three-basis correlations.

    Returns (F, standard error); the error combines the independent binomial
    errors of the three bases in quadrature.
    """
    pz = data.zz.probs
    kxx = data.xx.contrast()
    kyy = data.yy.contrast()
    fid = (2.0 * pz[1] + 2.0 * pz[2] + kxx + kyy) / 4.0
    ez = data.zz.errors()
    err = 0.25 * math.sqrt(
        4.0 * ez[1] ** 2 + 4.0 * ez[2] ** 2
        + data.xx.contrast_error() ** 2 + data.yy.contrast_error() ** 2
    )
    return float(fid), float(err)


def concurrence_lower_bound(data: CorrelationData) -> float:
    """Concurrence bound C >= 2 max(0, (K_XX + K_YY)/4 - sqrt(p_uu p_dd)).

    (K_XX + K_YY)/4 lower-bounds the |ud><du| coherence magnitude, giving the
    standard two-qubit bound 2(|rho_23| - sqrt(rho_11 rho_44)).
    """
    pz = data.zz.probs
    coherence = (data.xx.contrast() + data.yy.contrast()) / 4.0
    return float(max(0.0, 2.0 * (coherence - math.sqrt(max(pz[0] * pz[3], 0.0)))))


def wootters_concurrence(state: TwoQubitState) -> float:
    """Exact two-qubit concurrence from the spin-flipped spectrum."""
    state.validate()
    rho = state.rho
    yy = np.kron(SY, SY)
    rho_tilde = yy @ rho.conj() @ yy
    evals = np.linalg.eigvals(rho @ rho_tilde)
    lam = np.sqrt(np.clip(evals.real, 0.0, None))
    lam.sort()
    return float(max(0.0, lam[-1] - lam[-2] - lam[-3] - lam[-4]))


# --- error budget ------------------------------------------------------------

#: Display names mirroring the published budget, in report order.
BUDGET_ROWS = (
    ("decoherence", "Decoherence T2"),
    ("microwave", "Microwave pulse errors"),
    ("two_photon", "2-photon events"),
    ("detuning", "Systematic detuning"),
    ("phase", "Interferometer phase"),
    ("carrier", "Carrier leakage"),
    ("diffusion", "Spectral diffusion"),
    ("contrast", "Emitter contrast"),
)


@dataclass(frozen=True)
class BudgetEntry:
    source: str
    label: str
    marginal: float     # mean over the microwave-phase sweep
    spread: float       # systematic spread over the sweep


@dataclass(frozen=True)
class ErrorBudget:
    entries: tuple[BudgetEntry, ...]
    fidelity: float
    fidelity_spread: float
    total_expected: float        # 1 - fidelity
    total_observed: float | None = None  # external reference, if configured

    def marginal(self, source: str) -> float:
        for e in self.entries:
            if e.source == source:
                return e.marginal
        raise DomainError(f"unknown error source {source!r}")

    def sum_of_marginals(self) -> float:
        return float(sum(e.marginal for e in self.entries))

    def summary(self) -> str:
        lines = ["Entanglement error budget (marginal contributions)", ""]
        for e in self.entries:
            lines.append(f"  {e.label:24s} {100 * e.marginal:6.2f} +- {100 * e.spread:.2f} %")
        lines.append("")
        lines.append(f"  {'Predicted fidelity':24s} {self.fidelity:.4f} +- {self.fidelity_spread:.4f}")
        lines.append(f"  {'Total expected':24s} {100 * self.total_expected:6.2f} %")
        if self.total_observed is not None:
            lines.append(f"  {'Total observed (ref.)':24s} {100 * self.total_observed:6.2f} %")
        lines.append(f"  {'Sum of marginals':24s} {100 * self.sum_of_marginals():6.2f} %")
        lines.append("  (marginals are correlated; their sum need not equal the total)")
        return "\n".join(lines)


def error_budget(
    model: EntangleModel,
    sources=tuple(s for s, _ in BUDGET_ROWS),
    total_observed: float | None = None,
) -> ErrorBudget:
    """Marginal infidelity contribution of each error source.

    Every source is idealized in turn; the marginal is the fidelity gained,
    averaged over the microwave-phase sweep, with the sweep's standard
    deviation as systematic spread.  The "contrast" row is the residual
    infidelity with every other source removed at once.
    """
    labels = dict(BUDGET_ROWS)
    unknown = [s for s in sources if s not in labels]
    if unknown:
        raise DomainError(f"unknown error source(s): {unknown}")
    base = model.predict()
    entries = []
    for source in sources:
        if source == "contrast":
            floor = model.predict(eliminate=frozenset(ERROR_SOURCES))
            marg = 1.0 - floor.fidelity
            spread = floor.spread
        else:
            pred = model.predict(eliminate={source})
            marg = pred.fidelity - base.fidelity
            spread = math.sqrt(pred.spread**2 + base.spread**2)
        if marg < -1e-9:
            warnings.warn(
                f"model-consistency: eliminating {source!r} reduced the "
                f"predicted fidelity by {-marg:.2e}",
                RuntimeWarning,
            )
        entries.append(BudgetEntry(source, labels[source], float(marg), float(spread)))
    return ErrorBudget(
        entries=tuple(entries),
        fidelity=base.fidelity,
        fidelity_spread=base.spread,
        total_expected=1.0 - base.fidelity,
        total_observed=total_observed,
    )
