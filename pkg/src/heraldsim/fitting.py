"""Forward simulation and weighted least-squares fitting of reflection scans.

A scan model produces expected detector counts over a laser-frequency grid:

    counts(w) = background + scale * modulation(w) * <|R(w)|^2>

where <.> mixes over the spin-preparation outcomes and averages over the
Gaussian spectral diffusion of both emitters, and modulation is a slow
sinusoidal wavelength dependence of the input power.

The optimizer is a damped Gauss-Newton (Levenberg-Marquardt) loop with
central-difference Jacobians; a Nelder-Mead fallback (scipy) is selectable
for poor starting points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cqed import (
    CqedSystem,
    DomainError,
    Spin,
    SpinConfig,
    SPIN_BASIS,
    gauss_hermite_offsets,
    reflection_amplitude,
)

DEFAULT_FIT_QUADRATURE = 11


class FitNonConvergence(RuntimeError):
    """Optimizer hit the iteration limit; carries the best result so far."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class RankDeficiencyError(RuntimeError):
    """Normal equations singular; names the unidentifiable combination."""


@dataclass(frozen=True)
class PowerModulation:
    """Sinusoidal wavelength dependence of the input laser intensity."""

    amplitude: float = 0.0
    period: float = 1.0       # rad/s along the scan axis
    phase: float = 0.0

    def __call__(self, omega, reference):
        if self.amplitude == 0.0:
            return np.ones_like(np.asarray(omega, dtype=float))
        return 1.0 + self.amplitude * np.sin(
            2.0 * math.pi * (np.asarray(omega, dtype=float) - reference)
            / self.period + self.phase)


@dataclass(frozen=True)
class ScanModel:
    """Everything needed to predict a reflection scan in counts."""

    system: CqedSystem
    scale: float
    background: float = 0.0
    modulation: PowerModulation = field(default_factory=PowerModulation)
    init_fidelity_a: float = 1.0
    init_fidelity_b: float = 1.0
    quad_order: int = DEFAULT_FIT_QUADRATURE

    def __post_init__(self):
        if self.scale <= 0:
            raise DomainError(f"ScanModel.scale must be > 0, got {self.scale}")
        for name in ("init_fidelity_a", "init_fidelity_b"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must be in [0, 1], got {v}")


def _preparation_weights(model: ScanModel, prepared) -> list[tuple[SpinConfig, float]]:
    if prepared == "unpolarized":
        return [(s, 0.25) for s in SPIN_BASIS]
    if not isinstance(prepared, SpinConfig):
        raise DomainError(f"prepared must be a SpinConfig or 'unpolarized', got {prepared!r}")
    fa, fb = model.init_fidelity_a, model.init_fidelity_b

    def w1(intended: Spin, actual: Spin, f: float) -> float:
        return f if intended == actual else 1.0 - f

    out = []
    for s in SPIN_BASIS:
        w = w1(prepared.spin_a, s.spin_a, fa) * w1(prepared.spin_b, s.spin_b, fb)
        if w > 0:
            out.append((s, w))
    return out


def simulate_scan(model: ScanModel, freqs, prepared="unpolarized") -> np.ndarray:
    """Expected counts per frequency for the given spin preparation."""
    w = np.asarray(freqs, dtype=float)
    if w.size == 0:
        raise DomainError("simulate_scan requires a non-empty frequency grid")
    if np.any(np.diff(w) < 0):
        raise DomainError("simulate_scan requires a sorted frequency grid")
    sys_ = model.system
    oa, wa = (gauss_hermite_offsets(sys_.emitter_a.sigma, model.quad_order)
              if sys_.emitter_a.sigma > 0 else (np.zeros(1), np.ones(1)))
    ob, wb = (gauss_hermite_offsets(sys_.emitter_b.sigma, model.quad_order)
              if sys_.emitter_b.sigma > 0 else (np.zeros(1), np.ones(1)))
    gw = wa[:, None] * wb[None, :]
    gw = gw / gw.sum()
    offsets = (oa[:, None, None], ob[None, :, None])
    r2 = np.zeros_like(w)
    for spin_cfg, weight in _preparation_weights(model, prepared):
        refl = reflection_amplitude(w[None, None, :], sys_.cavity,
                                    sys_.emitters_for(spin_cfg), offsets)
        r2 += weight * np.einsum("ij,ijk->k", gw, np.abs(refl) ** 2)
    return model.background + model.scale * model.modulation(w, sys_.cavity.omega_c) * r2


def shot_noise_weights(counts) -> np.ndarray:
    """Inverse-variance weights for Poisson data, floored at one count."""
    c = np.asarray(counts, dtype=float)
    if np.any(c < 0):
        raise DomainError("shot_noise_weights requires counts >= 0")
    return 1.0 / np.maximum(c, 1.0)


# --- parameter vector mapping --------------------------------------------------

#: Fit parameter names understood by fit_scan.
FIT_PARAMETERS = (
    "kappa_w", "kappa_l",
    "g_a", "gamma_a", "sigma_a", "omega_up_a", "omega_down_a",
    "g_b", "gamma_b", "sigma_b", "omega_up_b", "omega_down_b",
    "scale", "background", "mod_amplitude", "mod_phase",
    "init_fidelity_a", "init_fidelity_b",
)


def _get_param(model: ScanModel, name: str) -> float:
    sys_ = model.system
    table = {
        "kappa_w": sys_.cavity.kappa_w, "kappa_l": sys_.cavity.kappa_l,
        "g_a": sys_.emitter_a.g, "gamma_a": sys_.emitter_a.gamma,
        "sigma_a": sys_.emitter_a.sigma,
        "omega_up_a": sys_.emitter_a.omega_up, "omega_down_a": sys_.emitter_a.omega_down,
        "g_b": sys_.emitter_b.g, "gamma_b": sys_.emitter_b.gamma,
        "sigma_b": sys_.emitter_b.sigma,
        "omega_up_b": sys_.emitter_b.omega_up, "omega_down_b": sys_.emitter_b.omega_down,
        "scale": model.scale, "background": model.background,
        "mod_amplitude": model.modulation.amplitude,
        "mod_phase": model.modulation.phase,
        "init_fidelity_a": model.init_fidelity_a,
        "init_fidelity_b": model.init_fidelity_b,
    }
    try:
        return table[name]
    except KeyError:
        raise DomainError(f"unknown fit parameter {name!r}") from None


def _with_params(model: ScanModel, updates: dict) -> ScanModel:
    sys_ = model.system
    cav = sys_.cavity
    ea, eb = sys_.emitter_a, sys_.emitter_b
    cav_kw, em_a, em_b, top = {}, {}, {}, {}
    for name, value in updates.items():
        if name in ("kappa_w", "kappa_l"):
            cav_kw[name] = value
        elif name.endswith("_a") and name[:-2] in ("g", "gamma", "sigma", "omega_up",
                                                   "omega_down"):
            em_a[name[:-2]] = value
        elif name.endswith("_b") and name[:-2] in ("g", "gamma", "sigma", "omega_up",
                                                   "omega_down"):
            em_b[name[:-2]] = value
        elif name == "mod_amplitude":
            top.setdefault("modulation", {})["amplitude"] = value
        elif name == "mod_phase":
            top.setdefault("modulation", {})["phase"] = value
        elif name in ("scale", "background", "init_fidelity_a", "init_fidelity_b"):
            top[name] = value
        else:
            raise DomainError(f"unknown fit parameter {name!r}")
    if cav_kw:
        cav = replace(cav, **cav_kw)
    if em_a:
        ea = replace(ea, **em_a)
    if em_b:
        eb = replace(eb, **em_b)
    mod = model.modulation
    if "modulation" in top:
        mod = replace(mod, **top.pop("modulation"))
    return replace(model, system=CqedSystem(cav, ea, eb), modulation=mod, **top)


# --- Levenberg-Marquardt ---------------------------------------------------------

@dataclass
class LMResult:
    params: np.ndarray
    cost: float
    grad_norm: float
    iterations: int
    converged: bool
    jacobian: np.ndarray | None = None
    cost_history: list = field(default_factory=list)  # accepted costs, non-increasing


def _numeric_jacobian(fun, p, rel_step=1e-6):
    r0 = fun(p)
    jac = np.empty((r0.size, p.size))
    for j in range(p.size):
        h = rel_step * max(abs(p[j]), 1.0e-12 * (1.0 + abs(p[j])))
        if h == 0.0:
            h = rel_step
        pp = p.copy()
        pp[j] += h
        rm = p.copy()
        rm[j] -= h
        jac[:, j] = (fun(pp) - fun(rm)) / (2.0 * h)
    return jac


def levenberg_marquardt(
    residual_fn,
    p0,
    max_iter: int = 100,
    gtol: float = 1e-10,
    xtol: float = 1e-12,
    lam0: float = 1e-3,
    param_names=None,
):
    """Damped Gauss-Newton minimization of sum(residual_fn(p)**2).

    The accepted-cost sequence is non-increasing.  Raises FitNonConvergence
    after max_iter (carrying the best-so-far result) and RankDeficiencyError
    when the normal equations are singular even at large damping.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = residual_fn(p)
    cost = float(r @ r)
    history = [cost]
    lam = lam0
    it = 0
    jac = None
    for it in range(1, max_iter + 1):
        jac = _numeric_jacobian(residual_fn, p)
        _check_rank(jac, param_names)
        grad = jac.T @ r
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm < gtol:
            return LMResult(p, cost, gnorm, it, True, jac, history)
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        if np.any(diag <= 0.0):
            _raise_rank_deficiency(jac, param_names)
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                _raise_rank_deficiency(jac, param_names)
            p_new = p + step
            try:
                r_new = residual_fn(p_new)
            except (DomainError, ValueError):
                lam *= 10.0
                continue
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                history.append(cost_new)
                if np.max(np.abs(step) / np.maximum(np.abs(p), 1e-300)) < xtol:
                    return LMResult(p_new, cost_new, gnorm, it, True, jac, history)
                p, r, cost = p_new, r_new, cost_new
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # damping saturated: local minimum to working precision
            return LMResult(p, cost, gnorm, it, True, jac, history)
    result = LMResult(p, cost, float(np.max(np.abs(jac.T @ r))), it, False, jac, history)
    raise FitNonConvergence(f"no convergence after {max_iter} iterations", result)


def _check_rank(jac, param_names, rcond: float = 1e-12):
    if jac.size == 0:
        return
    svals = np.linalg.svd(jac, compute_uv=False)
    if svals[-1] <= rcond * max(svals[0], 1e-300):
        _raise_rank_deficiency(jac, param_names)


def _raise_rank_deficiency(jac, param_names):
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    null = vt[-1]
    names = param_names or [f"p{i}" for i in range(null.size)]
    weights = np.abs(null) / np.max(np.abs(null))
    combo = " + ".join(f"{w:.2f}*{n}" for n, w in zip(names, weights) if w > 0.3)
    raise RankDeficiencyError(
        f"singular normal equations; unidentifiable combination: {combo} "
        f"(singular value {s[-1]:.3e})")


# --- scan fitting ---------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    """Estimates and diagnostics of one scan fit."""

    estimates: dict
    errors: dict            # standard errors, free parameters only
    residual_norm: float
    free: tuple[str, ...]
    fixed: tuple[str, ...]
    iterations: int
    grad_norm: float
    converged: bool
    model: ScanModel


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 100
    center_weight: float = 5.0
    center_window_frac: float = 0.25   # window half-width as fraction of kappa_tot
    apply_center_weight: bool = False
    outlier_sigma: float = 0.0          # 0 disables the robust trim
    method: str = "lm"                  # "lm" or "nelder-mead"


def _center_weights(freqs, model: ScanModel, options: FitOptions) -> np.ndarray:
    w = np.ones_like(np.asarray(freqs, dtype=float))
    if not options.apply_center_weight:
        return w
    cav = model.system.cavity
    half = options.center_window_frac * cav.kappa_tot
    w[np.abs(np.asarray(freqs) - cav.omega_c) <= half] = options.center_weight
    return w


def fit_scan(
    data,
    model0: ScanModel,
    free,
    prepared="unpolarized",
    options: FitOptions = FitOptions(),
    exclude_mask=None,
) -> FitResult:
    """Weighted nonlinear least squares of a reflection scan.

    data is (freqs, counts) or (freqs, counts, weights); weights default to
    shot-noise weights.  free lists the parameter names allowed to vary;
    exclude_mask marks points to drop (True = excluded).  Scans prepared in
    different spin states may be fitted jointly by passing lists of data
    tuples and preparations.
    """
    datasets, preparations = _normalize_datasets(data, prepared)
    free = tuple(free)
    for name in free:
        if name not in FIT_PARAMETERS:
            raise DomainError(f"unknown fit parameter {name!r}")
    fixed = tuple(n for n in FIT_PARAMETERS if n not in free)

    masks = _normalize_masks(exclude_mask, datasets)
    n_points = sum(int((~m).sum()) for (_, _, _), m in zip(datasets, masks))
    if n_points < len(free):
        raise DomainError(
            f"{n_points} usable points cannot constrain {len(free)} free parameters")

    scales = np.array([max(abs(_get_param(model0, n)), 1.0) for n in free])

    def build(p):
        return _with_params(model0, {n: v * s for n, v, s in zip(free, p, scales)})

    def residuals(p):
        model = build(p)
        out = []
        for (freqs, counts, weights), mask, prep in zip(datasets, masks, preparations):
            cw = _center_weights(freqs, model, options)
            sim = simulate_scan(model, freqs, prep)
            r = np.sqrt(weights * cw) * (counts - sim)
            out.append(r[~mask])
        return np.concatenate(out)

    p0 = np.array([_get_param(model0, n) for n in free]) / scales

    if not free:
        r = residuals(p0)
        return FitResult({n: _get_param(model0, n) for n in FIT_PARAMETERS}, {},
                         float(np.sqrt(r @ r)), free, fixed, 0, 0.0, True, model0)

    if options.method == "nelder-mead":
        from scipy.optimize import minimize

        res = minimize(lambda p: float(residuals(p) @ residuals(p)), p0,
                       method="Nelder-Mead",
                       options={"maxiter": 400 * len(free), "xatol": 1e-10,
                                "fatol": 1e-12})
        lm = LMResult(res.x, float(res.fun), math.nan, int(res.nit), bool(res.success),
                      _numeric_jacobian(residuals, res.x))
    else:
        lm = levenberg_marquardt(residuals, p0, max_iter=options.max_iter,
                                 param_names=list(free))

    if options.outlier_sigma > 0:
        r = residuals(lm.params)
        sigma_hat = math.sqrt(float(r @ r) / max(r.size - len(free), 1))
        bad = np.abs(r) > options.outlier_sigma * sigma_hat
        if bad.any():
            masks = _extend_masks(masks, datasets, bad)

            def residuals2(p):
                model = build(p)
                out = []
                for (freqs, counts, weights), mask, prep in zip(datasets, masks,
                                                                preparations):
                    cw = _center_weights(freqs, model, options)
                    sim = simulate_scan(model, freqs, prep)
                    out.append((np.sqrt(weights * cw) * (counts - sim))[~mask])
                return np.concatenate(out)

            lm = levenberg_marquardt(residuals2, lm.params,
                                     max_iter=options.max_iter,
                                     param_names=list(free))
            residuals = residuals2

    model = build(lm.params)
    estimates = {n: _get_param(model, n) for n in FIT_PARAMETERS}
    errors = _standard_errors(lm, free, scales)
    return FitResult(estimates, errors, math.sqrt(lm.cost), free, fixed,
                     lm.iterations, lm.grad_norm, lm.converged, model)


def _normalize_datasets(data, prepared):
    if isinstance(data, list):
        datasets = [(_as_triplet(d)) for d in data]
        preparations = list(prepared)
    else:
        datasets = [_as_triplet(data)]
        preparations = [prepared]
    if len(datasets) != len(preparations):
        raise DomainError("one preparation must be given per dataset")
    return datasets, preparations


def _as_triplet(d):
    if len(d) == 2:
        freqs, counts = d
        weights = shot_noise_weights(counts)
    else:
        freqs, counts, weights = d
    return (np.asarray(freqs, dtype=float), np.asarray(counts, dtype=float),
            np.asarray(weights, dtype=float))


def _normalize_masks(exclude_mask, datasets):
    if exclude_mask is None:
        return [np.zeros(len(f), dtype=bool) for (f, _, _) in datasets]
    if isinstance(exclude_mask, list) and len(exclude_mask) == len(datasets) \
            and np.ndim(exclude_mask[0]) == 1:
        return [np.asarray(m, dtype=bool) for m in exclude_mask]
    return [np.asarray(exclude_mask, dtype=bool)]


def _extend_masks(masks, datasets, bad_flat):
    out = []
    pos = 0
    for (freqs, _, _), mask in zip(datasets, masks):
        new = mask.copy()
        keep_idx = np.flatnonzero(~mask)
        n = keep_idx.size
        new[keep_idx[bad_flat[pos:pos + n]]] = True
        pos += n
        out.append(new)
    return out


def _standard_errors(lm: LMResult, free, scales) -> dict:
    if lm.jacobian is None or lm.jacobian.size == 0:
        return {}
    n, k = lm.jacobian.shape
    dof = max(n - k, 1)
    s2 = lm.cost / dof
    try:
        cov = s2 * np.linalg.inv(lm.jacobian.T @ lm.jacobian)
    except np.linalg.LinAlgError:
        return {}
    return {name: float(math.sqrt(max(cov[i, i], 0.0)) * scales[i])
            for i, name in enumerate(free)}
