"""Robust multi-start nonlinear regression for the loss laws.

The objective is a Huber loss on log-space residuals, minimized with
derivative-free simplex descent under box constraints, restarted from every
point of a parameter grid plus seeded random starts. The global best is kept
(ties broken by lowest start index) and re-polished with fresh simplexes so
noiseless data converges to machine-level residuals. Everything is
deterministic for a fixed seed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .capacity import CapacityParams, derive_capacity_observations
from .errors import DomainError, FitError, SchemaError
from .laws import LawParams, LawSpec, pooled_unique_tokens, predict_run_loss, run_breakdown
from .parallel import ordered_map
from .run_data import CorpusCatalog, RunSet

#: Spec'd default initialization grid; the Cartesian product of these lists
#: seeds the multi-start search. Transfer weights are not gridded; they start
#: from normalized transfer scores (or 0.1) in every start.
DEFAULT_INIT_GRID: dict[str, tuple[float, ...]] = {
    "e_irreducible": (0.0, 0.5, 1.0),
    "log_a": (2.0, 6.0, 10.0, 14.0),
    "alpha": (0.2, 0.35, 0.5, 0.7),
    "log_b": (2.0, 6.0, 10.0, 14.0),
    "beta": (0.2, 0.35, 0.5, 0.7),
    "lam": (0.5, 1.0, 4.0),
}

#: Leaner default grid for the 7-parameter capacity law; the full law grid
#: crossed with exponent lists for phi/psi would explode combinatorially.
CAPACITY_INIT_GRID: dict[str, tuple[float, ...]] = {
    "l_inf": (0.0, 0.7),
    "log_a": (4.0, 10.0),
    "alpha": (0.2, 0.5),
    "log_b": (4.0, 10.0),
    "beta": (0.2, 0.5),
    "phi": (0.0, 0.15),
    "psi": (-0.1, 0.0),
}

_LOG_COEF_BOUNDS = (-10.0, 40.0)
_EXPONENT_BOUNDS = (1e-3, 2.0)
_LAM_BOUNDS = (1e-3, 100.0)
_TAU_BOUNDS = (0.0, 1.0)
_CAP_EXP_BOUNDS = (-2.0, 2.0)
_XATOL = 1e-9


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the multi-start search.

    n_polish_rounds re-runs the simplex from the incumbent optimum; a fresh
    simplex escapes the degenerate shapes plain descent can stall in.
    """

    init_grid: Mapping[str, Sequence[float]] | None = None
    n_random_starts: int = 16
    huber_delta: float = 1e-3
    max_iters: int = 2000
    convergence_tol: float = 1e-10
    seed: int = 0
    n_polish_rounds: int = 3

    def __post_init__(self) -> None:
        if self.n_random_starts < 1 or self.max_iters < 1 or self.n_polish_rounds < 0:
            raise SchemaError("fit config counts must be at least 1")
        if self.huber_delta <= 0:
            raise SchemaError("huber_delta must be positive")
        if self.convergence_tol <= 0:
            raise SchemaError("convergence_tol must be positive")


@dataclass(frozen=True)
class FitResult:
    params: LawParams | CapacityParams
    objective: float
    n_starts_tried: int
    best_start_index: int
    converged: bool
    train_r2: float

    def to_json_dict(self) -> dict:
        return {
            "params": self.params.to_json_dict(),
            "objective": self.objective,
            "n_starts_tried": self.n_starts_tried,
            "best_start_index": self.best_start_index,
            "converged": self.converged,
            "train_r2": self.train_r2,
        }


def _huber_sum(residuals: np.ndarray, delta: float) -> float:
    a = np.abs(residuals)
    quad = 0.5 * residuals * residuals
    lin = delta * (a - 0.5 * delta)
    return float(np.sum(np.where(a <= delta, quad, lin)))


def _sat_vec(d: np.ndarray, u: np.ndarray | float, lam: float) -> np.ndarray:
    """Vectorized saturation; rows with d == u == 0 pass through as zero."""
    d = np.asarray(d, dtype=float)
    u_b = np.broadcast_to(np.asarray(u, dtype=float), d.shape)
    out = d.copy()
    mask = d > u_b
    if mask.any():
        dm = d[mask]
        um = u_b[mask]
        out[mask] = um * (1.0 + (1.0 - np.exp(-lam * (dm / um - 1.0))) / lam)
    return out


# ---------------------------------------------------------------------------
# Law fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _LawDesign:
    """Precomputed arrays for vectorized law evaluation over a run set."""

    ln_n: np.ndarray
    obs_loss: np.ndarray
    obs_log: np.ndarray
    d_t: np.ndarray
    u_t: float
    d_k: np.ndarray  # (n_runs, n_transfer)
    u_k: np.ndarray  # (n_transfer,)
    d_o: np.ndarray
    u_o: np.ndarray
    run_ids: tuple[str, ...]


def _build_design(runs: RunSet, spec: LawSpec, catalog: CorpusCatalog) -> _LawDesign:
    n_runs = len(runs)
    ln_n = np.empty(n_runs)
    obs_loss = np.empty(n_runs)
    d_t = np.empty(n_runs)
    d_k = np.zeros((n_runs, len(spec.transfer_set)))
    d_o = np.zeros(n_runs)
    u_o = np.zeros(n_runs)
    run_ids = []
    u_t = float(catalog.require(spec.target_language)) if spec.uses_saturation else 0.0
    u_k = (
        np.array([float(catalog.require(lang)) for lang in spec.transfer_set])
        if spec.uses_transfer
        else np.zeros(0)
    )
    for i, record in enumerate(runs):
        breakdown = run_breakdown(record, spec)
        ln_n[i] = math.log(record.n_params)
        obs_loss[i] = record.loss
        d_t[i] = breakdown.d_target
        if spec.uses_transfer:
            d_k[i, :] = [breakdown.d_transfer[lang] for lang in spec.transfer_set]
        if spec.uses_other:
            d_o[i] = breakdown.d_other
            if breakdown.d_other > 0:
                u = pooled_unique_tokens(breakdown, catalog)
                if u <= 0:
                    raise FitError(
                        f"run {record.run_id!r} is not evaluable: unaccounted tokens "
                        "with no known pool languages"
                    )
                u_o[i] = u
        evaluable = d_t[i] > 0
        if spec.uses_transfer:
            evaluable = evaluable or d_k[i].sum() > 0
        if spec.uses_other:
            evaluable = evaluable or d_o[i] > 0
        if not evaluable:
            raise FitError(f"run {record.run_id!r} is not evaluable: no usable tokens")
        run_ids.append(record.run_id)
    return _LawDesign(
        ln_n=ln_n,
        obs_loss=obs_loss,
        obs_log=np.log(obs_loss),
        d_t=d_t,
        u_t=u_t,
        d_k=d_k,
        u_k=u_k,
        d_o=d_o,
        u_o=u_o,
        run_ids=tuple(run_ids),
    )


def _law_param_names(spec: LawSpec) -> list[str]:
    names = ["e_irreducible", "log_a", "alpha", "log_b", "beta"]
    if spec.uses_saturation:
        names.append("lam")
    if spec.uses_other:
        names.append("tau_other")
    if spec.uses_transfer:
        names.extend(f"tau:{lang}" for lang in spec.transfer_set)
    return names


def _law_pred_fn(design: _LawDesign, spec: LawSpec) -> Callable[[np.ndarray], np.ndarray]:
    uses_sat, uses_other, uses_transfer = (
        spec.uses_saturation,
        spec.uses_other,
        spec.uses_transfer,
    )
    n_transfer = len(spec.transfer_set)
    other_mask = design.d_o > 0

    def predict(theta: np.ndarray) -> np.ndarray:
        e, log_a, alpha, log_b, beta = theta[:5]
        idx = 5
        if not uses_sat:
            d_eff = design.d_t
        else:
            lam = theta[idx]
            idx += 1
            d_eff = _sat_vec(design.d_t, design.u_t, lam)
            if uses_other:
                tau_other = theta[idx]
                idx += 1
                if other_mask.any():
                    d_eff = d_eff.copy()
                    d_eff[other_mask] += tau_other * _sat_vec(
                        design.d_o[other_mask], design.u_o[other_mask], lam
                    )
            if uses_transfer and n_transfer:
                taus = theta[idx : idx + n_transfer]
                d_eff = d_eff + _sat_vec(design.d_k, design.u_k[None, :], lam) @ taus
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return (
                e
                + np.exp(log_a - alpha * design.ln_n)
                + np.exp(log_b - beta * np.log(d_eff))
            )

    return predict


def _objective_from_pred(
    pred_fn: Callable[[np.ndarray], np.ndarray], obs_log: np.ndarray, delta: float
) -> Callable[[np.ndarray], float]:
    def objective(theta: np.ndarray) -> float:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            residuals = np.log(pred_fn(theta)) - obs_log
        value = _huber_sum(residuals, delta)
        return value if math.isfinite(value) else math.inf

    return objective


def _law_bounds(spec: LawSpec, max_e: float) -> list[tuple[float, float]]:
    bounds = [
        (0.0, max_e),
        _LOG_COEF_BOUNDS,
        _EXPONENT_BOUNDS,
        _LOG_COEF_BOUNDS,
        _EXPONENT_BOUNDS,
    ]
    if spec.uses_saturation:
        bounds.append(_LAM_BOUNDS)
    if spec.uses_other:
        bounds.append(_TAU_BOUNDS)
    if spec.uses_transfer:
        bounds.extend([_TAU_BOUNDS] * len(spec.transfer_set))
    return bounds


def _tau_inits(
    transfer_set: Sequence[str], transfer_scores: Mapping[str, float] | None
) -> list[float]:
    """Starting transfer weights: min-max normalized scores mapped into
    [0.05, 0.95], or 0.1 where no score is available."""
    if not transfer_scores:
        return [0.1] * len(transfer_set)
    known = {l: transfer_scores[l] for l in transfer_set if l in transfer_scores}
    if not known:
        return [0.1] * len(transfer_set)
    lo, hi = min(known.values()), max(known.values())
    span = hi - lo
    inits = []
    for lang in transfer_set:
        if lang not in known:
            inits.append(0.1)
        elif span == 0:
            inits.append(0.5)
        else:
            inits.append(0.05 + 0.9 * (known[lang] - lo) / span)
    return inits


def _grid_starts(
    names: Sequence[str],
    grid: Mapping[str, Sequence[float]],
    fixed_tail: Mapping[str, float],
    bounds: Sequence[tuple[float, float]],
) -> list[np.ndarray]:
    """Cartesian product over the gridded parameter lists, with non-gridded
    parameters held at their fixed initial values. Values are clipped to bounds."""
    axes = []
    for name in names:
        if name in fixed_tail:
            axes.append((fixed_tail[name],))
        else:
            axes.append(tuple(grid[name]))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return [np.clip(np.array(combo, dtype=float), lo, hi) for combo in itertools.product(*axes)]


def _random_starts(
    names: Sequence[str],
    bounds: Sequence[tuple[float, float]],
    max_e: float,
    count: int,
    seed: int,
) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    windows = {
        "e_irreducible": (0.0, max_e),
        "l_inf": (0.0, max_e),
        "log_a": (0.0, 16.0),
        "log_b": (0.0, 16.0),
        "alpha": (0.05, 1.0),
        "beta": (0.05, 1.0),
        "lam": (0.1, 10.0),
        "phi": (-0.5, 0.5),
        "psi": (-0.5, 0.5),
    }
    starts = []
    for _ in range(count):
        theta = []
        for name, (lo, hi) in zip(names, bounds):
            if name == "lam":
                w_lo, w_hi = windows["lam"]
                value = math.exp(rng.uniform(math.log(w_lo), math.log(w_hi)))
            elif name.startswith("tau"):
                value = rng.uniform(0.0, 1.0)
            else:
                w_lo, w_hi = windows[name]
                value = rng.uniform(w_lo, w_hi)
            theta.append(min(max(value, lo), hi))
        starts.append(np.array(theta))
    return starts


def multistart_minimize(
    objective: Callable[[np.ndarray], float],
    starts: Sequence[np.ndarray],
    bounds: Sequence[tuple[float, float]],
    config: FitConfig,
    n_deep: int = 6,
) -> tuple[np.ndarray, float, int, bool]:
    """Simplex descent from every start; returns the global best.

    Budget is staged: every start gets a bounded local search, the n_deep most
    promising results are pushed to the full iteration budget, and the
    incumbent optimum is re-polished with fresh simplexes. The reduction
    (argmin by objective, then by start index) is deterministic regardless of
    how the independent starts are executed.
    """
    def nm_options(maxiter: int) -> dict:
        return {
            "maxiter": maxiter,
            "maxfev": 4 * maxiter,
            "fatol": config.convergence_tol,
            "xatol": _XATOL,
            "adaptive": len(starts[0]) > 4,
        }

    stage1 = nm_options(min(config.max_iters, max(150, config.max_iters // 10)))
    stage2 = nm_options(config.max_iters)

    def run_one(x0: np.ndarray, options: dict):
        # inf objectives (non-evaluable regions) make the simplex sort warn
        with np.errstate(invalid="ignore"):
            res = minimize(objective, x0, method="Nelder-Mead", bounds=list(bounds),
                           options=options)
        return float(res.fun), np.asarray(res.x), bool(res.success)

    results = ordered_map(lambda x0: run_one(x0, stage1), list(starts))
    # final candidates per start: stage-1 result, deepened for the best few
    candidates = {i: r for i, r in enumerate(results)}
    promising = sorted(
        (i for i, (f, _, _) in candidates.items() if math.isfinite(f)),
        key=lambda i: (candidates[i][0], i),
    )[:n_deep]
    deepened = ordered_map(lambda i: (i, run_one(candidates[i][1], stage2)), promising)
    for i, result in deepened:
        if result[0] <= candidates[i][0]:
            candidates[i] = result
    finite = [(f, i) for i, (f, _, _) in candidates.items() if math.isfinite(f)]
    if not finite:
        raise FitError(
            f"all {len(starts)} starts diverged (no finite objective); "
            "check that the data is evaluable under this law"
        )
    best_f, best_idx = min(finite)
    _, best_x, best_ok = candidates[best_idx]
    for _ in range(config.n_polish_rounds):
        f, x, ok = run_one(best_x, stage2)
        if f <= best_f:
            best_f, best_x, best_ok = f, x, ok
    return best_x, best_f, best_idx, best_ok


def _train_r2(obs: np.ndarray, pred: np.ndarray) -> float:
    ss_res = float(np.sum((obs - pred) ** 2))
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else -math.inf
    return 1.0 - ss_res / ss_tot


def _params_from_theta(theta: np.ndarray, spec: LawSpec) -> LawParams:
    e, log_a, alpha, log_b, beta = (float(v) for v in theta[:5])
    idx = 5
    lam = tau_other = None
    tau_transfer = None
    if spec.uses_saturation:
        lam = float(theta[idx])
        idx += 1
    if spec.uses_other:
        tau_other = float(theta[idx])
        idx += 1
    if spec.uses_transfer:
        tau_transfer = {
            lang: float(theta[idx + j]) for j, lang in enumerate(spec.transfer_set)
        }
    return LawParams(
        variant=spec.variant,
        e_irreducible=e,
        log_a=log_a,
        log_b=log_b,
        alpha=alpha,
        beta=beta,
        lam=lam,
        tau_transfer=tau_transfer,
        tau_other=tau_other,
    )


def fit(
    runs: RunSet,
    spec: LawSpec,
    catalog: CorpusCatalog,
    config: FitConfig = FitConfig(),
    transfer_scores: Mapping[str, float] | None = None,
) -> FitResult:
    """Fit a law variant to the runs evaluated on the spec's target language.

    Needs at least one more usable observation than free parameters. Every
    usable run must be evaluable under the spec (an unusable token layout
    raises FitError naming the run).
    """
    usable = runs.for_eval_language(spec.target_language)
    names = _law_param_names(spec)
    needed = len(names) + 1
    if len(usable) < needed:
        raise FitError(
            f"law {spec.variant!r} on {spec.target_language!r} needs at least "
            f"{needed} usable observations, got {len(usable)}"
        )
    design = _build_design(usable, spec, catalog)
    max_e = float(design.obs_loss.min())
    bounds = _law_bounds(spec, max_e)
    grid = dict(DEFAULT_INIT_GRID)
    if config.init_grid:
        grid.update({k: tuple(v) for k, v in config.init_grid.items()})
    fixed = {}
    if spec.uses_other:
        fixed["tau_other"] = 0.1
    if spec.uses_transfer:
        for lang, tau0 in zip(spec.transfer_set, _tau_inits(spec.transfer_set, transfer_scores)):
            fixed[f"tau:{lang}"] = tau0
    starts = _grid_starts(names, grid, fixed, bounds)
    starts += _random_starts(names, bounds, max_e, config.n_random_starts, config.seed)
    pred_fn = _law_pred_fn(design, spec)
    objective = _objective_from_pred(pred_fn, design.obs_log, config.huber_delta)
    theta, best_f, best_idx, converged = multistart_minimize(objective, starts, bounds, config)
    params = _params_from_theta(theta, spec)
    train_r2 = _train_r2(design.obs_loss, pred_fn(theta))
    return FitResult(
        params=params,
        objective=best_f,
        n_starts_tried=len(starts),
        best_start_index=best_idx,
        converged=converged,
        train_r2=train_r2,
    )


def residuals(
    params: LawParams,
    spec: LawSpec,
    runs: RunSet,
    catalog: CorpusCatalog,
) -> np.ndarray:
    """Log-space residuals (log pred - log obs), one per usable run in run order."""
    usable = runs.for_eval_language(spec.target_language)
    out = np.empty(len(usable))
    for i, record in enumerate(usable):
        try:
            pred = predict_run_loss(record, spec, catalog, params)
        except (SchemaError, DomainError) as exc:
            raise FitError(f"run {record.run_id!r} is not evaluable: {exc}") from None
        out[i] = math.log(pred) - math.log(record.loss)
    return out


# ---------------------------------------------------------------------------
# Capacity-law fitting
# ---------------------------------------------------------------------------

_CAPACITY_NAMES = ("l_inf", "log_a", "alpha", "log_b", "beta", "phi", "psi")


def _capacity_pred_fn(obs: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    ln_k = np.log(obs[:, 0])
    ln_n = np.log(obs[:, 1])
    ln_d = np.log(obs[:, 2])

    def predict(theta: np.ndarray) -> np.ndarray:
        l_inf, log_a, alpha, log_b, beta, phi, psi = theta
        with np.errstate(over="ignore", invalid="ignore"):
            return (
                l_inf
                + np.exp(log_a + phi * ln_k - alpha * ln_n)
                + np.exp(log_b + psi * ln_k - beta * ln_d)
            )

    return predict


def fit_capacity(
    data: RunSet | np.ndarray,
    config: FitConfig = FitConfig(),
    eval_language: str | None = None,
) -> FitResult:
    """Fit the capacity law to (k, n, d_t, loss) observations.

    Accepts a RunSet (uniform-sampling mixtures are extracted, per language or
    pooled) or a pre-built (m, 4) observation array.
    """
    if isinstance(data, RunSet):
        obs = derive_capacity_observations(data, eval_language)
    else:
        obs = np.asarray(data, dtype=float)
        if obs.ndim != 2 or obs.shape[1] != 4:
            raise FitError("capacity observations must be an (m, 4) array of (k, n, d_t, loss)")
    needed = len(_CAPACITY_NAMES) + 1
    if len(obs) < needed:
        raise FitError(f"capacity fit needs at least {needed} observations, got {len(obs)}")
    if np.any(obs[:, 0] < 1) or np.any(obs[:, 1:] <= 0):
        raise FitError("capacity observations require k >= 1 and positive n, d_t, loss")
    obs_loss = obs[:, 3]
    max_e = float(obs_loss.min())
    bounds = [
        (0.0, max_e),
        _LOG_COEF_BOUNDS,
        _EXPONENT_BOUNDS,
        _LOG_COEF_BOUNDS,
        _EXPONENT_BOUNDS,
        _CAP_EXP_BOUNDS,
        _CAP_EXP_BOUNDS,
    ]
    grid = dict(CAPACITY_INIT_GRID)
    if config.init_grid:
        grid.update({k: tuple(v) for k, v in config.init_grid.items()})
    starts = _grid_starts(_CAPACITY_NAMES, grid, {}, bounds)
    starts += _random_starts(_CAPACITY_NAMES, bounds, max_e, config.n_random_starts, config.seed)
    pred_fn = _capacity_pred_fn(obs)
    objective = _objective_from_pred(pred_fn, np.log(obs_loss), config.huber_delta)
    theta, best_f, best_idx, converged = multistart_minimize(objective, starts, bounds, config)
    params = CapacityParams(
        l_inf=float(theta[0]),
        log_a=float(theta[1]),
        alpha=float(theta[2]),
        log_b=float(theta[3]),
        beta=float(theta[4]),
        phi=float(theta[5]),
        psi=float(theta[6]),
    )
    return FitResult(
        params=params,
        objective=best_f,
        n_starts_tried=len(starts),
        best_start_index=best_idx,
        converged=converged,
        train_r2=_train_r2(obs_loss, pred_fn(theta)),
    )
