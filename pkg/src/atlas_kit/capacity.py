"""Capacity-cost law for multilingual training and iso-loss planning.

The law  L(K, N, D_t) = L_inf + A*K^phi / N^alpha + B*K^psi / D_t^beta  models
per-target-language loss as a function of model size N, per-language tokens
D_t, and the number of uniformly sampled training languages K. phi > 0 means
adding languages raises the capacity bill; psi < 0 means positive transfer
lowers the per-language data bill. At K = 1 the law is the plain power-law
baseline.

Planning answers "I'm growing language coverage by a factor r: how much N, D
and compute do I need to keep per-language loss unchanged?" in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, SchemaError
from .run_data import RunSet

CAPACITY_SCHEMA_VERSION = 1
EXPONENT_CAP = 2.0
#: Tolerance for treating a mixture's sampling weights as uniform.
UNIFORM_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class CapacityParams:
    """Fitted parameters of the capacity law."""

    l_inf: float
    log_a: float
    log_b: float
    alpha: float
    beta: float
    phi: float
    psi: float

    def __post_init__(self) -> None:
        if self.l_inf < 0:
            raise SchemaError("l_inf must be nonnegative")
        for name, value in (("alpha", self.alpha), ("beta", self.beta)):
            if not 0 < value <= EXPONENT_CAP:
                raise SchemaError(f"{name} must be in (0, {EXPONENT_CAP}], got {value}")
        for name, value in (("phi", self.phi), ("psi", self.psi)):
            if not math.isfinite(value):
                raise SchemaError(f"{name} must be finite")

    def to_json_dict(self) -> dict:
        return {
            "schema_version": CAPACITY_SCHEMA_VERSION,
            "l_inf": self.l_inf,
            "log_a": self.log_a,
            "log_b": self.log_b,
            "alpha": self.alpha,
            "beta": self.beta,
            "phi": self.phi,
            "psi": self.psi,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json_dict(cls, raw: Mapping) -> "CapacityParams":
        try:
            return cls(
                l_inf=float(raw["l_inf"]),
                log_a=float(raw["log_a"]),
                log_b=float(raw["log_b"]),
                alpha=float(raw["alpha"]),
                beta=float(raw["beta"]),
                phi=float(raw["phi"]),
                psi=float(raw["psi"]),
            )
        except KeyError as exc:
            raise SchemaError(f"capacity params JSON missing field {exc.args[0]!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "CapacityParams":
        return cls.from_json_dict(json.loads(text))


def _check_point(k: float, n: float, d_t: float) -> None:
    if k < 1:
        raise DomainError(f"capacity law requires k >= 1, got {k}")
    if n <= 0:
        raise DomainError(f"capacity law requires n > 0, got {n}")
    if d_t <= 0:
        raise DomainError(f"capacity law requires d_t > 0, got {d_t}")


def capacity_terms(p: CapacityParams, k: float, n: float, d_t: float) -> tuple[float, float]:
    """The model-size and data error terms, separately."""
    _check_point(k, n, d_t)
    n_term = math.exp(p.log_a + p.phi * math.log(k) - p.alpha * math.log(n))
    d_term = math.exp(p.log_b + p.psi * math.log(k) - p.beta * math.log(d_t))
    return n_term, d_term


def predict_capacity_loss(p: CapacityParams, k: float, n: float, d_t: float) -> float:
    n_term, d_term = capacity_terms(p, k, n, d_t)
    return p.l_inf + n_term + d_term


def marginal_sensitivities(
    p: CapacityParams, k: float, n: float, d_t: float
) -> tuple[float, float]:
    """(dL/d ln N, dL/d ln D_t): the marginal value of log-scale growth in
    model size versus per-language data, holding everything else fixed."""
    n_term, d_term = capacity_terms(p, k, n, d_t)
    return -p.alpha * n_term, -p.beta * d_term


def baseline_weights(p: CapacityParams, k: float, n: float, d_t: float) -> tuple[float, float]:
    """Fraction of the reducible loss carried by each error term at a baseline."""
    n_term, d_term = capacity_terms(p, k, n, d_t)
    total = n_term + d_term
    if total <= 0:
        raise DomainError("both error terms vanish at this baseline")
    w_n = n_term / total
    return w_n, 1.0 - w_n


def compute_optimal_weights(alpha: float, beta: float) -> tuple[float, float]:
    """Term weights at a compute-optimal baseline: (beta/(alpha+beta), alpha/(alpha+beta))."""
    if alpha <= 0 or beta <= 0:
        raise DomainError("compute-optimal weights require alpha, beta > 0")
    return beta / (alpha + beta), alpha / (alpha + beta)


def isoloss_constraint_residual(
    r: float,
    w_n: float,
    w_d: float,
    alpha: float,
    beta: float,
    phi: float,
    psi: float,
    s: float,
    t: float,
) -> float:
    """r^phi*w_n*s^-alpha + r^psi*w_d*t^-beta - 1; zero on the iso-loss curve."""
    return r**phi * w_n * s**-alpha + r**psi * w_d * t**-beta - 1.0


def isoloss_solve(
    *,
    r: float,
    w_n: float,
    w_d: float,
    alpha: float,
    beta: float,
    phi: float,
    psi: float,
    s: float | None = None,
    t: float | None = None,
) -> float:
    """Solve the normalized iso-loss constraint for the free multiplier.

    Given the model-size multiplier s, returns the per-language data
    multiplier t (or vice versa). Raises DomainError naming the violated
    feasibility bound when no solution exists.
    """
    if r <= 0:
        raise DomainError(f"r must be positive, got {r}")
    if (s is None) == (t is None):
        raise DomainError("provide exactly one of s or t")
    if s is not None:
        if s <= 0:
            raise DomainError(f"s must be positive, got {s}")
        denom = 1.0 - r**phi * w_n * s**-alpha
        if denom <= 0:
            raise DomainError(
                f"infeasible: requires s^alpha > r^phi * w_n "
                f"({s**alpha:.6g} <= {r**phi * w_n:.6g})"
            )
        return (r**psi * w_d / denom) ** (1.0 / beta)
    assert t is not None
    if t <= 0:
        raise DomainError(f"t must be positive, got {t}")
    denom = 1.0 - r**psi * w_d * t**-beta
    if denom <= 0:
        raise DomainError(
            f"infeasible: requires t^beta > r^psi * w_d "
            f"({t**beta:.6g} <= {r**psi * w_d:.6g})"
        )
    return (r**phi * w_n / denom) ** (1.0 / alpha)


@dataclass(frozen=True)
class PlanMultipliers:
    """Minimum-compute multipliers for growing language coverage by r."""

    r: float
    n_ratio: float
    d_t_ratio: float
    d_tot_ratio: float
    c_ratio: float

    def to_json_dict(self) -> dict:
        return {
            "r": self.r,
            "n_ratio": self.n_ratio,
            "d_t_ratio": self.d_t_ratio,
            "d_tot_ratio": self.d_tot_ratio,
            "c_ratio": self.c_ratio,
        }


def multipliers_from_ratios(
    phi_over_alpha: float, psi_over_beta: float, r: float
) -> PlanMultipliers:
    """Compute-optimal multipliers from the exponent ratios directly:
    N' = N*r^(phi/alpha), D_t' = D_t*r^(psi/beta), D_tot' = D_tot*r^(1+psi/beta).
    The compute ratio is exactly n_ratio * d_tot_ratio."""
    if r <= 0:
        raise DomainError(f"r must be positive, got {r}")
    n_ratio = r**phi_over_alpha
    d_t_ratio = r**psi_over_beta
    d_tot_ratio = r * d_t_ratio
    return PlanMultipliers(
        r=r,
        n_ratio=n_ratio,
        d_t_ratio=d_t_ratio,
        d_tot_ratio=d_tot_ratio,
        c_ratio=n_ratio * d_tot_ratio,
    )


def compute_optimal_multipliers(
    phi: float, psi: float, alpha: float, beta: float, r: float
) -> PlanMultipliers:
    if alpha <= 0 or beta <= 0:
        raise DomainError("compute_optimal_multipliers requires alpha, beta > 0")
    return multipliers_from_ratios(phi / alpha, psi / beta, r)


@dataclass(frozen=True)
class FrontierPoint:
    s: float
    t: float
    d_tot_ratio: float
    c_ratio: float


@dataclass(frozen=True)
class PlanQuery:
    """A coverage-growth question: multiply the language count by r, starting
    from an explicit (k, n, d_t) baseline or from a compute-optimal one."""

    r: float
    baseline: tuple[float, float, float] | str = "compute-optimal"
    sweep: tuple[float, ...] | None = None
    sweep_points: int = 64

    def __post_init__(self) -> None:
        if self.r <= 0:
            raise SchemaError(f"r must be positive, got {self.r}")
        if isinstance(self.baseline, str):
            if self.baseline != "compute-optimal":
                raise SchemaError(
                    "baseline must be 'compute-optimal' or an explicit (k, n, d_t) tuple"
                )
        elif len(self.baseline) != 3:
            raise SchemaError("explicit baseline must be a (k, n, d_t) tuple")
        if self.sweep_points < 2:
            raise SchemaError("sweep_points must be at least 2")


@dataclass(frozen=True)
class PlanResult:
    """Closed-form multipliers plus the traced iso-loss frontier.

    The multipliers are the minimum-compute point for a compute-optimal
    baseline; with an explicit baseline the frontier carries that baseline's
    term weights and its compute minimum can sit elsewhere on the curve.
    """

    query: PlanQuery
    multipliers: PlanMultipliers
    w_n: float
    w_d: float
    frontier: tuple[FrontierPoint, ...]


def plan(params: CapacityParams, query: PlanQuery) -> PlanResult:
    """Answer a planning query against fitted capacity-law parameters."""
    if isinstance(query.baseline, str):
        w_n, w_d = compute_optimal_weights(params.alpha, params.beta)
    else:
        k, n, d_t = query.baseline
        w_n, w_d = baseline_weights(params, k, n, d_t)
    multipliers = compute_optimal_multipliers(
        params.phi, params.psi, params.alpha, params.beta, query.r
    )
    frontier = frontier_sweep(
        r=query.r,
        w_n=w_n,
        w_d=w_d,
        alpha=params.alpha,
        beta=params.beta,
        phi=params.phi,
        psi=params.psi,
        n_points=query.sweep_points,
        s_values=query.sweep,
    )
    return PlanResult(
        query=query,
        multipliers=multipliers,
        w_n=w_n,
        w_d=w_d,
        frontier=tuple(frontier),
    )


def frontier_sweep(
    *,
    r: float,
    w_n: float,
    w_d: float,
    alpha: float,
    beta: float,
    phi: float,
    psi: float,
    n_points: int = 64,
    s_values: Sequence[float] | None = None,
) -> list[FrontierPoint]:
    """Trace the iso-loss frontier: (s, t) pairs with total-token and compute ratios.

    By default the sweep is parameterized by the post-change share of the loss
    carried by the model-size term, log-spaced over (0, 1); this covers the
    whole feasible region without arbitrary endpoint multipliers. Pass explicit
    s_values to control the sweep instead.
    """
    points = []
    if s_values is not None:
        for s in s_values:
            t = isoloss_solve(r=r, w_n=w_n, w_d=w_d, alpha=alpha, beta=beta, phi=phi, psi=psi, s=s)
            points.append(FrontierPoint(s=float(s), t=t, d_tot_ratio=r * t, c_ratio=float(s) * r * t))
        return points
    shares = np.geomspace(0.005, 0.995, n_points)
    for x in shares:
        s = (r**phi * w_n / x) ** (1.0 / alpha)
        t = (r**psi * w_d / (1.0 - x)) ** (1.0 / beta)
        points.append(FrontierPoint(s=float(s), t=float(t), d_tot_ratio=r * float(t), c_ratio=float(s) * r * float(t)))
    return points


def derive_capacity_observations(
    runs: RunSet, eval_language: str | None = None
) -> np.ndarray:
    """Extract (k, n, d_t, loss) rows for capacity fitting.

    Only uniform-sampling mixtures containing the eval language qualify; k is
    the language count and d_t = total_tokens / k under even sampling. Pass
    eval_language=None to pool every language's observations.
    """
    rows = []
    for record in runs:
        if eval_language is not None and record.eval_language != eval_language:
            continue
        weights = [w for w in record.sampling_weights.values() if w > 0]
        if not weights:
            continue
        if record.sampling_weights.get(record.eval_language, 0.0) <= 0:
            continue
        k = len(weights)
        if any(abs(w - 1.0 / k) > UNIFORM_WEIGHT_TOL for w in weights):
            continue
        if record.total_tokens <= 0:
            continue
        rows.append((float(k), float(record.n_params), record.total_tokens / k, record.loss))
    return np.array(rows, dtype=float).reshape(-1, 4)
