"""Pretrain-vs-finetune crossover detection and the budget decision rule.

A warm-started finetune beats pretraining from scratch early on; the crossover
point is the token count where the from-scratch curve catches up. Across model
sizes the crossover compute follows the template log(C) = a * N^b, fitted here
with both coefficients free. Natural log throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, FitError
from .run_data import LearningCurve
from .transfer import loss_at

_BISECT_REL_TOL = 1e-13
_B_GRID = np.linspace(-3.0, 5.0, 1601)


@dataclass(frozen=True)
class CrossoverFit:
    """log(C) = coeff * N^exponent."""

    coeff: float
    exponent: float

    def __post_init__(self) -> None:
        if self.coeff <= 0:
            raise FitError(f"crossover law coefficient must be positive, got {self.coeff}")

    def threshold_log_c(self, n_params: float) -> float:
        if n_params <= 0:
            raise DomainError(f"n_params must be positive, got {n_params}")
        return self.coeff * n_params**self.exponent

    def to_json_dict(self) -> dict:
        return {"coeff": self.coeff, "exponent": self.exponent}


def crossover_tokens(
    pretrain: LearningCurve, finetune: LearningCurve
) -> float | None:
    """Smallest token count in the curves' shared range where the pretraining
    loss stops being worse than the finetuning loss.

    The difference is interpolated on both curves' knots and bisected in log
    tokens within the bracketing segment. Returns None when pretraining stays
    behind throughout the shared range.
    """
    lo = max(pretrain.tokens[0], finetune.tokens[0])
    hi = min(pretrain.tokens[-1], finetune.tokens[-1])
    if lo > hi:
        raise DomainError(
            f"curves share no token range: [{pretrain.tokens[0]:g}, {pretrain.tokens[-1]:g}] "
            f"vs [{finetune.tokens[0]:g}, {finetune.tokens[-1]:g}]"
        )

    def gap(d: float) -> float:
        return loss_at(pretrain, d) - loss_at(finetune, d)

    knots = sorted(
        {float(t) for t in pretrain.tokens + finetune.tokens if lo <= t <= hi}
        | {float(lo), float(hi)}
    )
    if gap(knots[0]) <= 0:
        return knots[0]
    for a, b in zip(knots, knots[1:]):
        if gap(b) > 0:
            continue
        # sign change inside [a, b]; bisect in log-token space (arithmetic
        # bisection when the segment starts at zero tokens)
        left, right = a, b
        if left <= 0:
            while right - left > _BISECT_REL_TOL * right:
                mid = 0.5 * (left + right)
                if gap(mid) <= 0:
                    right = mid
                else:
                    left = mid
            return right
        while (math.log(right) - math.log(left)) > _BISECT_REL_TOL:
            mid = math.exp(0.5 * (math.log(left) + math.log(right)))
            if gap(mid) <= 0:
                right = mid
            else:
                left = mid
        return right
    return None


def fit_crossover_law(points: Sequence[tuple[float, float]]) -> CrossoverFit:
    """Least-squares fit of log C = a * N^b over (n_params, c_crossover) pairs.

    One-dimensional search on the exponent with the closed-form coefficient at
    each candidate; deterministic.
    """
    if len(points) < 2:
        raise FitError(f"crossover law fit needs at least 2 points, got {len(points)}")
    n = np.array([p[0] for p in points], dtype=float)
    c = np.array([p[1] for p in points], dtype=float)
    if np.any(n <= 0) or np.any(c <= 0):
        raise FitError("crossover law fit requires positive model sizes and compute values")
    if np.all(n == n[0]):
        raise FitError("crossover law fit needs at least two distinct model sizes")
    y = np.log(c)
    ln_n = np.log(n)

    def coeff_at(b: float) -> float:
        basis = np.exp(b * ln_n)
        return float(np.dot(y, basis) / np.dot(basis, basis))

    def sse(b: float) -> float:
        basis = np.exp(b * ln_n)
        a = float(np.dot(y, basis) / np.dot(basis, basis))
        return float(np.sum((y - a * basis) ** 2))

    grid_vals = [sse(b) for b in _B_GRID]
    i = int(np.argmin(grid_vals))
    lo = _B_GRID[max(i - 1, 0)]
    hi = _B_GRID[min(i + 1, len(_B_GRID) - 1)]
    # golden-section refinement inside the bracketing grid cell
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = sse(x1), sse(x2)
    while hi - lo > 1e-13:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = sse(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = sse(x2)
    b_best = 0.5 * (lo + hi)
    return CrossoverFit(coeff=coeff_at(b_best), exponent=float(b_best))


def decide(fit: CrossoverFit, n_params: float, budget_c: float) -> str:
    """'pretrain' when the compute budget is at or above the fitted threshold
    for this model size, else 'finetune'."""
    if n_params <= 0 or budget_c <= 0:
        raise DomainError("decide requires positive n_params and budget_c")
    return "pretrain" if math.log(budget_c) >= fit.threshold_log_c(n_params) else "finetune"
