"""Five-axis generalization suite: R2 on held-out slices of the run data.

Axes: a seeded random fraction, the largest token budgets (d), the largest
model scales (n), the largest compute C = 6*N*D (c), and unseen training
mixtures (m). Each axis fits on its training side and scores R2 on the
held-out side; multi-language reports average R2 across languages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import AtlasKitError, DomainError, SchemaError
from .fitter import FitConfig, fit
from .laws import LawSpec, predict_run_loss
from .run_data import CorpusCatalog, RunSet

AXES = ("random", "n", "d", "c", "m")
REPORT_SCHEMA_VERSION = 1

_AXIS_LABEL = {"random": "R2", "n": "R2(N)", "d": "R2(D)", "c": "R2(C)", "m": "R2(M)"}


@dataclass(frozen=True)
class SplitSpec:
    """One holdout axis. fraction applies to random/d/c; held_scales to n;
    held_mixtures to m. Leave axis-specific fields unset for other axes."""

    axis: str
    fraction: float = 0.2
    held_scales: tuple[int, ...] | None = None
    held_mixtures: tuple[str, ...] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise SchemaError(f"unknown split axis {self.axis!r} (expected one of {AXES})")
        if not 0 < self.fraction < 1:
            raise SchemaError(f"fraction must be in (0, 1), got {self.fraction}")
        if self.held_scales is not None and self.axis != "n":
            raise SchemaError("held_scales only applies to axis 'n'")
        if self.held_mixtures is not None and self.axis != "m":
            raise SchemaError("held_mixtures only applies to axis 'm'")


def _is_unimax(mixture_id: str) -> bool:
    return mixture_id.lower() == "unimax"


def _split_by_indices(runs: RunSet, test_idx: set[int]) -> tuple[RunSet, RunSet]:
    train = [r for i, r in enumerate(runs) if i not in test_idx]
    test = [r for i, r in enumerate(runs) if i in test_idx]
    return RunSet(tuple(train)), RunSet(tuple(test))


def split(runs: RunSet, spec: SplitSpec) -> tuple[RunSet, RunSet]:
    """Partition a RunSet into (train, test) along one axis.

    Train and test are disjoint, cover the whole set, and preserve run order
    within each side. Raises DomainError when either side would be empty.
    """
    n_runs = len(runs)
    if n_runs == 0:
        raise DomainError("cannot split an empty RunSet")
    if spec.axis == "random":
        n_test = int(round(spec.fraction * n_runs))
        perm = np.random.default_rng(spec.seed).permutation(n_runs)
        test_idx = set(int(i) for i in perm[:n_test])
    elif spec.axis in ("d", "c"):
        n_test = int(round(spec.fraction * n_runs))
        if spec.axis == "d":
            key = [(-r.total_tokens, i) for i, r in enumerate(runs)]
        else:
            key = [(-6 * r.n_params * r.total_tokens, i) for i, r in enumerate(runs)]
        order = [i for _, i in sorted(key)]
        test_idx = set(order[:n_test])
    elif spec.axis == "n":
        if spec.held_scales is not None:
            held = set(spec.held_scales)
        else:
            held = set(sorted({r.n_params for r in runs})[-2:])
        test_idx = {i for i, r in enumerate(runs) if r.n_params in held}
    else:  # axis == "m"
        if spec.held_mixtures is not None:
            held_ids = set(spec.held_mixtures)
            test_idx = {i for i, r in enumerate(runs) if r.mixture_id in held_ids}
        else:
            test_idx = {
                i
                for i, r in enumerate(runs)
                if len(r.mixture_languages()) >= 3 and not _is_unimax(r.mixture_id)
            }
    if not test_idx:
        raise DomainError(f"axis {spec.axis!r}: holdout selects no runs")
    if len(test_idx) == n_runs:
        raise DomainError(f"axis {spec.axis!r}: holdout selects every run, train side empty")
    return _split_by_indices(runs, test_idx)


def r_squared(predicted: Sequence[float], observed: Sequence[float]) -> float:
    """Coefficient of determination; may be negative for fits worse than the mean."""
    pred = np.asarray(predicted, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if pred.shape != obs.shape or pred.ndim != 1 or len(pred) == 0:
        raise DomainError("r_squared needs equal-length nonempty vectors")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0:
        raise DomainError("r_squared is undefined for zero-variance observations")
    ss_res = float(np.sum((obs - pred) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class EvalReport:
    """Per-axis R2, averaged across languages, with the per-language detail."""

    variant: str
    axis_r2: Mapping[str, float]
    per_language: Mapping[str, Mapping[str, float]]
    pooled_r2: Mapping[str, float] | None = None

    def to_json_dict(self) -> dict:
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "variant": self.variant,
            "axis_r2": {a: self.axis_r2[a] for a in sorted(self.axis_r2)},
            "per_language": {
                a: dict(sorted(self.per_language[a].items())) for a in sorted(self.per_language)
            },
        }
        if self.pooled_r2 is not None:
            out["pooled_r2"] = {a: self.pooled_r2[a] for a in sorted(self.pooled_r2)}
        return out

    def to_table(self) -> str:
        """Aligned text table: one row, one column per evaluated axis."""
        axes = [a for a in AXES if a in self.axis_r2]
        headers = ["law"] + [_AXIS_LABEL[a] for a in axes]
        row = [self.variant] + [f"{self.axis_r2[a]:.4f}" for a in axes]
        widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
        line1 = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
        line2 = "  ".join(v.ljust(w) for v, w in zip(row, widths))
        return line1 + "\n" + line2 + "\n"


def evaluate_suite(
    runs: RunSet,
    specs: LawSpec | Sequence[LawSpec],
    catalog: CorpusCatalog,
    fit_config: FitConfig,
    split_specs: Sequence[SplitSpec],
    transfer_scores: Mapping[str, Mapping[str, float]] | None = None,
    include_pooled: bool = False,
) -> EvalReport:
    """Fit-on-train / score-on-test for every axis.

    Pass one LawSpec per target language to reproduce a multi-language row:
    the axis value is the per-language R2 averaged across specs (pooled
    residual R2 is available as an option). transfer_scores maps target
    language to per-source scores used to initialize transfer weights.
    """
    if isinstance(specs, LawSpec):
        specs = [specs]
    if not specs:
        raise SchemaError("evaluate_suite needs at least one law spec")
    variants = {s.variant for s in specs}
    if len(variants) > 1:
        raise SchemaError(f"all specs must share one variant, got {sorted(variants)}")
    axis_r2: dict[str, float] = {}
    per_language: dict[str, dict[str, float]] = {}
    pooled: dict[str, float] = {}
    for split_spec in split_specs:
        axis = split_spec.axis
        try:
            train, test = split(runs, split_spec)
            lang_r2: dict[str, float] = {}
            all_pred: list[float] = []
            all_obs: list[float] = []
            for law_spec in specs:
                target = law_spec.target_language
                test_lang = test.for_eval_language(target)
                if len(test_lang) == 0:
                    raise DomainError(f"no held-out runs evaluate {target!r}")
                scores = transfer_scores.get(target) if transfer_scores else None
                result = fit(train, law_spec, catalog, fit_config, scores)
                pred = [
                    predict_run_loss(r, law_spec, catalog, result.params) for r in test_lang
                ]
                obs = [r.loss for r in test_lang]
                lang_r2[target] = r_squared(pred, obs)
                all_pred.extend(pred)
                all_obs.extend(obs)
            axis_r2[axis] = float(np.mean(list(lang_r2.values())))
            per_language[axis] = lang_r2
            if include_pooled:
                pooled[axis] = r_squared(all_pred, all_obs)
        except AtlasKitError as exc:
            raise type(exc)(f"axis {axis!r}: {exc}") from None
    return EvalReport(
        variant=specs[0].variant,
        axis_r2=axis_r2,
        per_language=per_language,
        pooled_r2=pooled if include_pooled else None,
    )
