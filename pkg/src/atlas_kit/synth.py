"""Ground-truth synthetic data: seeded runs and curves from a known law.

The generator is the oracle behind every fitting/evaluation test: losses are
exact law evaluations times multiplicative lognormal noise (zero-mean in log
space, so log-space fitting sees unbiased targets). Each grid cell draws from
its own child stream of the base seed, so generation order or parallelism
cannot change the output.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .capacity import CapacityParams, predict_capacity_loss
from .errors import SchemaError
from .laws import LawParams, LawSpec, effective_data, predict_loss
from .run_data import CorpusCatalog, LearningCurve, RunRecord, RunSet, token_accounting

Mixture = tuple[str, Mapping[str, float]]


def default_grid() -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Desk-scale default: 6 model sizes over 1e7..2e9 params, 12 token
    checkpoints over 2e8..6e10."""
    sizes = tuple(int(round(v)) for v in np.geomspace(1e7, 2e9, 6))
    checkpoints = tuple(int(round(v)) for v in np.geomspace(2e8, 6e10, 12))
    return sizes, checkpoints


@dataclass(frozen=True)
class SynthDesign:
    """Everything needed to generate a RunSet from a known law."""

    spec: LawSpec
    law: LawParams | CapacityParams
    n_values: tuple[int, ...]
    token_checkpoints: tuple[int, ...]
    mixtures: tuple[Mixture, ...]
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.n_values or not self.token_checkpoints or not self.mixtures:
            raise SchemaError("synth design grids must be non-empty")
        if self.noise_sigma < 0:
            raise SchemaError("noise_sigma must be nonnegative")
        if any(n <= 0 for n in self.n_values):
            raise SchemaError("model sizes must be positive")
        if any(d <= 0 for d in self.token_checkpoints):
            raise SchemaError("token checkpoints must be positive")
        seen = set()
        for mixture_id, weights in self.mixtures:
            if mixture_id in seen:
                raise SchemaError(f"duplicate mixture id {mixture_id!r}")
            seen.add(mixture_id)
            total = sum(weights.values())
            if abs(total - 1.0) > 1e-9:
                raise SchemaError(f"mixture {mixture_id!r} weights sum to {total!r}, not 1")

    @classmethod
    def from_json_dict(cls, raw: Mapping) -> "SynthDesign":
        try:
            spec = LawSpec(
                variant=raw["variant"],
                target_language=raw["target_language"],
                transfer_set=tuple(raw.get("transfer_set", ())),
            )
            law_raw = raw["law"]
            law: LawParams | CapacityParams
            if "phi" in law_raw:
                law = CapacityParams.from_json_dict(law_raw)
            else:
                law = LawParams.from_json_dict(law_raw)
            n_values = tuple(int(v) for v in raw["n_values"]) if raw.get("n_values") else None
            checkpoints = (
                tuple(int(v) for v in raw["token_checkpoints"])
                if raw.get("token_checkpoints")
                else None
            )
            if n_values is None or checkpoints is None:
                default_n, default_d = default_grid()
                n_values = n_values or default_n
                checkpoints = checkpoints or default_d
            mixtures = tuple(
                (str(m["mixture_id"]), {str(k): float(v) for k, v in m["weights"].items()})
                for m in raw["mixtures"]
            )
            return cls(
                spec=spec,
                law=law,
                n_values=n_values,
                token_checkpoints=checkpoints,
                mixtures=mixtures,
                noise_sigma=float(raw.get("noise_sigma", 0.0)),
                seed=int(raw.get("seed", 0)),
            )
        except KeyError as exc:
            raise SchemaError(f"synth design JSON missing field {exc.args[0]!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "SynthDesign":
        return cls.from_json_dict(json.loads(text))


def apportion_tokens(weights: Mapping[str, float], total: int) -> dict[str, int]:
    """Integer per-language counts summing to total exactly.

    Largest-remainder rounding of weight*total, ties to the lexicographically
    first language.
    """
    langs = sorted(l for l, w in weights.items() if w > 0)
    raw = {l: weights[l] * total for l in langs}
    base = {l: int(math.floor(raw[l])) for l in langs}
    leftover = total - sum(base.values())
    by_remainder = sorted(langs, key=lambda l: (-(raw[l] - base[l]), l))
    for l in by_remainder[:leftover]:
        base[l] += 1
    return base


def _cell_rng(seed: int, cell: int) -> np.random.Generator:
    return np.random.default_rng([seed, cell])


def _clean_loss(design: SynthDesign, record: RunRecord, catalog: CorpusCatalog) -> float:
    breakdown = token_accounting(
        record, design.spec.target_language, design.spec.transfer_set
    )
    if isinstance(design.law, CapacityParams):
        k = len(record.mixture_languages())
        d_t = record.total_tokens / k
        return predict_capacity_loss(design.law, k, record.n_params, d_t)
    d_eff = effective_data(breakdown, catalog, design.law)
    return predict_loss(design.law, record.n_params, d_eff)


def generate_runs(design: SynthDesign, catalog: CorpusCatalog) -> RunSet:
    """Schema-valid records for every (mixture, size, checkpoint) grid cell,
    with loss = law(cell) * exp(noise)."""
    records = []
    cells = itertools.product(design.mixtures, design.n_values, design.token_checkpoints)
    for cell_index, ((mixture_id, weights), n_params, d_tot) in enumerate(cells):
        cumulative = apportion_tokens(weights, d_tot)
        record = RunRecord(
            run_id=f"{mixture_id}_n{n_params}_d{d_tot}",
            n_params=n_params,
            mixture_id=mixture_id,
            sampling_weights=dict(weights),
            cumulative_tokens=cumulative,
            total_tokens=d_tot,
            eval_language=design.spec.target_language,
            loss=1.0,  # placeholder until the law is evaluated
            token_source="reconstructed",
        )
        try:
            clean = _clean_loss(design, record, catalog)
        except Exception as exc:
            raise SchemaError(
                f"law not evaluable on cell {record.run_id!r}: {exc}"
            ) from None
        noise = 1.0
        if design.noise_sigma > 0:
            noise = math.exp(
                _cell_rng(design.seed, cell_index).normal(0.0, design.noise_sigma)
            )
        record = dataclasses.replace(record, loss=clean * noise)
        record.validate()
        records.append(record)
    return RunSet(tuple(records))


def generate_curves(
    loss_fn: Callable[[float], float],
    token_schedule: Sequence[int],
    noise_sigma: float,
    seed: int,
    regime_id: str = "synthetic",
    eval_language: str = "xx",
) -> LearningCurve:
    """A noisy learning curve: loss_fn evaluated on a strictly increasing
    token schedule, each point scaled by seeded lognormal noise."""
    if noise_sigma < 0:
        raise SchemaError("noise_sigma must be nonnegative")
    schedule = [int(t) for t in token_schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise SchemaError("token schedule must be strictly increasing")
    rng = np.random.default_rng(seed)
    points = []
    for tokens in schedule:
        clean = loss_fn(float(tokens))
        noise = math.exp(rng.normal(0.0, noise_sigma)) if noise_sigma > 0 else 1.0
        points.append((tokens, clean * noise))
    return LearningCurve(tuple(points), regime_id, eval_language)
