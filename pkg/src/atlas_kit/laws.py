"""Scaling-law variants: baseline power law and saturation/transfer-aware forms.

Four variants share the loss form  E + A/N^alpha + B/D_eff^beta  and differ in
how the effective-data term D_eff is assembled from a token breakdown:

  bsl           raw target tokens, no saturation (plain power-law baseline)
  atlas_target  saturated target tokens only
  atlas_other   + weighted saturated pooled-remainder tokens
  atlas_full    + weighted saturated tokens of named transfer languages

A and B are carried in log space (log_a, log_b) to keep the optimizer well
conditioned across their many orders of magnitude.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Protocol

from .errors import DomainError, SchemaError
from .run_data import CorpusCatalog, RunRecord, TokenBreakdown, token_accounting

VARIANTS = ("bsl", "atlas_target", "atlas_other", "atlas_full")
#: Generous cap on the power-law exponents; fitted values land well below it.
EXPONENT_CAP = 2.0

PARAMS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LawSpec:
    """Which variant to evaluate, for which target language."""

    variant: str
    target_language: str
    transfer_set: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise SchemaError(f"unknown law variant {self.variant!r} (expected one of {VARIANTS})")
        if self.transfer_set and self.variant != "atlas_full":
            raise SchemaError(f"variant {self.variant!r} does not take a transfer set")
        if self.target_language in self.transfer_set:
            raise SchemaError("target language must not appear in the transfer set")

    @property
    def uses_saturation(self) -> bool:
        return self.variant != "bsl"

    @property
    def uses_other(self) -> bool:
        return self.variant in ("atlas_other", "atlas_full")

    @property
    def uses_transfer(self) -> bool:
        return self.variant == "atlas_full"


@dataclass(frozen=True)
class LawParams:
    """Fitted parameters of one law variant.

    ``lam`` is the shared repetition parameter of the saturation function;
    ``tau_transfer`` / ``tau_other`` weight the transfer and pooled-remainder
    contributions. Fields that a variant does not use must be None.
    """

    variant: str
    e_irreducible: float
    log_a: float
    log_b: float
    alpha: float
    beta: float
    lam: float | None = None
    tau_transfer: Mapping[str, float] | None = None
    tau_other: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise SchemaError(f"unknown law variant {self.variant!r}")
        if self.e_irreducible < 0:
            raise SchemaError("e_irreducible must be nonnegative")
        for name, value in (("alpha", self.alpha), ("beta", self.beta)):
            if not 0 < value <= EXPONENT_CAP:
                raise SchemaError(f"{name} must be in (0, {EXPONENT_CAP}], got {value}")
        uses_sat = self.variant != "bsl"
        if uses_sat:
            if self.lam is None or self.lam <= 0:
                raise SchemaError(f"variant {self.variant!r} requires lam > 0")
        elif self.lam is not None:
            raise SchemaError("variant 'bsl' does not use lam")
        uses_other = self.variant in ("atlas_other", "atlas_full")
        if uses_other:
            if self.tau_other is None or not 0 <= self.tau_other <= 1:
                raise SchemaError(f"variant {self.variant!r} requires tau_other in [0, 1]")
        elif self.tau_other is not None:
            raise SchemaError(f"variant {self.variant!r} does not use tau_other")
        if self.variant == "atlas_full":
            taus = self.tau_transfer if self.tau_transfer is not None else {}
            for lang, tau in taus.items():
                if not 0 <= tau <= 1:
                    raise SchemaError(f"tau_transfer[{lang!r}] must be in [0, 1], got {tau}")
        elif self.tau_transfer:
            raise SchemaError(f"variant {self.variant!r} does not use tau_transfer")

    @property
    def a(self) -> float:
        return math.exp(self.log_a)

    @property
    def b(self) -> float:
        return math.exp(self.log_b)

    def to_json_dict(self) -> dict:
        out = {
            "schema_version": PARAMS_SCHEMA_VERSION,
            "variant": self.variant,
            "e_irreducible": self.e_irreducible,
            "log_a": self.log_a,
            "log_b": self.log_b,
            "alpha": self.alpha,
            "beta": self.beta,
        }
        if self.lam is not None:
            out["lam"] = self.lam
        if self.tau_other is not None:
            out["tau_other"] = self.tau_other
        if self.tau_transfer is not None:
            out["tau_transfer"] = dict(sorted(self.tau_transfer.items()))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json_dict(cls, raw: Mapping) -> "LawParams":
        try:
            return cls(
                variant=raw["variant"],
                e_irreducible=float(raw["e_irreducible"]),
                log_a=float(raw["log_a"]),
                log_b=float(raw["log_b"]),
                alpha=float(raw["alpha"]),
                beta=float(raw["beta"]),
                lam=float(raw["lam"]) if raw.get("lam") is not None else None,
                tau_transfer=(
                    {str(k): float(v) for k, v in raw["tau_transfer"].items()}
                    if raw.get("tau_transfer") is not None
                    else None
                ),
                tau_other=float(raw["tau_other"]) if raw.get("tau_other") is not None else None,
            )
        except KeyError as exc:
            raise SchemaError(f"law params JSON missing field {exc.args[0]!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "LawParams":
        return cls.from_json_dict(json.loads(text))


def saturation(d: float, u: float, lam: float) -> float:
    """Effective tokens after repetition decay: identity below one epoch
    (d <= u), exponentially diminishing returns beyond, bounded by u*(1 + 1/lam).
    """
    if u <= 0:
        raise DomainError(f"saturation requires u > 0, got {u}")
    if lam <= 0:
        raise DomainError(f"saturation requires lam > 0, got {lam}")
    if d < 0:
        raise DomainError(f"saturation requires d >= 0, got {d}")
    if d <= u:
        return float(d)
    return u * (1.0 + (1.0 - math.exp(-lam * (d / u - 1.0))) / lam)


def pooled_unique_tokens(breakdown: TokenBreakdown, catalog: CorpusCatalog) -> int:
    """Unique-token budget of the pooled remainder: the catalog sum over the
    mixture languages outside the target and transfer set."""
    return sum(catalog.require(lang) for lang in breakdown.other_languages)


def effective_data(
    breakdown: TokenBreakdown, catalog: CorpusCatalog, params: LawParams
) -> float:
    """Assemble D_eff for the params' variant from a token breakdown.

    Raises SchemaError naming the language for any missing catalog entry the
    variant needs. The pooled-remainder term is skipped when d_other is zero.
    """
    if params.variant == "bsl":
        return float(breakdown.d_target)
    lam = params.lam
    assert lam is not None
    d_eff = saturation(breakdown.d_target, catalog.require(breakdown.target_language), lam)
    if params.variant == "atlas_full":
        taus = params.tau_transfer or {}
        for lang, d_i in breakdown.d_transfer.items():
            u_i = catalog.require(lang)
            if lang not in taus:
                raise SchemaError(f"params missing tau_transfer entry for {lang!r}")
            d_eff += taus[lang] * saturation(d_i, u_i, lam)
    if params.variant in ("atlas_other", "atlas_full") and breakdown.d_other > 0:
        u_other = pooled_unique_tokens(breakdown, catalog)
        if u_other <= 0:
            raise SchemaError(
                f"run has {breakdown.d_other} unaccounted tokens but no known "
                "'other' languages to pool unique tokens from"
            )
        assert params.tau_other is not None
        d_eff += params.tau_other * saturation(breakdown.d_other, u_other, lam)
    return d_eff


def predict_loss(params: LawParams, n: float, d_eff: float) -> float:
    """Loss at model size n and effective data d_eff:
    E + exp(log_a)/n^alpha + exp(log_b)/d_eff^beta."""
    if n <= 0:
        raise DomainError(f"predict_loss requires n > 0, got {n}")
    if d_eff <= 0:
        raise DomainError(f"predict_loss requires d_eff > 0, got {d_eff}")
    return (
        params.e_irreducible
        + math.exp(params.log_a - params.alpha * math.log(n))
        + math.exp(params.log_b - params.beta * math.log(d_eff))
    )


def run_breakdown(record: RunRecord, spec: LawSpec) -> TokenBreakdown:
    """Token breakdown of a record under a law spec's target and transfer set."""
    return token_accounting(record, spec.target_language, spec.transfer_set)


def predict_run_loss(
    record: RunRecord, spec: LawSpec, catalog: CorpusCatalog, params: LawParams
) -> float:
    """End-to-end prediction for one run record."""
    breakdown = run_breakdown(record, spec)
    return predict_loss(params, record.n_params, effective_data(breakdown, catalog, params))


class LossLaw(Protocol):
    """Plug-in interface for third-party laws used in side-by-side comparisons.

    Implementations map (model size, token breakdown) to a predicted loss; the
    internals of external laws are deliberately not reproduced here.
    """

    def predict(self, n_params: int, breakdown: TokenBreakdown) -> float:
        ...


@dataclass(frozen=True)
class FittedLaw:
    """Adapter presenting a fitted variant through the plug-in interface."""

    spec: LawSpec
    params: LawParams
    catalog: CorpusCatalog

    def predict(self, n_params: int, breakdown: TokenBreakdown) -> float:
        return predict_loss(
            self.params, n_params, effective_data(breakdown, self.catalog, self.params)
        )
