"""Training-run observations, learning curves, and token accounting.

All record types are frozen dataclasses; treat the contained mappings as
read-only. Token counts are Python ints (64-bit territory: counts in real
corpora reach trillions), losses are floats.

File schemas (CSV columns / JSONL keys):
  runs:    run_id, n_params, mixture_id, eval_language, loss, total_tokens,
           sampling_weights (JSON object), cumulative_tokens (JSON object)
           [optional: token_source]
  curves:  regime_id, eval_language, tokens, loss   (one point per row)
  catalog: language, unique_tokens
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import IO, Callable, Iterable, Iterator, Mapping, Sequence

from .errors import SchemaError

WEIGHT_TOL = 1e-9
#: Relative slack allowed between sum(cumulative_tokens) and total_tokens.
#: Upstream loggers round per-language counts, so exact equality is optional.
DEFAULT_TOKEN_SLACK = 1e-6

RUN_FIELDS = (
    "run_id",
    "n_params",
    "mixture_id",
    "eval_language",
    "loss",
    "total_tokens",
    "sampling_weights",
    "cumulative_tokens",
)
TOKEN_SOURCES = ("logged", "reconstructed")


@dataclass(frozen=True)
class RunRecord:
    """One training-run observation: a model evaluated on one language.

    ``token_source`` flags whether per-language cumulative counts were logged
    exactly or reconstructed from sampling weights and step counts.
    """

    run_id: str
    n_params: int
    mixture_id: str
    sampling_weights: Mapping[str, float]
    cumulative_tokens: Mapping[str, int]
    total_tokens: int
    eval_language: str
    loss: float
    token_source: str = "logged"

    def validate(self, token_slack: float = DEFAULT_TOKEN_SLACK) -> None:
        """Check record invariants, raising SchemaError naming the bad field."""
        ctx = f"run {self.run_id!r}"
        if self.n_params <= 0:
            raise SchemaError(f"{ctx}: n_params must be positive, got {self.n_params}")
        if not self.loss > 0:
            raise SchemaError(f"{ctx}: loss must be positive, got {self.loss}")
        if self.total_tokens < 0:
            raise SchemaError(f"{ctx}: total_tokens must be nonnegative")
        if self.token_source not in TOKEN_SOURCES:
            raise SchemaError(
                f"{ctx}: token_source must be one of {TOKEN_SOURCES}, "
                f"got {self.token_source!r}"
            )
        weight_sum = sum(self.sampling_weights.values())
        if abs(weight_sum - 1.0) > WEIGHT_TOL:
            raise SchemaError(
                f"{ctx}: sampling_weights must sum to 1 (got {weight_sum!r})"
            )
        if any(w < 0 for w in self.sampling_weights.values()):
            raise SchemaError(f"{ctx}: sampling_weights must be nonnegative")
        if any(t < 0 for t in self.cumulative_tokens.values()):
            raise SchemaError(f"{ctx}: cumulative_tokens must be nonnegative")
        token_sum = sum(self.cumulative_tokens.values())
        slack = token_slack * max(self.total_tokens, 1)
        if abs(token_sum - self.total_tokens) > slack:
            raise SchemaError(
                f"{ctx}: cumulative_tokens sum {token_sum} does not match "
                f"total_tokens {self.total_tokens} within slack {slack:g}"
            )

    def mixture_languages(self) -> tuple[str, ...]:
        """Languages with positive sampling weight, sorted."""
        return tuple(sorted(l for l, w in self.sampling_weights.items() if w > 0))


@dataclass(frozen=True)
class CorpusCatalog:
    """Unique-token counts per language (the one-epoch boundary of saturation)."""

    unique_tokens: Mapping[str, int]

    def __post_init__(self) -> None:
        for lang, u in self.unique_tokens.items():
            if u <= 0:
                raise SchemaError(f"catalog: unique_tokens[{lang!r}] must be positive")

    def require(self, language: str) -> int:
        try:
            return self.unique_tokens[language]
        except KeyError:
            raise SchemaError(f"catalog has no unique_tokens entry for {language!r}") from None

    def __contains__(self, language: str) -> bool:
        return language in self.unique_tokens


@dataclass(frozen=True)
class TokenBreakdown:
    """Token counts of one run split into target / transfer / other buckets.

    ``other_languages`` records which mixture languages fall into the "other"
    bucket so its pooled unique-token count can be derived from a catalog.
    The three buckets sum to the run's total token count exactly.
    """

    target_language: str
    d_target: int
    d_transfer: Mapping[str, int]
    d_other: int
    other_languages: tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return self.d_target + sum(self.d_transfer.values()) + self.d_other


@dataclass(frozen=True)
class LearningCurve:
    """A (tokens, loss) sequence for one training regime and eval language."""

    points: tuple[tuple[int, float], ...]
    regime_id: str
    eval_language: str

    def __post_init__(self) -> None:
        ctx = f"curve ({self.regime_id!r}, {self.eval_language!r})"
        if len(self.points) < 2:
            raise SchemaError(f"{ctx}: needs at least 2 points for interpolation")
        prev = None
        for tokens, loss in self.points:
            if tokens < 0:
                raise SchemaError(f"{ctx}: token counts must be nonnegative")
            if prev is not None and tokens <= prev:
                raise SchemaError(f"{ctx}: token counts must be strictly increasing")
            if not loss > 0:
                raise SchemaError(f"{ctx}: losses must be positive")
            prev = tokens

    @property
    def tokens(self) -> tuple[int, ...]:
        return tuple(p[0] for p in self.points)

    @property
    def losses(self) -> tuple[float, ...]:
        return tuple(p[1] for p in self.points)


@dataclass(frozen=True)
class RunSet:
    """An immutable, order-preserving collection of run records."""

    records: tuple[RunRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[RunRecord]:
        return iter(self.records)

    def __getitem__(self, i: int) -> RunRecord:
        return self.records[i]

    def filter(self, predicate: Callable[[RunRecord], bool]) -> "RunSet":
        return RunSet(tuple(r for r in self.records if predicate(r)))

    def for_eval_language(self, language: str) -> "RunSet":
        return self.filter(lambda r: r.eval_language == language)

    def eval_languages(self) -> tuple[str, ...]:
        return tuple(sorted({r.eval_language for r in self.records}))

    def mixture_ids(self) -> tuple[str, ...]:
        return tuple(sorted({r.mixture_id for r in self.records}))


# ---------------------------------------------------------------------------
# Parsing / serialization
# ---------------------------------------------------------------------------

def _decode(source: bytes | str | IO) -> str:
    if isinstance(source, bytes):
        try:
            return source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaError(f"input is not valid UTF-8: {exc}") from None
    if isinstance(source, str):
        return source
    data = source.read()
    if isinstance(data, bytes):
        return _decode(data)
    return data


def _parse_json_map(raw: object, row: int, fieldname: str, caster: Callable) -> dict:
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError:
            raise SchemaError(f"row {row}: field {fieldname!r} is not valid JSON") from None
    if not isinstance(raw, dict):
        raise SchemaError(f"row {row}: field {fieldname!r} must be a JSON object")
    try:
        return {str(k): caster(v) for k, v in raw.items()}
    except (TypeError, ValueError):
        raise SchemaError(f"row {row}: field {fieldname!r} has non-numeric values") from None


def _record_from_mapping(raw: Mapping, row: int, token_slack: float) -> RunRecord:
    for name in RUN_FIELDS:
        if name not in raw or raw[name] in (None, ""):
            raise SchemaError(f"row {row}: missing field {name!r}")

    def num(name: str, caster: Callable):
        try:
            return caster(raw[name])
        except (TypeError, ValueError):
            raise SchemaError(f"row {row}: field {name!r} is not numeric") from None

    record = RunRecord(
        run_id=str(raw["run_id"]),
        n_params=num("n_params", int),
        mixture_id=str(raw["mixture_id"]),
        sampling_weights=_parse_json_map(raw["sampling_weights"], row, "sampling_weights", float),
        cumulative_tokens=_parse_json_map(raw["cumulative_tokens"], row, "cumulative_tokens", int),
        total_tokens=num("total_tokens", int),
        eval_language=str(raw["eval_language"]),
        loss=num("loss", float),
        token_source=str(raw.get("token_source") or "logged"),
    )
    try:
        record.validate(token_slack)
    except SchemaError as exc:
        raise SchemaError(f"row {row}: {exc}") from None
    return record


def parse_runs(
    source: bytes | str | IO,
    format: str = "jsonl",
    token_slack: float = DEFAULT_TOKEN_SLACK,
) -> RunSet:
    """Parse run records from a CSV or JSONL stream.

    Row order is preserved and no row is silently dropped: any malformed row
    raises a SchemaError naming the row number and offending field.
    """
    text = _decode(source)
    records: list[RunRecord] = []
    if format == "jsonl":
        for row, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"row {row}: invalid JSON ({exc.msg})") from None
            if not isinstance(raw, dict):
                raise SchemaError(f"row {row}: expected a JSON object")
            records.append(_record_from_mapping(raw, row, token_slack))
    elif format == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None:
            raise SchemaError("csv input has no header row")
        missing = [f for f in RUN_FIELDS if f not in reader.fieldnames]
        if missing:
            raise SchemaError(f"csv header is missing fields: {missing}")
        for row, raw in enumerate(reader, start=1):
            records.append(_record_from_mapping(raw, row, token_slack))
    else:
        raise SchemaError(f"unknown format tag {format!r} (expected 'csv' or 'jsonl')")
    return RunSet(tuple(records))


def _record_to_mapping(record: RunRecord, as_text: bool) -> dict:
    weights = dict(sorted(record.sampling_weights.items()))
    tokens = dict(sorted(record.cumulative_tokens.items()))
    out = {
        "run_id": record.run_id,
        "n_params": record.n_params,
        "mixture_id": record.mixture_id,
        "eval_language": record.eval_language,
        "loss": record.loss,
        "total_tokens": record.total_tokens,
        "sampling_weights": json.dumps(weights, sort_keys=True) if as_text else weights,
        "cumulative_tokens": json.dumps(tokens, sort_keys=True) if as_text else tokens,
        "token_source": record.token_source,
    }
    return out


def serialize_runs(runs: RunSet, format: str = "jsonl") -> bytes:
    """Serialize a RunSet back to CSV or JSONL. Round-trips through parse_runs."""
    if format == "jsonl":
        lines = [
            json.dumps(_record_to_mapping(r, as_text=False), sort_keys=True)
            for r in runs
        ]
        return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
    if format == "csv":
        buf = io.StringIO()
        fields = list(RUN_FIELDS) + ["token_source"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in runs:
            writer.writerow(_record_to_mapping(r, as_text=True))
        return buf.getvalue().encode("utf-8")
    raise SchemaError(f"unknown format tag {format!r} (expected 'csv' or 'jsonl')")


def parse_catalog(source: bytes | str | IO) -> CorpusCatalog:
    """Parse a language→unique_tokens catalog from CSV."""
    text = _decode(source)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"language", "unique_tokens"} <= set(reader.fieldnames):
        raise SchemaError("catalog csv must have columns: language, unique_tokens")
    entries: dict[str, int] = {}
    for row, raw in enumerate(reader, start=1):
        lang = raw["language"]
        if not lang:
            raise SchemaError(f"row {row}: missing field 'language'")
        try:
            u = int(raw["unique_tokens"])
        except (TypeError, ValueError):
            raise SchemaError(f"row {row}: field 'unique_tokens' is not an integer") from None
        if u <= 0:
            raise SchemaError(f"row {row}: field 'unique_tokens' must be positive")
        if lang in entries:
            raise SchemaError(f"row {row}: duplicate catalog language {lang!r}")
        entries[lang] = u
    return CorpusCatalog(entries)


def serialize_catalog(catalog: CorpusCatalog) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["language", "unique_tokens"])
    for lang in sorted(catalog.unique_tokens):
        writer.writerow([lang, catalog.unique_tokens[lang]])
    return buf.getvalue().encode("utf-8")


def parse_curves(source: bytes | str | IO) -> dict[tuple[str, str], LearningCurve]:
    """Parse learning curves from CSV, keyed by (regime_id, eval_language).

    Points are sorted by token count within each curve; duplicate token counts
    within a curve are rejected by the curve's own validation.
    """
    text = _decode(source)
    reader = csv.DictReader(io.StringIO(text))
    needed = {"regime_id", "eval_language", "tokens", "loss"}
    if reader.fieldnames is None or not needed <= set(reader.fieldnames):
        raise SchemaError("curves csv must have columns: regime_id, eval_language, tokens, loss")
    grouped: dict[tuple[str, str], list[tuple[int, float]]] = {}
    for row, raw in enumerate(reader, start=1):
        key = (raw["regime_id"], raw["eval_language"])
        if not key[0] or not key[1]:
            raise SchemaError(f"row {row}: missing regime_id or eval_language")
        try:
            point = (int(raw["tokens"]), float(raw["loss"]))
        except (TypeError, ValueError):
            raise SchemaError(f"row {row}: 'tokens' or 'loss' is not numeric") from None
        grouped.setdefault(key, []).append(point)
    curves = {}
    for (regime, lang), points in grouped.items():
        points.sort(key=lambda p: p[0])
        curves[(regime, lang)] = LearningCurve(tuple(points), regime, lang)
    return curves


def serialize_curves(curves: Iterable[LearningCurve]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["regime_id", "eval_language", "tokens", "loss"])
    for curve in curves:
        for tokens, loss in curve.points:
            writer.writerow([curve.regime_id, curve.eval_language, tokens, loss])
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# Token accounting
# ---------------------------------------------------------------------------

def token_accounting(
    record: RunRecord, target: str, transfer_set: Sequence[str]
) -> TokenBreakdown:
    """Split a run's tokens into target, per-transfer-language, and other buckets.

    Languages absent from the record's token map count as zero, so a single
    transfer set can be applied across heterogeneous mixtures. The buckets sum
    to total_tokens exactly (integer arithmetic).
    """
    if target in transfer_set:
        raise SchemaError(f"target language {target!r} must not be in the transfer set")
    if len(set(transfer_set)) != len(transfer_set):
        raise SchemaError(f"transfer set contains duplicates: {list(transfer_set)}")
    cum = record.cumulative_tokens
    d_target = cum.get(target, 0)
    d_transfer = {lang: cum.get(lang, 0) for lang in transfer_set}
    d_other = record.total_tokens - d_target - sum(d_transfer.values())
    if d_other < 0:
        raise SchemaError(
            f"run {record.run_id!r}: accounted tokens exceed total_tokens "
            f"(d_other would be {d_other})"
        )
    named = {target, *transfer_set}
    other_languages = tuple(
        sorted(lang for lang, t in cum.items() if lang not in named and t > 0)
    )
    return TokenBreakdown(
        target_language=target,
        d_target=d_target,
        d_transfer=d_transfer,
        d_other=d_other,
        other_languages=other_languages,
    )


def select_transfer_set(runs: RunSet, target: str, k: int) -> list[str]:
    """Pick the k languages most heavily co-sampled with the target.

    The co-sampling statistic is the summed token exposure of each candidate
    across all runs whose mixture contains the target. Ties break by
    lexicographic language code. Returns fewer than k languages when fewer
    candidates exist.
    """
    if k < 0:
        raise SchemaError(f"k must be nonnegative, got {k}")
    if k == 0:
        return []
    totals: dict[str, int] = {}
    for record in runs:
        if record.sampling_weights.get(target, 0.0) <= 0:
            continue
        for lang, tokens in record.cumulative_tokens.items():
            if lang != target and tokens > 0:
                totals[lang] = totals.get(lang, 0) + tokens
    ranked = sorted(totals.items(), key=lambda item: (-item[1], item[0]))
    return [lang for lang, _ in ranked[:k]]
