"""Language-transfer scores from learning curves, and the score matrix.

Two complementary scores:

* Bilingual transfer score: how many tokens a 50/50 bilingual model needs to
  match a monolingual model's loss at a reference horizon, centered so that 0
  means "exactly twice the tokens" (neutral), positive means the source
  language helps, negative means it interferes.
* Adaptation score: the time-averaged loss reduction on a target language
  while finetuning a shared multilingual checkpoint on a source language.

Curve evaluation interpolates linearly in (log tokens, loss), where learning
curves are near-linear; curve inversion first applies a running-minimum
smoothing so the inverse is well defined. Area scores integrate the raw curve
with the trapezoid rule over raw token counts.

Measured-score grids are completed by a seeded regression forest over
curve-shape features; each cell records whether it was measured or estimated.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, FitError, SchemaError
from .forest import DEFAULT_N_TREES, Forest, rf_train
from .run_data import LearningCurve

#: Reference horizon for bilingual scoring: the monolingual token count whose
#: loss the bilingual model must match.
DEFAULT_D_MONO = 42_000_000_000

MATRIX_SCHEMA_VERSION = 1


def smooth_non_increasing(curve: LearningCurve) -> LearningCurve:
    """Running-minimum smoothing; idempotent on already monotone curves."""
    points = []
    best = math.inf
    for tokens, loss in curve.points:
        best = min(best, loss)
        points.append((tokens, best))
    return LearningCurve(tuple(points), curve.regime_id, curve.eval_language)


def loss_at(curve: LearningCurve, tokens: float) -> float:
    """Loss at a token count, piecewise linear in (log tokens, loss).

    Queries must fall inside the recorded token range; extrapolation is
    refused. Recorded points are returned exactly.
    """
    toks = curve.tokens
    losses = curve.losses
    if tokens < toks[0] or tokens > toks[-1]:
        raise DomainError(
            f"tokens {tokens:g} outside curve range [{toks[0]:g}, {toks[-1]:g}]; "
            "extrapolation is not supported"
        )
    # bisect to the segment; exact knots short-circuit before any log
    lo, hi = 0, len(toks) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if toks[mid] <= tokens:
            lo = mid
        else:
            hi = mid
    if tokens == toks[lo]:
        return losses[lo]
    if tokens == toks[hi]:
        return losses[hi]
    if toks[lo] <= 0:
        raise DomainError(
            f"cannot interpolate in log-token space across tokens={toks[lo]}; "
            "query a recorded point instead"
        )
    frac = (math.log(tokens) - math.log(toks[lo])) / (math.log(toks[hi]) - math.log(toks[lo]))
    return losses[lo] + frac * (losses[hi] - losses[lo])


def tokens_to_reach(curve: LearningCurve, target_loss: float) -> float | None:
    """Smallest token count where the smoothed curve first reaches target_loss.

    Applies running-minimum smoothing, then inverts the log-token interpolant.
    Returns None when the curve never attains the loss.
    """
    smoothed = smooth_non_increasing(curve)
    toks = smoothed.tokens
    losses = smoothed.losses
    if losses[0] <= target_loss:
        return float(toks[0])
    if min(losses) > target_loss:
        return None
    for i in range(1, len(toks)):
        if losses[i] <= target_loss:
            if losses[i] == target_loss:
                return float(toks[i])  # exact hit at a knot
            l_prev, l_here = losses[i - 1], losses[i]
            if l_here == l_prev:
                return float(toks[i])
            frac = (l_prev - target_loss) / (l_prev - l_here)
            log_d = math.log(toks[i - 1]) + frac * (math.log(toks[i]) - math.log(toks[i - 1]))
            return math.exp(log_d)
    return None


def bts(
    mono: LearningCurve,
    bilingual: LearningCurve,
    d_mono: float = DEFAULT_D_MONO,
) -> float | None:
    """Bilingual transfer score: -(d_bi - 2*d_mono)/d_mono.

    d_bi is the bilingual token count matching the monolingual loss at d_mono.
    Zero means the bilingual model needed exactly double the tokens; positive
    is positive transfer. Returns None when the bilingual curve never reaches
    the monolingual loss.
    """
    target_loss = loss_at(mono, d_mono)
    d_bi = tokens_to_reach(bilingual, target_loss)
    if d_bi is None:
        return None
    return -(d_bi - 2.0 * d_mono) / d_mono


def _loss_at_linear(curve: LearningCurve, tokens: float) -> float:
    """Linear interpolation in raw token space (the trapezoid-consistent rule)."""
    toks = curve.tokens
    losses = curve.losses
    if tokens < toks[0] or tokens > toks[-1]:
        raise DomainError(
            f"tokens {tokens:g} outside curve range [{toks[0]:g}, {toks[-1]:g}]"
        )
    return float(np.interp(tokens, toks, losses))


def fas(baseline_loss: float, finetune_curve: LearningCurve, d_max: float) -> float:
    """Adaptation score: mean of (baseline_loss - curve) over [0, d_max],
    integrated with the trapezoid rule on the recorded points."""
    if d_max <= 0:
        raise DomainError(f"d_max must be positive, got {d_max}")
    toks = finetune_curve.tokens
    if toks[0] > 0 or toks[-1] < d_max:
        raise DomainError(
            f"curve ({finetune_curve.regime_id!r}, {finetune_curve.eval_language!r}) "
            f"covers [{toks[0]:g}, {toks[-1]:g}], not [0, {d_max:g}]"
        )
    grid = [float(t) for t in toks if t < d_max]
    grid.append(float(d_max))
    values = [baseline_loss - _loss_at_linear(finetune_curve, t) for t in grid]
    return float(np.trapezoid(values, grid)) / d_max


@dataclass(frozen=True)
class TransferFeatures:
    """Curve-shape features for one (source, target) pair, all z-scored:
    the adaptation gains of both languages, their difference, and the
    end-of-window deviation from the shared-checkpoint baseline."""

    gain_source: float
    gain_target: float
    gain_diff: float
    deviation: float

    def as_array(self) -> np.ndarray:
        return np.array([self.gain_source, self.gain_target, self.gain_diff, self.deviation])


CurveBank = Mapping[str, Mapping[str, LearningCurve]]


def _check_bank(curve_bank: CurveBank, languages: Sequence[str]) -> None:
    for s in languages:
        if s not in curve_bank:
            raise SchemaError(f"curve bank is missing source language {s!r}")
        for t in languages:
            if t not in curve_bank[s]:
                raise SchemaError(f"curve bank is missing curve for pair ({s!r}, {t!r})")


def derive_baselines(curve_bank: CurveBank, languages: Sequence[str]) -> dict[str, float]:
    """Shared-checkpoint loss per target, read off the curves' zero-token points
    (before any finetuning) and averaged across sources."""
    baselines = {}
    for t in languages:
        firsts = []
        for s in sorted(curve_bank):
            curve = curve_bank[s][t]
            if curve.tokens[0] != 0:
                raise SchemaError(
                    f"curve ({curve.regime_id!r}, {t!r}) does not start at zero tokens; "
                    "cannot read the pre-finetuning baseline"
                )
            firsts.append(curve.losses[0])
        baselines[t] = float(np.mean(firsts))
    return baselines


def build_features(
    curve_bank: CurveBank,
    baselines: Mapping[str, float],
    d_max: float,
    measured: Mapping[tuple[str, str], float] | None = None,
) -> tuple[dict[tuple[str, str], TransferFeatures], dict[tuple[str, str], float]]:
    """Feature vectors for every ordered pair, plus labels where measured.

    Gains are z-scored with the global mean/std across languages; deviations
    are z-scored across sources separately for each fixed target. A zero
    standard deviation in either normalization group is an error naming the
    group.
    """
    languages = sorted(curve_bank)
    _check_bank(curve_bank, languages)
    for lang in languages:
        if lang not in baselines:
            raise SchemaError(f"baselines missing entry for {lang!r}")
    gains = {l: fas(baselines[l], curve_bank[l][l], d_max) for l in languages}
    gain_values = np.array([gains[l] for l in languages])
    mu_g, sigma_g = float(gain_values.mean()), float(gain_values.std())
    if sigma_g == 0:
        raise SchemaError("zero standard deviation in normalization group 'gain'")
    gain_z = {l: (gains[l] - mu_g) / sigma_g for l in languages}

    deviations = {}
    for s in languages:
        for t in languages:
            if s == t:
                continue
            deviations[(s, t)] = _loss_at_linear(curve_bank[s][t], d_max) - baselines[t]
    features: dict[tuple[str, str], TransferFeatures] = {}
    for t in languages:
        column = np.array([deviations[(s, t)] for s in languages if s != t])
        mu_d, sigma_d = float(column.mean()), float(column.std())
        if sigma_d == 0:
            raise SchemaError(
                f"zero standard deviation in normalization group 'deviation[{t}]'"
            )
        for s in languages:
            if s == t:
                continue
            features[(s, t)] = TransferFeatures(
                gain_source=gain_z[s],
                gain_target=gain_z[t],
                gain_diff=gain_z[s] - gain_z[t],
                deviation=(deviations[(s, t)] - mu_d) / sigma_d,
            )
    labels = {}
    if measured:
        labels = {pair: measured[pair] for pair in measured if pair in features}
    return features, labels


@dataclass(frozen=True)
class TransferMatrix:
    """Source-by-target score grid with per-cell provenance.

    The diagonal is not applicable (NaN score, 'n/a' provenance); off-diagonal
    cells are either 'measured' or 'estimated'.
    """

    languages: tuple[str, ...]
    scores: np.ndarray
    provenance: tuple[tuple[str, ...], ...]

    def score(self, source: str, target: str) -> float:
        i = self.languages.index(source)
        j = self.languages.index(target)
        return float(self.scores[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["source"] + list(self.languages))
        for i, source in enumerate(self.languages):
            row: list[object] = [source]
            for j in range(len(self.languages)):
                value = self.scores[i, j]
                row.append("" if math.isnan(value) else repr(float(value)))
            writer.writerow(row)
        return buf.getvalue()

    def provenance_json_dict(self) -> dict:
        return {
            "schema_version": MATRIX_SCHEMA_VERSION,
            "languages": list(self.languages),
            "provenance": [list(row) for row in self.provenance],
        }

    def to_long_rows(self) -> list[tuple[str, str, float, str]]:
        """(source, target, score, provenance) rows for plotting/export."""
        rows = []
        for i, s in enumerate(self.languages):
            for j, t in enumerate(self.languages):
                rows.append((s, t, float(self.scores[i, j]), self.provenance[i][j]))
        return rows


def transfer_matrix(
    measured: Mapping[tuple[str, str], float],
    curve_bank: CurveBank,
    d_max: float,
    *,
    baselines: Mapping[str, float] | None = None,
    n_trees: int = DEFAULT_N_TREES,
    seed: int = 0,
) -> tuple[TransferMatrix, Forest | None]:
    """Assemble the full score matrix: measured cells kept as-is, the rest
    estimated by a forest trained on the measured cells' features.

    Returns the matrix and the trained forest (None when every pair was
    measured and no estimation was needed).
    """
    languages = tuple(sorted(curve_bank))
    grid_pairs = {(s, t) for s in languages for t in languages if s != t}
    if not measured:
        raise FitError("no measured pairs: nothing to train the estimator on")
    stray = sorted(set(measured) - grid_pairs)
    if stray:
        raise SchemaError(f"measured pairs outside the language grid: {stray}")
    if baselines is None:
        baselines = derive_baselines(curve_bank, languages)
    features, labels = build_features(curve_bank, baselines, d_max, measured)

    n = len(languages)
    scores = np.full((n, n), np.nan)
    provenance = [["n/a"] * n for _ in range(n)]
    for (s, t), value in measured.items():
        i, j = languages.index(s), languages.index(t)
        scores[i, j] = value
        provenance[i][j] = "measured"

    unmeasured = sorted(grid_pairs - set(measured))
    forest = None
    if unmeasured:
        pairs = sorted(labels)
        if len(pairs) < 2:
            raise FitError(
                f"only {len(pairs)} measured pair(s); the estimator needs at least 2"
            )
        X = np.array([features[p].as_array() for p in pairs])
        y = np.array([labels[p] for p in pairs])
        forest = rf_train(X, y, n_trees=n_trees, seed=seed)
        X_new = np.array([features[p].as_array() for p in unmeasured])
        predictions = forest.predict(X_new)
        for (s, t), value in zip(unmeasured, predictions):
            i, j = languages.index(s), languages.index(t)
            scores[i, j] = value
            provenance[i][j] = "estimated"
    return (
        TransferMatrix(
            languages=languages,
            scores=scores,
            provenance=tuple(tuple(row) for row in provenance),
        ),
        forest,
    )


def parse_measured_scores(source: bytes | str) -> dict[tuple[str, str], float]:
    """Parse measured (source, target, score) rows from CSV."""
    text = source.decode("utf-8") if isinstance(source, bytes) else source
    reader = csv.DictReader(io.StringIO(text))
    needed = {"source", "target", "score"}
    if reader.fieldnames is None or not needed <= set(reader.fieldnames):
        raise SchemaError("measured-scores csv must have columns: source, target, score")
    out: dict[tuple[str, str], float] = {}
    for row_num, raw in enumerate(reader, start=1):
        pair = (raw["source"], raw["target"])
        if pair[0] == pair[1]:
            raise SchemaError(f"row {row_num}: source equals target ({pair[0]!r})")
        try:
            out[pair] = float(raw["score"])
        except (TypeError, ValueError):
            raise SchemaError(f"row {row_num}: field 'score' is not numeric") from None
    return out
