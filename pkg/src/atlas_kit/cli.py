"""Command-line pipelines over the library, with reproducible file reports.

Subcommands: fit, eval, transfer, plan, crossover, synth. Every run writes
canonical JSON/CSV reports into --out (byte-identical for identical inputs
and seed; wall-clock data goes to the run_info.json sidecar). On failure a
FAILED marker file is left in the output directory and the exit code is 1;
usage errors exit 2. --emit-plot-data adds figure-shaped CSVs and renders the
matching PNG figures next to them. ATLAS_KIT_THREADS caps internal worker
threads.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
import time
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import capacity as cap
from . import crossover as xover
from . import fitter, holdout_eval, laws, reports, run_data, synth, transfer
from .errors import AtlasKitError, SchemaError
from .forest import cross_validate

FAST_INIT_GRID: dict[str, tuple[float, ...]] = {
    "e_irreducible": (0.0, 0.7),
    "log_a": (4.0, 10.0),
    "alpha": (0.25, 0.55),
    "log_b": (4.0, 10.0),
    "beta": (0.25, 0.55),
    "lam": (1.0,),
}

_AXIS_CHOICES = ("random", "n", "d", "c", "m")


def _read_bytes(path: str) -> bytes:
    return Path(path).read_bytes()


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise SchemaError("config file must hold a JSON object")
    return raw


def _resolve(flag_value, config: Mapping, key: str, default):
    """flags > config file > defaults."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _fit_config(args, config: Mapping) -> fitter.FitConfig:
    profile = _resolve(args.fit_profile, config, "fit_profile", "default")
    seed = int(_resolve(args.seed, config, "seed", 0))
    grid = None
    if profile == "fast":
        grid = FAST_INIT_GRID
    elif profile != "default":
        raise SchemaError(f"unknown fit profile {profile!r}")
    n_random = int(_resolve(getattr(args, "random_starts", None), config, "random_starts", 16))
    return fitter.FitConfig(init_grid=grid, n_random_starts=n_random, seed=seed)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports.clear_failure_marker(out)
    return out


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _scores_by_target(path: str | None) -> dict[str, dict[str, float]] | None:
    """Measured (source, target, score) rows grouped by target language, used
    to initialize transfer weights."""
    if not path:
        return None
    measured = transfer.parse_measured_scores(_read_bytes(path))
    grouped: dict[str, dict[str, float]] = {}
    for (s, t), value in measured.items():
        grouped.setdefault(t, {})[s] = value
    return grouped


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _resolve_law_spec(args, config, runs) -> laws.LawSpec:
    variant = _resolve(args.law, config, "law", None)
    target = _resolve(args.target, config, "target", None)
    if variant is None or target is None:
        raise SchemaError("--law and --target are required")
    transfer_set: tuple[str, ...] = ()
    if variant == "atlas_full":
        explicit = _resolve(args.transfer_set, config, "transfer_set", None)
        if explicit:
            transfer_set = tuple(explicit.split(",")) if isinstance(explicit, str) else tuple(explicit)
        else:
            k = int(_resolve(args.transfer_k, config, "transfer_k", 3))
            transfer_set = tuple(run_data.select_transfer_set(runs, target, k))
    return laws.LawSpec(variant=variant, target_language=target, transfer_set=transfer_set)


def cmd_fit(args) -> None:
    config = _load_config_file(args.config)
    out = _out_dir(args)
    runs = run_data.parse_runs(_read_bytes(args.runs), format=args.format)
    fit_config = _fit_config(args, config)
    variant = _resolve(args.law, config, "law", None)

    if variant == "capacity":
        target = _resolve(args.target, config, "target", None)
        eval_language = None if target in (None, "all") else target
        result = fitter.fit_capacity(runs, fit_config, eval_language)
        effective = {
            "law": "capacity",
            "target": target or "all",
            "seed": fit_config.seed,
            "fit_profile": _resolve(args.fit_profile, config, "fit_profile", "default"),
        }
        reports.write_json_report(out / "fit.json", {
            "effective_config": effective,
            "result": result.to_json_dict(),
        })
        return

    if args.catalog is None:
        raise SchemaError("--catalog is required for this law")
    catalog = run_data.parse_catalog(_read_bytes(args.catalog))
    spec = _resolve_law_spec(args, config, runs)
    scores = _scores_by_target(args.transfer_scores)
    result = fitter.fit(
        runs, spec, catalog, fit_config,
        scores.get(spec.target_language) if scores else None,
    )
    effective = {
        "law": spec.variant,
        "target": spec.target_language,
        "transfer_set": list(spec.transfer_set),
        "seed": fit_config.seed,
        "fit_profile": _resolve(args.fit_profile, config, "fit_profile", "default"),
    }
    reports.write_json_report(out / "fit.json", {
        "effective_config": effective,
        "result": result.to_json_dict(),
    })
    if args.emit_residuals:
        usable = runs.for_eval_language(spec.target_language)
        res = fitter.residuals(result.params, spec, runs, catalog)
        _write_csv(
            out / "residuals.csv",
            ["run_id", "log_residual"],
            [(r.run_id, repr(float(v))) for r, v in zip(usable, res)],
        )
    if args.emit_plot_data:
        usable = runs.for_eval_language(spec.target_language)
        rows = []
        for record in usable:
            pred = laws.predict_run_loss(record, spec, catalog, result.params)
            rows.append((record.n_params, record.total_tokens, record.loss, pred))
        _write_csv(
            out / "plot_fit_trajectories.csv",
            ["n_params", "total_tokens", "observed_loss", "predicted_loss"],
            [(n, d, repr(float(o)), repr(float(p))) for n, d, o, p in rows],
        )
        from . import plots  # matplotlib import deferred to plotting runs

        plots.plot_fit_trajectories(out / "fig_fit_trajectories.png", rows)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> None:
    config = _load_config_file(args.config)
    out = _out_dir(args)
    runs = run_data.parse_runs(_read_bytes(args.runs), format=args.format)
    catalog = run_data.parse_catalog(_read_bytes(args.catalog))
    fit_config = _fit_config(args, config)
    seed = fit_config.seed
    variant = _resolve(args.law, config, "law", None)
    if variant is None:
        raise SchemaError("--law is required")
    targets_raw = _resolve(args.targets, config, "targets", None) or _resolve(
        args.target, config, "target", None
    )
    if targets_raw is None:
        raise SchemaError("--target or --targets is required")
    targets = targets_raw.split(",") if isinstance(targets_raw, str) else list(targets_raw)

    specs = []
    for target in targets:
        transfer_set: tuple[str, ...] = ()
        if variant == "atlas_full":
            explicit = _resolve(args.transfer_set, config, "transfer_set", None)
            if explicit and len(targets) == 1:
                transfer_set = tuple(explicit.split(","))
            else:
                k = int(_resolve(args.transfer_k, config, "transfer_k", 3))
                transfer_set = tuple(run_data.select_transfer_set(runs, target, k))
        specs.append(laws.LawSpec(variant=variant, target_language=target, transfer_set=transfer_set))

    axes_raw = _resolve(args.axes, config, "axes", "random,n,d,c,m")
    axes = axes_raw.split(",") if isinstance(axes_raw, str) else list(axes_raw)
    fraction = float(_resolve(args.fraction, config, "fraction", 0.2))
    held_scales = _resolve(args.held_scales, config, "held_scales", None)
    if isinstance(held_scales, str):
        held_scales = tuple(int(float(v)) for v in held_scales.split(","))
    elif held_scales is not None:
        held_scales = tuple(int(v) for v in held_scales)
    held_mixtures = _resolve(args.held_mixtures, config, "held_mixtures", None)
    if isinstance(held_mixtures, str):
        held_mixtures = tuple(held_mixtures.split(","))
    elif held_mixtures is not None:
        held_mixtures = tuple(held_mixtures)

    split_specs = []
    for axis in axes:
        kwargs: dict = {"axis": axis, "seed": seed}
        if axis in ("random", "d", "c"):
            kwargs["fraction"] = fraction
        if axis == "n" and held_scales:
            kwargs["held_scales"] = held_scales
        if axis == "m" and held_mixtures:
            kwargs["held_mixtures"] = held_mixtures
        split_specs.append(holdout_eval.SplitSpec(**kwargs))

    report = holdout_eval.evaluate_suite(
        runs, specs, catalog, fit_config, split_specs,
        transfer_scores=_scores_by_target(args.transfer_scores),
        include_pooled=args.pooled,
    )
    effective = {
        "law": variant,
        "targets": targets,
        "axes": axes,
        "fraction": fraction,
        "seed": seed,
        "fit_profile": _resolve(args.fit_profile, config, "fit_profile", "default"),
    }
    payload = {"effective_config": effective}
    payload.update(report.to_json_dict())
    reports.write_json_report(out / "eval.json", payload)
    reports.write_text_report(out / "eval_table.txt", report.to_table())


# ---------------------------------------------------------------------------
# transfer
# ---------------------------------------------------------------------------

def _parse_baselines(source: bytes) -> dict[str, float]:
    reader = csv.DictReader(io.StringIO(source.decode("utf-8")))
    if reader.fieldnames is None or not {"language", "loss"} <= set(reader.fieldnames):
        raise SchemaError("baselines csv must have columns: language, loss")
    return {row["language"]: float(row["loss"]) for row in reader}


def _parse_groups(source: bytes) -> dict[str, str]:
    reader = csv.DictReader(io.StringIO(source.decode("utf-8")))
    if reader.fieldnames is None or not {"language", "group"} <= set(reader.fieldnames):
        raise SchemaError("groups csv must have columns: language, group")
    return {row["language"]: row["group"] for row in reader}


def cmd_transfer(args) -> None:
    config = _load_config_file(args.config)
    out = _out_dir(args)
    seed = int(_resolve(args.seed, config, "seed", 0))
    d_max = float(_resolve(args.d_max, config, "d_max", None) or 0)
    if d_max <= 0:
        raise SchemaError("--d-max is required and must be positive")
    n_trees = int(_resolve(args.n_trees, config, "n_trees", 300))
    cv_folds = int(_resolve(args.cv_folds, config, "cv_folds", 5))

    curves = run_data.parse_curves(_read_bytes(args.curves))
    bank: dict[str, dict[str, run_data.LearningCurve]] = {}
    for (regime, lang), curve in curves.items():
        if not regime.startswith("ft:"):
            continue
        bank.setdefault(regime[3:], {})[lang] = curve
    if not bank:
        raise SchemaError(
            "no finetuning curves found (regime_id must look like 'ft:<source-language>')"
        )
    measured = transfer.parse_measured_scores(_read_bytes(args.measured))
    baselines = _parse_baselines(_read_bytes(args.baselines)) if args.baselines else None

    matrix, forest_model = transfer.transfer_matrix(
        measured, bank, d_max, baselines=baselines, n_trees=n_trees, seed=seed
    )
    (out / "transfer_matrix.csv").write_text(matrix.to_csv(), encoding="utf-8")
    reports.write_json_report(out / "transfer_provenance.json", matrix.provenance_json_dict())

    cv_metrics = None
    if len(measured) >= cv_folds:
        if baselines is None:
            baselines_used = transfer.derive_baselines(bank, sorted(bank))
        else:
            baselines_used = dict(baselines)
        features, labels = transfer.build_features(bank, baselines_used, d_max, measured)
        pairs = sorted(labels)
        X = np.array([features[p].as_array() for p in pairs])
        y = np.array([labels[p] for p in pairs])
        r2, rho = cross_validate(X, y, k=cv_folds, seed=seed, n_trees=n_trees)
        cv_metrics = {"k": cv_folds, "r2": r2, "spearman": rho}

    group_summary = None
    if args.groups:
        groups = _parse_groups(_read_bytes(args.groups))
        sums: dict[str, list[float]] = {}
        for s, t, score, prov in matrix.to_long_rows():
            if prov == "n/a" or s not in groups or t not in groups:
                continue
            key = "same-group" if groups[s] == groups[t] else "cross-group"
            sums.setdefault(key, []).append(score)
        group_summary = {
            key: {"mean": float(np.mean(vals)), "count": len(vals)}
            for key, vals in sorted(sums.items())
        }

    effective = {
        "d_max": d_max,
        "n_trees": n_trees,
        "cv_folds": cv_folds,
        "seed": seed,
        "n_measured": len(measured),
        "languages": list(matrix.languages),
    }
    payload = {"effective_config": effective, "cv": cv_metrics}
    if group_summary is not None:
        payload["group_means"] = group_summary
    reports.write_json_report(out / "transfer.json", payload)

    if args.emit_plot_data:
        _write_csv(
            out / "plot_transfer_heatmap.csv",
            ["source", "target", "score", "provenance"],
            [
                (s, t, "" if np.isnan(v) else repr(float(v)), prov)
                for s, t, v, prov in matrix.to_long_rows()
            ],
        )
        from . import plots

        plots.plot_transfer_heatmap(out / "fig_transfer_heatmap.png", matrix)


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

def cmd_plan(args) -> None:
    config = _load_config_file(args.config)
    out = _out_dir(args)
    r = float(_resolve(args.r, config, "r", None) or 0)
    if r <= 0:
        raise SchemaError("--r is required and must be positive")

    params = None
    if args.capacity_json:
        params = cap.CapacityParams.from_json(Path(args.capacity_json).read_text(encoding="utf-8"))
        phi, psi, alpha, beta = params.phi, params.psi, params.alpha, params.beta
    elif args.phi is not None and args.psi is not None and args.alpha is not None and args.beta is not None:
        phi, psi, alpha, beta = args.phi, args.psi, args.alpha, args.beta
    elif args.phi_alpha is not None and args.psi_beta is not None:
        phi = psi = alpha = beta = None
    else:
        raise SchemaError(
            "provide --capacity-json, or --phi/--psi/--alpha/--beta, "
            "or --phi-alpha/--psi-beta"
        )

    if phi is None:
        multipliers = cap.multipliers_from_ratios(args.phi_alpha, args.psi_beta, r)
        effective = {"r": r, "phi_alpha": args.phi_alpha, "psi_beta": args.psi_beta}
        reports.write_json_report(out / "plan.json", {
            "effective_config": effective,
            "multipliers": multipliers.to_json_dict(),
        })
        return

    law = params if params is not None else cap.CapacityParams(
        l_inf=0.0, log_a=0.0, log_b=0.0, alpha=alpha, beta=beta, phi=phi, psi=psi
    )
    if args.baseline_k is not None:
        if params is None:
            raise SchemaError("an explicit baseline requires --capacity-json")
        if args.baseline_n is None or args.baseline_dt is None:
            raise SchemaError("--baseline-k needs --baseline-n and --baseline-dt as well")
        baseline = (args.baseline_k, args.baseline_n, args.baseline_dt)
        baseline_doc = {"kind": "explicit", "k": args.baseline_k, "n": args.baseline_n,
                        "d_t": args.baseline_dt}
    else:
        baseline = "compute-optimal"
        baseline_doc = {"kind": "compute-optimal"}
    sweep_points = int(_resolve(args.sweep_points, config, "sweep_points", 64))
    result = cap.plan(law, cap.PlanQuery(r=r, baseline=baseline, sweep_points=sweep_points))
    _write_csv(
        out / "frontier.csv",
        ["s", "t", "d_tot_ratio", "c_ratio"],
        [
            (repr(p.s), repr(p.t), repr(p.d_tot_ratio), repr(p.c_ratio))
            for p in result.frontier
        ],
    )
    residual = cap.isoloss_constraint_residual(
        r, result.w_n, result.w_d, law.alpha, law.beta, law.phi, law.psi,
        result.multipliers.n_ratio, result.multipliers.d_t_ratio,
    )
    payload = {
        "effective_config": {
            "r": r, "phi": law.phi, "psi": law.psi, "alpha": law.alpha,
            "beta": law.beta, "baseline": baseline_doc,
        },
        "multipliers": result.multipliers.to_json_dict(),
        "weights": {"w_n": result.w_n, "w_d": result.w_d},
        "isoloss_residual_at_optimum": residual,
    }
    if args.emit_plot_data:
        from . import plots

        plots.plot_frontier(out / "fig_isoloss_frontier.png", result.frontier, r)
    reports.write_json_report(out / "plan.json", payload)


# ---------------------------------------------------------------------------
# crossover
# ---------------------------------------------------------------------------

def _parse_pairs(source: bytes) -> list[dict]:
    reader = csv.DictReader(io.StringIO(source.decode("utf-8")))
    needed = {"language", "n_params", "pretrain_regime", "finetune_regime"}
    if reader.fieldnames is None or not needed <= set(reader.fieldnames):
        raise SchemaError(
            "pairs csv must have columns: language, n_params, pretrain_regime, finetune_regime"
        )
    rows = []
    for i, row in enumerate(reader, start=1):
        try:
            rows.append({
                "language": row["language"],
                "n_params": int(float(row["n_params"])),
                "pretrain_regime": row["pretrain_regime"],
                "finetune_regime": row["finetune_regime"],
            })
        except (TypeError, ValueError):
            raise SchemaError(f"row {i}: 'n_params' is not numeric") from None
    return rows


def cmd_crossover(args) -> None:
    _ = _load_config_file(args.config)
    out = _out_dir(args)
    curves = run_data.parse_curves(_read_bytes(args.curves))
    pair_rows = _parse_pairs(_read_bytes(args.pairs))

    report_rows = []
    fit_points = []
    plotted: dict[str, tuple[run_data.LearningCurve, run_data.LearningCurve]] = {}
    crossings: dict[str, float | None] = {}
    for row in pair_rows:
        lang = row["language"]
        try:
            pre = curves[(row["pretrain_regime"], lang)]
            fine = curves[(row["finetune_regime"], lang)]
        except KeyError as exc:
            raise SchemaError(
                f"curves file has no curve for regime {exc.args[0]!r}"
            ) from None
        crossing = xover.crossover_tokens(pre, fine)
        plotted[lang] = (pre, fine)
        crossings[lang] = crossing
        if crossing is None:
            report_rows.append((lang, "", row["n_params"], ""))
        else:
            c_val = 6.0 * row["n_params"] * crossing
            report_rows.append((lang, repr(float(crossing)), row["n_params"], repr(c_val)))
            fit_points.append((float(row["n_params"]), c_val))

    _write_csv(
        out / "crossover.csv",
        ["language", "crossover_tokens", "n_params", "c_crossover"],
        report_rows,
    )
    fit_dict = None
    decision = None
    distinct_n = {p[0] for p in fit_points}
    if len(fit_points) >= 2 and len(distinct_n) >= 2:
        law = xover.fit_crossover_law(fit_points)
        fit_dict = law.to_json_dict()
        if args.budget_c is not None and args.decide_n is not None:
            decision = {
                "budget_c": args.budget_c,
                "n_params": args.decide_n,
                "choice": xover.decide(law, args.decide_n, args.budget_c),
            }
    payload = {
        "effective_config": {"n_pairs": len(pair_rows)},
        "fit": fit_dict,
        "decision": decision,
        "n_crossovers_found": sum(1 for r in report_rows if r[1] != ""),
    }
    reports.write_json_report(out / "crossover.json", payload)

    if args.emit_plot_data:
        rows = []
        for lang, (pre, fine) in sorted(plotted.items()):
            for tokens, loss in pre.points:
                rows.append((lang, "pretrain", tokens, repr(loss)))
            for tokens, loss in fine.points:
                rows.append((lang, "finetune", tokens, repr(loss)))
        _write_csv(
            out / "plot_crossover_curves.csv",
            ["language", "regime", "tokens", "loss"],
            rows,
        )
        from . import plots

        plots.plot_crossover_curves(out / "fig_crossover_curves.png", plotted, crossings)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> None:
    config = _load_config_file(args.config)
    out = _out_dir(args)
    design = synth.SynthDesign.from_json(Path(args.design).read_text(encoding="utf-8"))
    seed_override = _resolve(args.seed, config, "seed", None)
    if seed_override is not None:
        design = dataclasses.replace(design, seed=int(seed_override))
    catalog = run_data.parse_catalog(_read_bytes(args.catalog))
    runs = synth.generate_runs(design, catalog)
    fmt = args.format
    suffix = "jsonl" if fmt == "jsonl" else "csv"
    (out / f"runs.{suffix}").write_bytes(run_data.serialize_runs(runs, format=fmt))
    reports.write_json_report(out / "synth.json", {
        "effective_config": {
            "seed": design.seed,
            "noise_sigma": design.noise_sigma,
            "variant": design.spec.variant,
            "target": design.spec.target_language,
        },
        "n_records": len(runs),
        "n_mixtures": len(design.mixtures),
        "n_sizes": len(design.n_values),
        "n_checkpoints": len(design.token_checkpoints),
    })


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atlas-kit",
        description="Multilingual scaling-law toolkit: fit, evaluate, plan, and analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", required=True, help="output directory for reports")
        p.add_argument("--seed", type=int, default=None, help="seed for all randomness")
        p.add_argument("--config", default=None, help="JSON file with option defaults")
        p.add_argument("--emit-plot-data", action="store_true",
                       help="also write figure-shaped CSVs and render PNG figures")

    p_fit = sub.add_parser("fit", help="fit a scaling law to run data")
    common(p_fit)
    p_fit.add_argument("--runs", required=True)
    p_fit.add_argument("--catalog", default=None)
    p_fit.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p_fit.add_argument("--law", choices=laws.VARIANTS + ("capacity",), default=None)
    p_fit.add_argument("--target", default=None)
    p_fit.add_argument("--transfer-set", default=None, help="comma-separated languages")
    p_fit.add_argument("--transfer-k", type=int, default=None)
    p_fit.add_argument("--fit-profile", choices=("default", "fast"), default=None)
    p_fit.add_argument("--random-starts", type=int, default=None)
    p_fit.add_argument("--transfer-scores", default=None,
                       help="CSV of source,target,score to initialize transfer weights")
    p_fit.add_argument("--emit-residuals", action="store_true")
    p_fit.set_defaults(handler=cmd_fit)

    p_eval = sub.add_parser("eval", help="five-axis holdout evaluation")
    common(p_eval)
    p_eval.add_argument("--runs", required=True)
    p_eval.add_argument("--catalog", required=True)
    p_eval.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p_eval.add_argument("--law", choices=laws.VARIANTS, default=None)
    p_eval.add_argument("--target", default=None)
    p_eval.add_argument("--targets", default=None, help="comma-separated eval languages")
    p_eval.add_argument("--transfer-set", default=None)
    p_eval.add_argument("--transfer-k", type=int, default=None)
    p_eval.add_argument("--axes", default=None, help="comma-separated from random,n,d,c,m")
    p_eval.add_argument("--fraction", type=float, default=None)
    p_eval.add_argument("--held-scales", default=None, help="comma-separated n_params values")
    p_eval.add_argument("--held-mixtures", default=None, help="comma-separated mixture ids")
    p_eval.add_argument("--transfer-scores", default=None,
                        help="CSV of source,target,score to initialize transfer weights")
    p_eval.add_argument("--pooled", action="store_true", help="also report pooled-residual R2")
    p_eval.add_argument("--fit-profile", choices=("default", "fast"), default=None)
    p_eval.add_argument("--random-starts", type=int, default=None)
    p_eval.set_defaults(handler=cmd_eval)

    p_tr = sub.add_parser("transfer", help="transfer-score matrix from curves")
    common(p_tr)
    p_tr.add_argument("--curves", required=True,
                      help="curves CSV with regime ids like 'ft:<source-language>'")
    p_tr.add_argument("--measured", required=True, help="CSV of source,target,score")
    p_tr.add_argument("--d-max", type=float, default=None, help="integration window")
    p_tr.add_argument("--baselines", default=None, help="CSV of language,loss")
    p_tr.add_argument("--n-trees", type=int, default=None)
    p_tr.add_argument("--cv-folds", type=int, default=None)
    p_tr.add_argument("--groups", default=None,
                      help="CSV of language,group for the matrix summary")
    p_tr.set_defaults(handler=cmd_transfer)

    p_plan = sub.add_parser("plan", help="iso-loss / compute-optimal planning")
    common(p_plan)
    p_plan.add_argument("--r", type=float, default=None, help="language-count growth factor")
    p_plan.add_argument("--capacity-json", default=None)
    p_plan.add_argument("--phi", type=float, default=None)
    p_plan.add_argument("--psi", type=float, default=None)
    p_plan.add_argument("--alpha", type=float, default=None)
    p_plan.add_argument("--beta", type=float, default=None)
    p_plan.add_argument("--phi-alpha", type=float, default=None, help="phi/alpha ratio")
    p_plan.add_argument("--psi-beta", type=float, default=None, help="psi/beta ratio")
    p_plan.add_argument("--baseline-k", type=float, default=None)
    p_plan.add_argument("--baseline-n", type=float, default=None)
    p_plan.add_argument("--baseline-dt", type=float, default=None)
    p_plan.add_argument("--sweep-points", type=int, default=None)
    p_plan.set_defaults(handler=cmd_plan)

    p_x = sub.add_parser("crossover", help="pretrain-vs-finetune crossover analysis")
    common(p_x)
    p_x.add_argument("--curves", required=True)
    p_x.add_argument("--pairs", required=True,
                     help="CSV of language,n_params,pretrain_regime,finetune_regime")
    p_x.add_argument("--budget-c", type=float, default=None)
    p_x.add_argument("--decide-n", type=float, default=None)
    p_x.set_defaults(handler=cmd_crossover)

    p_s = sub.add_parser("synth", help="generate synthetic run data from a known law")
    common(p_s)
    p_s.add_argument("--design", required=True, help="SynthDesign JSON document")
    p_s.add_argument("--catalog", required=True)
    p_s.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p_s.set_defaults(handler=cmd_synth)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    out = Path(args.out)
    try:
        args.handler(args)
    except (AtlasKitError, OSError, json.JSONDecodeError) as exc:
        print(f"atlas-kit {args.command}: error: {exc}", file=sys.stderr)
        reports.write_failure_marker(out, f"{type(exc).__name__}: {exc}")
        return 1
    if out.is_dir():
        reports.write_run_info(out, list(argv) if argv is not None else sys.argv[1:],
                               started, time.time())
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
