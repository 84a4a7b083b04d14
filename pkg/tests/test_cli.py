"""CLI pipelines: happy paths, exit codes, failure markers, determinism."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from atlas_kit import LearningCurve, serialize_catalog, serialize_curves
from atlas_kit.cli import main
from atlas_kit.run_data import CorpusCatalog

from conftest import CATALOG_ENTRIES, TRUTH_FULL

DESIGN = {
    "variant": "atlas_full",
    "target_language": "fr",
    "transfer_set": ["en", "es", "de"],
    "law": TRUTH_FULL.to_json_dict(),
    "n_values": [10**7, 5 * 10**7, 2 * 10**8, 8 * 10**8, 2 * 10**9],
    "token_checkpoints": [5 * 10**8, 2 * 10**9, 8 * 10**9, 3 * 10**10],
    "mixtures": [
        {"mixture_id": "mono_fr", "weights": {"fr": 1.0}},
        {"mixture_id": "bi_fr_en", "weights": {"fr": 0.5, "en": 0.5}},
        {"mixture_id": "bi_fr_es", "weights": {"fr": 0.5, "es": 0.5}},
        {"mixture_id": "bi_fr_de", "weights": {"fr": 0.5, "de": 0.5}},
        {"mixture_id": "quad", "weights": {"fr": 0.3, "en": 0.3, "es": 0.2, "de": 0.2}},
        {"mixture_id": "unimax", "weights": {"fr": 0.2, "en": 0.3, "es": 0.2, "de": 0.2, "zh": 0.1}},
    ],
    "noise_sigma": 0.005,
    "seed": 12,
}


@pytest.fixture()
def workspace(tmp_path):
    catalog_path = tmp_path / "catalog.csv"
    catalog_path.write_bytes(serialize_catalog(CorpusCatalog(dict(CATALOG_ENTRIES))))
    design_path = tmp_path / "design.json"
    design_path.write_text(json.dumps(DESIGN))
    out = tmp_path / "synth"
    code = main(["synth", "--design", str(design_path), "--catalog", str(catalog_path),
                 "--out", str(out)])
    assert code == 0
    return {
        "tmp": tmp_path,
        "catalog": str(catalog_path),
        "design": str(design_path),
        "runs": str(out / "runs.jsonl"),
    }


def read_reports(out_dir: Path) -> dict[str, bytes]:
    out = {}
    for path in sorted(out_dir.iterdir()):
        if path.name == "run_info.json" or path.suffix == ".png":
            continue
        if path.suffix in (".json", ".csv", ".txt", ".jsonl"):
            out[path.name] = path.read_bytes()
    return out


class TestSynth:
    def test_report_and_runs_written(self, workspace):
        report = json.loads(Path(workspace["runs"]).parent.joinpath("synth.json").read_text())
        assert report["schema_version"] == 1
        assert report["n_records"] == 5 * 4 * 6
        assert Path(workspace["runs"]).exists()


class TestFit:
    def test_happy_path(self, workspace):
        out = Path(workspace["tmp"]) / "fit"
        code = main([
            "fit", "--runs", workspace["runs"], "--catalog", workspace["catalog"],
            "--law", "atlas_full", "--target", "fr", "--fit-profile", "fast",
            "--random-starts", "2", "--seed", "3", "--out", str(out),
            "--emit-residuals", "--emit-plot-data",
        ])
        assert code == 0
        report = json.loads((out / "fit.json").read_text())
        params = report["result"]["params"]
        assert params["variant"] == "atlas_full"
        assert abs(params["alpha"] - 0.37) < 0.05
        chosen = report["effective_config"]["transfer_set"]
        assert chosen[0] == "en" and sorted(chosen) == ["de", "en", "es"]
        assert (out / "residuals.csv").exists()
        assert (out / "plot_fit_trajectories.csv").exists()
        assert (out / "fig_fit_trajectories.png").stat().st_size > 0

    def test_transfer_set_selected_when_not_given(self, workspace):
        out = Path(workspace["tmp"]) / "fit_auto"
        code = main([
            "fit", "--runs", workspace["runs"], "--catalog", workspace["catalog"],
            "--law", "atlas_full", "--target", "fr", "--transfer-k", "2",
            "--fit-profile", "fast", "--random-starts", "2", "--out", str(out),
        ])
        assert code == 0
        report = json.loads((out / "fit.json").read_text())
        assert len(report["effective_config"]["transfer_set"]) == 2

    def test_capacity_law_fit(self, workspace, tmp_path):
        # build uniform-mixture data for the capacity path
        from atlas_kit import serialize_runs
        from atlas_kit.synth import SynthDesign, generate_runs

        cap_design = {
            "variant": "bsl",
            "target_language": "fr",
            "law": {"l_inf": 0.6, "log_a": 7.0, "log_b": 6.5, "alpha": 0.35,
                    "beta": 0.3, "phi": 0.12, "psi": -0.05},
            "n_values": [10**7, 5 * 10**7, 2 * 10**8, 8 * 10**8, 2 * 10**9],
            "token_checkpoints": [10**9, 10**10, 5 * 10**10],
            "mixtures": [
                {"mixture_id": "k1", "weights": {"fr": 1.0}},
                {"mixture_id": "k2", "weights": {"fr": 0.5, "en": 0.5}},
                {"mixture_id": "k4", "weights": {"fr": 0.25, "en": 0.25, "es": 0.25, "de": 0.25}},
            ],
            "noise_sigma": 0.0,
            "seed": 0,
        }
        design = SynthDesign.from_json(json.dumps(cap_design))
        runs = generate_runs(design, CorpusCatalog(dict(CATALOG_ENTRIES)))
        runs_path = tmp_path / "cap_runs.jsonl"
        runs_path.write_bytes(serialize_runs(runs))
        out = tmp_path / "cap_fit"
        code = main(["fit", "--runs", str(runs_path), "--law", "capacity",
                     "--target", "fr", "--out", str(out), "--random-starts", "2"])
        assert code == 0
        params = json.loads((out / "fit.json").read_text())["result"]["params"]
        assert abs(params["phi"] - 0.12) < 0.05
        assert abs(params["psi"] + 0.05) < 0.05

    def test_data_error_exits_1_with_marker(self, workspace):
        out = Path(workspace["tmp"]) / "fit_bad"
        code = main([
            "fit", "--runs", workspace["runs"], "--catalog", workspace["catalog"],
            "--law", "atlas_full", "--target", "xx", "--out", str(out),
        ])
        assert code == 1
        assert (out / "FAILED").exists()

    def test_usage_error_exits_2(self, workspace):
        with pytest.raises(SystemExit) as err:
            main(["fit", "--runs", workspace["runs"]])  # missing --out
        assert err.value.code == 2


class TestEval:
    def test_all_axes_on_oracle_data(self, workspace, tmp_path):
        # noiseless variant of the same design: every axis must be ~perfect
        design = dict(DESIGN, noise_sigma=0.0)
        design_path = tmp_path / "design0.json"
        design_path.write_text(json.dumps(design))
        synth_out = tmp_path / "synth0"
        assert main(["synth", "--design", str(design_path), "--catalog",
                     workspace["catalog"], "--out", str(synth_out)]) == 0
        out = tmp_path / "eval0"
        code = main([
            "eval", "--runs", str(synth_out / "runs.jsonl"), "--catalog", workspace["catalog"],
            "--law", "atlas_full", "--target", "fr", "--transfer-set", "en,es,de",
            "--axes", "random,n,d,c,m", "--fit-profile", "fast", "--random-starts", "2",
            "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        report = json.loads((out / "eval.json").read_text())
        assert set(report["axis_r2"]) == {"random", "n", "d", "c", "m"}
        for axis, value in report["axis_r2"].items():
            assert abs(value - 1.0) <= 1e-9, (axis, value)
        table = (out / "eval_table.txt").read_text()
        assert "R2(M)" in table


class TestPlan:
    def test_ratio_anchor(self, tmp_path):
        out = tmp_path / "plan"
        code = main(["plan", "--r", "4", "--phi-alpha", "0.2427",
                     "--psi-beta", "-0.2727", "--out", str(out)])
        assert code == 0
        m = json.loads((out / "plan.json").read_text())["multipliers"]
        assert abs(m["n_ratio"] - 1.40) <= 0.01
        assert abs(m["d_tot_ratio"] - 2.74) <= 0.01
        assert abs(m["c_ratio"] - 4**0.97) <= 0.02
        assert not (out / "frontier.csv").exists()  # ratios alone give no frontier

    def test_full_exponents_emit_frontier(self, tmp_path):
        out = tmp_path / "plan_full"
        code = main(["plan", "--r", "4", "--phi", "0.11", "--psi", "-0.04",
                     "--alpha", "0.3", "--beta", "0.4", "--out", str(out),
                     "--emit-plot-data"])
        assert code == 0
        frontier = (out / "frontier.csv").read_text().splitlines()
        assert frontier[0] == "s,t,d_tot_ratio,c_ratio"
        assert len(frontier) == 65
        report = json.loads((out / "plan.json").read_text())
        assert abs(report["isoloss_residual_at_optimum"]) <= 1e-9
        assert (out / "fig_isoloss_frontier.png").stat().st_size > 0

    def test_missing_exponents_is_usage_data_error(self, tmp_path):
        out = tmp_path / "plan_bad"
        assert main(["plan", "--r", "4", "--out", str(out)]) == 1


def crossing_curves(cross_at, n_params, lo=10**9, hi=10**13):
    knots = np.unique(np.geomspace(lo, hi, 17).astype(np.int64))
    base = [3.0 + (math.log(hi) - math.log(t)) / 5 for t in knots]
    gap = [0.3 * (math.log(cross_at) - math.log(t)) / math.log(10) for t in knots]
    pre = LearningCurve(tuple((int(t), b + g) for t, b, g in zip(knots, base, gap)),
                        f"pre{n_params}", "fr")
    fine = LearningCurve(tuple((int(t), b) for t, b in zip(knots, base)),
                         f"fine{n_params}", "fr")
    return pre, fine


class TestCrossover:
    def test_pipeline(self, tmp_path):
        curves = []
        pair_rows = ["language,n_params,pretrain_regime,finetune_regime"]
        for n_params, cross in ((10**9, 10**11), (2 * 10**9, 3 * 10**11)):
            pre, fine = crossing_curves(cross, n_params)
            import dataclasses

            pre = dataclasses.replace(pre, eval_language=f"l{n_params}")
            fine = dataclasses.replace(fine, eval_language=f"l{n_params}")
            curves += [pre, fine]
            pair_rows.append(f"l{n_params},{n_params},{pre.regime_id},{fine.regime_id}")
        curves_path = tmp_path / "curves.csv"
        curves_path.write_bytes(serialize_curves(curves))
        pairs_path = tmp_path / "pairs.csv"
        pairs_path.write_text("\n".join(pair_rows) + "\n")
        out = tmp_path / "xover"
        code = main(["crossover", "--curves", str(curves_path), "--pairs", str(pairs_path),
                     "--budget-c", "1e20", "--decide-n", "1e9",
                     "--out", str(out), "--emit-plot-data"])
        assert code == 0
        lines = (out / "crossover.csv").read_text().splitlines()
        assert lines[0] == "language,crossover_tokens,n_params,c_crossover"
        assert len(lines) == 3
        report = json.loads((out / "crossover.json").read_text())
        assert report["n_crossovers_found"] == 2
        assert report["fit"] is not None
        assert report["decision"]["choice"] in ("pretrain", "finetune")
        assert (out / "fig_crossover_curves.png").stat().st_size > 0


def transfer_inputs(tmp_path):
    def line(source, lang, start, end):
        return LearningCurve(((0, start), (50, (start + end) / 2), (100, end)),
                             f"ft:{source}", lang)

    langs = ["A", "B", "C", "D"]
    rng = np.random.default_rng(0)
    curves = []
    for s in langs:
        for t in langs:
            start = 3.0 + 0.1 * langs.index(t)
            drop = 0.8 if s == t else rng.uniform(-0.3, 0.3)
            curves.append(line(s, t, start, start - drop))
    curves_path = tmp_path / "ft_curves.csv"
    curves_path.write_bytes(serialize_curves(curves))
    measured_rows = ["source,target,score"]
    for s, t, score in (("A", "B", 0.4), ("B", "A", 0.2), ("A", "C", -0.1),
                        ("C", "A", -0.3), ("B", "C", 0.1), ("C", "B", 0.05)):
        measured_rows.append(f"{s},{t},{score}")
    measured_path = tmp_path / "measured.csv"
    measured_path.write_text("\n".join(measured_rows) + "\n")
    return curves_path, measured_path


class TestTransfer:
    def test_pipeline(self, tmp_path):
        curves_path, measured_path = transfer_inputs(tmp_path)
        out = tmp_path / "transfer"
        code = main(["transfer", "--curves", str(curves_path), "--measured", str(measured_path),
                     "--d-max", "100", "--n-trees", "30", "--cv-folds", "3",
                     "--seed", "5", "--out", str(out), "--emit-plot-data"])
        assert code == 0
        matrix_lines = (out / "transfer_matrix.csv").read_text().splitlines()
        assert matrix_lines[0] == "source,A,B,C,D"
        provenance = json.loads((out / "transfer_provenance.json").read_text())
        flat = [p for row in provenance["provenance"] for p in row]
        assert flat.count("measured") == 6
        assert flat.count("estimated") == 6
        assert flat.count("n/a") == 4
        report = json.loads((out / "transfer.json").read_text())
        assert report["cv"]["k"] == 3
        assert (out / "fig_transfer_heatmap.png").stat().st_size > 0

    def test_groups_summary(self, tmp_path):
        curves_path, measured_path = transfer_inputs(tmp_path)
        groups_path = tmp_path / "groups.csv"
        groups_path.write_text("language,group\nA,latin\nB,latin\nC,cjk\nD,cjk\n")
        out = tmp_path / "transfer_groups"
        code = main(["transfer", "--curves", str(curves_path), "--measured", str(measured_path),
                     "--d-max", "100", "--n-trees", "20", "--groups", str(groups_path),
                     "--out", str(out)])
        assert code == 0
        report = json.loads((out / "transfer.json").read_text())
        assert set(report["group_means"]) == {"same-group", "cross-group"}


class TestDeterminism:
    def run_twice(self, argv_builder, tmp_path):
        outs = []
        for tag in ("one", "two"):
            out = tmp_path / tag
            assert main(argv_builder(str(out))) == 0
            outs.append(read_reports(out))
        assert outs[0].keys() == outs[1].keys()
        for name in outs[0]:
            assert outs[0][name] == outs[1][name], f"{name} differs between reruns"

    def test_plan_deterministic(self, tmp_path):
        self.run_twice(
            lambda out: ["plan", "--r", "4", "--phi", "0.11", "--psi", "-0.04",
                         "--alpha", "0.3", "--beta", "0.4", "--out", out],
            tmp_path,
        )

    def test_fit_deterministic(self, workspace):
        self.run_twice(
            lambda out: ["fit", "--runs", workspace["runs"], "--catalog",
                         workspace["catalog"], "--law", "atlas_full", "--target", "fr",
                         "--fit-profile", "fast", "--random-starts", "2", "--seed", "3",
                         "--out", out, "--emit-residuals"],
            workspace["tmp"],
        )

    def test_transfer_deterministic(self, tmp_path):
        curves_path, measured_path = transfer_inputs(tmp_path)
        self.run_twice(
            lambda out: ["transfer", "--curves", str(curves_path), "--measured",
                         str(measured_path), "--d-max", "100", "--n-trees", "20",
                         "--seed", "5", "--out", out],
            tmp_path,
        )


class TestConfigPrecedence:
    def test_flags_beat_config_file_beat_defaults(self, workspace, tmp_path):
        config_path = tmp_path / "conf.json"
        config_path.write_text(json.dumps({
            "law": "atlas_target",
            "target": "fr",
            "fit_profile": "fast",
            "random_starts": 2,
            "seed": 11,
        }))
        out = tmp_path / "fit_conf"
        # law/target/profile come from the config file, seed from the flag
        code = main(["fit", "--runs", workspace["runs"], "--catalog", workspace["catalog"],
                     "--config", str(config_path), "--seed", "99", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "fit.json").read_text())
        assert report["effective_config"]["law"] == "atlas_target"
        assert report["effective_config"]["fit_profile"] == "fast"
        assert report["effective_config"]["seed"] == 99  # flag wins over config
