import json

import pytest

from curriculum_lab.cli import main
from curriculum_lab.config import resolve_config, validate_tree
from curriculum_lab.errors import ConfigError


def tiny_tree(condition="vanilla", **overrides):
    tree = {
        "dataset": {
            "synthetic": {"classes": 3, "dim": 4, "n_per_class": 30,
                          "spread": 2.0, "seed": 11},
            "train_fraction": 0.8,
            "split_seed": 2,
        },
        "condition": condition,
        "scoring": {"kind": "oracle"},
        "pacing": {"variant": "fixed_exp", "starting_percent": 0.25,
                   "increase": 2.0, "step_length": 15},
        "lr": {"variant": "exponential", "lr0": 0.2, "decrease_factor": 1.5,
               "lr_step_length": 30},
        "model": {"architecture": "linear_softmax"},
        "batch_size": 10,
        "iterations": 60,
        "record_every": 20,
        "repetitions": 2,
        "seed": 0,
    }
    tree.update(overrides)
    return tree


def write_config(tmp_path, tree, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(tree))
    return path


class TestConfigValidation:
    def test_unknown_keys_listed(self):
        with pytest.raises(ConfigError) as err:
            validate_tree({"foo": 1, "pacing": {"bogus": 2, "variant": "vanilla"}})
        message = str(err.value)
        assert "foo" in message and "pacing.bogus" in message

    def test_value_vs_section_mismatch(self):
        with pytest.raises(ConfigError):
            validate_tree({"pacing": 3})

    def test_seed_override_rewrites_seeds(self):
        cfg = resolve_config(tiny_tree(seeds=[5, 6]), seed_override=9)
        assert cfg.seeds == (9, 10)

    def test_explicit_seeds_win(self):
        cfg = resolve_config(tiny_tree(seeds=[4, 8, 15], repetitions=3))
        assert cfg.seeds == (4, 8, 15)

    def test_mismatched_repetitions_rejected(self):
        with pytest.raises(ConfigError):
            resolve_config(tiny_tree(seeds=[1, 2], repetitions=3))

    def test_bad_condition_rejected(self):
        with pytest.raises(ConfigError):
            resolve_config(tiny_tree("mystery"))

    def test_varied_exp_boundaries_derived(self):
        tree = tiny_tree("curriculum")
        tree["pacing"] = {"variant": "varied_exp", "starting_percent": 0.25,
                          "increase": 2.0, "boundaries": [10, 25]}
        cfg = resolve_config(tree)
        assert cfg.boundaries == (10, 25)  # num_steps(0.25, 2) == 2

    def test_resolved_tree_is_json_clean(self):
        cfg = resolve_config(tiny_tree())
        json.dumps(cfg.tree)

    def test_missing_referenced_files_rejected(self):
        tree = tiny_tree()
        tree["dataset"] = {"train_csv": "/nonexistent/train.csv",
                           "test_csv": "/nonexistent/test.csv"}
        with pytest.raises(ConfigError, match="do not exist"):
            resolve_config(tree)

    def test_missing_score_file_rejected(self):
        tree = tiny_tree("curriculum", scoring={"kind": "file",
                                                "path": "/nonexistent/scores.csv"})
        with pytest.raises(ConfigError, match="scoring.path"):
            resolve_config(tree)


class TestCliGenData:
    def test_identical_bytes_across_runs(self, tmp_path):
        config = write_config(tmp_path, tiny_tree())
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["gen-data", "--config", str(config), "--out", str(out1)]) == 0
        assert main(["gen-data", "--config", str(config), "--out", str(out2)]) == 0
        for name in ("train.csv", "test.csv", "bayes.json", "manifest.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_manifest_lists_outputs(self, tmp_path):
        config = write_config(tmp_path, tiny_tree())
        out = tmp_path / "o"
        main(["gen-data", "--config", str(config), "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert "train.csv" in manifest["outputs"]
        assert manifest["config"]["dataset"]["synthetic"]["seed"] == 11


class TestCliErrors:
    def test_unknown_config_key_is_reported(self, tmp_path, capsys):
        config = write_config(tmp_path, {**tiny_tree(), "typo_key": 1})
        code = main(["train", "--config", str(config), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "typo_key" in capsys.readouterr().err

    def test_tiny_starting_percent_names_minimal_value(self, tmp_path, capsys):
        tree = tiny_tree("curriculum")
        tree["pacing"]["starting_percent"] = 0.05  # 72 * 0.05 -> 4 < batch 10
        config = write_config(tmp_path, tree)
        code = main(["train", "--config", str(config), "--out", str(tmp_path / "o")])
        assert code == 2
        err = capsys.readouterr().err
        assert "starting_percent must be at least" in err

    def test_invalid_json_reported(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        code = main(["train", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "not valid JSON" in capsys.readouterr().err


class TestCliTrainAndScore:
    def test_train_writes_curves_summary_manifest(self, tmp_path):
        config = write_config(tmp_path, tiny_tree("curriculum"))
        out = tmp_path / "o"
        assert main(["train", "--config", str(config), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert "summary.json" in manifest["outputs"]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["condition"] == "curriculum"
        assert (out / "curve_curriculum_seed0.csv").exists()

    def test_seed_override_changes_outputs(self, tmp_path):
        config = write_config(tmp_path, tiny_tree("curriculum"))
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        main(["train", "--config", str(config), "--out", str(out1), "--seed", "0"])
        main(["train", "--config", str(config), "--out", str(out2), "--seed", "123"])
        s1 = json.loads((out1 / "summary.json").read_text())
        s2 = json.loads((out2 / "summary.json").read_text())
        assert s1["seeds"] == [0, 1]
        assert s2["seeds"] == [123, 124]

    def test_rerun_from_manifest_config_is_identical(self, tmp_path):
        config = write_config(tmp_path, tiny_tree("curriculum"))
        out1 = tmp_path / "o1"
        main(["train", "--config", str(config), "--out", str(out1)])
        manifest = json.loads((out1 / "manifest.json").read_text())
        replay = write_config(tmp_path, manifest["config"], name="replay.json")
        out2 = tmp_path / "o2"
        main(["train", "--config", str(replay), "--out", str(out2)])
        for name in manifest["outputs"]:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_score_writes_table(self, tmp_path):
        config = write_config(tmp_path, tiny_tree("curriculum"))
        out = tmp_path / "o"
        assert main(["score", "--config", str(config), "--out", str(out)]) == 0
        from curriculum_lab.scoring import load_scores_csv
        table = load_scores_csv(out / "scores.csv")
        assert len(table) == 72  # train side of 90 at 0.8

    def test_grid_search_cli(self, tmp_path):
        tree = tiny_tree("curriculum", repetitions=1, iterations=40)
        tree["grid"] = {"pacing": {"starting_percent": [0.25, 0.5]},
                        "lr": {"lr0": [0.1, 0.3]}}
        config = write_config(tmp_path, tree)
        out = tmp_path / "o"
        assert main(["grid-search", "--config", str(config), "--out", str(out)]) == 0
        audit = json.loads((out / "grid_audit.json").read_text())
        assert audit["cell_counts"]["total"] == 4
        assert (out / "best_config.json").exists()

    def test_bootstrap_cli(self, tmp_path):
        tree = tiny_tree("curriculum", scoring={"kind": "self_taught"}, repetitions=1)
        config = write_config(tmp_path, tree)
        out = tmp_path / "o"
        assert main(["bootstrap", "--config", str(config), "--out", str(out),
                     "--generations", "2"]) == 0
        for g in range(3):
            assert (out / f"summary_gen{g}.json").exists()

    def test_analyze_gradients_cli(self, tmp_path):
        config = write_config(tmp_path, tiny_tree("curriculum"))
        out = tmp_path / "o"
        assert main(["analyze-gradients", "--config", str(config), "--out", str(out)]) == 0
        report = json.loads((out / "gradient_report.json").read_text())
        assert report["n_seeds"] == 2


class TestCliVerifyTheory:
    def test_exit_zero_and_clean_report(self, tmp_path):
        out = tmp_path / "o"
        code = main(["verify-theory", "--out", str(out), "--instances", "50",
                     "--seed", "1"])
        assert code == 0
        report = json.loads((out / "theory_report.json").read_text())
        assert report["passed"]
        assert report["argmax_preservation_violations"] == 0
        assert report["constant_variance_violations"] == 0
        assert (out / "manifest.json").exists()
