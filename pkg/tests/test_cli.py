"""End-to-end command tests: exit codes, artifacts, manifests, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from edgeward.autodiff import load_checkpoint
from edgeward.cli import main
from edgeward.graphs import load_graph
from edgeward.models import SemiGcnModel, init_semi_model, predict
from edgeward.autodiff import Tensor2


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def semi_from_checkpoint(path):
    doc = load_checkpoint(path)
    prop = "renormalized" if doc["model_meta"].ravel()[1] == 1.0 else "raw"
    return SemiGcnModel(w1=Tensor2(doc["w1"], name="w1"),
                        w2=Tensor2(doc["w2"], name="w2"), propagation=prop)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Ingested fixture graph plus a trained semi checkpoint and a flippable target."""
    root = tmp_path_factory.mktemp("pipeline")
    graph = root / "g.json"
    rc = main(["ingest", "--synth", "sbm:2x50:0.2:0.03:200:0.8",
               "-o", str(graph), "--out-dir", str(root / "ingest")])
    assert rc == 0
    rc = main(["train", str(graph), "--model", "semi", "--epochs", "200",
               "--seed", "0", "--out-dir", str(root / "train")])
    assert rc == 0

    g = load_graph(graph)
    model = semi_from_checkpoint(root / "train" / "checkpoint.json")
    clean = predict(model, g)
    labels = np.asarray(g.labels)
    from edgeward.graphs import build_adjacency
    deg = build_adjacency(g).sum(axis=1)
    ok = [int(v) for v in np.asarray(g.test_mask) if clean[v] == labels[v]]
    target = min(ok, key=lambda v: deg[v])
    return {"root": root, "graph": graph, "train": root / "train",
            "target": target, "desired": 1 - int(clean[target])}


@pytest.fixture(scope="module")
def desk_defense(tmp_path_factory):
    root = tmp_path_factory.mktemp("defense")
    graph = root / "desk.json"
    assert main(["ingest", "--synth", "sbm:2x5:0.9:0.05:3:0.1",
                 "-o", str(graph), "--out-dir", str(root / "ingest")]) == 0
    out = root / "defend"
    assert main(["defend", str(graph), "--epochs", "500", "--optimizer", "sgd",
                 "--lr-d", "0.5", "--lr-g", "0.1", "--seed", "0",
                 "--out-dir", str(out)]) == 0
    return {"root": root, "graph": graph, "out": out}


# ---------------------------------------------------------------------------
# ingest


class TestIngest:
    def test_synth_ring(self, tmp_path, capsys):
        rc = main(["ingest", "--synth", "ring:8", "--out-dir", str(tmp_path)])
        assert rc == 0
        g = load_graph(tmp_path / "graph.json")
        assert g.n_nodes == 8
        report = read_json(tmp_path / "ingest_report.json")
        assert report["n_nodes"] == 8 and report["n_edges"] == 8
        assert "8 nodes" in capsys.readouterr().out

    def test_manifest_shape(self, tmp_path):
        main(["ingest", "--synth", "ring:4", "--out-dir", str(tmp_path)])
        manifest = read_json(tmp_path / "manifest.json")
        assert set(manifest) == {"command", "config", "version", "timestamp"}
        assert manifest["command"] == "ingest"
        assert manifest["config"]["synth"] == "ring:4"

    def test_cora_pair(self, tmp_path):
        content = tmp_path / "toy.content"
        cites = tmp_path / "toy.cites"
        content.write_text("a 1 0 x\nb 0 1 y\nc 1 1 x\nd 0 0 y\n")
        cites.write_text("a b\nb c\nz q\n")
        rc = main(["ingest", "--cora", str(content), str(cites),
                   "--split", "2,1,1", "--out-dir", str(tmp_path)])
        assert rc == 0
        report = read_json(tmp_path / "ingest_report.json")
        assert report["n_nodes"] == 4
        assert report["skipped_cites"] == 1

    def test_malformed_content_exits_2(self, tmp_path, capsys):
        content = tmp_path / "bad.content"
        cites = tmp_path / "bad.cites"
        content.write_text("a 1 0 x\nonly_two_fields x\n")
        cites.write_text("")
        rc = main(["ingest", "--cora", str(content), str(cites),
                   "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "line 2" in capsys.readouterr().err

    def test_requires_exactly_one_source(self, tmp_path):
        assert main(["ingest", "--out-dir", str(tmp_path)]) == 2
        assert main(["ingest", "--synth", "ring:4", "--cora", "a", "b",
                     "--out-dir", str(tmp_path)]) == 2

    def test_env_var_supplies_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EDGEWARD_OUT_DIR", str(tmp_path / "from_env"))
        assert main(["ingest", "--synth", "ring:4"]) == 0
        assert (tmp_path / "from_env" / "graph.json").exists()


# ---------------------------------------------------------------------------
# train


class TestTrain:
    def test_unlabeled_graph_exits_2(self, tmp_path):
        main(["ingest", "--synth", "ring:6", "-o", str(tmp_path / "ring.json"),
              "--out-dir", str(tmp_path)])
        rc = main(["train", str(tmp_path / "ring.json"),
                   "--out-dir", str(tmp_path / "t")])
        assert rc == 2

    def test_zero_epochs_checkpoint_equals_init(self, pipeline, tmp_path):
        out = tmp_path / "zero"
        rc = main(["train", str(pipeline["graph"]), "--model", "semi",
                   "--epochs", "0", "--seed", "7", "--out-dir", str(out)])
        assert rc == 0
        doc = load_checkpoint(out / "checkpoint.json")
        g = load_graph(pipeline["graph"])
        fresh = init_semi_model(g.n_features, 16, g.n_classes, seed=7)
        assert np.array_equal(doc["w1"], fresh.w1.value)
        assert np.array_equal(doc["w2"], fresh.w2.value)

    def test_same_seed_identical_checkpoints(self, pipeline, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["train", str(pipeline["graph"]), "--model", "semi",
                         "--epochs", "5", "--seed", "3",
                         "--out-dir", str(out)]) == 0
        assert (a / "checkpoint.json").read_bytes() == (b / "checkpoint.json").read_bytes()
        assert (a / "trace.jsonl").read_bytes() == (b / "trace.jsonl").read_bytes()

    def test_trace_and_metrics(self, pipeline, capsys):
        out = pipeline["train"]
        lines = (out / "trace.jsonl").read_text().splitlines()
        assert len(lines) == 200
        assert {"epoch", "train_acc", "train_loss", "val_acc"} <= set(json.loads(lines[0]))
        metrics = read_json(out / "metrics.json")
        assert metrics["test_acc"] >= 0.9   # separable blocks

    def test_spectral_model_trains(self, desk_defense, tmp_path):
        out = tmp_path / "spec"
        rc = main(["train", str(desk_defense["graph"]), "--model", "spectral",
                   "--epochs", "30", "--out-dir", str(out)])
        assert rc == 0
        doc = load_checkpoint(out / "checkpoint.json")
        assert "filter_diag" in doc and "decoder" in doc

    def test_config_file_precedence(self, desk_defense, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"epochs": 3, "model": "semi"}')
        out1 = tmp_path / "c1"
        assert main(["train", str(desk_defense["graph"]), "--config", str(cfg),
                     "--out-dir", str(out1)]) == 0
        assert len((out1 / "trace.jsonl").read_text().splitlines()) == 3
        out2 = tmp_path / "c2"
        assert main(["train", str(desk_defense["graph"]), "--config", str(cfg),
                     "--epochs", "2", "--out-dir", str(out2)]) == 0
        assert len((out2 / "trace.jsonl").read_text().splitlines()) == 2
        manifest = read_json(out2 / "manifest.json")
        assert manifest["config"]["epochs"] == 2
        assert manifest["config"]["model"] == "semi"


# ---------------------------------------------------------------------------
# attack


class TestAttack:
    def test_single_target_success(self, pipeline, tmp_path, capsys):
        out = tmp_path / "atk"
        rc = main(["attack", str(pipeline["graph"]),
                   str(pipeline["train"] / "checkpoint.json"),
                   "--targets", str(pipeline["target"]),
                   "--desired", str(pipeline["desired"]),
                   "--reg-weight", "0", "--stop-when-successful",
                   "--freeze-check", "--out-dir", str(out)])
        assert rc == 0
        report = read_json(out / "attack_report.json")
        assert report["success"] == [True]
        assert (out / "victim_graph.json").exists()
        assert (out / "degree_report.json").exists()
        printed = capsys.readouterr().out
        assert "freeze check ok" in printed

    def test_desired_equals_current_exits_2(self, pipeline, tmp_path, capsys):
        rc = main(["attack", str(pipeline["graph"]),
                   str(pipeline["train"] / "checkpoint.json"),
                   "--targets", str(pipeline["target"]),
                   "--desired", str(1 - pipeline["desired"]),
                   "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "nothing to attack" in capsys.readouterr().err

    def test_theta_echoed_in_manifest(self, pipeline, tmp_path):
        g = load_graph(pipeline["graph"])
        labels = np.asarray(g.labels)
        pair = [pipeline["target"],
                next(int(v) for v in np.asarray(g.test_mask)
                     if int(v) != pipeline["target"])]
        desired = [1 - int(labels[v]) for v in pair]
        out = tmp_path / "multi"
        rc = main(["attack", str(pipeline["graph"]),
                   str(pipeline["train"] / "checkpoint.json"),
                   "--targets", ",".join(str(v) for v in pair),
                   "--desired", ",".join(str(c) for c in desired),
                   "--mode", "multi", "--theta", "2.5", "--epochs", "30",
                   "--out-dir", str(out)])
        assert rc == 0
        assert read_json(out / "manifest.json")["config"]["theta"] == 2.5

    def test_spectral_checkpoint_rejected(self, desk_defense, tmp_path):
        spec_out = tmp_path / "spec"
        main(["train", str(desk_defense["graph"]), "--model", "spectral",
              "--epochs", "5", "--out-dir", str(spec_out)])
        rc = main(["attack", str(desk_defense["graph"]),
                   str(spec_out / "checkpoint.json"),
                   "--targets", "0", "--desired", "1",
                   "--out-dir", str(tmp_path / "x")])
        assert rc == 2


# ---------------------------------------------------------------------------
# defend / infer


class TestDefend:
    def test_zero_epochs_rejected(self, desk_defense, tmp_path, capsys):
        rc = main(["defend", str(desk_defense["graph"]), "--epochs", "0",
                   "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "nothing to train" in capsys.readouterr().err

    def test_best_accuracy_reported(self, desk_defense, capsys):
        metrics = read_json(desk_defense["out"] / "metrics.json")
        assert metrics["best"]["acc_G"] >= 0.9
        rows = [json.loads(l) for l in
                (desk_defense["out"] / "trace.jsonl").read_text().splitlines()]
        assert all({"acc_D", "acc_G", "epoch"} <= set(r) for r in rows)

    def test_rerun_is_byte_identical(self, desk_defense, tmp_path):
        out = tmp_path / "again"
        assert main(["defend", str(desk_defense["graph"]), "--epochs", "500",
                     "--optimizer", "sgd", "--lr-d", "0.5", "--lr-g", "0.1",
                     "--seed", "0", "--out-dir", str(out)]) == 0
        for name in ("checkpoint.json", "trace.jsonl", "metrics.json"):
            assert (out / name).read_bytes() == \
                (desk_defense["out"] / name).read_bytes()


class TestInfer:
    def test_prints_accuracy_and_writes_labels(self, desk_defense, tmp_path, capsys):
        out = tmp_path / "inf"
        rc = main(["infer", str(desk_defense["out"] / "checkpoint.json"),
                   str(desk_defense["graph"]), "--out-dir", str(out)])
        assert rc == 0
        assert "accuracy vs stored labels" in capsys.readouterr().out
        doc = read_json(out / "labels.json")
        assert doc["indices"] == list(range(10))
        assert all(c in (0, 1) for c in doc["labels"])

    def test_same_seed_identical_output(self, desk_defense, tmp_path):
        outs = []
        for name in ("i1", "i2"):
            out = tmp_path / name
            assert main(["infer", str(desk_defense["out"] / "checkpoint.json"),
                         str(desk_defense["graph"]), "--seed", "5",
                         "--out-dir", str(out)]) == 0
            outs.append((out / "labels.json").read_bytes())
        assert outs[0] == outs[1]

    def test_features_only_file_suffices(self, desk_defense, tmp_path, capsys):
        doc = read_json(desk_defense["graph"])
        slim = {"n_nodes": doc["n_nodes"], "d": doc["d"],
                "features": doc["features"]}
        path = tmp_path / "features.json"
        path.write_text(json.dumps(slim))
        rc = main(["infer", str(desk_defense["out"] / "checkpoint.json"),
                   str(path), "--out-dir", str(tmp_path / "o")])
        assert rc == 0
        assert "labeled 10 nodes" in capsys.readouterr().out

    def test_index_out_of_range_exits_2(self, desk_defense, tmp_path):
        rc = main(["infer", str(desk_defense["out"] / "checkpoint.json"),
                   str(desk_defense["graph"]), "--indices", "99",
                   "--out-dir", str(tmp_path)])
        assert rc == 2

    def test_no_edge_flag_exists(self, desk_defense, tmp_path):
        rc = main(["infer", str(desk_defense["out"] / "checkpoint.json"),
                   str(desk_defense["graph"]), "--edges", "evil.json",
                   "--out-dir", str(tmp_path)])
        assert rc == 2


# ---------------------------------------------------------------------------
# experiment


class TestExperiment:
    def test_signal_self_test(self, tmp_path, capsys):
        rc = main(["experiment", "signal", "--count", "50",
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        report = read_json(tmp_path / "signal_report.json")
        assert report["max_residual"] < 1e-9
        assert "< 1e-9: yes" in capsys.readouterr().out

    def test_perturb_u_needs_a_graph(self, tmp_path):
        assert main(["experiment", "perturb-u", "--out-dir", str(tmp_path)]) == 2

    def test_perturb_u_writes_the_sweep(self, desk_defense, tmp_path):
        out = tmp_path / "pu"
        rc = main(["experiment", "perturb-u", "--graph", str(desk_defense["graph"]),
                   "--target", "0", "--c-v", "3", "--train-epochs", "20",
                   "--out-dir", str(out)])
        assert rc == 0
        lines = (out / "deviation.csv").read_text().splitlines()
        assert lines[0] == "target,delta,deviation"
        assert len(lines) == 1 + 4 * 50    # target plus 3 neighbors, 50 deltas

    def test_delete_node_writes_changes(self, desk_defense, tmp_path):
        out = tmp_path / "dn"
        rc = main(["experiment", "delete-node", "--graph",
                   str(desk_defense["graph"]), "--orders", "1,2",
                   "--out-dir", str(out)])
        assert rc == 0
        lines = (out / "change.csv").read_text().splitlines()
        assert lines[0] == "order,node,C"
        report = read_json(out / "experiment_report.json")
        assert set(report["mean_abs_change"]) == {"1", "2"}

    def test_unknown_kind_exits_2(self, tmp_path):
        assert main(["experiment", "striped", "--out-dir", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# report


class TestReport:
    def test_merges_runs_into_a_table(self, pipeline, desk_defense, tmp_path, capsys):
        atk = tmp_path / "atk"
        assert main(["attack", str(pipeline["graph"]),
                     str(pipeline["train"] / "checkpoint.json"),
                     "--targets", str(pipeline["target"]),
                     "--desired", str(pipeline["desired"]),
                     "--reg-weight", "0", "--stop-when-successful",
                     "--out-dir", str(atk)]) == 0
        out = tmp_path / "rep"
        rc = main(["report", str(pipeline["train"]), str(atk),
                   str(desk_defense["out"]), "--out-dir", str(out)])
        assert rc == 0
        doc = read_json(out / "report.json")
        assert [r["command"] for r in doc["runs"]] == ["train", "attack", "defend"]
        table = (out / "report.md").read_text()
        assert "clean_acc" in table and "attacked_acc" in table
        assert "angcn_acc" in table and "attack_success" in table

    def test_missing_manifest_warns_but_exits_0(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        out = tmp_path / "rep"
        rc = main(["report", str(empty), "--out-dir", str(out)])
        assert rc == 0
        assert "no manifest.json" in capsys.readouterr().err
        doc = read_json(out / "report.json")
        assert doc["runs"] == []
        assert len(doc["warnings"]) == 1


# ---------------------------------------------------------------------------
# process-level entry


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "edgeward.cli", "ingest", "--synth", "ring:5",
         "--out-dir", str(tmp_path)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "5 nodes" in proc.stdout
