import json

import numpy as np
import pytest

from fusegcn.cli import cli_dispatch
from fusegcn.dataio import load_dataset, save_dataset
from fusegcn.graphs import homophily_ratio
from fusegcn.heterophily import SynthSpec, generate_synthetic
from tests.test_graphs import make_graph


@pytest.fixture
def four_node_ds(tmp_path):
    g = make_graph(4, [(0, 1), (1, 2), (2, 3)], labels=[0, 0, 1, 1], d=3, seed=0)
    save_dataset(g, tmp_path / "fixture")
    return tmp_path / "fixture"


@pytest.fixture
def synth_ds(tmp_path):
    g = generate_synthetic(SynthSpec(60, 2, p_intra=0.25, p_inter=0.02,
                                     n_features=8, seed=42))
    save_dataset(g, tmp_path / "synth")
    return tmp_path / "synth"


def tiny_config(tmp_path, **extra):
    lines = {"epochs": 6, "patience": 6, "hidden_dim": 8, "knn_k": 3,
             "train_per_class": 5, "val_per_class": 3, "seed": 0}
    lines.update(extra)
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return cfg


class TestDispatch:
    def test_unknown_subcommand_exits_1(self, capsys):
        assert cli_dispatch(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_missing_required_flag_exits_1(self, capsys):
        assert cli_dispatch(["homophily"]) == 1

    def test_data_error_exits_2(self, tmp_path, capsys):
        assert cli_dispatch(["homophily", "--data", str(tmp_path / "missing")]) == 2
        assert "error" in capsys.readouterr().err


class TestHomophilyCommand:
    def test_fixture_values(self, four_node_ds, capsys):
        assert cli_dispatch(["homophily", "--data", str(four_node_ds)]) == 0
        out = capsys.readouterr().out
        assert "homophily\t0.666667" in out
        assert "heterophily\t0.333333" in out


class TestTrainCommand:
    def test_writes_outputs(self, synth_ds, tmp_path, capsys):
        cfg = tiny_config(tmp_path)
        out = tmp_path / "run"
        rc = cli_dispatch(["train", "--data", str(synth_ds), "--config", str(cfg),
                           "--out", str(out)])
        assert rc == 0
        assert (out / "trace.csv").is_file()
        assert (out / "params.npz").is_file()
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert metrics["epochs_run"] == 6

    def test_zero_lr_flat_trace(self, synth_ds, tmp_path):
        cfg = tiny_config(tmp_path, lr=0.0, weight_decay=0.0, epochs=4)
        out = tmp_path / "flat"
        assert cli_dispatch(["train", "--data", str(synth_ds), "--config", str(cfg),
                             "--out", str(out)]) == 0
        rows = (out / "trace.csv").read_text().splitlines()[1:]
        losses = {r.split(",")[1] for r in rows}
        assert len(losses) == 1

    def test_determinism_byte_identical_traces(self, synth_ds, tmp_path):
        cfg = tiny_config(tmp_path)
        rc1 = cli_dispatch(["train", "--data", str(synth_ds), "--config", str(cfg),
                            "--out", str(tmp_path / "r1")])
        rc2 = cli_dispatch(["train", "--data", str(synth_ds), "--config", str(cfg),
                            "--out", str(tmp_path / "r2")])
        assert rc1 == rc2 == 0
        assert (tmp_path / "r1" / "trace.csv").read_bytes() == \
               (tmp_path / "r2" / "trace.csv").read_bytes()

    def test_baseline_models(self, synth_ds, tmp_path):
        cfg = tiny_config(tmp_path)
        for model in ("gcn", "knn-gcn"):
            rc = cli_dispatch(["train", "--data", str(synth_ds), "--config", str(cfg),
                               "--out", str(tmp_path / model), "--model", model])
            assert rc == 0

    def test_eval_roundtrip(self, synth_ds, tmp_path, capsys):
        cfg = tiny_config(tmp_path)
        out = tmp_path / "trained"
        cli_dispatch(["train", "--data", str(synth_ds), "--config", str(cfg),
                      "--out", str(out)])
        train_metrics = json.loads((out / "metrics.json").read_text())
        capsys.readouterr()
        rc = cli_dispatch(["eval", "--data", str(synth_ds),
                           "--params", str(out / "params.npz"), "--config", str(cfg)])
        assert rc == 0
        eval_metrics = json.loads(capsys.readouterr().out)
        assert eval_metrics["test_accuracy"] == pytest.approx(train_metrics["accuracy"])


class TestGraphCommands:
    def test_knn_graph_output_unlabeled(self, synth_ds, tmp_path, capsys):
        out = tmp_path / "knn"
        assert cli_dispatch(["knn-graph", "--data", str(synth_ds), "--k", "3",
                             "--out", str(out)]) == 0
        g = load_dataset(out)
        assert g.labels is None
        assert g.n_edges >= 60 * 3 / 2

    def test_inject_decreases_homophily(self, synth_ds, tmp_path, capsys):
        out = tmp_path / "injected"
        rc = cli_dispatch(["inject", "--data", str(synth_ds), "--target-het", "0.6",
                           "--seed", "7", "--out", str(out)])
        assert rc == 0
        before = homophily_ratio(load_dataset(synth_ds))
        after = homophily_ratio(load_dataset(out))
        assert after <= before
        assert (1.0 - after) == pytest.approx(0.6, abs=0.01)

    def test_inject_seed_reproducible(self, synth_ds, tmp_path):
        for name in ("a", "b"):
            cli_dispatch(["inject", "--data", str(synth_ds), "--target-het", "0.5",
                          "--seed", "9", "--out", str(tmp_path / name)])
        assert (tmp_path / "a" / "edges.tsv").read_bytes() == \
               (tmp_path / "b" / "edges.tsv").read_bytes()

    def test_synth_command(self, tmp_path, capsys):
        rc = cli_dispatch(["synth", "--nodes", "40", "--classes", "2", "--p-in", "0.3",
                           "--p-out", "0.02", "--dim", "6", "--seed", "5",
                           "--out", str(tmp_path / "s")])
        assert rc == 0
        g = load_dataset(tmp_path / "s")
        assert g.n_nodes == 40 and g.features.shape[1] == 6

    def test_synth_seed_reproducible(self, tmp_path):
        for name in ("sa", "sb"):
            cli_dispatch(["synth", "--nodes", "30", "--classes", "3", "--seed", "4",
                          "--out", str(tmp_path / name)])
        assert (tmp_path / "sa" / "edges.tsv").read_bytes() == \
               (tmp_path / "sb" / "edges.tsv").read_bytes()
        assert (tmp_path / "sa" / "features.tsv").read_bytes() == \
               (tmp_path / "sb" / "features.tsv").read_bytes()

    def test_synth_bad_sizes_data_error(self, tmp_path):
        assert cli_dispatch(["synth", "--nodes", "10", "--classes", "2",
                             "--class-sizes", "3,3", "--out", str(tmp_path / "x")]) == 2


class TestSweepCommand:
    def test_sweep_csv(self, tmp_path, capsys):
        g = generate_synthetic(SynthSpec(60, 2, p_intra=0.04, p_inter=0.004,
                                         n_features=8, seed=21))
        save_dataset(g, tmp_path / "ds")
        cfg = tiny_config(tmp_path, epochs=4, patience=4)
        rc = cli_dispatch(["sweep", "--data", str(tmp_path / "ds"), "--config", str(cfg),
                           "--out", str(tmp_path / "sw"), "--levels", "3"])
        assert rc == 0
        lines = (tmp_path / "sw" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "heterophily,accuracy,macro_f1"
        assert len(lines) == 4
        levels = [float(l.split(",")[0]) for l in lines[1:]]
        assert levels == sorted(levels)


class TestGradcheckCommand:
    def test_small_gradcheck_passes(self, capsys):
        rc = cli_dispatch(["gradcheck", "--nodes", "8", "--dim", "4", "--classes", "2",
                           "--hidden", "5", "--seed", "3"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out
