"""End-to-end command tests: prepare, train, cv, predict, ablate, sweep,
export-attention, plus manifest/idempotency behavior."""

import csv
import json

import numpy as np
import pytest

from conftest import synthetic_records
from dtadyn.cli import main

TOY_CONFIG = {
    "model": {
        "embed_dim": 8,
        "gcn_layers": 2,
        "attention_heads": 2,
        "dropout_p": 0.2,
        "dilation_rate": 2,
        "conv_kernels": [3, 3],
        "conv_channels": [4, 8],
        "max_seq_len": 32,
        "mlp_hidden": [8],
        "head_hidden": [16, 8],
        "fusion_dim": 8,
    },
    "train": {"epochs": 3, "batch_size": 8, "learning_rate": 2e-3, "seed": 7},
}


def write_affinities(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["smiles", "protein_sequence", "pdb_id", "measure",
                         "value"])
        writer.writerows(rows)


def write_descriptors(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pdb_id", "avg_rmsf", "avg_gyr", "div_se", "div_mm"])
        writer.writerows(rows)


def write_synthetic_inputs(tmp_path, n=10, seed=0):
    records = synthetic_records(n=n, seed=seed)
    aff = tmp_path / "affinities.csv"
    desc = tmp_path / "descriptors.csv"
    write_affinities(
        aff,
        [(r.smiles, r.protein_sequence, r.pdb_id, r.measure, r.raw_value)
         for r in records],
    )
    write_descriptors(
        desc,
        [(r.pdb_id, r.descriptors.avg_rmsf, r.descriptors.avg_gyr,
          r.descriptors.div_se, r.descriptors.div_mm) for r in records],
    )
    return aff, desc


@pytest.fixture
def prepared(tmp_path):
    aff, desc = write_synthetic_inputs(tmp_path, n=10)
    out = tmp_path / "prep"
    assert main(["prepare", "--affinities", str(aff), "--descriptors",
                 str(desc), "--out", str(out)]) == 0
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(TOY_CONFIG))
    return out / "dataset.cache", config_path, desc


class TestPrepare:
    def test_writes_cache_summary_manifest(self, tmp_path):
        aff, desc = write_synthetic_inputs(tmp_path)
        out = tmp_path / "out"
        assert main(["prepare", "--affinities", str(aff), "--descriptors",
                     str(desc), "--out", str(out)]) == 0
        assert (out / "dataset.cache").exists()
        assert (out / "summary.csv").exists()
        assert (out / "histogram.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "prepare"
        assert len(manifest["inputs"]) == 2

    def test_drop_counting(self, tmp_path):
        aff = tmp_path / "a.csv"
        desc = tmp_path / "d.csv"
        write_affinities(aff, [
            ("CCO", "MKT", "1AAA", "Kd", 1000),
            ("CCO", "MKT", "1BBB", "Kd", 500),   # no descriptor row
            ("C(C", "MKT", "1AAA", "Kd", 500),   # bad SMILES
        ])
        write_descriptors(desc, [("1AAA", 1, 2, 0.5, 0.5)])
        out = tmp_path / "out"
        assert main(["prepare", "--affinities", str(aff), "--descriptors",
                     str(desc), "--out", str(out)]) == 0
        summary = dict(
            row for row in csv.reader((out / "summary.csv").open())
        )
        assert summary["entries"] == "1"
        assert summary["dropped_no_descriptor"] == "1"
        assert summary["dropped_unparseable_smiles"] == "1"

    def test_duplicate_pdb_id_exit_code(self, tmp_path):
        aff, _ = write_synthetic_inputs(tmp_path)
        desc = tmp_path / "dup.csv"
        write_descriptors(desc, [("1AAA", 1, 2, 3, 4), ("1aaa", 5, 6, 7, 8)])
        assert main(["prepare", "--affinities", str(aff), "--descriptors",
                     str(desc), "--out", str(tmp_path / "x")]) == 3

    def test_empty_affinity_file(self, tmp_path, capsys):
        aff = tmp_path / "empty.csv"
        write_affinities(aff, [])
        desc = tmp_path / "d.csv"
        write_descriptors(desc, [("1AAA", 1, 2, 3, 4)])
        assert main(["prepare", "--affinities", str(aff), "--descriptors",
                     str(desc), "--out", str(tmp_path / "x")]) == 1
        assert "no records" in capsys.readouterr().err

    def test_malformed_value_diagnostic(self, tmp_path, capsys):
        aff = tmp_path / "bad.csv"
        aff.write_text(
            "smiles,protein_sequence,pdb_id,measure,value\nCCO,M,1A,Kd,abc\n")
        desc = tmp_path / "d.csv"
        write_descriptors(desc, [("1A", 1, 2, 3, 4)])
        assert main(["prepare", "--affinities", str(aff), "--descriptors",
                     str(desc), "--out", str(tmp_path / "x")]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_idempotent_outputs(self, tmp_path):
        aff, desc = write_synthetic_inputs(tmp_path)
        out = tmp_path / "out"
        main(["prepare", "--affinities", str(aff), "--descriptors", str(desc),
              "--out", str(out)])
        first = {
            name: (out / name).read_bytes()
            for name in ("dataset.cache", "summary.csv", "histogram.csv")
        }
        main(["prepare", "--affinities", str(aff), "--descriptors", str(desc),
              "--out", str(out)])
        for name, blob in first.items():
            assert (out / name).read_bytes() == blob


class TestSummarizeCommand:
    def test_from_cache(self, tmp_path, prepared):
        cache, _, _ = prepared
        out = tmp_path / "summ"
        assert main(["summarize", "--cache", str(cache), "--bin-width", "1.0",
                     "--out", str(out)]) == 0
        summary = dict(row for row in csv.reader((out / "summary.csv").open()))
        assert summary["entries"] == "10"
        histogram = list(csv.DictReader((out / "histogram.csv").open()))
        assert sum(int(r["count"]) for r in histogram) == 10


class TestTrainCommand:
    def test_writes_artifacts(self, tmp_path, prepared):
        cache, config, _ = prepared
        out = tmp_path / "run"
        assert main(["train", "--cache", str(cache), "--config", str(config),
                     "--out", str(out)]) == 0
        assert (out / "checkpoint.bin").exists()
        assert (out / "loss_curve.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["configs"]["train"]["epochs"] == 3

    def test_flags_override_config(self, tmp_path, prepared):
        cache, config, _ = prepared
        out = tmp_path / "run"
        assert main(["train", "--cache", str(cache), "--config", str(config),
                     "--epochs", "1", "--out", str(out)]) == 0
        curve = (out / "loss_curve.csv").read_text().strip().splitlines()
        assert len(curve) == 2  # header + one epoch

    def test_seeded_reruns_identical(self, tmp_path, prepared):
        cache, config, _ = prepared
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for out in (out1, out2):
            assert main(["train", "--cache", str(cache), "--config",
                         str(config), "--seed", "123", "--out", str(out)]) == 0
        assert (out1 / "checkpoint.bin").read_bytes() == \
            (out2 / "checkpoint.bin").read_bytes()
        assert (out1 / "loss_curve.csv").read_text() == \
            (out2 / "loss_curve.csv").read_text()

    def test_invalid_config_exit_code(self, tmp_path, prepared):
        cache, _, _ = prepared
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(
            {"model": {"embed_dim": 8, "attention_heads": 3}}))
        assert main(["train", "--cache", str(cache), "--config", str(bad),
                     "--out", str(tmp_path / "x")]) == 4


class TestCvCommand:
    def test_full_run(self, tmp_path, prepared):
        cache, config, _ = prepared
        out = tmp_path / "cv"
        assert main(["cv", "--cache", str(cache), "--config", str(config),
                     "--folds", "5", "--out", str(out)]) == 0
        folds = list(csv.DictReader((out / "folds.csv").open()))
        assert len(folds) == 5
        for fold in range(5):
            assert (out / f"checkpoint_fold{fold}.bin").exists()
        results = list(csv.DictReader((out / "results.csv").open()))
        assert results[0]["configuration"] == "cv"
        mean = np.mean([float(f["rmse"]) for f in folds])
        assert abs(float(results[0]["rmse_mean"]) - mean) < 1e-6
        predictions = list(csv.DictReader((out / "predictions.csv").open()))
        assert len(predictions) == 10  # every record predicted exactly once


class TestPredictCommand:
    def test_ranking(self, tmp_path, prepared):
        cache, config, desc = prepared
        run = tmp_path / "run"
        main(["train", "--cache", str(cache), "--config", str(config),
              "--out", str(run)])
        cands = tmp_path / "cands.csv"
        with open(cands, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["smiles", "protein_sequence", "pdb_id"])
            writer.writerow(["CCO", "MKTAYIAK", "TS00"])
            writer.writerow(["not_a_smiles$$", "MKTAYIAK", "TS01"])
            writer.writerow(["c1ccccc1", "MKTAYIAK", "TS02"])
        out = tmp_path / "pred"
        assert main(["predict", "--checkpoint", str(run / "checkpoint.bin"),
                     "--candidates", str(cands), "--descriptors", str(desc),
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "ranked.csv").open()))
        assert len(rows) == 2  # bad SMILES row skipped
        assert [r["rank"] for r in rows] == ["1", "2"]
        assert float(rows[0]["prediction"]) >= float(rows[1]["prediction"])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["warnings"] == 1

    def test_tie_broken_by_input_order(self, tmp_path, prepared):
        cache, config, desc = prepared
        run = tmp_path / "run"
        main(["train", "--cache", str(cache), "--config", str(config),
              "--out", str(run)])
        cands = tmp_path / "ties.csv"
        with open(cands, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["smiles", "protein_sequence", "pdb_id"])
            # identical pairs score identically; input order must decide
            writer.writerow(["c1ccccc1", "MKT", "TS04"])
            writer.writerow(["CCO", "MKT", "TS00"])
            writer.writerow(["CCO", "MKT", "TS00"])
        out = tmp_path / "predt"
        assert main(["predict", "--checkpoint", str(run / "checkpoint.bin"),
                     "--candidates", str(cands), "--descriptors", str(desc),
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "ranked.csv").open()))
        tied = [r for r in rows if r["smiles"] == "CCO"]
        assert len(tied) == 2
        assert tied[0]["prediction"] == tied[1]["prediction"]
        assert int(tied[0]["rank"]) + 1 == int(tied[1]["rank"])

    def test_single_candidate_rank_one(self, tmp_path, prepared):
        cache, config, desc = prepared
        run = tmp_path / "run"
        main(["train", "--cache", str(cache), "--config", str(config),
              "--out", str(run)])
        cands = tmp_path / "c.csv"
        with open(cands, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["smiles", "protein_sequence", "pdb_id"])
            writer.writerow(["CCO", "MKT", "TS03"])
        out = tmp_path / "pred1"
        assert main(["predict", "--checkpoint", str(run / "checkpoint.bin"),
                     "--candidates", str(cands), "--descriptors", str(desc),
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "ranked.csv").open()))
        assert len(rows) == 1 and rows[0]["rank"] == "1"


class TestAblateAndSweep:
    def test_ablate_all_rows(self, tmp_path, prepared):
        cache, config, _ = prepared
        out = tmp_path / "abl"
        assert main(["ablate", "--cache", str(cache), "--config", str(config),
                     "--which", "all", "--folds", "5", "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "ablation.csv").open()))
        assert len(rows) == 11  # 6 component rows + 5 fusion rows
        names = [r["configuration"] for r in rows]
        assert "w/o Dilated" in names and "hadamard" in names

    def test_sweep_table(self, tmp_path, prepared):
        cache, config, _ = prepared
        out = tmp_path / "sw"
        assert main(["sweep", "--cache", str(cache), "--config", str(config),
                     "--parameter", "L", "--values", "1,2", "--folds", "5",
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "sweep_L.csv").open()))
        assert [r["value"] for r in rows] == ["1", "2"]

    def test_sweep_invalid_value_exit_code(self, tmp_path, prepared):
        cache, config, _ = prepared
        assert main(["sweep", "--cache", str(cache), "--config", str(config),
                     "--parameter", "H", "--values", "3", "--folds", "5",
                     "--out", str(tmp_path / "x")]) == 4


class TestExportAttention:
    def run_export(self, tmp_path, prepared, extra):
        cache, config, desc = prepared
        run = tmp_path / "run"
        main(["train", "--cache", str(cache), "--config", str(config),
              "--out", str(run)])
        out = tmp_path / "attn"
        code = main(["export-attention", "--checkpoint",
                     str(run / "checkpoint.bin"), "--smiles", "CCO",
                     "--sequence", "MKTAYIAKQRQISFVKSHFSRQLEERLGLIE",
                     "--descriptors", str(desc), "--pdb-id", "TS00",
                     "--out", str(out)] + extra)
        return code, out

    def test_full_export_weights_sum_to_one(self, tmp_path, prepared):
        code, out = self.run_export(tmp_path, prepared, [])
        assert code == 0
        rows = list(csv.DictReader((out / "attention.csv").open()))
        sums: dict = {}
        for row in rows:
            key = (row["direction"], row["head"])
            sums[key] = sums.get(key, 0.0) + float(row["weight"])
        for key, total in sums.items():
            assert abs(total - 1.0) <= 1e-12, key
        directions = {row["direction"] for row in rows}
        assert directions == {"target_to_dynamic", "dynamic_to_target"}

    def test_top_limits_rows(self, tmp_path, prepared):
        code, out = self.run_export(tmp_path, prepared, ["--top", "5"])
        assert code == 0
        rows = list(csv.DictReader((out / "attention.csv").open()))
        assert len(rows) == 5
        weights = [float(r["weight"]) for r in rows]
        assert weights == sorted(weights, reverse=True)

    def test_top_larger_than_positions(self, tmp_path, prepared):
        code, out = self.run_export(tmp_path, prepared, ["--top", "10000"])
        assert code == 0
        rows = list(csv.DictReader((out / "attention.csv").open()))
        # 32 - (3-1)*1 - (3-1)*2 = 26 conv output positions
        assert len(rows) == 26
