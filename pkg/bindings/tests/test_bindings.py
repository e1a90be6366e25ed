import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from hsup import CorrespondenceConfig, RewardConfig
from hsup.correspondence import CorrespondenceMatrix, write_matrix
from hsup.correspondence import correspondence_loss as core_loss
from hsup.dataset import SynthSpec, build_supervision, write_bundle, write_synth_scene

from hsup_bindings import RewardEngine, correspondence_loss, read_bundle


def make_records(count, seed=0):
    rng = np.random.default_rng(seed)
    gold = [
        {"from": 0, "to": 1, "action": [{"turn_right_deg": 30}, {"move_forward_m": 1.0}]},
        {"from": 0, "to": 2, "action": []},
        {"from": 1, "to": 2, "action": [{"move_up_m": 0.5}]},
    ]
    records = []
    for k in range(count):
        mode = k % 5
        if mode == 0:
            raw = f"<action>{json.dumps(gold)}</action><answer>B</answer>"
        elif mode == 1:
            noisy = json.loads(json.dumps(gold))
            noisy[0]["action"][1]["move_forward_m"] = float(1.0 + rng.normal(0, 0.3))
            raw = f"<action>{json.dumps(noisy)}</action><answer>C</answer>"
        elif mode == 2:
            raw = f"<action>{json.dumps(gold[:2])}</action><answer>B</answer>"
        elif mode == 3:
            raw = f"<action>[not json</action><answer>B</answer>"
        else:
            raw = f"plain text {rng.integers(1000)}"
        records.append({
            "id": str(k),
            "raw_output": raw,
            "ground_truth": {
                "gold_actions": gold,
                "gold_answer": "B",
                "question_type": "select",
                "n_views": 3,
            },
        })
    return records


class TestRewardEngine:
    def test_perfect_record(self):
        engine = RewardEngine()
        record = make_records(1)[0]
        result = engine.score_record(record)
        assert result["id"] == "0"
        assert result["total"] == pytest.approx(3.0, abs=1e-9)

    def test_score_accepts_mapping(self):
        engine = RewardEngine()
        record = make_records(1)[0]
        result = engine.score(record["raw_output"], record["ground_truth"])
        assert set(result) == {"act_acc", "ans_acc", "format", "total"}

    def test_bad_record_maps_to_zeros(self):
        result = RewardEngine().score_record({"id": "x"})
        assert result["total"] == 0.0 and "error" in result

    def test_custom_config(self):
        engine = RewardEngine(RewardConfig(lambda_format=0.0))
        record = make_records(1)[0]
        assert engine.score_record(record)["total"] == pytest.approx(2.0, abs=1e-9)

    def test_batch_preserves_order(self):
        records = make_records(20, seed=3)
        serial = RewardEngine().batch_score(records)
        threaded = RewardEngine().batch_score(records, jobs=4)
        assert [r["id"] for r in serial] == [str(k) for k in range(20)]
        assert serial == threaded


class TestCorrespondenceLoss:
    def test_array_input_matches_core(self):
        rng = np.random.default_rng(0)
        entries = rng.random((16, 16))
        fx, fy = rng.normal(size=(2, 16, 8))
        cfg = CorrespondenceConfig(n=4)
        ours = correspondence_loss(entries, fx, fy, cfg)
        core = core_loss(CorrespondenceMatrix(entries), fx, fy, cfg)
        assert ours.total == core.total

    def test_path_input(self, tmp_path):
        rng = np.random.default_rng(1)
        entries = rng.random((16, 16)).astype(np.float32).astype(np.float64)
        path = tmp_path / "S_0_1.hsup"
        write_matrix(path, CorrespondenceMatrix(entries))
        fx, fy = rng.normal(size=(2, 16, 4))
        cfg = CorrespondenceConfig(n=4)
        assert correspondence_loss(path, fx, fy, cfg).total == core_loss(
            CorrespondenceMatrix(entries), fx, fy, cfg
        ).total

    def test_default_config(self):
        rng = np.random.default_rng(2)
        report = correspondence_loss(rng.random((16, 16)), rng.normal(size=(16, 3)),
                                     rng.normal(size=(16, 3)))
        assert report.total > 0

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            correspondence_loss(np.zeros((4, 5)), np.zeros((4, 2)), np.zeros((4, 2)))

    def test_feature_row_mismatch(self):
        with pytest.raises(ValueError, match="features_x"):
            correspondence_loss(np.zeros((16, 16)), np.zeros((9, 2)), np.zeros((16, 2)))

    def test_feature_ndim(self):
        with pytest.raises(ValueError, match="2-D"):
            correspondence_loss(np.zeros((16, 16)), np.zeros(16), np.zeros((16, 2)))


class TestReadBundle:
    def test_round_trip_through_bindings(self, tmp_path):
        manifest = write_synth_scene(SynthSpec(), 0, tmp_path / "scene")
        bundle = build_supervision(manifest)
        write_bundle(bundle, tmp_path / "bundle")
        again = read_bundle(tmp_path / "bundle")
        assert set(again.matrices) == {(0, 1), (0, 2), (1, 2)}
        assert again.actions.pairs() == {(0, 1), (0, 2), (1, 2)}


def test_a10_cli_parity(tmp_path):
    """Engine batch scoring is bit-identical to the CLI on a 100-record batch."""
    records = make_records(100, seed=7)
    batch = tmp_path / "batch.jsonl"
    batch.write_text("".join(json.dumps(r) + "\n" for r in records))
    env = dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path))
    proc = subprocess.run(
        [sys.executable, "-m", "hsup.cli", "reward", str(batch)],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    cli_lines = proc.stdout.splitlines()
    cli_records = [json.loads(line) for line in cli_lines[:-1]]

    engine_records = RewardEngine().batch_score(records)
    serialized = [json.dumps(r, separators=(",", ":")) for r in engine_records]
    ok = serialized == cli_lines[:-1]
    print(f"A10 bindings vs CLI scoring parity (100 records, bit-identical): "
          f"{'PASS' if ok else 'FAIL'}")
    assert ok

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        entries = rng.random((16, 16))
        fx, fy = rng.normal(size=(2, 16, 8))
        cfg = CorrespondenceConfig(n=4)
        delta = abs(
            correspondence_loss(entries, fx, fy, cfg).total
            - core_loss(CorrespondenceMatrix(entries), fx, fy, cfg).total
        )
        worst = max(worst, delta)
    assert worst <= 1e-12
