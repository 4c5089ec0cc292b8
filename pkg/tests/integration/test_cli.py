"""Command-line smoke tests"""
import json

import numpy as np
import pytest

import cli
from domain.models import AgentPose, EpisodeMetrics
from harness import ablation
from harness.artifacts import METRICS_FILE
from perception.detector import normalized_logits
from perception.reconciliation import dump_dataset, reconcile
from perception.voxel_map import LogitEntry, SemanticVoxelMap, VoxelCell
from world.scene_io import load_scene


@pytest.fixture
def config_file(small_run_config, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(small_run_config.to_dict()), encoding="utf-8")
    return path


@pytest.fixture
def dataset_file(box_room, narrow_camera, noise_free_profile, tmp_path):
    """Reconciled labels of the box seen from two poses"""
    vmap = SemanticVoxelMap(box_room.voxel_size)
    logits = np.eye(8)[3] * 5.0
    for voxel in box_room.objects[0].voxels:
        vmap.cells.setdefault(voxel, VoxelCell()).entries.append(LogitEntry(0, 0, logits, normalized_logits(logits)))
    vmap.dirty = True
    frames = [
        (0, AgentPose(position=(1.25, 2.25), camera_height=0.75)),
        (1, AgentPose(position=(1.75, 2.75), heading=-0.3, camera_height=0.75)),
    ]
    dataset = reconcile(box_room, vmap, frames, narrow_camera, noise_free_profile, min_pixels=1)
    path = tmp_path / "dataset.jsonl"
    path.write_text(dump_dataset(dataset), encoding="utf-8")
    return path


@pytest.mark.integration
class TestCli:
    """Test the subcommands end to end"""

    def test_generate_scene(self, config_file, tmp_path, small_run_config):
        """Test that a generated scene file loads back"""
        out = tmp_path / "scenes" / "room.json"
        assert cli.main(["generate-scene", "--config", str(config_file), "--seed", "2", "--out", str(out)]) == 0
        assert load_scene(out.read_bytes()).dims == small_run_config.scene.dims

    def test_explore_and_reconcile(self, config_file, tmp_path):
        """Test that explore writes its artifacts and reconcile reads them"""
        episode = tmp_path / "episode"
        argv = ["explore", "--config", str(config_file), "--policy", "frontier", "--seed", "1", "--out", str(episode)]
        assert cli.main(argv) == 0
        metrics = json.loads((episode / METRICS_FILE).read_text())
        assert metrics["policy"] == "frontier"
        dataset = tmp_path / "dataset.jsonl"
        assert cli.main(["reconcile", "--episode", str(episode), "--out", str(dataset)]) == 0
        assert json.loads(dataset.read_text().splitlines()[0])["provenance"]["seed"] == 1

    def test_finetune(self, config_file, dataset_file, tmp_path):
        """Test that finetune writes parameters and a loss curve"""
        out = tmp_path / "head.json"
        argv = ["finetune", "--config", str(config_file), "--dataset", str(dataset_file), "--epochs", "3", "--out", str(out)]
        assert cli.main(argv) == 0
        assert json.loads(out.read_text())["schema_version"] == 1
        curve = (tmp_path / "head.curve.csv").read_text().splitlines()
        assert curve[0] == "epoch,L_head,L_distil,L_im,total"
        assert len(curve) == 4

    def test_finetune_needs_input(self, tmp_path, capsys):
        """Test that a missing dataset is reported with exit status 1"""
        assert cli.main(["finetune", "--out", str(tmp_path / "head.json")]) == 1
        assert "ConfigError" in capsys.readouterr().err

    def test_ablate(self, config_file, tmp_path, monkeypatch):
        """Test that an ablation writes its table and results database"""
        monkeypatch.setattr(
            ablation, "run_pipeline", lambda config, seed: EpisodeMetrics(seed=seed, policy=config.policy, score_kind=config.score)
        )
        out = tmp_path / "ablation"
        argv = ["ablate", "--config", str(config_file), "--axis", "policy", "--values", "random", "frontier", "--out", str(out)]
        assert cli.main(argv) == 0
        table = json.loads((out / "ablation.json").read_text())
        assert [row["value"] for row in table["rows"]] == ["random", "frontier"]
        assert (out / "results.db").exists()
        assert cli.main(["report", "--db", str(out / "results.db"), "--out", str(out / "report")]) == 0
        assert len(json.loads((out / "report" / "report.json").read_text())["per_seed"]) == 2

    def test_report_from_fragments(self, tmp_path):
        """Test aggregation of fragment files"""
        paths = []
        for seed, value in ((0, 0.4), (1, 0.6)):
            path = tmp_path / f"metrics_{seed}.json"
            path.write_text(json.dumps({"schema_version": 1, "seed": seed, "policy": "random", "score_kind": "entropy", "map50_raw": value}))
            paths.append(str(path))
        assert cli.main(["report", "--fragments", *paths, "--out", str(tmp_path / "report")]) == 0
        document = json.loads((tmp_path / "report" / "report.json").read_text())
        assert document["aggregate"]["map50_raw"]["mean"] == pytest.approx(0.5)
