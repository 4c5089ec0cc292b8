"""Unit tests for disagreement scores and the disagreement map"""
import math

import numpy as np
import pytest

from domain.constants import CELL_FREE, CELL_UNKNOWN, SCORE_KINDS
from domain.errors import ConfigError
from domain.models import AgentPose
from exploration.disagreement import (
    assemble_policy_input,
    build_disagreement_map,
    entropy,
    instance_scores,
    score_cos,
    score_count,
    score_entropy,
    score_euc,
    score_function,
    total_score,
)
from exploration.explored_map import ExploredMap
from perception.detector import normalized_logits
from perception.voxel_map import LogitEntry, SemanticVoxelMap, VoxelCell


def add_instance(vmap: SemanticVoxelMap, voxel, views) -> None:
    """One single-voxel instance observed once per logit vector in `views`"""
    cell = vmap.cells.setdefault(voxel, VoxelCell())
    for frame_id, logits in enumerate(views):
        logits = np.asarray(logits, dtype=float)
        cell.entries.append(LogitEntry(frame_id, len(cell.entries), logits, normalized_logits(logits)))
    vmap.dirty = True


@pytest.mark.unit
class TestScores:
    """Test the four per-instance scores"""

    def test_agreeing_views_score_zero(self):
        """Test that identical views give no pairwise or count disagreement"""
        vmap = SemanticVoxelMap(0.1)
        add_instance(vmap, (0, 0, 0), [[4.0, 0.0, 0.0]] * 3)
        vmap.resolve_instances()
        assert score_cos(vmap, 0) == pytest.approx(0.0, abs=1e-12)
        assert score_euc(vmap, 0) == 0.0
        assert score_count(vmap, 0) == 0.0
        assert score_entropy(vmap, 0) == pytest.approx(entropy(normalized_logits([4.0, 0.0, 0.0])))

    def test_opposite_views(self):
        """Test two views that each back a different class"""
        vmap = SemanticVoxelMap(0.1)
        add_instance(vmap, (0, 0, 0), [[5.0, 0.0], [0.0, 5.0]])
        vmap.resolve_instances()
        assert score_cos(vmap, 0) == pytest.approx(1.0)
        assert score_euc(vmap, 0) == pytest.approx(math.sqrt(50.0))
        assert score_count(vmap, 0) == 1.0
        assert score_entropy(vmap, 0) == pytest.approx(math.log(2.0))

    def test_single_view(self):
        """Test that a single view has no pairs"""
        vmap = SemanticVoxelMap(0.1)
        add_instance(vmap, (0, 0, 0), [[1.0, 2.0]])
        vmap.resolve_instances()
        assert score_cos(vmap, 0) == 0.0
        assert score_euc(vmap, 0) == 0.0

    def test_zero_norm_pair_skipped(self):
        """Test that an all-zero logit vector is left out of the cosine mean and tallied"""
        vmap = SemanticVoxelMap(0.1)
        add_instance(vmap, (0, 0, 0), [[3.0, 0.0], [0.0, 0.0], [0.0, 3.0]])
        vmap.resolve_instances()
        assert score_cos(vmap, 0) == pytest.approx(1.0)
        assert vmap.diagnostics["zero_norm_pairs"] == 2

    def test_entropy_bounds(self):
        """Test that entropy lies between 0 and log(C)"""
        rng = np.random.default_rng(3)
        for _ in range(30):
            vmap = SemanticVoxelMap(0.1)
            add_instance(vmap, (0, 0, 0), rng.normal(0.0, 3.0, size=(4, 5)))
            vmap.resolve_instances()
            assert 0.0 <= score_entropy(vmap, 0) <= math.log(5.0) + 1e-12

    def test_per_view_shift_invariance(self):
        """Test that adding a constant to each logit vector keeps entropy and count but not the Euclidean score"""
        rng = np.random.default_rng(11)
        for _ in range(30):
            views = rng.normal(0.0, 2.0, size=(4, 5))
            shifted = views + rng.uniform(-5.0, 5.0, size=(4, 1))
            base, moved = SemanticVoxelMap(0.1), SemanticVoxelMap(0.1)
            add_instance(base, (0, 0, 0), views)
            add_instance(moved, (0, 0, 0), shifted)
            base.resolve_instances()
            moved.resolve_instances()
            assert score_entropy(moved, 0) == pytest.approx(score_entropy(base, 0), abs=1e-9)
            assert score_count(moved, 0) == score_count(base, 0)
        witness, moved = SemanticVoxelMap(0.1), SemanticVoxelMap(0.1)
        add_instance(witness, (0, 0, 0), [[1.0, 0.0], [1.0, 0.0]])
        add_instance(moved, (0, 0, 0), [[1.0, 0.0], [4.0, 3.0]])
        witness.resolve_instances()
        moved.resolve_instances()
        assert score_euc(moved, 0) != score_euc(witness, 0)

    def test_unknown_kind(self):
        """Test that an unknown score name is a configuration error"""
        with pytest.raises(ConfigError):
            score_function("variance")

    def test_scores_resolve_dirty_map(self):
        """Test that scoring resolves instances first when the map changed"""
        vmap = SemanticVoxelMap(0.1)
        add_instance(vmap, (0, 0, 0), [[5.0, 0.0], [0.0, 5.0]])
        assert instance_scores(vmap, "count") == {0: 1.0}
        assert not vmap.dirty


@pytest.mark.unit
class TestDisagreementMap:
    """Test the top-down disagreement grid"""

    def test_score_lands_in_centroid_cell(self):
        """Test that an instance adds its score at its footprint centroid"""
        vmap = SemanticVoxelMap(0.1)
        add_instance(vmap, (10, 10, 0), [[5.0, 0.0], [0.0, 5.0]])
        H = build_disagreement_map(vmap, "count", K=32, extent=(3.2, 3.2))
        assert H.cell_size == pytest.approx(0.1)
        assert H.grid[10, 10] == 1.0
        assert H.grid.sum() == 1.0

    def test_conservation(self):
        """Test that the grid sums to the total score for every kind"""
        rng = np.random.default_rng(8)
        for kind in SCORE_KINDS:
            vmap = SemanticVoxelMap(0.05)
            for k in range(6):
                voxel = (int(rng.integers(0, 60)), int(rng.integers(0, 60)), 0)
                if voxel in vmap.cells:
                    continue
                add_instance(vmap, voxel, rng.normal(0.0, 2.0, size=(3, 4)))
            H = build_disagreement_map(vmap, kind, K=16, extent=(3.2, 3.2))
            assert H.grid.sum() == pytest.approx(total_score(vmap, kind))

    def test_positions_outside_clip(self):
        """Test that centroids beyond the extent clip to the border cell"""
        vmap = SemanticVoxelMap(0.1)
        add_instance(vmap, (50, 0, 0), [[5.0, 0.0], [0.0, 5.0]])
        H = build_disagreement_map(vmap, "count", K=8, extent=(1.0, 1.0))
        assert H.grid[7, 0] == 1.0

    def test_empty_map(self):
        """Test that a map without instances yields an all-zero grid"""
        H = build_disagreement_map(SemanticVoxelMap(0.1), "entropy", K=4)
        assert H.grid.shape == (4, 4)
        assert H.normalization == 0.0

    def test_csv_rows(self):
        """Test that the CSV export has one row per grid row"""
        H = build_disagreement_map(SemanticVoxelMap(0.1), "entropy", K=5)
        rows = H.to_csv().splitlines()
        assert len(rows) == 5
        assert rows[0].split(",") == ["0"] * 5

    def test_invalid_K(self):
        """Test that K must be positive"""
        with pytest.raises(ConfigError):
            build_disagreement_map(SemanticVoxelMap(0.1), "entropy", K=0)


@pytest.mark.unit
class TestPolicyInput:
    """Test assembly of the two-channel policy input"""

    def test_channels(self):
        """Test normalised disagreement, explored cells and agent marker"""
        vmap = SemanticVoxelMap(0.1)
        add_instance(vmap, (2, 2, 0), [[5.0, 0.0], [0.0, 5.0]])
        add_instance(vmap, (6, 6, 0), [[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]])
        H = build_disagreement_map(vmap, "count", K=8, extent=(0.8, 0.8))
        grid = np.full((8, 8), CELL_UNKNOWN, dtype=np.int8)
        grid[0:4, 0:4] = CELL_FREE
        explored = ExploredMap.from_grid(grid, 0.1)
        pose = AgentPose(position=(0.15, 0.25), heading=1.0)
        pinput = assemble_policy_input(H, explored, pose)
        assert pinput.channels.shape == (2, 8, 8)
        assert pinput.channels[0].max() == 1.0
        assert pinput.channels[0][2, 2] == pytest.approx(0.5)
        assert pinput.agent_cell == (1, 2)
        assert pinput.channels[1][1, 2] == 1.0
        assert pinput.channels[1][0, 0] == 0.5
        assert pinput.channels[1][5, 5] == 0.0
        assert pinput.orientation == pytest.approx(1.0)
