"""Unit tests for the top-down explored map"""
import numpy as np
import pytest

from domain.constants import CELL_FREE, CELL_OBSTACLE, CELL_UNKNOWN
from exploration.explored_map import ExploredMap
from world.raycast import raycast_frame


@pytest.mark.unit
class TestExploredMap:
    """Test explored map updates and queries"""

    def test_starts_unknown(self):
        """Test that a fresh map knows nothing"""
        explored = ExploredMap((4, 5), 0.1)
        assert explored.shape == (4, 5)
        assert explored.explored_fraction() == 0.0
        assert explored.free_cells() == []

    def test_mark_once(self):
        """Test that a classified cell never changes again"""
        explored = ExploredMap((3, 3), 0.1)
        assert explored.mark((1, 1), True, frame_id=4)
        assert not explored.mark((1, 1), False, frame_id=5)
        assert explored.grid[1, 1] == CELL_FREE
        assert explored.provenance[1, 1] == 4
        assert not explored.mark((7, 7), True, frame_id=0)

    def test_update_from_frame(self, tiny_scene, centre_pose, camera):
        """Test that a rendered frame reveals its cells and the agent's own cell"""
        explored = ExploredMap(tiny_scene.dims[:2], tiny_scene.voxel_size)
        obs = raycast_frame(tiny_scene, centre_pose, camera, frame_id=2)
        changed = explored.update(obs, tiny_scene.walkable)
        agent = tiny_scene.cell_of(centre_pose.position)
        assert changed > 0
        assert explored.grid[agent] == CELL_FREE
        for cell in obs.explored_delta:
            expected = CELL_FREE if tiny_scene.walkable[cell] else CELL_OBSTACLE
            assert explored.grid[cell] == expected
            assert explored.provenance[cell] == 2
        assert explored.update(obs, tiny_scene.walkable) == 0

    def test_frontier(self):
        """Test that frontier cells are free cells next to unknown ones"""
        grid = np.full((4, 4), CELL_UNKNOWN, dtype=np.int8)
        grid[0:3, 0:3] = CELL_FREE
        grid[1, 1] = CELL_OBSTACLE
        explored = ExploredMap.from_grid(grid, 0.1)
        frontier = set(map(tuple, np.argwhere(explored.frontier_mask()).tolist()))
        assert frontier == {(0, 2), (1, 2), (2, 2), (2, 0), (2, 1)}

    def test_explored_fraction(self):
        """Test the known share of cells"""
        grid = np.full((2, 2), CELL_UNKNOWN, dtype=np.int8)
        grid[0, 0] = CELL_FREE
        grid[1, 1] = CELL_OBSTACLE
        assert ExploredMap.from_grid(grid, 0.1).explored_fraction() == 0.5

    def test_copy_is_independent(self):
        """Test that copies do not share their grid"""
        explored = ExploredMap((2, 2), 0.1)
        other = explored.copy()
        other.mark((0, 0), True, 0)
        assert explored.grid[0, 0] == CELL_UNKNOWN
