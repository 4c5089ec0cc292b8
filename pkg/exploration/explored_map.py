"""Top-down explored map M: unknown / free / obstacle cells with provenance"""
import logging

import numpy as np
from scipy import ndimage

from domain.constants import CELL_FREE, CELL_OBSTACLE, CELL_UNKNOWN
from domain.models import Cell, FrameObservation

logger = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class ExploredMap:
    """Cells flip from unknown to free or obstacle once and never back

    Traversability of an observed cell comes from the scene's walkable grid,
    as a depth sensor sweeping the floor would report it.
    """

    def __init__(self, shape: tuple[int, int], cell_size: float) -> None:
        self.cell_size = cell_size
        self.grid = np.full(shape, CELL_UNKNOWN, dtype=np.int8)
        self.provenance = np.full(shape, -1, dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape  # type: ignore[return-value]

    @property
    def extent(self) -> tuple[float, float]:
        return (self.shape[0] * self.cell_size, self.shape[1] * self.cell_size)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.shape[0] and 0 <= cell[1] < self.shape[1]

    def mark(self, cell: Cell, walkable: bool, frame_id: int) -> bool:
        """Classify an unknown cell; returns whether the cell changed"""
        if not self.in_bounds(cell) or self.grid[cell] != CELL_UNKNOWN:
            return False
        self.grid[cell] = CELL_FREE if walkable else CELL_OBSTACLE
        self.provenance[cell] = frame_id
        return True

    def update(self, obs: FrameObservation, walkable: np.ndarray) -> int:
        """Fold a frame's explored cells and the agent's own cell into the map"""
        changed = 0
        agent = (
            int(np.floor(obs.pose.position[0] / self.cell_size)),
            int(np.floor(obs.pose.position[1] / self.cell_size)),
        )
        for cell in sorted(obs.explored_delta | {agent}):
            if self.in_bounds(cell):
                changed += self.mark(cell, bool(walkable[cell]), obs.frame_id)
        return changed

    def free_mask(self) -> np.ndarray:
        return self.grid == CELL_FREE

    def known_mask(self) -> np.ndarray:
        return self.grid != CELL_UNKNOWN

    def free_cells(self) -> list[Cell]:
        return [tuple(c) for c in np.argwhere(self.free_mask()).tolist()]

    def frontier_mask(self) -> np.ndarray:
        """Free cells 4-adjacent to an unknown cell"""
        unknown = self.grid == CELL_UNKNOWN
        return self.free_mask() & ndimage.binary_dilation(unknown, structure=FOUR_CONNECTED)

    def explored_fraction(self) -> float:
        return float(self.known_mask().mean())

    def copy(self) -> "ExploredMap":
        other = ExploredMap(self.shape, self.cell_size)
        other.grid = self.grid.copy()
        other.provenance = self.provenance.copy()
        return other

    @classmethod
    def from_grid(cls, grid: np.ndarray, cell_size: float) -> "ExploredMap":
        explored = cls(grid.shape, cell_size)
        explored.grid = np.asarray(grid, dtype=np.int8).copy()
        explored.provenance[explored.known_mask()] = 0
        return explored
