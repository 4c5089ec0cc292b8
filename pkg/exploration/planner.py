"""Grid navigation graph over known-free cells and octile A*"""
import heapq
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import count

import numpy as np
from scipy import ndimage

from domain.errors import NoPathError, NotWalkableError, PlanningError
from domain.models import AgentPose, CameraModel, Cell, FrameObservation, GoalAction
from world.raycast import raycast_frame
from world.scene import Scene, step_agent

from .explored_map import ExploredMap

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
AXIS_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))
DIAGONAL_MOVES = ((1, 1), (1, -1), (-1, 1), (-1, -1))
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def octile(a: Cell, b: Cell) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return float(max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy))


@dataclass(eq=False)
class NavGraph:
    """8-connected grid graph; diagonal moves need both adjacent axis cells free"""
    free: np.ndarray
    cell_size: float
    _components: np.ndarray | None = field(default=None, repr=False)

    def is_node(self, cell: Cell) -> bool:
        i, j = cell
        return 0 <= i < self.free.shape[0] and 0 <= j < self.free.shape[1] and bool(self.free[i, j])

    def neighbors(self, cell: Cell):
        i, j = cell
        for di, dj in AXIS_MOVES:
            nxt = (i + di, j + dj)
            if self.is_node(nxt):
                yield nxt, 1.0
        for di, dj in DIAGONAL_MOVES:
            nxt = (i + di, j + dj)
            if self.is_node(nxt) and self.is_node((i + di, j)) and self.is_node((i, j + dj)):
                yield nxt, SQRT2

    @cached_property
    def nodes(self) -> list[Cell]:
        return [tuple(c) for c in np.argwhere(self.free).tolist()]

    @cached_property
    def edges(self) -> list[tuple[Cell, Cell, float]]:
        """Undirected edges, each listed once"""
        return [(a, b, c) for a in self.nodes for b, c in self.neighbors(a) if a < b]

    @property
    def components(self) -> np.ndarray:
        # corner cutting is forbidden, so 8-connected reachability equals 4-connectivity
        if self._components is None:
            self._components, _ = ndimage.label(self.free, structure=FOUR_CONNECTED)
        return self._components

    def same_component(self, a: Cell, b: Cell) -> bool:
        return self.is_node(a) and self.is_node(b) and self.components[a] == self.components[b]

    def geodesic_distances(self, start: Cell) -> np.ndarray:
        """Dijkstra distances (cells) from start; inf where unreachable"""
        dist = np.full(self.free.shape, np.inf)
        if not self.is_node(start):
            return dist
        dist[start] = 0.0
        heap = [(0.0, start)]
        while heap:
            d, node = heapq.heappop(heap)
            if d > dist[node]:
                continue
            for nxt, cost in self.neighbors(node):
                nd = d + cost
                if nd < dist[nxt]:
                    dist[nxt] = nd
                    heapq.heappush(heap, (nd, nxt))
        return dist


def build_nav_graph(explored: ExploredMap) -> NavGraph:
    """Graph over currently known-free cells; unknown cells are untraversable"""
    return NavGraph(free=explored.free_mask().copy(), cell_size=explored.cell_size)


def snap_goal(graph: NavGraph, goal: GoalAction, start: Cell) -> Cell:
    """Reachable node closest (Euclidean) to the goal point; ties go to the lowest cell"""
    if not graph.is_node(start):
        raise PlanningError(f"start {start} is not a free cell")
    if next(graph.neighbors(start), None) is None:
        raise PlanningError(f"start {start} has no traversable neighbour")
    reachable = np.argwhere(graph.components == graph.components[start])
    centres = (reachable + 0.5) * graph.cell_size
    d2 = ((centres - np.asarray(goal.target)) ** 2).sum(axis=1)
    # argwhere is row-major sorted, so argmin breaks ties toward the lowest (i, j)
    return tuple(reachable[int(np.argmin(d2))].tolist())  # type: ignore[return-value]


def astar(graph: NavGraph, start: Cell, goal: Cell) -> list[Cell]:
    """Shortest 8-connected path under the admissible octile heuristic"""
    if not graph.same_component(start, goal):
        raise NoPathError(f"no path from {start} to {goal}")
    tie = count()
    frontier = [(octile(start, goal), next(tie), start)]
    came_from: dict[Cell, Cell | None] = {start: None}
    cost_so_far = {start: 0.0}
    while frontier:
        _, _, current = heapq.heappop(frontier)
        if current == goal:
            break
        for nxt, step in graph.neighbors(current):
            new_cost = cost_so_far[current] + step
            if nxt not in cost_so_far or new_cost < cost_so_far[nxt] - 1e-12:
                cost_so_far[nxt] = new_cost
                came_from[nxt] = current
                heapq.heappush(frontier, (new_cost + octile(nxt, goal), next(tie), nxt))
    path = [goal]
    while path[-1] != start:
        path.append(came_from[path[-1]])
    path.reverse()
    return path


def path_cost(path: list[Cell]) -> float:
    return float(sum(SQRT2 if a[0] != b[0] and a[1] != b[1] else 1.0 for a, b in zip(path, path[1:])))


def follow(
    scene: Scene,
    pose: AgentPose,
    path: list[Cell],
    n_steps: int,
    cam: CameraModel,
    first_frame_id: int = 0,
) -> tuple[AgentPose, list[FrameObservation], bool]:
    """Walk up to n_steps waypoints, one raycast frame per step

    Paths start at the agent's own cell, which is not a move: a path of
    length n gives at most n - 1 frames.
    Returns the final pose, the frames and whether a replan is needed because a
    waypoint turned out not to be walkable.
    """
    frames: list[FrameObservation] = []
    current = scene.cell_of(pose.position)
    waypoints = [c for c in path if c != current]
    for cell in waypoints[: max(0, n_steps)]:
        try:
            pose = step_agent(scene, pose, scene.cell_center(cell))
        except NotWalkableError as e:
            logger.info("waypoint %s rejected: %s", cell, e)
            return pose, frames, True
        frames.append(raycast_frame(scene, pose, cam, frame_id=first_frame_id + len(frames)))
    return pose, frames, False
