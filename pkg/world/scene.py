"""Synthetic voxel scenes: generation, walkability and agent locomotion"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import ndimage

from domain.constants import DEFAULT_VOXEL_SIZE, LABEL_FIRST_ID, LABEL_FREE, LABEL_WALL
from domain.errors import ConfigError, NotWalkableError, SceneGenerationError
from domain.models import AgentPose, Cell, Voxel

logger = logging.getLogger(__name__)

# 4-connectivity in the top-down plane; the planner forbids corner cutting, so
# walkable reachability is exactly 4-connected reachability.
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class GroundTruthObject:
    """Ground-truth object instance; used only by evaluation"""
    gt_id: int
    class_id: int
    voxels: frozenset[Voxel]


@dataclass(frozen=True)
class SceneGenConfig:
    """Parameters of the procedural scene generator"""
    dims: tuple[int, int, int] = (64, 64, 20)
    voxel_size: float = DEFAULT_VOXEL_SIZE
    n_classes: int = 8
    n_objects: int = 6
    object_size: tuple[int, int] = (2, 5)
    object_height: tuple[int, int] = (2, 6)
    n_partitions: int = 0
    door_width: int = 6
    agent_height: float = 0.6
    object_classes: tuple[int, ...] | None = None
    max_retries: int = 200

    def __post_init__(self) -> None:
        nx, ny, nz = self.dims
        if self.n_classes < 2:
            raise ConfigError("scene needs at least 2 object classes")
        if self.n_objects < 0:
            raise ConfigError("n_objects must be non-negative")
        if self.voxel_size <= 0.0:
            raise ConfigError("voxel_size must be positive")
        lo, hi = self.object_size
        if lo < 1 or hi < lo:
            raise ConfigError(f"invalid object_size range {self.object_size}")
        if self.object_height[0] < 1 or self.object_height[1] < self.object_height[0]:
            raise ConfigError(f"invalid object_height range {self.object_height}")
        # interior minus a one-cell clearance ring on both sides
        if self.n_objects > 0 and (hi + 4 > nx - 2 or hi + 4 > ny - 2 or self.object_height[1] >= nz):
            raise ConfigError(f"dims {self.dims} cannot fit objects of size up to {hi}x{hi}x{self.object_height[1]}")
        if self.agent_height_voxels >= nz:
            raise ConfigError("agent height must be below the scene ceiling")
        if self.object_classes is not None:
            if len(self.object_classes) != self.n_objects:
                raise ConfigError("object_classes must list one class per object")
            if any(not 0 <= c < self.n_classes for c in self.object_classes):
                raise ConfigError("object_classes entries must lie in [0, n_classes)")

    @property
    def agent_height_voxels(self) -> int:
        return max(1, int(math.ceil(self.agent_height / self.voxel_size - 1e-9)))

    @classmethod
    def from_dict(cls, data: dict) -> "SceneGenConfig":
        kwargs = dict(data)
        for key in ("dims", "object_size", "object_height", "object_classes"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(int(v) for v in kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(f"invalid scene config: {e}") from e

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "voxel_size": self.voxel_size,
            "n_classes": self.n_classes,
            "n_objects": self.n_objects,
            "object_size": list(self.object_size),
            "object_height": list(self.object_height),
            "n_partitions": self.n_partitions,
            "door_width": self.door_width,
            "agent_height": self.agent_height,
            "object_classes": None if self.object_classes is None else list(self.object_classes),
            "max_retries": self.max_retries,
        }


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable voxel world: wall occupancy plus ground-truth objects"""
    dims: tuple[int, int, int]
    voxel_size: float
    occupancy: np.ndarray
    objects: tuple[GroundTruthObject, ...]
    seed: int
    agent_height_voxels: int
    labels: np.ndarray = field(init=False, repr=False)
    walkable: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        occupancy = np.asarray(self.occupancy, dtype=bool)
        if occupancy.shape != tuple(self.dims):
            raise ConfigError(f"occupancy shape {occupancy.shape} does not match dims {self.dims}")
        labels = np.where(occupancy, LABEL_WALL, LABEL_FREE).astype(np.int32)
        for obj in self.objects:
            if obj.gt_id < 0:
                raise ConfigError(f"object id {obj.gt_id} is negative")
            if not obj.voxels:
                raise ConfigError(f"object {obj.gt_id} has no voxels")
            idx = np.array(sorted(obj.voxels), dtype=np.int64)
            if (idx < 0).any() or (idx >= np.array(self.dims)).any():
                raise ConfigError(f"object {obj.gt_id} leaves the grid")
            current = labels[idx[:, 0], idx[:, 1], idx[:, 2]]
            if (current == LABEL_WALL).any():
                raise ConfigError(f"object {obj.gt_id} overlaps a wall")
            if (current != LABEL_FREE).any():
                raise ConfigError(f"object {obj.gt_id} overlaps another object")
            labels[idx[:, 0], idx[:, 1], idx[:, 2]] = LABEL_FIRST_ID + obj.gt_id
        walkable = (labels[:, :, : self.agent_height_voxels] == LABEL_FREE).all(axis=2)
        occupancy.flags.writeable = False
        labels.flags.writeable = False
        walkable.flags.writeable = False
        object.__setattr__(self, "occupancy", occupancy)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "walkable", walkable)
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.voxel_size == other.voxel_size
            and self.seed == other.seed
            and self.agent_height_voxels == other.agent_height_voxels
            and np.array_equal(self.occupancy, other.occupancy)
            and self.objects == other.objects
        )

    __hash__ = None  # type: ignore[assignment]

    @cached_property
    def objects_by_id(self) -> dict[int, GroundTruthObject]:
        return {obj.gt_id: obj for obj in self.objects}

    @cached_property
    def surface_counts(self) -> dict[int, int]:
        """Number of voxels per object with at least one exposed face"""
        counts = {}
        faces = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
        for obj in self.objects:
            counts[obj.gt_id] = sum(
                1 for (x, y, z) in obj.voxels
                if any((x + dx, y + dy, z + dz) not in obj.voxels for dx, dy, dz in faces)
            )
        return counts

    @property
    def extent(self) -> tuple[float, float]:
        return (self.dims[0] * self.voxel_size, self.dims[1] * self.voxel_size)

    def in_grid(self, point: tuple[float, float]) -> bool:
        return 0.0 <= point[0] < self.extent[0] and 0.0 <= point[1] < self.extent[1]

    def cell_of(self, point: tuple[float, float]) -> Cell:
        return (int(math.floor(point[0] / self.voxel_size)), int(math.floor(point[1] / self.voxel_size)))

    def cell_center(self, cell: Cell) -> tuple[float, float]:
        return ((cell[0] + 0.5) * self.voxel_size, (cell[1] + 0.5) * self.voxel_size)

    def is_walkable(self, cell: Cell) -> bool:
        i, j = cell
        return 0 <= i < self.dims[0] and 0 <= j < self.dims[1] and bool(self.walkable[i, j])


def _carve_doors(wall_2d: np.ndarray, door_width: int, rng: np.random.Generator) -> None:
    """Open doors in interior walls until all free cells form one 4-connected region"""
    nx, ny = wall_2d.shape
    for _ in range(nx * ny):
        components, count = ndimage.label(~wall_2d, structure=FOUR_CONNECTED)
        if count <= 1:
            return
        candidates: list[tuple[int, int, int]] = []
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                if not wall_2d[i, j]:
                    continue
                left, right = components[i - 1, j], components[i + 1, j]
                if left and right and left != right:
                    candidates.append((i, j, 1))  # wall runs along y
                down, up = components[i, j - 1], components[i, j + 1]
                if down and up and down != up:
                    candidates.append((i, j, 0))  # wall runs along x
        if not candidates:
            raise SceneGenerationError("interior walls leave unconnected rooms")
        i, j, along_y = candidates[int(rng.integers(len(candidates)))]
        half = door_width // 2
        for offset in range(-half, door_width - half):
            a, b = (i, j + offset) if along_y else (i + offset, j)
            if 1 <= a < nx - 1 and 1 <= b < ny - 1:
                wall_2d[a, b] = False
    raise SceneGenerationError("door carving did not converge")


def _partition_walls(config: SceneGenConfig, rng: np.random.Generator) -> np.ndarray:
    nx, ny, _ = config.dims
    wall_2d = np.zeros((nx, ny), dtype=bool)
    wall_2d[0, :] = wall_2d[-1, :] = True
    wall_2d[:, 0] = wall_2d[:, -1] = True
    for p in range(config.n_partitions):
        if p % 2 == 0:
            c = int(rng.integers(nx // 4, max(nx // 4 + 1, 3 * nx // 4)))
            wall_2d[c, 1:-1] = True
        else:
            c = int(rng.integers(ny // 4, max(ny // 4 + 1, 3 * ny // 4)))
            wall_2d[1:-1, c] = True
    _carve_doors(wall_2d, config.door_width, rng)
    return wall_2d


def _walkable_connected(blocked: np.ndarray) -> bool:
    _, count = ndimage.label(~blocked, structure=FOUR_CONNECTED)
    return count == 1


def _place_objects(
    config: SceneGenConfig, wall_2d: np.ndarray, rng: np.random.Generator
) -> list[GroundTruthObject] | None:
    """One placement attempt; None when an object found no free spot"""
    nx, ny, _ = config.dims
    taken = wall_2d.copy()
    # objects are separated by a one-cell ring so that no two are 26-adjacent
    reserved = wall_2d.copy()
    objects: list[GroundTruthObject] = []
    lo, hi = config.object_size
    for gt_id in range(config.n_objects):
        placed = False
        for _ in range(config.max_retries):
            sx = int(rng.integers(lo, hi + 1))
            sy = int(rng.integers(lo, hi + 1))
            sz = int(rng.integers(config.object_height[0], config.object_height[1] + 1))
            x0 = int(rng.integers(2, nx - 2 - sx + 1))
            y0 = int(rng.integers(2, ny - 2 - sy + 1))
            ring = reserved[x0 - 1 : x0 + sx + 1, y0 - 1 : y0 + sy + 1]
            if ring.any():
                continue
            footprint = taken.copy()
            footprint[x0 : x0 + sx, y0 : y0 + sy] = True
            if not _walkable_connected(footprint):
                continue
            taken = footprint
            reserved[x0 : x0 + sx, y0 : y0 + sy] = True
            class_id = (
                config.object_classes[gt_id]
                if config.object_classes is not None
                else int(rng.integers(config.n_classes))
            )
            voxels = frozenset(
                (x, y, z) for x in range(x0, x0 + sx) for y in range(y0, y0 + sy) for z in range(sz)
            )
            objects.append(GroundTruthObject(gt_id=gt_id, class_id=class_id, voxels=voxels))
            placed = True
            break
        if not placed:
            return None
    return objects


def generate_scene(config: SceneGenConfig, seed: int) -> Scene:
    """Deterministically build a scene whose walkable cells are mutually reachable"""
    rng = np.random.default_rng(seed)
    nx, ny, nz = config.dims
    for attempt in range(config.max_retries):
        wall_2d = _partition_walls(config, rng)
        objects = _place_objects(config, wall_2d, rng)
        if objects is None:
            logger.debug("scene seed=%d attempt %d: object placement failed", seed, attempt)
            continue
        occupancy = np.repeat(wall_2d[:, :, None], nz, axis=2)
        scene = Scene(
            dims=(nx, ny, nz),
            voxel_size=config.voxel_size,
            occupancy=occupancy,
            objects=tuple(objects),
            seed=seed,
            agent_height_voxels=config.agent_height_voxels,
        )
        if not scene.walkable.any():
            continue
        logger.info("generated scene seed=%d with %d objects after %d attempt(s)", seed, len(objects), attempt + 1)
        return scene
    raise SceneGenerationError(f"could not place {config.n_objects} objects in {config.dims} after {config.max_retries} attempts")


def spawn_pose(scene: Scene, seed: int, camera_height: float = 0.5) -> AgentPose:
    """Uniformly random walkable cell centre and heading"""
    rng = np.random.default_rng(seed)
    cells = np.argwhere(scene.walkable)
    if len(cells) == 0:
        raise NotWalkableError("scene has no walkable cell")
    i, j = cells[int(rng.integers(len(cells)))]
    return AgentPose(
        position=scene.cell_center((int(i), int(j))),
        heading=float(rng.uniform(0.0, 2.0 * math.pi)),
        camera_height=camera_height,
    )


def default_step_length(scene: Scene) -> float:
    """Longest single move: one diagonal cell"""
    return math.sqrt(2.0) * scene.voxel_size * (1.0 + 1e-6)


def step_agent(
    scene: Scene, pose: AgentPose, waypoint: tuple[float, float], step_length: float | None = None
) -> AgentPose:
    """Move to a nearby walkable waypoint, facing the direction of motion"""
    limit = default_step_length(scene) if step_length is None else step_length
    dx = waypoint[0] - pose.position[0]
    dy = waypoint[1] - pose.position[1]
    distance = math.hypot(dx, dy)
    if distance > limit:
        raise NotWalkableError(f"waypoint {waypoint} is {distance:.3f} m away, step length is {limit:.3f} m")
    if not scene.in_grid(waypoint) or not scene.is_walkable(scene.cell_of(waypoint)):
        raise NotWalkableError(f"waypoint {waypoint} is not walkable")
    if distance < 1e-12:
        return pose
    return AgentPose(position=waypoint, heading=math.atan2(dy, dx), camera_height=pose.camera_height)


def turn_agent(pose: AgentPose, heading: float) -> AgentPose:
    """Rotate in place"""
    return replace(pose, heading=heading)
