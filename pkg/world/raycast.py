"""Vectorised voxel traversal (3D DDA) and per-frame ray fans"""
import logging
from dataclasses import dataclass

import numpy as np

from domain.constants import LABEL_FIRST_ID, LABEL_FREE, LABEL_WALL, RAY_FLOOR, RAY_NONE, RAY_OBJECT, RAY_WALL
from domain.errors import PoseError
from domain.models import AgentPose, CameraModel, FrameObservation

from .scene import Scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RayHits:
    """Result of casting a batch of rays through a label volume

    Distances are in voxel units along unit-length directions. `label` is the
    volume label of the first solid voxel (-1 when nothing solid was hit).
    """
    t_enter: np.ndarray
    t_exit: np.ndarray
    label: np.ndarray
    voxel: np.ndarray
    floor: np.ndarray
    traversed_cells: np.ndarray


def ray_directions(cam: CameraModel, heading: float) -> np.ndarray:
    """Unit ray directions, shape (height, width, 3); column 0 is the left edge"""
    cols = (np.arange(cam.width) + 0.5) / cam.width - 0.5
    rows = 0.5 - (np.arange(cam.height) + 0.5) / cam.height
    yaw = heading - cols * cam.hfov
    pitch = rows * cam.vfov
    cos_p = np.cos(pitch)[:, None]
    dirs = np.empty((cam.height, cam.width, 3))
    dirs[..., 0] = cos_p * np.cos(yaw)[None, :]
    dirs[..., 1] = cos_p * np.sin(yaw)[None, :]
    dirs[..., 2] = np.broadcast_to(np.sin(pitch)[:, None], (cam.height, cam.width))
    return dirs


def cast_labels(labels: np.ndarray, origin: np.ndarray, dirs: np.ndarray, max_t: float) -> RayHits:
    """Walk every ray voxel by voxel until it hits a non-free label, leaves the grid or exceeds max_t

    Rays leaving through the bottom of the grid are floor hits.
    """
    n = len(dirs)
    dims = np.array(labels.shape, dtype=np.int64)
    origin = np.asarray(origin, dtype=float)
    idx = np.tile(np.floor(origin).astype(np.int64), (n, 1))
    step = np.sign(dirs).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = np.where(step != 0, 1.0 / np.abs(dirs), np.inf)
        boundary = idx + (step > 0)
        t_max = np.where(step != 0, (boundary - origin) / dirs, np.inf)

    t_enter = np.zeros(n)
    hit_t = np.full(n, np.inf)
    hit_exit = np.full(n, np.inf)
    hit_label = np.full(n, -1, dtype=np.int32)
    hit_voxel = np.full((n, 3), -1, dtype=np.int64)
    floor = np.zeros(n, dtype=bool)
    traversed: list[np.ndarray] = []

    active = np.arange(n)
    while active.size:
        v = idx[active]
        inside = ((v >= 0) & (v < dims)).all(axis=1)
        leaving = active[~inside]
        if leaving.size:
            below = leaving[idx[leaving, 2] < 0]
            floor[below] = True
            hit_t[below] = t_enter[below]
            hit_exit[below] = t_enter[below]
        active = active[inside]
        v = v[inside]
        if not active.size:
            break
        lab = labels[v[:, 0], v[:, 1], v[:, 2]]
        solid = lab != LABEL_FREE
        hits = active[solid]
        if hits.size:
            hit_label[hits] = lab[solid]
            hit_voxel[hits] = v[solid]
            hit_t[hits] = t_enter[hits]
            hit_exit[hits] = t_max[hits].min(axis=1)
        free = active[~solid]
        traversed.append(v[~solid, :2])
        if not free.size:
            break
        axis = np.argmin(t_max[free], axis=1)
        t_enter[free] = t_max[free, axis]
        t_max[free, axis] += t_delta[free, axis]
        idx[free, axis] += step[free, axis]
        active = free[t_enter[free] <= max_t]

    hit_any = (hit_label >= 0) | floor
    hit_t[~hit_any] = np.inf
    cells = np.concatenate(traversed + [hit_voxel[hit_label >= 0, :2]]) if traversed else np.empty((0, 2), dtype=np.int64)
    return RayHits(
        t_enter=hit_t,
        t_exit=hit_exit,
        label=hit_label,
        voxel=hit_voxel,
        floor=floor,
        traversed_cells=np.unique(cells, axis=0) if len(cells) else cells.reshape(0, 2),
    )


def camera_origin(pose: AgentPose, voxel_size: float) -> np.ndarray:
    """Camera centre in voxel units"""
    return np.array([pose.position[0], pose.position[1], pose.camera_height]) / voxel_size


def cast_pose(labels: np.ndarray, pose: AgentPose, cam: CameraModel, voxel_size: float) -> tuple[RayHits, np.ndarray]:
    """Cast the camera's ray fan from a pose; returns hits and the (N, 3) directions"""
    dirs = ray_directions(cam, pose.heading).reshape(-1, 3)
    hits = cast_labels(labels, camera_origin(pose, voxel_size), dirs, cam.max_range / voxel_size)
    return hits, dirs


def raycast_frame(scene: Scene, pose: AgentPose, cam: CameraModel, frame_id: int = 0) -> FrameObservation:
    """Render one frame as a ray fan against walls and ground-truth objects"""
    if not scene.in_grid(pose.position):
        raise PoseError(f"pose {pose.position} lies outside the {scene.extent} m scene")
    if not 0.0 < pose.camera_height < scene.dims[2] * scene.voxel_size:
        raise PoseError(f"camera height {pose.camera_height} m lies outside the scene")
    hits, dirs = cast_pose(scene.labels, pose, cam, scene.voxel_size)
    shape = (cam.height, cam.width)

    kind = np.full(len(dirs), RAY_NONE, dtype=np.int8)
    kind[hits.floor] = RAY_FLOOR
    kind[hits.label == LABEL_WALL] = RAY_WALL
    is_object = hits.label >= LABEL_FIRST_ID
    kind[is_object] = RAY_OBJECT

    gt = np.where(is_object, hits.label - LABEL_FIRST_ID, -1)
    origin = camera_origin(pose, scene.voxel_size)
    with np.errstate(invalid="ignore"):
        mid_t = 0.5 * (hits.t_enter + hits.t_exit)
        points = (origin[None, :] + dirs * mid_t[:, None]) * scene.voxel_size
    points[~is_object] = np.nan

    visible: dict[int, set] = {}
    for gt_id, voxel in zip(gt[is_object].tolist(), hits.voxel[is_object].tolist()):
        visible.setdefault(gt_id, set()).add(tuple(voxel))

    surface = scene.surface_counts
    fractions = {gt_id: min(1.0, len(voxels) / max(1, surface[gt_id])) for gt_id, voxels in visible.items()}
    classes = {gt_id: scene.objects_by_id[gt_id].class_id for gt_id in visible}

    depth = hits.t_enter * scene.voxel_size
    logger.debug("frame %d: %d object rays, %d explored cells", frame_id, int(is_object.sum()), len(hits.traversed_cells))
    return FrameObservation(
        frame_id=frame_id,
        pose=pose,
        visible={k: frozenset(v) for k, v in sorted(visible.items())},
        depth=depth.reshape(shape),
        explored_delta=frozenset(map(tuple, hits.traversed_cells.tolist())),
        hit_kind=kind.reshape(shape),
        hit_label=gt.reshape(shape),
        hit_voxel=hits.voxel.reshape(shape + (3,)),
        hit_points=points.reshape(shape + (3,)),
        max_range=cam.max_range,
        visible_fraction=dict(sorted(fractions.items())),
        visible_classes=dict(sorted(classes.items())),
    )
