"""Versioned JSON scene files with run-length encoded occupancy"""
import json
import logging

import numpy as np
from scipy import ndimage

from domain.constants import SCENE_FILE_VERSION
from domain.errors import ConfigError, SceneFormatError

from .scene import GroundTruthObject, Scene

logger = logging.getLogger(__name__)

TWENTY_SIX_CONNECTED = np.ones((3, 3, 3), dtype=bool)


def encode_runs(values: np.ndarray) -> list[list[int]]:
    """Run-length encode a flat 0/1 array as [[value, count], ...]"""
    flat = np.asarray(values, dtype=np.int8).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    return [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]


def decode_runs(runs: list, size: int, location: str) -> np.ndarray:
    out = np.empty(size, dtype=bool)
    pos = 0
    for k, run in enumerate(runs):
        if not isinstance(run, list) or len(run) != 2:
            raise SceneFormatError("run must be [value, count]", f"{location}[{k}]")
        value, count = run
        if value not in (0, 1) or not isinstance(count, int) or count <= 0:
            raise SceneFormatError("invalid run", f"{location}[{k}]")
        if pos + count > size:
            raise SceneFormatError("runs exceed grid size", f"{location}[{k}]")
        out[pos : pos + count] = bool(value)
        pos += count
    if pos != size:
        raise SceneFormatError(f"runs cover {pos} of {size} voxels", location)
    return out


def _is_26_connected(voxels: frozenset) -> bool:
    idx = np.array(sorted(voxels), dtype=np.int64)
    local = idx - idx.min(axis=0)
    volume = np.zeros(tuple(local.max(axis=0) + 1), dtype=bool)
    volume[local[:, 0], local[:, 1], local[:, 2]] = True
    _, count = ndimage.label(volume, structure=TWENTY_SIX_CONNECTED)
    return count == 1


def scene_to_dict(scene: Scene) -> dict:
    return {
        "version": SCENE_FILE_VERSION,
        "seed": scene.seed,
        "voxel_size": scene.voxel_size,
        "dims": list(scene.dims),
        "agent_height_voxels": scene.agent_height_voxels,
        "occupancy": encode_runs(scene.occupancy),
        "objects": [
            {"gt_id": obj.gt_id, "class_id": obj.class_id, "voxels": [list(v) for v in sorted(obj.voxels)]}
            for obj in scene.objects
        ],
    }


def save_scene(scene: Scene) -> bytes:
    """Serialize a scene to UTF-8 JSON bytes"""
    return json.dumps(scene_to_dict(scene), separators=(",", ":")).encode("utf-8")


def _require(data: dict, key: str, location: str):
    if key not in data:
        raise SceneFormatError(f"missing key '{key}'", location or "$")
    return data[key]


def scene_from_dict(data: dict) -> Scene:
    if not isinstance(data, dict):
        raise SceneFormatError("scene document must be an object", "$")
    version = _require(data, "version", "")
    if version != SCENE_FILE_VERSION:
        raise SceneFormatError(f"unsupported scene version {version!r}", "version")
    dims = _require(data, "dims", "")
    if not isinstance(dims, list) or len(dims) != 3 or not all(isinstance(d, int) and d > 0 for d in dims):
        raise SceneFormatError("dims must be three positive integers", "dims")
    size = dims[0] * dims[1] * dims[2]
    occupancy = decode_runs(_require(data, "occupancy", ""), size, "occupancy").reshape(dims)
    objects = []
    seen_ids: set[int] = set()
    for k, raw in enumerate(_require(data, "objects", "")):
        location = f"objects[{k}]"
        try:
            gt_id = int(raw["gt_id"])
            class_id = int(raw["class_id"])
            voxels = frozenset((int(v[0]), int(v[1]), int(v[2])) for v in raw["voxels"])
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise SceneFormatError(f"invalid object: {e}", location) from e
        if gt_id < 0 or gt_id in seen_ids:
            raise SceneFormatError(f"gt_id must be a unique non-negative integer, got {gt_id}", f"{location}.gt_id")
        if not voxels:
            raise SceneFormatError("object has no voxels", f"{location}.voxels")
        if not _is_26_connected(voxels):
            raise SceneFormatError("object voxels are not one 26-connected component", f"{location}.voxels")
        seen_ids.add(gt_id)
        objects.append(GroundTruthObject(gt_id=gt_id, class_id=class_id, voxels=voxels))
    try:
        return Scene(
            dims=tuple(dims),
            voxel_size=float(_require(data, "voxel_size", "")),
            occupancy=occupancy,
            objects=tuple(objects),
            seed=int(_require(data, "seed", "")),
            agent_height_voxels=int(_require(data, "agent_height_voxels", "")),
        )
    except ConfigError as e:
        raise SceneFormatError(str(e), "objects") from e


def load_scene(raw: bytes) -> Scene:
    """Parse a scene file; errors carry the line/column or JSON path of the problem"""
    try:
        data = json.loads(raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw)
    except UnicodeDecodeError as e:
        raise SceneFormatError("scene file is not UTF-8", f"byte {e.start}") from e
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid JSON: {e.msg}", f"line {e.lineno} column {e.colno}") from e
    return scene_from_dict(data)
