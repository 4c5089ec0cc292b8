"""Project resolved voxel-map instances back onto every frame as consistent pseudo-labels"""
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from domain.constants import LABEL_FIRST_ID, LABEL_FREE, LABEL_WALL, MIN_MASK_PIXELS, SCHEMA_VERSION
from domain.errors import SceneFormatError
from domain.models import AgentPose, CameraModel, Pixel, PseudoLabel, bbox_of
from world.raycast import cast_pose, raycast_frame
from world.scene import Scene
from world.scene_io import decode_runs, encode_runs

from .detector import DetectorProfile, roi_features
from .voxel_map import SemanticVoxelMap

logger = logging.getLogger(__name__)

LabelRef = tuple[int, int]  # (frame_id, index of the label within the frame)


@dataclass
class PseudoFrame:
    frame_id: int
    pose: AgentPose
    labels: list[PseudoLabel] = field(default_factory=list)


@dataclass
class PseudoDataset:
    """Reconciled training set: one entry per collected frame, background frames included"""
    entries: list[PseudoFrame] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    image_size: tuple[int, int] = (64, 64)  # (width, height)

    def frame(self, frame_id: int) -> PseudoFrame:
        for entry in self.entries:
            if entry.frame_id == frame_id:
                return entry
        raise KeyError(frame_id)

    def label(self, ref: LabelRef) -> PseudoLabel:
        return self.frame(ref[0]).labels[ref[1]]

    def labels(self) -> list[PseudoLabel]:
        return [label for entry in self.entries for label in entry.labels]


def instance_label_volume(scene: Scene, vmap: SemanticVoxelMap) -> np.ndarray:
    """Scene walls plus voxel-map instances (LABEL_FIRST_ID + u); ground-truth objects are absent"""
    labels = np.where(scene.occupancy, LABEL_WALL, LABEL_FREE).astype(np.int32)
    dims = np.array(scene.dims)
    for u, record in vmap.instances.items():
        idx = np.array(sorted(record.voxels), dtype=np.int64)
        inside = ((idx >= 0) & (idx < dims)).all(axis=1)
        idx = idx[inside]
        labels[idx[:, 0], idx[:, 1], idx[:, 2]] = LABEL_FIRST_ID + u
    return labels


def project_volume(
    volume: np.ndarray, pose: AgentPose, cam: CameraModel, voxel_size: float
) -> dict[int, frozenset[Pixel]]:
    """Pixels whose ray first hits each instance, per instance id"""
    hits, _ = cast_pose(volume, pose, cam, voxel_size)
    label = hits.label.reshape(cam.height, cam.width)
    rows, cols = np.nonzero(label >= LABEL_FIRST_ID)
    masks: dict[int, set] = {}
    for r, c in zip(rows.tolist(), cols.tolist()):
        masks.setdefault(int(label[r, c]) - LABEL_FIRST_ID, set()).add((c, r))
    return {u: frozenset(m) for u, m in sorted(masks.items())}


def project_instance(scene: Scene, vmap: SemanticVoxelMap, u: int, pose: AgentPose, cam: CameraModel):
    """(mask, bbox) of instance u seen from pose, or None when fully occluded or out of view"""
    vmap.instance(u)
    masks = project_volume(instance_label_volume(scene, vmap), pose, cam, scene.voxel_size)
    mask = masks.get(u)
    if not mask:
        return None
    return mask, bbox_of(mask)


def reconcile(
    scene: Scene,
    vmap: SemanticVoxelMap,
    frames: list[tuple[int, AgentPose]],
    cam: CameraModel,
    profile: DetectorProfile | None = None,
    min_pixels: int = MIN_MASK_PIXELS,
    feature_seed: int = 0,
    provenance: dict | None = None,
) -> PseudoDataset:
    """Pseudo-labels for every instance visible in every frame

    All labels of one instance share its hard class and aggregated softmax. When
    a detector profile is given each label also carries the ROI feature of its mask.
    """
    if vmap.dirty:
        vmap.resolve_instances()
    volume = instance_label_volume(scene, vmap)
    lambda_bar = {u: vmap.aggregated_softmax(u) for u in vmap.instances}
    dataset = PseudoDataset(provenance=dict(provenance or {}), image_size=(cam.width, cam.height))
    dropped = 0
    for frame_id, pose in sorted(frames, key=lambda f: f[0]):
        entry = PseudoFrame(frame_id=frame_id, pose=pose)
        obs = raycast_frame(scene, pose, cam, frame_id) if profile is not None else None
        for u, mask in project_volume(volume, pose, cam, scene.voxel_size).items():
            if len(mask) < min_pixels:
                dropped += 1
                continue
            feature = None
            if profile is not None:
                feature = roi_features(profile, obs, mask, rng_seed=feature_seed * 1_000_003 + frame_id * 4096 + u)
            entry.labels.append(
                PseudoLabel(
                    frame_id=frame_id,
                    u=u,
                    class_id=vmap.instances[u].class_id,
                    lambda_bar=lambda_bar[u],
                    mask=mask,
                    bbox=bbox_of(mask),
                    feature=feature,
                )
            )
        dataset.entries.append(entry)
    logger.info(
        "reconciled %d frames into %d pseudo-labels (%d masks below %d pixels dropped)",
        len(dataset.entries), len(dataset.labels()), dropped, min_pixels,
    )
    return dataset


def enumerate_triplets(ids: list[tuple[int, int]]) -> list[tuple[int, int, int]]:
    """Index triplets over (frame_id, u) pairs: same u across frames, negative of another u"""
    triplets = []
    for a, (fa, ua) in enumerate(ids):
        for p, (fp, up) in enumerate(ids):
            if p == a or up != ua or fp == fa:
                continue
            for n, (_, un) in enumerate(ids):
                if un != ua:
                    triplets.append((a, p, n))
    return triplets


def select_triplets(
    triplets: list[tuple[int, int, int]], rng: np.random.Generator, max_triplets: int | None
) -> list[tuple[int, int, int]]:
    if max_triplets is None or len(triplets) <= max_triplets:
        return triplets
    keep = np.sort(rng.choice(len(triplets), size=max_triplets, replace=False))
    return [triplets[k] for k in keep.tolist()]


def mine_triplets(
    dataset: PseudoDataset, batch: list[int], rng: np.random.Generator, max_triplets: int | None = None
) -> list[tuple[LabelRef, LabelRef, LabelRef]]:
    """(anchor, positive, negative) label references within a batch of frames"""
    refs: list[LabelRef] = []
    ids: list[tuple[int, int]] = []
    for frame_id in batch:
        for k, label in enumerate(dataset.frame(frame_id).labels):
            refs.append((frame_id, k))
            ids.append((frame_id, label.u))
    chosen = select_triplets(enumerate_triplets(ids), rng, max_triplets)
    return [(refs[a], refs[p], refs[n]) for a, p, n in chosen]


def _mask_runs(mask: frozenset[Pixel], width: int, height: int) -> list[list[int]]:
    flat = np.zeros(width * height, dtype=np.int8)
    for c, r in mask:
        flat[r * width + c] = 1
    return encode_runs(flat)


def dump_dataset(dataset: PseudoDataset) -> str:
    """JSON lines: one header record, then one record per frame"""
    width, height = dataset.image_size
    lines = [json.dumps({"schema_version": SCHEMA_VERSION, "provenance": dataset.provenance, "image_size": [width, height]})]
    for entry in dataset.entries:
        labels = []
        for label in entry.labels:
            record = {
                "u": label.u,
                "y": label.class_id,
                "lambda_bar": [round(float(p), 12) for p in label.lambda_bar],
                "bbox": list(label.bbox),
                "mask": _mask_runs(label.mask, width, height),
            }
            if label.feature is not None:
                record["feature"] = [float(v) for v in label.feature]
            labels.append(record)
        lines.append(json.dumps({"frame_id": entry.frame_id, "pose": entry.pose.to_dict(), "labels": labels}))
    return "\n".join(lines) + "\n"


def load_dataset(text: str) -> PseudoDataset:
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise SceneFormatError("empty dataset file", "line 1")
    try:
        header = json.loads(rows[0])
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid JSON: {e.msg}", f"line 1 column {e.colno}") from e
    if header.get("schema_version") != SCHEMA_VERSION:
        raise SceneFormatError(f"unsupported schema_version {header.get('schema_version')!r}", "line 1")
    width, height = header["image_size"]
    dataset = PseudoDataset(provenance=header.get("provenance", {}), image_size=(width, height))
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            record = json.loads(row)
        except json.JSONDecodeError as e:
            raise SceneFormatError(f"invalid JSON: {e.msg}", f"line {lineno} column {e.colno}") from e
        entry = PseudoFrame(frame_id=int(record["frame_id"]), pose=AgentPose.from_dict(record["pose"]))
        for k, raw in enumerate(record["labels"]):
            flat = decode_runs(raw["mask"], width * height, f"line {lineno} labels[{k}].mask")
            idx = np.flatnonzero(flat)
            mask = frozenset((int(i % width), int(i // width)) for i in idx)
            entry.labels.append(
                PseudoLabel(
                    frame_id=entry.frame_id,
                    u=int(raw["u"]),
                    class_id=int(raw["y"]),
                    lambda_bar=np.asarray(raw["lambda_bar"], dtype=float),
                    mask=mask,
                    bbox=tuple(raw["bbox"]),
                    feature=None if raw.get("feature") is None else np.asarray(raw["feature"], dtype=float),
                )
            )
        dataset.entries.append(entry)
    return dataset
