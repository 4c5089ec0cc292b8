"""Semantic voxel map: per-voxel logit accumulation and 26-connected instances"""
import copy
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from domain.constants import DEFAULT_VOXEL_SIZE, SCHEMA_VERSION
from domain.errors import ConfigError, UnknownInstanceError
from domain.models import Detection, FrameObservation, Voxel

from .detector import normalized_logits

logger = logging.getLogger(__name__)

TWENTY_SIX_CONNECTED = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class LogitEntry:
    """Logits of one detection as recorded in a voxel"""
    frame_id: int
    det_index: int
    logits: np.ndarray
    probs: np.ndarray

    @property
    def key(self) -> tuple[int, int]:
        return (self.frame_id, self.det_index)

    @property
    def rank(self) -> tuple[float, int, int]:
        # smaller is better: highest score, then lower class, then earlier frame
        best_class = int(np.argmax(self.probs))
        return (-float(self.probs[best_class]), best_class, self.frame_id)


@dataclass
class VoxelCell:
    entries: list[LogitEntry] = field(default_factory=list)
    hard_label: int = -1
    owner: int | None = None

    def relabel(self) -> None:
        best = min(self.entries, key=lambda e: e.rank)
        self.hard_label = best.rank[1]


@dataclass
class InstanceRecord:
    """One 26-connected component of equal hard label"""
    u: int
    class_id: int
    voxels: frozenset[Voxel]
    logit_set: list[LogitEntry]
    bbox3d: tuple[Voxel, Voxel]

    @property
    def n_views(self) -> int:
        return len(self.logit_set)

    def footprint_centroid(self, voxel_size: float) -> tuple[float, float]:
        """Mean top-down position of the instance's voxel centres, meters"""
        xy = np.array([(v[0], v[1]) for v in self.voxels], dtype=float)
        centre = (xy.mean(axis=0) + 0.5) * voxel_size
        return (float(centre[0]), float(centre[1]))


def voxel_index(point, voxel_size: float) -> Voxel:
    return tuple(int(math.floor(c / voxel_size)) for c in point)  # type: ignore[return-value]


class SemanticVoxelMap:
    """Voxelised detections of one episode

    Every masked ray appends its detection's logits to the voxel containing the
    ray's hit point. Hard labels and instances are recomputed from scratch by
    `resolve_instances`.
    """

    def __init__(self, voxel_size: float = DEFAULT_VOXEL_SIZE) -> None:
        if voxel_size <= 0.0:
            raise ConfigError("voxel_size must be positive")
        self.voxel_size = voxel_size
        self.cells: dict[Voxel, VoxelCell] = {}
        self.instances: dict[int, InstanceRecord] = {}
        self.dirty = False
        self.diagnostics: Counter = Counter()

    def __len__(self) -> int:
        return len(self.cells)

    def insert_detection(self, det: Detection, obs: FrameObservation) -> "SemanticVoxelMap":
        entry = LogitEntry(det.frame_id, det.det_index, det.logits, normalized_logits(det.logits))
        inserted = 0
        for col, row in sorted(det.mask):
            point = obs.hit_points[row, col]
            if not np.isfinite(point).all():
                self.diagnostics["skipped_pixels"] += 1
                continue
            self.cells.setdefault(voxel_index(point, self.voxel_size), VoxelCell()).entries.append(entry)
            inserted += 1
        if inserted:
            self.dirty = True
        elif det.mask:
            logger.debug("detection %d of frame %d has no pixel with depth", det.det_index, det.frame_id)
        self.diagnostics["inserted_rays"] += inserted
        return self

    def resolve_instances(self) -> "SemanticVoxelMap":
        """Hard labels per voxel, then 26-connected components per label"""
        self.instances = {}
        self.dirty = False
        if not self.cells:
            return self
        for cell in self.cells.values():
            cell.relabel()
            cell.owner = None

        index = np.array(sorted(self.cells), dtype=np.int64)
        origin = index.min(axis=0)
        local = index - origin
        volume = np.full(tuple(local.max(axis=0) + 1), -1, dtype=np.int64)
        volume[local[:, 0], local[:, 1], local[:, 2]] = [self.cells[tuple(v)].hard_label for v in index.tolist()]

        components: list[tuple[Voxel, int, list[Voxel]]] = []
        for class_id in np.unique(volume[volume >= 0]).tolist():
            labelled, count = ndimage.label(volume == class_id, structure=TWENTY_SIX_CONNECTED)
            member_labels = labelled[local[:, 0], local[:, 1], local[:, 2]]
            for k in range(1, count + 1):
                voxels = [tuple(v) for v in index[member_labels == k].tolist()]
                components.append((min(voxels), class_id, voxels))

        components.sort(key=lambda c: c[0])
        for u, (_, class_id, voxels) in enumerate(components):
            entries: dict[tuple[int, int], LogitEntry] = {}
            for v in voxels:
                cell = self.cells[v]
                cell.owner = u
                for e in cell.entries:
                    entries.setdefault(e.key, e)
            arr = np.array(voxels)
            self.instances[u] = InstanceRecord(
                u=u,
                class_id=class_id,
                voxels=frozenset(voxels),
                logit_set=[entries[k] for k in sorted(entries)],
                bbox3d=(tuple(arr.min(axis=0).tolist()), tuple(arr.max(axis=0).tolist())),
            )
        logger.debug("resolved %d instances over %d voxels", len(self.instances), len(self.cells))
        return self

    def instance(self, u: int) -> InstanceRecord:
        try:
            return self.instances[u]
        except KeyError:
            raise UnknownInstanceError(f"unknown instance {u}") from None

    def aggregated_softmax(self, u: int) -> np.ndarray:
        """Mean of the softmax vectors of every detection in Q(u)"""
        record = self.instance(u)
        return np.mean([e.probs for e in record.logit_set], axis=0)

    def logit_set(self, u: int) -> np.ndarray:
        return np.array([e.logits for e in self.instance(u).logit_set])

    def labeled_voxels(self) -> int:
        return sum(1 for cell in self.cells.values() if cell.owner is not None)

    def copy(self) -> "SemanticVoxelMap":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "voxel_size": self.voxel_size,
            "voxels": [
                {"index": list(v), "hard_label": cell.hard_label, "n_entries": len(cell.entries)}
                for v, cell in sorted(self.cells.items())
            ],
            "instances": [
                {
                    "u": record.u,
                    "class": record.class_id,
                    "n_voxels": len(record.voxels),
                    "lambda_bar": [round(float(p), 9) for p in self.aggregated_softmax(record.u)],
                }
                for record in self.instances.values()
            ],
            "diagnostics": dict(self.diagnostics),
        }
