"""Unit tests for pseudo-label reconciliation and triplet mining"""
import math
from dataclasses import replace

import numpy as np
import pytest

from domain.errors import SceneFormatError
from domain.models import AgentPose, CameraModel, PseudoLabel
from harness.episode import run_episode
from perception.detector import DetectorProfile, normalized_logits
from perception.reconciliation import (
    PseudoDataset,
    PseudoFrame,
    dump_dataset,
    enumerate_triplets,
    instance_label_volume,
    load_dataset,
    mine_triplets,
    project_instance,
    reconcile,
    select_triplets,
)
from perception.voxel_map import LogitEntry, SemanticVoxelMap, VoxelCell

EAST = AgentPose(position=(1.25, 2.25), heading=0.0, camera_height=0.75)
WEST = AgentPose(position=(1.25, 2.25), heading=math.pi, camera_height=0.75)


def box_map(box_room, views=([0.0, 0.0, 0.0, 5.0, 0.0], [0.0, 0.0, 2.0, 3.0, 0.0])) -> SemanticVoxelMap:
    """Voxel map holding the box object as one instance seen in several frames"""
    vmap = SemanticVoxelMap(box_room.voxel_size)
    for voxel in sorted(box_room.objects[0].voxels):
        cell = vmap.cells.setdefault(voxel, VoxelCell())
        for frame_id, logits in enumerate(views):
            logits = np.asarray(logits)
            cell.entries.append(LogitEntry(frame_id, 0, logits, normalized_logits(logits)))
    vmap.dirty = True
    return vmap.resolve_instances()


@pytest.mark.unit
class TestReconcile:
    """Test projection of voxel-map instances into frames"""

    def test_instance_volume_keeps_walls_only(self, box_room):
        """Test that the label volume holds walls and map instances, not scene objects"""
        volume = instance_label_volume(box_room, SemanticVoxelMap(box_room.voxel_size))
        assert volume[0, 5, 2] == 1
        assert volume[6, 4, 0] == 0

    def test_projected_mask_matches_rendered_object(self, box_room, narrow_camera, box_frame):
        """Test that an instance covering the object projects onto the object's pixels"""
        vmap = box_map(box_room)
        mask, bbox = project_instance(box_room, vmap, 0, EAST, narrow_camera)
        assert mask == box_frame.object_mask(0)
        assert (4, 4) in mask
        assert bbox[0] <= 4 <= bbox[2]

    def test_out_of_view_instance(self, box_room, narrow_camera):
        """Test that an instance behind the camera has no projection"""
        assert project_instance(box_room, box_map(box_room), 0, WEST, narrow_camera) is None

    def test_labels_share_instance_distribution(self, box_room, narrow_camera):
        """Test that every label of an instance carries its hard class and averaged softmax"""
        vmap = box_map(box_room)
        frames = [(0, EAST), (1, AgentPose(position=(1.75, 2.75), heading=-0.3, camera_height=0.75))]
        dataset = reconcile(box_room, vmap, frames, narrow_camera, min_pixels=1)
        labels = dataset.labels()
        assert len(labels) == 2
        assert {label.class_id for label in labels} == {3}
        for label in labels:
            assert label.lambda_bar == pytest.approx(vmap.aggregated_softmax(0))
            assert label.feature is None

    def test_background_frames_kept(self, box_room, narrow_camera):
        """Test that a frame with nothing visible stays in the dataset with no labels"""
        dataset = reconcile(box_room, box_map(box_room), [(1, WEST), (0, EAST)], narrow_camera, min_pixels=1)
        assert [entry.frame_id for entry in dataset.entries] == [0, 1]
        assert dataset.frame(1).labels == []
        assert dataset.image_size == (9, 9)

    def test_small_masks_dropped(self, box_room, narrow_camera):
        """Test that masks under the pixel threshold produce no label"""
        dataset = reconcile(box_room, box_map(box_room), [(0, EAST)], narrow_camera, min_pixels=82)
        assert dataset.labels() == []

    def test_features_attached_with_profile(self, box_room, narrow_camera, noise_free_profile):
        """Test that a detector profile adds an ROI feature to each label"""
        dataset = reconcile(box_room, box_map(box_room), [(0, EAST)], narrow_camera, noise_free_profile, min_pixels=1)
        (label,) = dataset.labels()
        assert label.feature.shape == (noise_free_profile.feature_dim,)

    def test_resolves_dirty_map(self, box_room, narrow_camera):
        """Test that an unresolved map is resolved before projection"""
        vmap = box_map(box_room)
        vmap.dirty = True
        assert len(reconcile(box_room, vmap, [(0, EAST)], narrow_camera, min_pixels=1).labels()) == 1
        assert not vmap.dirty


@pytest.mark.unit
@pytest.mark.slow
class TestRecallRecovery:
    """Test that reconciliation labels objects the detector missed"""

    def test_pseudo_labels_outnumber_detections(self, small_run_config):
        """Test that with missed detections the episode yields at least as many labels as detections"""
        config = replace(
            small_run_config,
            detector=DetectorProfile(miss_rate=0.5),
            camera=CameraModel(hfov=math.radians(90.0), vfov=math.radians(90.0), width=32, height=32, max_range=3.0),
        )
        n_labels = n_detections = 0
        for seed in range(5):
            result = run_episode(config, seed, evaluate=False)
            n_labels += len(result.dataset.labels())
            n_detections += len(result.detections)
        assert n_detections > 0
        assert n_labels >= n_detections


@pytest.mark.unit
class TestTriplets:
    """Test triplet enumeration and mining"""

    def test_enumeration(self):
        """Test that positives share the instance across frames and negatives differ"""
        assert enumerate_triplets([(0, 0), (1, 0), (0, 1)]) == [(0, 1, 2), (1, 0, 2)]

    def test_no_positive_in_same_frame(self):
        """Test that two labels of one instance in the same frame are not a pair"""
        assert enumerate_triplets([(0, 0), (0, 0), (0, 1)]) == []

    def test_selection_cap(self):
        """Test that selection keeps at most the requested number, in order"""
        triplets = [(k, k, k) for k in range(10)]
        chosen = select_triplets(triplets, np.random.default_rng(0), 4)
        assert len(chosen) == 4
        assert chosen == sorted(chosen)
        assert select_triplets(triplets, np.random.default_rng(0), None) == triplets

    def test_mining_returns_label_references(self):
        """Test that mined triplets point at labels of the batch frames"""
        dataset = PseudoDataset(
            entries=[
                PseudoFrame(0, EAST, labels=[_label(0, 0), _label(0, 1)]),
                PseudoFrame(1, EAST, labels=[_label(1, 0)]),
            ]
        )
        triplets = mine_triplets(dataset, [0, 1], np.random.default_rng(0))
        assert triplets == [((0, 0), (1, 0), (0, 1)), ((1, 0), (0, 0), (0, 1))]
        for anchor, positive, negative in triplets:
            assert dataset.label(anchor).u == dataset.label(positive).u != dataset.label(negative).u


def _label(frame_id: int, u: int) -> PseudoLabel:
    return PseudoLabel(frame_id, u, u, np.array([0.5, 0.5]), frozenset({(0, 0)}), (0, 0, 0, 0))


@pytest.mark.unit
class TestDatasetFile:
    """Test the JSON lines dataset format"""

    def test_dump_and_load(self, box_room, narrow_camera, noise_free_profile):
        """Test that a dumped dataset loads back with the same labels"""
        dataset = reconcile(
            box_room, box_map(box_room), [(0, EAST), (1, WEST)], narrow_camera, noise_free_profile,
            min_pixels=1, provenance={"seed": 3},
        )
        text = dump_dataset(dataset)
        assert len(text.splitlines()) == 3
        loaded = load_dataset(text)
        assert loaded.provenance == {"seed": 3}
        assert [e.frame_id for e in loaded.entries] == [0, 1]
        (original,), (restored,) = dataset.frame(0).labels, loaded.frame(0).labels
        assert restored.mask == original.mask
        assert restored.class_id == 3
        assert restored.lambda_bar == pytest.approx(original.lambda_bar)
        assert restored.feature == pytest.approx(original.feature)

    def test_empty_file(self):
        """Test that an empty file is a format error"""
        with pytest.raises(SceneFormatError):
            load_dataset("")

    def test_wrong_version(self):
        """Test that another schema version is refused"""
        with pytest.raises(SceneFormatError):
            load_dataset('{"schema_version": 99, "image_size": [4, 4]}\n')

    def test_bad_json_location(self):
        """Test that a broken record reports its line"""
        with pytest.raises(SceneFormatError) as excinfo:
            load_dataset('{"schema_version": 1, "image_size": [4, 4]}\n{broken\n')
        assert excinfo.value.location.startswith("line 2")
