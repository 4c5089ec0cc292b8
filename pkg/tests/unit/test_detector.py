"""Unit tests for the noisy detector"""
import numpy as np
import pytest

from domain.errors import ConfigError, NonFiniteError
from perception.detector import (
    DetectorProfile,
    confusion_with_pairs,
    detect,
    normalized_logits,
    roi_features,
    sample_logits,
    softmax_rows,
    view_noise_scale,
)


@pytest.mark.unit
class TestConfusion:
    """Test confusion matrix construction"""

    def test_pair_swap(self):
        """Test a symmetric swap between two classes"""
        confusion = confusion_with_pairs(4, [(1, 2)], 0.3)
        assert confusion[1, 1] == pytest.approx(0.7)
        assert confusion[1, 2] == pytest.approx(0.3)
        assert confusion[2, 1] == pytest.approx(0.3)
        assert confusion[0, 0] == 1.0
        assert np.allclose(confusion.sum(axis=1), 1.0)

    def test_invalid_pair(self):
        """Test that a pair outside the class range is rejected"""
        with pytest.raises(ConfigError):
            confusion_with_pairs(3, [(0, 3)], 0.2)

    def test_profile_rejects_bad_rows(self):
        """Test that confusion rows must sum to one"""
        with pytest.raises(ConfigError):
            DetectorProfile(n_classes=2, confusion=np.array([[0.5, 0.4], [0.0, 1.0]]))

    def test_profile_from_dict_pairs(self):
        """Test building a profile from confusable pairs"""
        profile = DetectorProfile.from_dict({"n_classes": 8, "confusable_pairs": [[2, 5]], "flip": 0.4})
        assert profile.confusion[2, 5] == pytest.approx(0.4)
        assert profile.confusion[5, 2] == pytest.approx(0.4)

    def test_profile_dict_round_trip(self):
        """Test that to_dict output rebuilds the same profile"""
        profile = DetectorProfile(kappa=3.0, miss_rate=0.2, feature_seed=4)
        rebuilt = DetectorProfile.from_dict(profile.to_dict())
        assert np.array_equal(rebuilt.confusion, profile.confusion)
        assert np.array_equal(rebuilt.feature_means, profile.feature_means)
        assert rebuilt.kappa == 3.0

    def test_miss_rate_range(self):
        """Test that a detector that always misses is rejected"""
        with pytest.raises(ConfigError):
            DetectorProfile(miss_rate=1.0)


@pytest.mark.unit
class TestNormalizedLogits:
    """Test softmax normalization"""

    def test_simplex(self):
        """Test that outputs lie in the probability simplex"""
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = normalized_logits(rng.normal(0.0, 10.0, size=6))
            assert (p >= 0.0).all()
            assert abs(p.sum() - 1.0) < 1e-9

    def test_large_logits_stable(self):
        """Test that huge logits do not overflow"""
        p = normalized_logits([1000.0, 0.0])
        assert p[0] == pytest.approx(1.0)

    def test_non_finite(self):
        """Test that NaN logits are refused"""
        with pytest.raises(NonFiniteError):
            normalized_logits([0.0, float("nan")])

    def test_rows_match_vector_softmax(self):
        """Test that row-wise softmax agrees with the single-vector one"""
        logits = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, -1.0]])
        rows = softmax_rows(logits)
        for k in range(2):
            assert rows[k] == pytest.approx(normalized_logits(logits[k]))


@pytest.mark.unit
class TestSampleLogits:
    """Test per-view logit sampling"""

    def test_correct_view_is_one_hot_scaled(self):
        """Test that with identity confusion and no noise the true class gets kappa"""
        profile = DetectorProfile(n_classes=4, kappa=4.0)
        logits = sample_logits(profile, 2, 0.0, np.random.default_rng(0))
        assert logits.tolist() == [0.0, 0.0, 4.0, 0.0]

    def test_confused_view_keeps_residual(self):
        """Test that a confused view keeps residual mass on the true class"""
        confusion = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        profile = DetectorProfile(n_classes=3, confusion=confusion, kappa=4.0, residual_true=0.5)
        logits = sample_logits(profile, 0, 0.0, np.random.default_rng(1))
        assert logits.tolist() == [2.0, 4.0, 0.0]
        assert int(np.argmax(logits)) == 1

    def test_confusion_frequencies(self):
        """Test that a 2<->5 swap at 0.3 relabels a class-2 object as 5 in 30% of 10,000 views"""
        profile = DetectorProfile(n_classes=8, confusion=confusion_with_pairs(8, [(2, 5)], 0.3))
        rng = np.random.default_rng(5)
        flips = sum(int(np.argmax(sample_logits(profile, 2, 0.0, rng))) == 5 for _ in range(10_000))
        assert flips / 10_000 == pytest.approx(0.3, abs=0.02)

    def test_default_profile_is_scaled_one_hot_plus_noise(self):
        """Test that the default profile gives kappa * onehot(sampled class) + noise with nothing on the true class"""
        profile = DetectorProfile(n_classes=8, confusion=confusion_with_pairs(8, [(2, 5)], 0.3))
        assert profile.residual_true == 0.0
        cdf = np.cumsum(profile.confusion[2])
        confused = 0
        for seed in range(200):
            logits = sample_logits(profile, 2, 0.7, np.random.default_rng(seed))
            replay = np.random.default_rng(seed)
            sampled = int(np.searchsorted(cdf, replay.random(), side="right"))
            expected = profile.kappa * np.eye(8)[sampled] + 0.7 * replay.standard_normal(8)
            assert np.allclose(logits, expected, rtol=0.0, atol=1e-12)
            confused += sampled == 5
        assert confused > 0

    def test_entropy_rises_with_distance(self):
        """Test that mean softmax entropy does not fall as views get farther and noisier"""
        profile = DetectorProfile(n_classes=8)

        def mean_entropy(scale: float, kappa_profile: DetectorProfile = profile) -> float:
            rng = np.random.default_rng(21)
            probs = np.array([normalized_logits(sample_logits(kappa_profile, 1, scale, rng)) for _ in range(3000)])
            return float(np.mean(-(probs * np.log(probs)).sum(axis=1)))

        scales = [view_noise_scale(profile, d, 1.0, 5.0) for d in (0.5, 2.5, 5.0)]
        entropies = [mean_entropy(s) for s in scales]
        assert entropies[0] <= entropies[1] <= entropies[2]
        sharper = DetectorProfile(n_classes=8, kappa=6.0)
        assert mean_entropy(scales[1], sharper) <= entropies[1]

    def test_view_noise_scale(self):
        """Test the distance and visibility terms of the noise scale"""
        profile = DetectorProfile(dist_coeff=1.0, frac_coeff=0.5)
        assert view_noise_scale(profile, 2.5, 0.6, 5.0) == pytest.approx(0.5 + 0.2)


@pytest.mark.unit
class TestDetect:
    """Test detections on a rendered frame"""

    def test_noise_free_detection(self, noise_free_profile, box_frame):
        """Test that a noise-free detector reports the true class and mask"""
        dets = detect(noise_free_profile, box_frame, rng_seed=3)
        assert len(dets) == 1
        det = dets[0]
        assert det.class_id == 3
        assert det.hidden_gt_id == 0
        assert det.det_index == 0
        assert det.mask == box_frame.object_mask(0)
        assert det.logits[3] == pytest.approx(noise_free_profile.kappa)

    def test_same_seed_same_detections(self, box_frame):
        """Test that detections are a function of the seed"""
        profile = DetectorProfile(miss_rate=0.0)
        a = detect(profile, box_frame, rng_seed=11)
        b = detect(profile, box_frame, rng_seed=11)
        assert np.array_equal(a[0].logits, b[0].logits)
        assert np.array_equal(a[0].feature, b[0].feature)

    def test_bbox_contains_mask(self, noise_free_profile, box_frame):
        """Test that the box is the tight rectangle around the mask"""
        det = detect(noise_free_profile, box_frame, rng_seed=0)[0]
        cols = [p[0] for p in det.mask]
        rows = [p[1] for p in det.mask]
        assert det.bbox == (min(cols), min(rows), max(cols), max(rows))

    def test_features_cluster_by_class(self, noise_free_profile, box_frame):
        """Test that a low-noise feature sits near its class mean"""
        det = detect(noise_free_profile, box_frame, rng_seed=0)[0]
        assert det.feature == pytest.approx(noise_free_profile.feature_means[3], abs=0.02)

    def test_roi_feature_uses_dominant_object(self, noise_free_profile, box_frame):
        """Test that a region on the object yields that object's feature"""
        feature = roi_features(noise_free_profile, box_frame, box_frame.object_mask(0), rng_seed=9)
        assert feature == pytest.approx(noise_free_profile.feature_means[3], abs=0.02)
