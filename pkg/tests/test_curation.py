import numpy as np
import pytest

from oracles import brute_force_dbscan, brute_force_split, labels_equivalent
from vidident.curation import (
    MissingEmbeddingError,
    Segment,
    aesthetic_gate,
    dbscan_cluster,
    dedup_md5,
    dominant_cluster_retain,
    gate_duration_resolution,
    ocr_gate,
    outlier_gallery_gate,
    percentile_prune,
    shot_boundary_scores,
    split_at_boundaries,
    stitch_segments,
)
from vidident.ingest import FrameImage
from vidident.records import (
    AssetKind,
    Decision,
    EmbeddingKind,
    EmbeddingVector,
    MediaAsset,
    Stage,
)


def unit(values):
    return EmbeddingVector.normalized(EmbeddingKind.GLOBAL, values)


class TestDurationResolutionGate:
    def test_boundary_keep(self):
        assert gate_duration_resolution(81, 480, 320).decision is Decision.KEEP

    def test_one_frame_short(self):
        v = gate_duration_resolution(80, 1920, 1080)
        assert v.decision is Decision.REJECT
        assert v.stage is Stage.DURATION_RESOLUTION

    def test_min_side_rule(self):
        assert gate_duration_resolution(200, 480, 300).decision is Decision.REJECT
        assert gate_duration_resolution(200, 300, 480).decision is Decision.REJECT

    def test_verdict_records_threshold(self):
        v = gate_duration_resolution(80, 640, 480)
        assert v.threshold_used == 81.0 and v.measured_value == 80.0


class TestPercentilePrune:
    def test_hundred_clips_prunes_five_each_tail(self):
        values = {f"c{i:03d}": float(i) for i in range(1, 101)}
        kept, stat = percentile_prune(values, Stage.BRIGHTNESS)
        kept_values = sorted(values[c] for c in kept)
        assert kept_values == [float(v) for v in range(6, 96)]
        assert len(kept) == 90
        assert stat.low_cut == pytest.approx(5.95)
        assert stat.high_cut == pytest.approx(95.05)

    def test_all_equal_keeps_all(self):
        values = {f"c{i}": 7.0 for i in range(10)}
        kept, _ = percentile_prune(values, Stage.BLUR)
        assert len(kept) == 10

    def test_single_clip_kept(self):
        kept, _ = percentile_prune({"only": 3.3}, Stage.BRIGHTNESS)
        assert kept == ["only"]

    def test_keeps_at_least_ninety_percent_minus_one(self, rng):
        for n in (20, 33, 57, 100):
            values = {f"c{i}": float(rng.standard_normal()) for i in range(n)}
            kept, _ = percentile_prune(values, Stage.BRIGHTNESS)
            assert len(kept) >= int(np.ceil(0.9 * n)) - 1

    def test_zero_high_pct_disables_top_tail(self):
        values = {f"c{i}": float(i) for i in range(1, 101)}
        kept, _ = percentile_prune(values, Stage.BLUR, low_pct=5.0, high_pct=0.0)
        assert max(values[c] for c in kept) == 100.0
        assert len(kept) == 95


def frame_of(level: float, h=32, w=32) -> FrameImage:
    return FrameImage(np.full((h, w, 3), level, dtype=np.uint8))


class TestShotBoundaries:
    def test_static_clip_scores_zero(self):
        frames = [frame_of(90) for _ in range(10)]
        assert shot_boundary_scores(frames) == [0.0] * 9

    def test_hard_cut_spike(self):
        frames = [frame_of(0)] * 40 + [frame_of(255)] * 40
        scores = shot_boundary_scores(frames)
        assert scores[39] == pytest.approx(255.0, abs=1e-9)
        assert all(s == 0.0 for i, s in enumerate(scores) if i != 39)

    def test_linear_wipe_has_constant_scores(self):
        # A white front advancing one column per frame over a 79-column frame
        # changes exactly 1/79 of the area per step; with exact area-averaged
        # thumbnails every transition scores 255/79.
        w, h, steps = 79, 32, 79
        frames = []
        for i in range(steps + 1):
            arr = np.zeros((h, w, 3), dtype=np.uint8)
            arr[:, :i] = 255
            frames.append(FrameImage(arr))
        scores = shot_boundary_scores(frames)
        assert len(scores) == 79
        for s in scores:
            assert s == pytest.approx(255.0 / 79.0, abs=1e-6)

    def test_split_no_boundary(self):
        segs = split_at_boundaries([1.0, 2.0, 0.5], theta_cut=30.0)
        assert [(s.start_frame, s.end_frame) for s in segs] == [(0, 3)]

    def test_split_single_spike(self):
        scores = [0.0] * 5 + [200.0] + [0.0] * 4
        segs = split_at_boundaries(scores, theta_cut=30.0)
        assert [(s.start_frame, s.end_frame) for s in segs] == [(0, 5), (6, 10)]

    def test_plateau_splits_once_at_maximum(self):
        scores = [0.0, 40.0, 80.0, 60.0, 40.0, 0.0]
        segs = split_at_boundaries(scores, theta_cut=30.0)
        assert [(s.start_frame, s.end_frame) for s in segs] == [(0, 2), (3, 6)]

    def test_random_spike_trains_match_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 60))
            scores = rng.uniform(0, 60, n).tolist()
            segs = split_at_boundaries(scores, theta_cut=30.0)
            got = [(s.start_frame, s.end_frame) for s in segs]
            assert got == brute_force_split(scores, 30.0)
            # partition property: no gaps, no overlaps, full cover
            assert got[0][0] == 0 and got[-1][1] == n
            for (_, e), (s2, _) in zip(got, got[1:]):
                assert s2 == e + 1


class TestStitch:
    def seg(self, a, b):
        return Segment("clip", a, b)

    def test_identical_boundary_frames_merge(self):
        e = unit([1.0, 0.0])
        merged = stitch_segments([self.seg(0, 4), self.seg(5, 9)], [(e, e)], 0.85)
        assert [(s.start_frame, s.end_frame) for s in merged] == [(0, 9)]

    def test_orthogonal_embeddings_do_not_merge(self):
        a, b = unit([1.0, 0.0]), unit([0.0, 1.0])
        merged = stitch_segments([self.seg(0, 4), self.seg(5, 9)], [(a, b)], 0.85)
        assert len(merged) == 2

    def test_left_to_right_transitive_chain(self):
        # Junction cosines a~b = 0.9 and b~c = 0.9 merge all three segments
        # left to right even though a and c themselves are far apart (0.2 in
        # the scenario); the algorithm only ever consults junction pairs.
        a = unit([1.0, 0.0])
        b = unit([0.9, np.sqrt(1 - 0.81)])
        assert float(np.dot(a.as_array(), b.as_array())) == pytest.approx(0.9, abs=1e-9)
        segs = [self.seg(0, 3), self.seg(4, 7), self.seg(8, 11)]
        junctions = [(a, b), (a, b)]  # each junction judged on its own frames
        merged = stitch_segments(segs, junctions, 0.85)
        assert [(s.start_frame, s.end_frame) for s in merged] == [(0, 11)]

    def test_missing_embedding_errors(self):
        with pytest.raises(MissingEmbeddingError):
            stitch_segments([self.seg(0, 2), self.seg(3, 5)], [None], 0.85)


class TestAestheticGate:
    def test_boundary_inclusive(self):
        assert aesthetic_gate([3.0] * 10).decision is Decision.KEEP

    def test_mean_just_below(self):
        assert aesthetic_gate([2.99] * 10).decision is Decision.REJECT

    def test_random_scores_match_mean_oracle(self, rng):
        for _ in range(100):
            scores = rng.uniform(0, 6, 10).tolist()
            verdict = aesthetic_gate(scores)
            expected = Decision.KEEP if float(np.mean(scores)) >= 3.0 else Decision.REJECT
            assert verdict.decision is expected

    def test_requires_ten_scores(self):
        with pytest.raises(ValueError):
            aesthetic_gate([4.0] * 9)


def asset(name: str, checksum: str) -> MediaAsset:
    return MediaAsset(
        asset_id=name, source_path=f"/x/{name}", kind=AssetKind.IMAGE, bytes=10,
        checksum_md5=checksum,
    )


class TestDedup:
    def test_second_identical_removed(self):
        a = asset("a", "1" * 32)
        b = asset("b", "1" * 32)
        assert dedup_md5([a, b]) == [a]

    def test_all_distinct_kept(self):
        items = [asset(f"a{i}", f"{i:032x}") for i in range(5)]
        assert dedup_md5(items) == items

    def test_planted_duplicate_groups_match_hashmap_oracle(self, rng):
        checksums = [f"{int(rng.integers(0, 200)):032x}" for _ in range(1000)]
        items = [asset(f"a{i}", c) for i, c in enumerate(checksums)]
        kept = dedup_md5(items)
        seen = {}
        for i, c in enumerate(checksums):
            seen.setdefault(c, items[i])
        assert kept == list(seen.values())

    def test_idempotent(self, rng):
        checksums = [f"{int(rng.integers(0, 30)):032x}" for _ in range(100)]
        items = [asset(f"a{i}", c) for i, c in enumerate(checksums)]
        once = dedup_md5(items)
        assert dedup_md5(once) == once


class TestOcrGate:
    def test_thirty_chars_keep(self):
        assert ocr_gate(30).decision is Decision.KEEP

    def test_thirty_one_chars_reject(self):
        assert ocr_gate(31).decision is Decision.REJECT

    def test_zero_chars_keep(self):
        assert ocr_gate(0).decision is Decision.KEEP


class TestOutlierGallery:
    def test_gallery_member_rejected(self):
        e = unit([0.6, 0.8])
        assert outlier_gallery_gate(e, [e], 0.9).decision is Decision.REJECT

    def test_empty_gallery_keeps(self):
        v = outlier_gallery_gate(unit([1.0, 0.0]), [], 0.9)
        assert v.decision is Decision.KEEP

    def test_rejection_matches_max_cosine_oracle(self, rng):
        for _ in range(50):
            dim = 8
            gallery = [unit(rng.standard_normal(dim)) for _ in range(5)]
            probe = unit(rng.standard_normal(dim))
            theta = float(rng.uniform(0.0, 0.4))
            best = max(float(np.dot(probe.as_array(), g.as_array())) for g in gallery)
            verdict = outlier_gallery_gate(probe, gallery, theta)
            assert (verdict.decision is Decision.REJECT) == (best >= theta)


class TestDbscan:
    def test_single_point_min_pts_one(self):
        labels = dbscan_cluster(np.array([[1.0, 0.0]]), eps=0.1, min_pts=1)
        assert labels.tolist() == [0]

    def test_two_bundles(self, rng):
        base_a = np.array([1.0, 0.0, 0.0])
        base_b = np.array([0.0, 1.0, 0.0])
        pts = []
        for _ in range(5):
            pts.append(base_a + rng.normal(0, 0.01, 3))
        for _ in range(2):
            pts.append(base_b + rng.normal(0, 0.01, 3))
        labels = dbscan_cluster(np.array(pts), eps=0.1, min_pts=2)
        assert len(set(labels[:5].tolist())) == 1
        assert len(set(labels[5:].tolist())) == 1
        assert labels[0] != labels[5]
        assert (labels >= 0).all()

    def test_matches_bruteforce_oracle(self, rng):
        for trial in range(100):
            n = int(rng.integers(2, 64))
            dim = int(rng.integers(2, 6))
            pts = rng.standard_normal((n, dim))
            eps = float(rng.uniform(0.05, 0.8))
            min_pts = int(rng.integers(1, 5))
            got = dbscan_cluster(pts, eps=eps, min_pts=min_pts)
            expected = brute_force_dbscan(pts, eps, min_pts)
            assert labels_equivalent(got, expected), f"trial {trial}"

    def test_rotation_invariance(self, rng):
        pts = rng.standard_normal((20, 4))
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        base = dbscan_cluster(pts, eps=0.3, min_pts=2)
        rotated = dbscan_cluster(pts @ q.T, eps=0.3, min_pts=2)
        assert labels_equivalent(base, rotated)


class TestDominantCluster:
    def test_largest_kept(self):
        labels = np.array([0, 0, 0, 0, 0, 1, 1])
        assert dominant_cluster_retain(labels) == [0, 1, 2, 3, 4]

    def test_all_noise_keeps_all(self):
        labels = np.array([-1, -1, -1])
        assert dominant_cluster_retain(labels) == [0, 1, 2]

    def test_tie_goes_to_cluster_containing_lowest_index(self):
        labels = np.array([1, 0, 1, 0, 1, 0])
        kept = dominant_cluster_retain(labels)
        assert kept == [0, 2, 4]
