import numpy as np
import pytest

from vidident.records import (
    AssetKind,
    CaptionFlag,
    CaptionRecord,
    ClipRecord,
    CurationVerdict,
    Decision,
    EmbeddingKind,
    EmbeddingVector,
    GeometryError,
    MediaAsset,
    MetricReport,
    MetricScore,
    MetricStatus,
    ObjectTagSet,
    PointCloud,
    RecordError,
    RigidTransform,
    Stage,
    clip_id_for,
)


def make_asset(**overrides):
    base = dict(
        asset_id="a1",
        source_path="/data/x.rvid",
        kind=AssetKind.VIDEO,
        bytes=1024,
        checksum_md5="d" * 32,
    )
    base.update(overrides)
    return MediaAsset(**base)


def make_clip(**overrides):
    base = dict(clip_id="c1", asset_id="a1", frame_count=90, width=640, height=480, fps=16.0)
    base.update(overrides)
    return ClipRecord(**base)


class TestRoundTrips:
    def test_media_asset(self):
        a = make_asset()
        assert MediaAsset.from_dict(a.to_dict()) == a

    def test_verdict(self):
        v = CurationVerdict(Stage.BRIGHTNESS, Decision.REJECT, 3.5, 10.0, "too dark")
        assert CurationVerdict.from_dict(v.to_dict()) == v

    def test_embedding(self):
        e = EmbeddingVector.normalized(EmbeddingKind.GLOBAL, [3.0, 4.0])
        assert EmbeddingVector.from_dict(e.to_dict()) == e

    def test_caption_record(self):
        c = CaptionRecord(
            appearance_caption="a ring",
            temporal_caption="the ring rotates",
            appearance_frame_indices=(0, 5, 9),
            temporal_frame_indices=(0, 3, 6, 9),
            constraint_flags=frozenset({CaptionFlag.APPEARANCE_TOO_LONG}),
        )
        assert CaptionRecord.from_dict(c.to_dict()) == c

    def test_tag_set(self):
        t = ObjectTagSet.build(["Ring", "ring", " gemstone "])
        assert t.tags == ("ring", "gemstone")
        assert ObjectTagSet.from_dict(t.to_dict()) == t

    def test_metric_report(self):
        r = MetricReport(
            scores={
                "i2v_subject": MetricScore(MetricStatus.OK, 97.5),
                "chamfer_distance": MetricScore(MetricStatus.OK, 0.09),
                "met3r": MetricScore(MetricStatus.SKIPPED),
            },
            run_config_hash="abc",
            provider_versions={"embed_global": "mock/1"},
        )
        assert MetricReport.from_dict(r.to_dict()) == r

    def test_clip_record_full(self):
        clip = make_clip(
            stage_verdicts=(
                CurationVerdict(Stage.VALIDITY, Decision.KEEP),
                CurationVerdict(Stage.DURATION_RESOLUTION, Decision.KEEP, 90.0, 81.0),
            ),
            captions=CaptionRecord("a", "b", (0, 1), (0, 2)),
            tags=ObjectTagSet.build(["mug"]),
        )
        assert ClipRecord.from_dict(clip.to_dict()) == clip

    def test_point_cloud(self):
        pc = PointCloud(
            points=np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]),
            confidences=np.array([0.5, 1.0]),
            frame_origin=np.array([0, 1]),
        )
        assert PointCloud.from_dict(pc.to_dict()) == pc

    def test_rigid_transform(self):
        t = RigidTransform(rotation=np.eye(3), translation=np.array([1.0, 2.0, 3.0]), scale=2.0)
        assert RigidTransform.from_dict(t.to_dict()) == t


class TestInvariants:
    def test_checksum_must_be_lower_hex(self):
        with pytest.raises(RecordError):
            make_asset(checksum_md5="X" * 32)
        with pytest.raises(RecordError):
            make_asset(checksum_md5="ab")

    def test_split_only_for_shot_split(self):
        with pytest.raises(RecordError):
            CurationVerdict(Stage.BRIGHTNESS, Decision.SPLIT)
        CurationVerdict(Stage.SHOT_SPLIT, Decision.SPLIT)

    def test_embedding_norm_enforced(self):
        with pytest.raises(RecordError):
            EmbeddingVector(EmbeddingKind.GLOBAL, 2, (1.0, 1.0))
        e = EmbeddingVector.normalized(EmbeddingKind.GLOBAL, [1.0, 1.0])
        assert abs(np.linalg.norm(e.as_array()) - 1.0) <= 1e-6

    def test_embedding_dim_mismatch(self):
        with pytest.raises(RecordError):
            EmbeddingVector(EmbeddingKind.GLOBAL, 3, (1.0, 0.0))

    def test_verdict_order_strictly_increasing(self):
        with pytest.raises(RecordError):
            make_clip(
                stage_verdicts=(
                    CurationVerdict(Stage.BRIGHTNESS, Decision.KEEP),
                    CurationVerdict(Stage.BRIGHTNESS, Decision.KEEP),
                )
            )
        with pytest.raises(RecordError):
            make_clip(
                stage_verdicts=(
                    CurationVerdict(Stage.BLUR, Decision.KEEP),
                    CurationVerdict(Stage.BRIGHTNESS, Decision.KEEP),
                )
            )

    def test_no_verdict_after_reject(self):
        clip = make_clip(
            stage_verdicts=(CurationVerdict(Stage.BRIGHTNESS, Decision.REJECT, 1.0, 5.0),)
        )
        with pytest.raises(RecordError):
            clip.with_verdict(CurationVerdict(Stage.BLUR, Decision.KEEP))

    def test_caption_indices_strictly_increasing(self):
        with pytest.raises(RecordError):
            CaptionRecord("a", "b", (0, 0, 1), (0, 1))

    def test_caption_indices_within_clip(self):
        with pytest.raises(RecordError):
            make_clip(frame_count=5, captions=CaptionRecord("a", "b", (0, 5), (0, 1)))

    def test_tags_not_empty(self):
        with pytest.raises(RecordError):
            ObjectTagSet.build(["", "  "])

    def test_tag_normalization_idempotent(self):
        t = ObjectTagSet.build(["Brushed  Metal", "ring"])
        again = ObjectTagSet.build(list(t.tags))
        assert again.tags == t.tags

    def test_metric_report_ranges(self):
        with pytest.raises(RecordError):
            MetricReport(scores={"i2v_subject": MetricScore(MetricStatus.OK, 101.0)})
        with pytest.raises(RecordError):
            MetricReport(scores={"chamfer_distance": MetricScore(MetricStatus.OK, -0.1)})
        with pytest.raises(RecordError):
            MetricReport(scores={"met3r": MetricScore(MetricStatus.OK, 1.5)})
        with pytest.raises(RecordError):
            MetricReport(scores={"nonsense": MetricScore(MetricStatus.OK, 1.0)})

    def test_skipped_scores_carry_no_value(self):
        with pytest.raises(RecordError):
            MetricScore(MetricStatus.SKIPPED, 1.0)
        with pytest.raises(RecordError):
            MetricScore(MetricStatus.OK, None)

    def test_point_cloud_rejects_non_finite(self):
        with pytest.raises(GeometryError):
            PointCloud(points=np.array([[np.nan, 0.0, 0.0]]))

    def test_rotation_must_be_proper(self):
        reflection = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(GeometryError):
            RigidTransform(rotation=reflection, translation=np.zeros(3))

    def test_transform_compose_inverse(self):
        rng = np.random.Generator(np.random.PCG64(5))
        theta = 0.4
        rot = np.array(
            [
                [np.cos(theta), -np.sin(theta), 0.0],
                [np.sin(theta), np.cos(theta), 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        t = RigidTransform(rotation=rot, translation=rng.standard_normal(3), scale=1.7)
        pts = rng.standard_normal((10, 3))
        roundtrip = t.inverse().apply(t.apply(pts))
        assert np.allclose(roundtrip, pts, atol=1e-12)


def test_clip_id_stability():
    a = clip_id_for("c" * 32, 0, 80)
    b = clip_id_for("c" * 32, 0, 80)
    c = clip_id_for("c" * 32, 81, 160)
    assert a == b and a != c and len(a) == 32
