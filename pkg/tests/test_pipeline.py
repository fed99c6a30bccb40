import json

import numpy as np
import pytest
from PIL import Image

from vidident.config import RunConfig
from vidident.ingest import write_rvid
from vidident.manifest import Manifest, load_state
from vidident.pipeline import (
    CurationPipeline,
    load_pairs,
    run_eval,
    scan_corpus,
)
from vidident.providers.base import ProviderError
from vidident.providers.mock import CallCountingProviders, MockProviderSet
from vidident.records import Decision, Stage
from vidident.synth import generate_corpus, render_clip


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    expected = generate_corpus(out, seed=3)
    return out, expected


def fresh_pipeline(corpus_root, manifest_path, providers=None, config=None):
    config = config or RunConfig.load(corpus_root / "config.json")
    providers = providers or MockProviderSet(seed=config.seed)
    manifest = Manifest(manifest_path)
    return CurationPipeline(config, providers, manifest, workers=2), manifest, config, providers


class FailAfter:
    """Provider wrapper that raises after a budget of calls (kill switch)."""

    def __init__(self, inner, budget: int, capability_prefix: str = ""):
        self.inner = inner
        self.budget = budget
        self.prefix = capability_prefix

    def _spend(self, name: str):
        if name.startswith(self.prefix):
            if self.budget <= 0:
                raise ProviderError("injected outage")
            self.budget -= 1

    def __getattr__(self, name):
        attr = getattr(self.inner, name)
        if name in ("embed", "embed_map", "geometry", "detect", "segment", "complete", "ocr", "aesthetics"):
            def wrapped(*args, **kwargs):
                self._spend(name)
                return attr(*args, **kwargs)

            return wrapped
        return attr


def test_scan_corpus_sorted_and_typed(tmp_path, rng):
    (tmp_path / "b").mkdir()
    write_rvid(tmp_path / "b" / "clip.rvid", [np.zeros((4, 4, 3), np.uint8)], 10)
    Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "a.png")
    seq = tmp_path / "frames.seq"
    seq.mkdir()
    Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(seq / "0.png")
    (tmp_path / "ignored.txt").write_text("nope")
    found = scan_corpus(tmp_path)
    names = [p.name for p in found]
    assert names == ["a.png", "clip.rvid", "frames.seq"]


def test_curate_matches_planted_truth(corpus, tmp_path):
    root, expected = corpus
    pipeline, manifest, _, _ = fresh_pipeline(root, tmp_path / "m.jsonl")
    summary = pipeline.run_curate(root / "corpus")
    manifest.close()
    stages = summary.to_dict()["stages"]
    for stage, count in expected["video_rejects"].items():
        assert stages[stage]["rejected"] == count, stage
    assert stages["dedup"]["rejected"] == expected["image_rejects"]["dedup"]
    assert stages["ocr"]["rejected"] == expected["image_rejects"]["ocr"]
    assert stages["outlier"]["rejected"] == expected["image_rejects"]["outlier"]
    assert stages["shot_split"]["split"] == 1
    assert summary.curated_videos == expected["curated_videos"]
    assert summary.images_kept == expected["images_kept"]
    assert summary.pending == 0


def test_split_children_inherit_and_regate(corpus, tmp_path):
    root, expected = corpus
    pipeline, manifest, _, _ = fresh_pipeline(root, tmp_path / "m.jsonl")
    pipeline.run_curate(root / "corpus")
    state = pipeline.state
    manifest.close()
    parents = [
        c for c in state.clips.values()
        if any(v.decision is Decision.SPLIT for v in c.stage_verdicts)
    ]
    assert len(parents) == 1
    children = [
        c for c in state.clips.values()
        if c.asset_id == parents[0].asset_id and c.clip_id != parents[0].clip_id
    ]
    assert len(children) == 2
    assert {c.start_frame for c in children} == {0, 85}
    for child in children:
        assert child.frame_count == 85
        verdicts = {v.stage: v for v in child.stage_verdicts}
        assert verdicts[Stage.DURATION_RESOLUTION].decision is Decision.KEEP
        assert verdicts[Stage.SHOT_SPLIT].decision is Decision.KEEP
        assert "inherited" in verdicts[Stage.BRIGHTNESS].reason


def test_short_split_child_rejected_at_duration(tmp_path, rng):
    # a two-shot clip whose second shot is under the frame minimum
    clip_dir = tmp_path / "c"
    clip_dir.mkdir()
    half_a = render_clip(object_id=1, n_frames=90, seed=0, background_range=(40.0, 110.0))
    half_b = render_clip(object_id=2, n_frames=30, seed=1, background_range=(160.0, 215.0))
    write_rvid(clip_dir / "two.rvid", half_a + half_b, 16.0)
    config = RunConfig.from_dict(
        {"curation_thresholds": {"min_side": 48, "blur_high_pct": 0.0}}
    )
    pipeline, manifest, _, _ = fresh_pipeline(tmp_path, tmp_path / "m.jsonl", config=config)
    pipeline.run_curate(clip_dir)
    state = pipeline.state
    manifest.close()
    children = [c for c in state.clips.values() if c.start_frame > 0]
    short = [c for c in children if c.frame_count == 30]
    assert len(short) == 1
    assert short[0].stage_verdicts[-1].stage is Stage.DURATION_RESOLUTION
    assert short[0].stage_verdicts[-1].decision is Decision.REJECT


def test_curate_rerun_is_idempotent(corpus, tmp_path):
    root, _ = corpus
    manifest_path = tmp_path / "m.jsonl"
    pipeline, manifest, config, _ = fresh_pipeline(root, manifest_path)
    pipeline.run_curate(root / "corpus")
    manifest.close()
    size_after_first = manifest_path.stat().st_size

    counting = CallCountingProviders(MockProviderSet(seed=config.seed))
    pipeline2, manifest2, _, _ = fresh_pipeline(root, manifest_path, providers=counting)
    pipeline2.run_curate(root / "corpus")
    manifest2.close()
    assert counting.total() == 0  # nothing recomputed, no provider traffic
    assert manifest_path.stat().st_size == size_after_first


def test_caption_interrupt_and_resume_without_duplicate_calls(corpus, tmp_path):
    root, expected = corpus
    manifest_path = tmp_path / "m.jsonl"
    pipeline, manifest, config, _ = fresh_pipeline(root, manifest_path)
    pipeline.run_curate(root / "corpus")
    manifest.close()

    # First caption run dies after 7 completions (mid-run kill).
    flaky = FailAfter(MockProviderSet(seed=config.seed), budget=7, capability_prefix="complete")
    pipeline2, manifest2, _, _ = fresh_pipeline(root, manifest_path, providers=flaky)
    summary = pipeline2.run_caption()
    manifest2.close()
    captioned_first = summary.extras["captioned"]
    assert 0 < captioned_first < expected["curated_videos"]
    assert summary.pending > 0  # degraded run

    # Restart with a counting provider: only pending clips may trigger calls.
    counting = CallCountingProviders(MockProviderSet(seed=config.seed))
    pipeline3, manifest3, _, _ = fresh_pipeline(root, manifest_path, providers=counting)
    summary2 = pipeline3.run_caption()
    manifest3.close()
    remaining = expected["curated_videos"] - captioned_first
    assert summary2.extras["captioned"] == remaining
    assert counting.counts.get("text_complete", 0) == 3 * remaining
    assert summary2.pending == 0

    # A third run performs zero provider calls at all.
    counting2 = CallCountingProviders(MockProviderSet(seed=config.seed))
    pipeline4, manifest4, _, _ = fresh_pipeline(root, manifest_path, providers=counting2)
    pipeline4.run_caption()
    manifest4.close()
    assert counting2.total() == 0


def test_aesthetics_interrupt_and_resume(corpus, tmp_path):
    root, expected = corpus
    manifest_path = tmp_path / "m.jsonl"
    config = RunConfig.load(root / "config.json")

    flaky = FailAfter(MockProviderSet(seed=config.seed), budget=5, capability_prefix="aesthetics")
    pipeline, manifest, _, _ = fresh_pipeline(root, manifest_path, providers=flaky)
    summary = pipeline.run_curate(root / "corpus")
    manifest.close()
    assert summary.pending > 0

    counting = CallCountingProviders(MockProviderSet(seed=config.seed))
    pipeline2, manifest2, _, _ = fresh_pipeline(root, manifest_path, providers=counting)
    summary2 = pipeline2.run_curate(root / "corpus")
    manifest2.close()
    assert summary2.pending == 0
    # exactly the clips that missed their verdict are re-scored
    assert counting.counts.get("aesthetics", 0) == 12 - 5
    assert summary2.curated_videos == expected["curated_videos"]


def test_manifest_identical_across_seeded_runs(corpus, tmp_path):
    root, _ = corpus
    paths = []
    for i in range(2):
        manifest_path = tmp_path / f"m{i}.jsonl"
        pipeline, manifest, _, _ = fresh_pipeline(root, manifest_path)
        pipeline.run_curate(root / "corpus")
        pipeline.run_caption()
        manifest.close()
        paths.append(manifest_path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_eval_pairs_loading_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "pairs.json"
    bad.write_text(json.dumps({"pairs": [{"name": "x", "reference": "a", "generated": "b", "bogus": 1}]}))
    with pytest.raises(Exception):
        load_pairs(bad)


def test_eval_outputs_are_deterministic(corpus, tmp_path):
    root, _ = corpus
    config = RunConfig.load(root / "config.json")
    pairs = load_pairs(root / "eval_pairs.json")
    docs = []
    for i in range(2):
        out = tmp_path / f"eval{i}.json"
        run_eval(config, MockProviderSet(seed=config.seed), pairs, out, system_name="sys")
        docs.append(out.read_bytes())
    assert docs[0] == docs[1]


def test_eval_aggregate_matches_hand_aggregation(corpus, tmp_path):
    root, _ = corpus
    config = RunConfig.load(root / "config.json")
    pairs = load_pairs(root / "eval_pairs.json")
    doc = run_eval(config, MockProviderSet(seed=config.seed), pairs, tmp_path / "e.json")
    for metric, entry in doc["aggregate"].items():
        values = [
            v["scores"][metric]["value"]
            for v in doc["videos"].values()
            if v["scores"][metric]["status"] == "OK"
        ]
        if values:
            assert entry["status"] == "OK"
            assert entry["value"] == pytest.approx(float(np.mean(values)), abs=1e-12)
            assert entry["count"] == len(values)
        else:
            assert entry["status"] in ("SKIPPED", "ERROR")
            assert entry["value"] is None


def test_empty_corpus_yields_zero_summary(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    pipeline, manifest, _, _ = fresh_pipeline(empty, tmp_path / "m.jsonl", config=RunConfig())
    summary = pipeline.run_curate(empty)
    manifest.close()
    assert summary.curated_videos == 0
    assert summary.pending == 0
    assert all(v.kept == v.rejected == v.split == 0 for v in summary.stages.values())


def test_eval_debug_and_manifest_attachment(corpus, tmp_path):
    root, _ = corpus
    config = RunConfig.load(root / "config.json")
    pairs = load_pairs(root / "eval_pairs.json")
    # register a clip to attach the identity pair's scores to
    from vidident.records import ClipRecord

    manifest_path = tmp_path / "m.jsonl"
    with Manifest(manifest_path) as manifest:
        manifest.append_clip(
            ClipRecord(clip_id="eval-clip", asset_id="a", frame_count=48, width=64, height=64, fps=16.0)
        )
        pairs[0].clip_id = "eval-clip"
        doc = run_eval(
            config, MockProviderSet(seed=config.seed), pairs, tmp_path / "e.json",
            manifest=manifest, debug=True,
        )
    assert "diagnostics" in doc
    cells = doc["diagnostics"]["identity"]["object_similarity_cells"]
    assert cells and all(c["status"] == "hit" for c in cells)
    state = load_state(manifest_path)
    attached = state.clips["eval-clip"].scores
    assert attached is not None
    assert attached.scores["i2v_subject"].value == 100.0


def test_eval_metric_subset(corpus, tmp_path):
    root, _ = corpus
    config = RunConfig.load(root / "config.json")
    pairs = load_pairs(root / "eval_pairs.json")
    doc = run_eval(
        config, MockProviderSet(seed=config.seed), pairs, tmp_path / "e.json",
        enabled=["temporal_flickering"],
    )
    for video in doc["videos"].values():
        for name, score in video["scores"].items():
            if name == "temporal_flickering":
                assert score["status"] == "OK"
            else:
                assert score["status"] == "SKIPPED"
