"""Walk the quality-filter cascade over the built-in synthetic corpus.

Generates 20 clips with planted defects (too short, low resolution, under-
and over-exposed, blurred, a two-shot cut, a low-aesthetic clip, one corrupt
file) plus a small image set, runs both cascades, and prints what each stage
caught. Everything runs offline against the deterministic mocks.
"""

import json
import tempfile
from pathlib import Path

from vidident.config import RunConfig
from vidident.manifest import Manifest
from vidident.pipeline import CurationPipeline
from vidident.providers.mock import MockProviderSet
from vidident.records import Decision, Stage
from vidident.synth import generate_corpus


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="vidident-demo-"))
    print(f"workspace: {workdir}\n")

    expected = generate_corpus(workdir / "synth", seed=0)
    print(f"planted corpus: {expected['clips_total']} clips, "
          f"{len(expected['image_planted'])} images")

    config = RunConfig.load(workdir / "synth" / "config.json")
    providers = MockProviderSet(seed=config.seed)
    with Manifest(workdir / "manifest.jsonl") as manifest:
        pipeline = CurationPipeline(config, providers, manifest, workers=4)
        summary = pipeline.run_curate(workdir / "synth" / "corpus")

        print("\nper-stage outcomes:")
        for stage, counts in summary.to_dict()["stages"].items():
            print(f"  {stage:22s} kept={counts['kept']:3d} rejected={counts['rejected']:3d} "
                  f"split={counts['split']}")

        print(f"\ncurated videos: {summary.curated_videos} "
              f"(expected {expected['curated_videos']})")
        print(f"images kept:    {summary.images_kept} "
              f"(expected {expected['images_kept']})")

        print("\nwhy each planted defect was rejected:")
        for clip in manifest.state.clips.values():
            for verdict in clip.stage_verdicts:
                if verdict.decision is not Decision.KEEP and verdict.stage is not Stage.SHOT_SPLIT:
                    asset = manifest.state.assets[clip.asset_id]
                    name = Path(asset.source_path).name
                    print(f"  {name:18s} {verdict.stage.value:20s} {verdict.reason}")

        captioned = pipeline.run_caption()
        stats = captioned.extras["caption_stats"]
        print(f"\ncaptioned {captioned.extras['captioned']} clips; "
              f"avg objects/video {stats['avg_objects_per_video']:.2f}, "
              f"avg caption words {stats['avg_word_len']:.2f}")

        sample = next(c for c in manifest.state.clips.values() if c.captions is not None)
        print(f"\nsample stage-1 caption: {sample.captions.appearance_caption}")
        print(f"sample stage-2 caption: {sample.captions.temporal_caption}")
        print(f"sample tags:            {', '.join(sample.tags.tags)}")


if __name__ == "__main__":
    main()
