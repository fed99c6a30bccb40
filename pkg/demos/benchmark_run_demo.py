"""End-to-end benchmark run: synth-corpus -> curate -> caption -> eval -> report.

Drives the CLI exactly as a user would, entirely offline, and prints the
resulting leaderboard. Two eval runs with different miss penalties show the
object-similarity penalty sensitivity side by side.
"""

import json
import tempfile
from pathlib import Path

from vidident.cli import main as cli


def main() -> None:
    root = Path(tempfile.mkdtemp(prefix="vidident-bench-"))
    synth = root / "synth"
    manifest = root / "manifest.jsonl"

    print(f"workspace: {root}\n")
    assert cli(["synth-corpus", str(synth), "--seed", "0"]) == 0
    assert cli([
        "curate", str(synth / "corpus"),
        "--config", str(synth / "config.json"),
        "--manifest", str(manifest),
    ]) == 0
    assert cli([
        "caption", "--config", str(synth / "config.json"), "--manifest", str(manifest),
    ]) == 0

    for name, penalty in (("penalty-0.1", "0.1"), ("penalty-0.5", "0.5")):
        assert cli([
            "eval", str(synth / "eval_pairs.json"),
            "--config", str(synth / "config.json"),
            "--out", str(root / f"{name}.json"),
            "--name", name,
            "--penalty", penalty,
        ]) == 0

    print("\nleaderboard (best per column in bold):\n")
    assert cli([
        "report",
        str(root / "penalty-0.1.json"),
        str(root / "penalty-0.5.json"),
        "--format", "markdown_table",
        "--second-best",
    ]) == 0

    doc = json.loads((root / "penalty-0.1.json").read_text())
    print("\nper-video object similarity at penalty 0.1:")
    for video, report in doc["videos"].items():
        score = report["scores"]["object_similarity"]
        print(f"  {video:10s} {score['status']:8s} {score['value']}")


if __name__ == "__main__":
    main()
