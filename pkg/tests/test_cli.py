import json

import pytest

from vidident.cli import main
from vidident.report import emit_report


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    assert main(["synth-corpus", str(root / "synth"), "--seed", "11"]) == 0
    return root


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"seed": 0, "nonsense": True}))
    code = main(["curate", str(tmp_path), "--config", str(cfg), "--manifest", str(tmp_path / "m.jsonl")])
    assert code == 2


def test_unknown_nested_key_exits_2(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"curation_thresholds": {"min_framez": 10}}))
    code = main(["curate", str(tmp_path), "--config", str(cfg), "--manifest", str(tmp_path / "m.jsonl")])
    assert code == 2


def test_missing_pairs_file_exits_2(tmp_path):
    code = main(["eval", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o.json")])
    assert code == 2


def test_unknown_metric_flag_exits_2(workspace, tmp_path):
    code = main([
        "eval", str(workspace / "synth" / "eval_pairs.json"),
        "--config", str(workspace / "synth" / "config.json"),
        "--out", str(tmp_path / "o.json"),
        "--metrics", "i2v_subject,bogus_metric",
    ])
    assert code == 2


def test_full_cli_flow(workspace, tmp_path, capsys):
    synth = workspace / "synth"
    manifest = tmp_path / "m.jsonl"
    assert main([
        "curate", str(synth / "corpus"), "--config", str(synth / "config.json"),
        "--manifest", str(manifest), "--workers", "2",
    ]) == 0
    summary = json.loads(capsys.readouterr().out)
    expected = json.loads((synth / "expected_counts.json").read_text())
    assert summary["curated_videos"] == expected["curated_videos"]

    assert main([
        "caption", "--config", str(synth / "config.json"), "--manifest", str(manifest),
    ]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["captioned"] == expected["curated_videos"]
    assert "caption_stats" in summary

    out = tmp_path / "eval.json"
    assert main([
        "eval", str(synth / "eval_pairs.json"), "--config", str(synth / "config.json"),
        "--out", str(out), "--name", "mock-system",
    ]) == 0
    doc = json.loads(out.read_text())
    assert doc["videos"]["identity"]["scores"]["i2v_subject"]["value"] == 100.0

    report_path = tmp_path / "report.md"
    assert main(["report", str(out), "--format", "markdown_table", "--out", str(report_path)]) == 0
    text = report_path.read_text()
    assert text.splitlines()[0].startswith("| Method | I2V Subject | I2V Background |")
    assert "**" in text  # best flags present


def test_penalty_flag_monotone(workspace, tmp_path):
    synth = workspace / "synth"
    outs = []
    for penalty in ("0.1", "0.5"):
        out = tmp_path / f"eval_{penalty}.json"
        assert main([
            "eval", str(synth / "eval_pairs.json"), "--config", str(synth / "config.json"),
            "--out", str(out), "--penalty", penalty,
        ]) == 0
        outs.append(json.loads(out.read_text()))
    low = outs[0]["videos"]["mismatch"]["scores"]["object_similarity"]["value"]
    high = outs[1]["videos"]["mismatch"]["scores"]["object_similarity"]["value"]
    assert low == pytest.approx(10.0)
    assert high == pytest.approx(50.0)


def test_metric_subset_flag(workspace, tmp_path):
    synth = workspace / "synth"
    out = tmp_path / "subset.json"
    assert main([
        "eval", str(synth / "eval_pairs.json"), "--config", str(synth / "config.json"),
        "--out", str(out), "--metrics", "temporal_flickering,video_similarity",
    ]) == 0
    doc = json.loads(out.read_text())
    scores = doc["videos"]["identity"]["scores"]
    assert scores["temporal_flickering"]["status"] == "OK"
    assert scores["chamfer_distance"]["status"] == "SKIPPED"


def test_providers_check_mock(workspace, capsys):
    assert main(["providers", "check", "--config", str(workspace / "synth" / "config.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["healthy"] is True
    assert "geometry" in out["capabilities"]


def test_provider_outage_degrades_with_exit_3(tmp_path):
    # live mode against an unreachable endpoint: the shot-split stage cannot
    # embed junction frames, clips stay pending, the run reports degraded
    from vidident.synth import render_clip
    from vidident.ingest import write_rvid

    clips = tmp_path / "clips"
    clips.mkdir()
    half_a = render_clip(object_id=1, n_frames=85, seed=0, background_range=(40.0, 110.0))
    half_b = render_clip(object_id=2, n_frames=85, seed=1, background_range=(160.0, 215.0))
    write_rvid(clips / "two.rvid", half_a + half_b, 16.0)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "providers": {"mode": "live", "base_url": "http://127.0.0.1:9", "timeout_ms": 200, "max_retries": 0},
        "curation_thresholds": {"min_side": 48},
    }))
    code = main(["curate", str(clips), "--config", str(cfg), "--manifest", str(tmp_path / "m.jsonl")])
    assert code == 3


def test_report_formats(workspace, tmp_path):
    synth = workspace / "synth"
    out_a = tmp_path / "a.json"
    out_b = tmp_path / "b.json"
    main(["eval", str(synth / "eval_pairs.json"), "--config", str(synth / "config.json"),
          "--out", str(out_a), "--name", "alpha"])
    main(["eval", str(synth / "eval_pairs.json"), "--config", str(synth / "config.json"),
          "--out", str(out_b), "--name", "beta", "--penalty", "0.5"])
    docs = [json.loads(out_a.read_text()), json.loads(out_b.read_text())]

    md = emit_report(docs, "markdown_table")
    assert md.count("\n") == 4  # header, separator, two rows
    csv_text = emit_report(docs, "csv")
    assert csv_text.splitlines()[0].split(",")[0] == "Method"
    payload = json.loads(emit_report(docs, "json"))
    assert {r["system"] for r in payload["rows"]} == {"alpha", "beta"}
    assert payload["best"]["object_similarity"] == "beta"

    second = json.loads(emit_report(docs, "json", second_best=True))
    assert second["second_best"]["object_similarity"] == "alpha"


def test_report_single_system_ten_columns(workspace, tmp_path):
    synth = workspace / "synth"
    out = tmp_path / "one.json"
    main(["eval", str(synth / "eval_pairs.json"), "--config", str(synth / "config.json"),
          "--out", str(out)])
    md = emit_report([json.loads(out.read_text())], "markdown_table")
    header = md.splitlines()[0]
    assert header.count("|") == 12  # Method + 10 metric columns
    rows = md.strip().splitlines()
    assert len(rows) == 3


def test_dominating_system_takes_all_best_flags(tmp_path):
    def doc(name, better):
        scores = {}
        for metric in ("i2v_subject", "video_similarity"):
            scores[metric] = {"status": "OK", "value": 90.0 + (5.0 if better else 0.0), "count": 1}
        for metric in ("chamfer_distance", "met3r"):
            scores[metric] = {"status": "OK", "value": 0.10 - (0.05 if better else 0.0), "count": 1}
        return {"system": name, "aggregate": scores}

    payload = json.loads(emit_report([doc("strong", True), doc("weak", False)], "json"))
    for metric in ("i2v_subject", "video_similarity", "chamfer_distance", "met3r"):
        assert payload["best"][metric] == "strong"
