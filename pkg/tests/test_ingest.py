import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from oracles import brute_force_laplacian_variance
from vidident.ingest import (
    FrameImage,
    FramePlan,
    InvalidPlanError,
    ProbeRejection,
    area_downscale,
    decode_frames,
    encode_frame_stream,
    grayscale,
    laplacian_variance,
    luminance_mean,
    parse_frame_stream,
    probe_asset,
    uniform_indices,
    write_rvid,
)
from vidident.records import AssetKind


def gray_clip(tmp_path, levels, w=16, h=12, fps=16.0, name="clip.rvid"):
    """A clip whose frame i is the solid gray level levels[i]."""
    frames = [np.full((h, w, 3), g, dtype=np.uint8) for g in levels]
    path = tmp_path / name
    write_rvid(path, frames, fps)
    return path


class TestUniformIndices:
    def test_identity_sampling(self):
        assert uniform_indices(5, 5).indices == (0, 1, 2, 3, 4)

    def test_single_frame(self):
        assert uniform_indices(1, 1).indices == (0,)

    def test_middle_pick_for_k1(self):
        assert uniform_indices(81, 1).indices == (40,)

    def test_floor_formula_81_10(self):
        # floor(k * 80 / 9) for k = 0..9, first/last pinned
        assert uniform_indices(81, 10).indices == (0, 8, 17, 26, 35, 44, 53, 62, 71, 80)

    def test_floor_formula_81_12(self):
        assert uniform_indices(81, 12).indices == (0, 7, 14, 21, 29, 36, 43, 50, 58, 65, 72, 80)

    def test_k_greater_than_t_rejected(self):
        with pytest.raises(InvalidPlanError):
            uniform_indices(4, 5)

    def test_monotone_first_last_preserved(self, rng):
        for _ in range(50):
            t = int(rng.integers(2, 200))
            for k in range(2, t + 1):
                plan = uniform_indices(t, k)
                assert plan.indices[0] == 0 and plan.indices[-1] == t - 1
                assert all(b > a for a, b in zip(plan.indices, plan.indices[1:]))


class TestProbe:
    def test_synthetic_clip_matches_generation(self, tmp_path):
        path = gray_clip(tmp_path, range(81), w=640, h=480)
        asset, info = probe_asset(path)
        assert info.frame_count == 81
        assert (info.width, info.height) == (640, 480)
        assert info.fps == 16.0
        assert asset.kind is AssetKind.VIDEO
        assert asset.bytes == path.stat().st_size

    def test_truncated_file_rejected(self, tmp_path):
        path = gray_clip(tmp_path, range(20))
        truncated = tmp_path / "trunc.rvid"
        truncated.write_bytes(path.read_bytes()[:100])
        with pytest.raises(ProbeRejection):
            probe_asset(truncated)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.rvid"
        path.write_bytes(b"")
        with pytest.raises(ProbeRejection):
            probe_asset(path)

    def test_missing_path_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            probe_asset(tmp_path / "nope.rvid")

    def test_image_sequence_directory(self, tmp_path, rng):
        seq = tmp_path / "frames.seq"
        seq.mkdir()
        for i in range(30):
            arr = rng.integers(0, 256, (10, 14, 3)).astype(np.uint8)
            Image.fromarray(arr).save(seq / f"{i:04d}.png")
        asset, info = probe_asset(seq)
        assert asset.kind is AssetKind.IMAGE_SEQUENCE
        assert info.frame_count == 30
        assert (info.width, info.height) == (14, 10)

    def test_still_image(self, tmp_path, rng):
        arr = rng.integers(0, 256, (8, 9, 3)).astype(np.uint8)
        p = tmp_path / "img.png"
        Image.fromarray(arr).save(p)
        asset, info = probe_asset(p)
        assert asset.kind is AssetKind.IMAGE
        assert (info.frame_count, info.width, info.height) == (1, 9, 8)


class TestDecode:
    def test_planned_frames_have_expected_means(self, tmp_path):
        levels = list(range(0, 250, 10))
        path = gray_clip(tmp_path, levels)
        plan = uniform_indices(len(levels), 5)
        frames = decode_frames(path, plan)
        means = [f.array.mean() for f in frames]
        assert means == [float(levels[i]) for i in plan.indices]

    def test_full_decode_in_order(self, tmp_path):
        path = gray_clip(tmp_path, [1, 2, 3, 4, 5])
        frames = decode_frames(path, uniform_indices(5, 5))
        assert [int(f.array[0, 0, 0]) for f in frames] == [1, 2, 3, 4, 5]

    def test_out_of_range_plan_rejected(self, tmp_path):
        path = gray_clip(tmp_path, [1, 2, 3])
        with pytest.raises(InvalidPlanError):
            decode_frames(path, FramePlan(total_frames=5, indices=(0, 4)))

    def test_decode_determinism(self, tmp_path, rng):
        frames = [rng.integers(0, 256, (6, 7, 3)).astype(np.uint8) for _ in range(9)]
        path = tmp_path / "noise.rvid"
        write_rvid(path, frames, 12.0)
        plan = uniform_indices(9, 4)
        first = b"".join(f.pixels for f in decode_frames(path, plan))
        second = b"".join(f.pixels for f in decode_frames(path, plan))
        assert first == second

    def test_frame_stream_contract(self, tmp_path):
        path = gray_clip(tmp_path, [7, 8, 9], w=5, h=4)
        blob = encode_frame_stream(path, [0, 2])
        parsed = parse_frame_stream(blob)
        assert [idx for idx, _ in parsed] == [0, 2]
        assert parsed[0][1].width == 5 and parsed[0][1].height == 4
        assert int(parsed[1][1].array[0, 0, 0]) == 9

    def test_framedump_subprocess_matches_inprocess(self, tmp_path):
        path = gray_clip(tmp_path, range(10), w=6, h=5)
        out = subprocess.run(
            [sys.executable, "-m", "vidident.framedump", str(path), "1", "4", "7"],
            capture_output=True,
            check=True,
        )
        assert out.stdout == encode_frame_stream(path, [1, 4, 7])


class TestLuminance:
    def test_solid_black(self):
        f = FrameImage(np.zeros((4, 4, 3), dtype=np.uint8))
        assert luminance_mean(f) == 0.0

    def test_solid_white(self):
        f = FrameImage(np.full((4, 4, 3), 255, dtype=np.uint8))
        assert abs(luminance_mean(f) - 255.0) <= 1e-9

    def test_hand_computed_luma(self):
        arr = np.zeros((1, 2, 3), dtype=np.uint8)
        arr[0, 0] = (255, 0, 0)
        arr[0, 1] = (0, 255, 0)
        expected = (0.299 * 255 + 0.587 * 255) / 2
        assert abs(luminance_mean(FrameImage(arr)) - expected) <= 1e-9
        assert abs(expected - 112.965) <= 1e-9

    def test_flip_invariance(self, rng):
        arr = rng.integers(0, 256, (8, 10, 3)).astype(np.uint8)
        base = luminance_mean(FrameImage(arr))
        assert luminance_mean(FrameImage(arr[::-1].copy())) == pytest.approx(base, abs=1e-12)
        assert luminance_mean(FrameImage(arr[:, ::-1].copy())) == pytest.approx(base, abs=1e-12)


class TestLaplacianVariance:
    def test_constant_image_is_zero(self):
        f = FrameImage(np.full((6, 6, 3), 77, dtype=np.uint8))
        assert laplacian_variance(f) == 0.0

    def test_center_spike_matches_bruteforce(self):
        arr = np.zeros((3, 3, 3), dtype=np.uint8)
        arr[1, 1] = 255
        got = laplacian_variance(FrameImage(arr))
        expected = brute_force_laplacian_variance(grayscale(arr))
        assert got == pytest.approx(expected, abs=1e-9)

    def test_random_images_match_bruteforce(self, rng):
        for _ in range(10):
            arr = rng.integers(0, 256, (5, 7, 3)).astype(np.uint8)
            got = laplacian_variance(FrameImage(arr))
            expected = brute_force_laplacian_variance(grayscale(arr))
            assert got == pytest.approx(expected, rel=1e-12)

    def test_blur_reduces_variance(self, rng):
        checker = np.indices((16, 16)).sum(axis=0) % 2 * 255
        sharp = np.repeat(checker[:, :, None], 3, axis=2).astype(np.uint8)
        blurred = area_downscale(grayscale(sharp), 8, 8)
        blurred_full = np.repeat(
            np.repeat(blurred, 2, axis=0), 2, axis=1
        )
        blurred_rgb = np.repeat(blurred_full[:, :, None], 3, axis=2).astype(np.uint8)
        assert laplacian_variance(FrameImage(sharp)) > laplacian_variance(FrameImage(blurred_rgb))

    def test_flip_invariance(self, rng):
        arr = rng.integers(0, 256, (9, 9, 3)).astype(np.uint8)
        base = laplacian_variance(FrameImage(arr))
        assert laplacian_variance(FrameImage(arr[::-1].copy())) == pytest.approx(base, rel=1e-12)
        assert laplacian_variance(FrameImage(arr[:, ::-1].copy())) == pytest.approx(base, rel=1e-12)


class TestAreaDownscale:
    def test_preserves_mean_exactly(self, rng):
        plane = rng.integers(0, 256, (37, 53)).astype(np.float64)
        thumb = area_downscale(plane, 32, 32)
        assert thumb.mean() == pytest.approx(plane.mean(), abs=1e-9)

    def test_integer_block_average(self):
        plane = np.arange(16, dtype=np.float64).reshape(4, 4)
        thumb = area_downscale(plane, 2, 2)
        expected = np.array(
            [[plane[:2, :2].mean(), plane[:2, 2:].mean()], [plane[2:, :2].mean(), plane[2:, 2:].mean()]]
        )
        assert np.allclose(thumb, expected, atol=1e-12)
