"""Geometry-aware identity metrics.

Point clouds reconstructed from sampled frames are confidence-filtered,
bounded in size, normalized to a common scale, rigidly aligned with ICP, and
compared with a bidirectional Chamfer distance. Cross-view appearance drift
is scored by warping per-pixel features through the reconstructed geometry
and measuring feature dissimilarity (lower is better, 0 is perfect).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .providers.base import GeometryResult
from .records import PointCloud, RigidTransform

DEFAULT_CONF_QUANTILE = 0.5
DEFAULT_MAX_POINTS = 4096
DEFAULT_ICP_MAX_ITER = 50
DEFAULT_ICP_TOL = 1e-6
DEFAULT_GEOMETRY_FRAMES = 8
MET3R_MIN_COVERAGE = 0.05


class EmptyCloudError(ValueError):
    """Confidence filtering removed every point."""


class DegenerateGeometryError(ValueError):
    """Correspondence covariance has rank < 2; no unique rigid alignment."""


def cloud_from_geometry(result: GeometryResult, conf_quantile: float = DEFAULT_CONF_QUANTILE) -> PointCloud:
    """Pool all views' points, keeping those at or above the confidence
    quantile and dropping non-finite entries."""
    pts = result.pointmaps.reshape(-1, 3)
    conf = result.confidences.reshape(-1)
    frames = np.repeat(np.arange(result.view_count), result.pointmaps.shape[1] * result.pointmaps.shape[2])
    finite = np.all(np.isfinite(pts), axis=1)
    cut = float(np.quantile(conf[finite], conf_quantile)) if finite.any() else np.inf
    keep = finite & (conf >= cut)
    if not keep.any():
        raise EmptyCloudError("no points survived confidence filtering")
    return PointCloud(points=pts[keep], confidences=conf[keep], frame_origin=frames[keep])


def downsample(cloud: PointCloud, n_max: int, seed: int = 0) -> PointCloud:
    """Seeded uniform subsample without replacement; identity when small."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n = len(cloud)
    if n <= n_max:
        return cloud
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = np.sort(rng.choice(n, size=n_max, replace=False))
    return PointCloud(
        points=cloud.points[idx],
        confidences=None if cloud.confidences is None else cloud.confidences[idx],
        frame_origin=None if cloud.frame_origin is None else cloud.frame_origin[idx],
    )


def normalize_cloud(cloud: PointCloud) -> Tuple[PointCloud, np.ndarray, float]:
    """Center on the centroid and rescale so the mean point norm is 1.

    Returns (normalized cloud, centroid, scale). Degenerate clouds (all
    points coincident) keep scale 1 and only get centered.
    """
    centroid = cloud.points.mean(axis=0)
    centered = cloud.points - centroid
    scale = float(np.linalg.norm(centered, axis=1).mean())
    if scale <= 1e-15:
        scale = 1.0
    normalized = PointCloud(
        points=centered / scale,
        confidences=cloud.confidences,
        frame_origin=cloud.frame_origin,
    )
    return normalized, centroid, scale


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    rms: float
    residuals: Tuple[float, ...]
    iterations: int


def _kabsch(src: np.ndarray, tgt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form least-squares rotation/translation (proper rotation only)."""
    c_src = src.mean(axis=0)
    c_tgt = tgt.mean(axis=0)
    h = (src - c_src).T @ (tgt - c_tgt)
    u, s, vt = np.linalg.svd(h)
    if np.sum(s > max(s[0], 1.0) * 1e-12) < 2:
        raise DegenerateGeometryError("correspondence covariance rank < 2")
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    rot = v @ np.diag([1.0, 1.0, d]) @ u.T
    tr = c_tgt - rot @ c_src
    return rot, tr


def _icp_from_start(
    src: np.ndarray,
    tgt: np.ndarray,
    tree: cKDTree,
    start_rotation: np.ndarray,
    max_iter: int,
    tol: float,
) -> IcpResult:
    rot = start_rotation
    tr = tgt.mean(axis=0) - start_rotation @ src.mean(axis=0)
    residuals: List[float] = []
    iterations = 0
    for _ in range(max_iter):
        moved = src @ rot.T + tr
        dists, idx = tree.query(moved)
        rms = float(np.sqrt(np.mean(dists**2)))
        if residuals and abs(residuals[-1] - rms) < tol:
            residuals.append(rms)
            break
        residuals.append(rms)
        iterations += 1
        rot, tr = _kabsch(src, tgt[idx])
    else:
        moved = src @ rot.T + tr
        dists, _ = tree.query(moved)
        residuals.append(float(np.sqrt(np.mean(dists**2))))
    return IcpResult(
        transform=RigidTransform(rotation=rot, translation=tr),
        rms=residuals[-1],
        residuals=tuple(residuals),
        iterations=iterations,
    )


def _axis_rotation(axis: np.ndarray, angle_deg: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    angle = np.deg2rad(angle_deg)
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


# Coarse rotation grid for restarts when the identity start plateaus in a
# local minimum: +/-30 degrees about each coordinate axis and body diagonal.
_RESTART_ROTATIONS = tuple(
    _axis_rotation(np.array(axis, dtype=float), sign * 30.0)
    for axis in ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1), (1, -1, 1), (-1, 1, 1), (1, 1, -1))
    for sign in (1.0, -1.0)
)


def icp_align(
    source: PointCloud,
    target: PointCloud,
    max_iter: int = DEFAULT_ICP_MAX_ITER,
    tol: float = DEFAULT_ICP_TOL,
) -> IcpResult:
    """Iterative closest point: returns the rigid transform mapping the
    source cloud into the target's frame plus the final RMS residual.

    Each start aligns centroids, then alternates nearest-neighbor
    correspondences (k-d tree) with the closed-form rotation/translation
    estimate, stopping when the residual change drops below ``tol``; the
    recorded per-iteration RMS sequence is non-increasing. ICP's basin of
    convergence is local, so when the identity start plateaus, a coarse grid
    of restart rotations runs and the lowest-residual result wins.
    """
    src = source.points
    tgt = target.points
    if len(src) < 3 or len(tgt) < 3:
        raise DegenerateGeometryError("need at least 3 points per cloud")
    tree = cKDTree(tgt)
    scale = float(np.linalg.norm(tgt - tgt.mean(axis=0), axis=1).mean()) or 1.0
    good_enough = max(tol, 1e-9) * scale

    best = _icp_from_start(src, tgt, tree, np.eye(3), max_iter, tol)
    if best.rms > good_enough:
        # Coarse-to-fine restarts: rank the restart rotations on a small
        # deterministic subset, then fully refine the two most promising.
        if len(src) > 400:
            sub = src[np.linspace(0, len(src) - 1, 400).astype(int)]
        else:
            sub = src
        ranked = []
        for i, start in enumerate(_RESTART_ROTATIONS):
            coarse = _icp_from_start(sub, tgt, tree, start, 8, max(tol, 1e-9))
            ranked.append((coarse.rms, i, coarse.transform.rotation))
        ranked.sort()
        for _, _, rotation in ranked[:2]:
            candidate = _icp_from_start(src, tgt, tree, rotation, max_iter, tol)
            if candidate.rms < best.rms:
                best = candidate
            if best.rms <= good_enough:
                break
    return best


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Bidirectional Chamfer distance with non-squared Euclidean means:

    ``CD = 0.5 * (mean_x min_y |x - y| + mean_y min_x |x - y|)``
    """
    tree_a = cKDTree(a.points)
    tree_b = cKDTree(b.points)
    d_ab, _ = tree_b.query(a.points)
    d_ba, _ = tree_a.query(b.points)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


GeometryFn = Callable[[Sequence[np.ndarray]], GeometryResult]


def clip_chamfer_score(
    reference_frames: Sequence[np.ndarray],
    generated_frames: Sequence[np.ndarray],
    geometry_fn: GeometryFn,
    conf_quantile: float = DEFAULT_CONF_QUANTILE,
    n_max: int = DEFAULT_MAX_POINTS,
    seed: int = 0,
    max_iter: int = DEFAULT_ICP_MAX_ITER,
    tol: float = DEFAULT_ICP_TOL,
    return_clouds: bool = False,
):
    """Reconstruct both videos' clouds, align generated onto reference, and
    measure the residual Chamfer distance.

    Both clouds pass the same filter -> downsample -> normalize pipeline, so
    global similarity transforms applied to one video's geometry are absorbed
    before the comparison. Callers pass frames already sampled to K.
    ``return_clouds`` additionally yields (reference, aligned generated) for
    debugging dumps.
    """
    ref_cloud = cloud_from_geometry(geometry_fn(reference_frames), conf_quantile)
    gen_cloud = cloud_from_geometry(geometry_fn(generated_frames), conf_quantile)
    # One seed for both clouds: identical inputs stay identical downstream.
    ref_cloud = downsample(ref_cloud, n_max, seed)
    gen_cloud = downsample(gen_cloud, n_max, seed)
    ref_norm, _, _ = normalize_cloud(ref_cloud)
    gen_norm, _, _ = normalize_cloud(gen_cloud)
    icp = icp_align(gen_norm, ref_norm, max_iter=max_iter, tol=tol)
    aligned = PointCloud(points=icp.transform.apply(gen_norm.points))
    score = chamfer_distance(aligned, ref_norm)
    if return_clouds:
        return score, ref_norm, aligned
    return score


def _bilinear_upsample(fmap: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsampling with corner alignment; identity when sizes match."""
    h, w = fmap.shape[:2]
    if (h, w) == (out_h, out_w):
        return fmap
    gy = np.linspace(0, h - 1, out_h)
    gx = np.linspace(0, w - 1, out_w)
    y0 = np.minimum(gy.astype(int), h - 2) if h > 1 else np.zeros(out_h, int)
    x0 = np.minimum(gx.astype(int), w - 2) if w > 1 else np.zeros(out_w, int)
    fy = (gy - y0)[:, None, None]
    fx = (gx - x0)[None, :, None]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    return (
        fmap[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + fmap[np.ix_(y1, x0)] * fy * (1 - fx)
        + fmap[np.ix_(y0, x1)] * (1 - fy) * fx
        + fmap[np.ix_(y1, x1)] * fy * fx
    )


def met3r_pair_score(
    feat_a: np.ndarray,
    feat_b: np.ndarray,
    geometry: GeometryResult,
    min_coverage: float = MET3R_MIN_COVERAGE,
) -> Optional[float]:
    """Cross-view feature dissimilarity in [0, 1] for one reconstructed pair.

    View a's pointmap is transformed into view b's camera, projected with
    view b's intrinsics, and z-buffered (nearest depth wins) to build a
    warped feature map plus validity mask; the score is one minus the mean
    cosine similarity between warped view-a features and view-b features
    over valid pixels. Returns None (SKIPPED) when the warp covers less than
    ``min_coverage`` of the image.
    """
    if geometry.view_count < 2:
        raise ValueError("pair score needs a two-view geometry result")
    h, w = geometry.pointmaps.shape[1:3]
    fa = _bilinear_upsample(np.asarray(feat_a, dtype=np.float64), h, w)
    fb = _bilinear_upsample(np.asarray(feat_b, dtype=np.float64), h, w)

    points = geometry.pointmaps[0].reshape(-1, 3)
    cam_b = geometry.poses[1].apply(points)
    k = geometry.intrinsics[1]
    z = cam_b[:, 2]
    ok = np.isfinite(z) & (z > 1e-9)
    u = np.full(len(z), -1, dtype=np.int64)
    v = np.full(len(z), -1, dtype=np.int64)
    u[ok] = np.round(k[0, 0] * cam_b[ok, 0] / z[ok] + k[0, 2]).astype(np.int64)
    v[ok] = np.round(k[1, 1] * cam_b[ok, 1] / z[ok] + k[1, 2]).astype(np.int64)
    ok &= (u >= 0) & (u < w) & (v >= 0) & (v < h)

    target = v * w + u
    order = np.argsort(z[ok], kind="stable")[::-1]  # nearest depth written last
    src_idx = np.flatnonzero(ok)[order]
    warped = np.zeros((h * w, fa.shape[2]))
    hit = np.zeros(h * w, dtype=bool)
    flat_fa = fa.reshape(-1, fa.shape[2])
    warped[target[src_idx]] = flat_fa[src_idx]
    hit[target[src_idx]] = True

    coverage = hit.mean()
    if coverage < min_coverage:
        return None
    wa = warped[hit]
    vb = fb.reshape(-1, fb.shape[2])[hit]
    num = np.sum(wa * vb, axis=1)
    den = np.linalg.norm(wa, axis=1) * np.linalg.norm(vb, axis=1)
    cos = np.clip(num / np.maximum(den, 1e-12), -1.0, 1.0)
    return float(np.clip(1.0 - cos.mean(), 0.0, 1.0))


FeatureFn = Callable[[np.ndarray], np.ndarray]


def video_met3r(
    frames: Sequence[np.ndarray],
    geometry_fn: GeometryFn,
    feature_fn: FeatureFn,
    min_coverage: float = MET3R_MIN_COVERAGE,
) -> Optional[float]:
    """Mean pair score over consecutive sampled frames; None if every pair
    was skipped for low coverage."""
    if len(frames) < 2:
        raise ValueError("need at least two sampled frames")
    scores = []
    for fa, fb in zip(frames, frames[1:]):
        geo = geometry_fn([fa, fb])
        score = met3r_pair_score(feature_fn(fa), feature_fn(fb), geo, min_coverage)
        if score is not None:
            scores.append(score)
    if not scores:
        return None
    return float(np.mean(scores))


# --- debug export -------------------------------------------------------------

_CLOUD_HEADER = struct.Struct("<I")


def encode_cloud_blob(cloud: PointCloud) -> bytes:
    """Count header (u32 LE) + float32 LE xyz triples; for debugging dumps."""
    pts = np.ascontiguousarray(cloud.points, dtype="<f4")
    return _CLOUD_HEADER.pack(len(cloud)) + pts.tobytes()


def decode_cloud_blob(data: bytes) -> PointCloud:
    (count,) = _CLOUD_HEADER.unpack_from(data, 0)
    pts = np.frombuffer(data, dtype="<f4", offset=_CLOUD_HEADER.size)
    if pts.size != count * 3:
        raise ValueError(f"blob holds {pts.size} floats, header wants {count * 3}")
    return PointCloud(points=pts.reshape(count, 3).astype(np.float64))
