"""Independent brute-force reference implementations used as test oracles.

These deliberately avoid the library's own code paths (k-d trees, vectorized
convolutions, incremental clustering) so a bug in the implementation cannot
hide in its oracle.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Set, Tuple

import numpy as np


def brute_force_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """O(N*M) bidirectional Chamfer with non-squared Euclidean means."""
    d_ab = []
    for x in a:
        d_ab.append(min(float(np.linalg.norm(x - y)) for y in b))
    d_ba = []
    for y in b:
        d_ba.append(min(float(np.linalg.norm(y - x)) for x in a))
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


def brute_force_chamfer_matrix(a: np.ndarray, b: np.ndarray) -> float:
    """Full O(N*M) pairwise-distance-matrix Chamfer; no spatial index."""
    dists = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    return 0.5 * (float(dists.min(axis=1).mean()) + float(dists.min(axis=0).mean()))


def brute_force_laplacian_variance(gray: np.ndarray) -> float:
    """Pixel-loop 4-neighbor Laplacian with replicated edges."""
    h, w = gray.shape
    responses = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            up = gray[max(y - 1, 0), x]
            down = gray[min(y + 1, h - 1), x]
            left = gray[y, max(x - 1, 0)]
            right = gray[y, min(x + 1, w - 1)]
            responses[y, x] = up + down + left + right - 4.0 * gray[y, x]
    return float(responses.var())


def brute_force_dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Union-find DBSCAN over cosine distance with the same border rule as
    the implementation (border joins its lowest-index core neighbor)."""
    unit = points / np.linalg.norm(points, axis=1, keepdims=True)
    n = len(unit)
    dist = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            dist[i, j] = 1.0 - float(np.dot(unit[i], unit[j]))
    neighbor = dist <= eps
    core = [int(neighbor[i].sum()) >= min_pts for i in range(n)]

    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)

    for i in range(n):
        for j in range(i + 1, n):
            if core[i] and core[j] and neighbor[i, j]:
                union(i, j)

    labels = np.full(n, -1, dtype=np.int64)
    next_label = 0
    roots: Dict[int, int] = {}
    for i in range(n):
        if core[i]:
            root = find(i)
            if root not in roots:
                roots[root] = next_label
                next_label += 1
            labels[i] = roots[root]
    for i in range(n):
        if core[i] or not neighbor[i].any():
            continue
        core_neighbors = [j for j in range(n) if core[j] and neighbor[i, j]]
        if core_neighbors:
            labels[i] = labels[core_neighbors[0]]
    return labels


def labels_equivalent(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two clusterings agree up to label renaming (noise fixed)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    mapping: Dict[int, int] = {}
    reverse: Dict[int, int] = {}
    for x, y in zip(a.tolist(), b.tolist()):
        if (x == -1) != (y == -1):
            return False
        if x == -1:
            continue
        if mapping.setdefault(x, y) != y:
            return False
        if reverse.setdefault(y, x) != x:
            return False
    return True


def brute_force_split(scores: Sequence[float], theta: float) -> List[Tuple[int, int]]:
    """Reference segmentation: scan runs of supra-threshold transitions and
    cut at each run's first maximum; return inclusive frame ranges."""
    cuts = []
    i = 0
    n = len(scores)
    while i < n:
        if scores[i] > theta:
            j = i
            while j + 1 < n and scores[j + 1] > theta:
                j += 1
            window = list(scores[i : j + 1])
            cuts.append(i + window.index(max(window)))
            i = j + 1
        else:
            i += 1
    ranges = []
    start = 0
    for c in cuts:
        ranges.append((start, c))
        start = c + 1
    ranges.append((start, n))
    return ranges


def replay_pending(
    histories: Dict[str, Dict[str, str]], stage: str, sequence: Sequence[str]
) -> Set[str]:
    """Resume oracle: replay verdict histories and collect clips that KEEP
    every stage before ``stage`` in ``sequence`` and lack a verdict at it."""
    pending = set()
    prior = list(sequence)[: list(sequence).index(stage)]
    for clip_id, verdicts in histories.items():
        if stage in verdicts:
            continue
        if all(verdicts.get(p) == "KEEP" for p in prior):
            pending.add(clip_id)
    return pending


def brute_force_dedup_instances(
    instances: Sequence[Tuple[str, Tuple[float, float, float, float], float]],
    iou_threshold: float,
) -> Set[int]:
    """Reference consolidation: indices that survive greedy score-ordered
    merging of same-label boxes with IoU >= threshold."""

    def iou(a, b):
        ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
        ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
        if ix0 >= ix1 or iy0 >= iy1:
            return 0.0
        inter = (ix1 - ix0) * (iy1 - iy0)
        ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
        return inter / ua

    order = sorted(range(len(instances)), key=lambda i: (-instances[i][2], i))
    kept: List[int] = []
    for i in order:
        label_i = " ".join(instances[i][0].lower().split())
        absorbed = False
        for k in kept:
            label_k = " ".join(instances[k][0].lower().split())
            if label_i == label_k and iou(instances[i][1], instances[k][1]) >= iou_threshold:
                absorbed = True
                break
        if not absorbed:
            kept.append(i)
    return set(kept)
