"""Analytic 3D test scenes with exactly known geometry.

A scene renders deterministic views of a textured plane or a sphere from
pinhole cameras whose poses are known in closed form, so the geometry mock
can answer with exact pointmaps, intrinsics, and poses. The first scene view
uses the identity pose; cameras orbit a pivot or rotate in place.

Pixel convention: pixel (row v, col u) sits at image coordinate (x=u, y=v)
with the principal point at ((W-1)/2, (H-1)/2); projection is
``u = fx * X/Z + cx``.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..records import RigidTransform
from .base import GeometryResult


def _mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 arrays."""
    z = x + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _hash_lanes(ix: np.ndarray, iy: np.ndarray, seed: int, lanes: int) -> np.ndarray:
    """Deterministic per-texel hash values in [0, 1), shape (*ix.shape, lanes)."""
    base = _mix64(
        ix.astype(np.uint64) * np.uint64(0x100000001B3)
        ^ _mix64(iy.astype(np.uint64) ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    )
    out = np.empty(ix.shape + (lanes,), dtype=np.float64)
    for lane in range(lanes):
        h = _mix64(base ^ np.uint64(lane * 0x9E3779B9 + 1))
        out[..., lane] = (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)
    return out


def rotation_about_y(angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _look_at(center: np.ndarray, target: np.ndarray) -> RigidTransform:
    """World-to-camera transform for a camera at ``center`` looking at ``target``."""
    z = target - center
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 1.0, 0.0])
    x = np.cross(up, z)
    if np.linalg.norm(x) < 1e-12:
        x = np.array([1.0, 0.0, 0.0])
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.stack([x, y, z])
    return RigidTransform(rotation=rot, translation=-(rot @ center))


@dataclass(frozen=True)
class CameraRig:
    pose: RigidTransform  # world -> camera


class SyntheticScene(ABC):
    """Base class: known cameras over an analytic surface."""

    def __init__(self, width: int, height: int, focal: float, cameras: Sequence[CameraRig], seed: int):
        self.width = width
        self.height = height
        self.focal = float(focal)
        self.cameras = list(cameras)
        self.seed = seed
        if not np.allclose(cameras[0].pose.rotation, np.eye(3)) or not np.allclose(
            cameras[0].pose.translation, 0.0
        ):
            raise ValueError("first scene camera must have the identity pose")

    @property
    def view_count(self) -> int:
        return len(self.cameras)

    def intrinsics(self) -> np.ndarray:
        cx = (self.width - 1) / 2.0
        cy = (self.height - 1) / 2.0
        return np.array([[self.focal, 0.0, cx], [0.0, self.focal, cy], [0.0, 0.0, 1.0]])

    def _rays(self, view: int) -> Tuple[np.ndarray, np.ndarray]:
        """(origin, directions) of all pixel rays in world coordinates."""
        pose = self.cameras[view].pose
        cx = (self.width - 1) / 2.0
        cy = (self.height - 1) / 2.0
        u, v = np.meshgrid(np.arange(self.width), np.arange(self.height))
        dirs_cam = np.stack(
            [(u - cx) / self.focal, (v - cy) / self.focal, np.ones_like(u, dtype=np.float64)],
            axis=-1,
        )
        rot_inv = pose.rotation.T
        origin = -(rot_inv @ pose.translation)
        dirs_world = dirs_cam @ rot_inv.T
        return origin, dirs_world

    @abstractmethod
    def _intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """World-space surface points for rays (H, W, 3)."""

    @abstractmethod
    def _texels(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Integer texture coordinates of surface points."""

    def pointmap_world(self, view: int) -> np.ndarray:
        origin, dirs = self._rays(view)
        return self._intersect(origin, dirs)

    def render(self, view: int) -> np.ndarray:
        pts = self.pointmap_world(view)
        tx, ty = self._texels(pts)
        rgb = _hash_lanes(tx, ty, self.seed, 3)
        return np.clip(rgb * 255.0, 0, 255).astype(np.uint8)

    def feature_map(self, view: int, dim: int = 8) -> np.ndarray:
        """Unit-norm feature vectors that are a pure function of the surface
        texel each pixel sees; two views observing the same point agree."""
        pts = self.pointmap_world(view)
        tx, ty = self._texels(pts)
        feats = _hash_lanes(tx, ty, self.seed ^ 0x5EED, dim) * 2.0 - 1.0
        norms = np.linalg.norm(feats, axis=-1, keepdims=True)
        return feats / np.maximum(norms, 1e-12)

    def geometry(self, views: Sequence[int]) -> GeometryResult:
        """Exact reconstruction expressed in the frame of ``views[0]``."""
        base = self.cameras[views[0]].pose
        base_inv = base.inverse()
        pointmaps = []
        poses: List[RigidTransform] = []
        for v in views:
            world = self.pointmap_world(v)
            pointmaps.append(base.apply(world.reshape(-1, 3)).reshape(world.shape))
            poses.append(self.cameras[v].pose.compose(base_inv))
        pm = np.stack(pointmaps)
        conf = np.ones(pm.shape[:3])
        ks = np.stack([self.intrinsics()] * len(views))
        return GeometryResult(pointmaps=pm, confidences=conf, intrinsics=ks, poses=tuple(poses))


class TexturedPlaneScene(SyntheticScene):
    """Infinite plane z = depth (world frame) with a procedural texel grid.

    The texel pitch equals one pixel footprint of the first (frontal) camera,
    so translation-only stereo pairs with integer pixel disparity observe
    identical texel grids in both views.
    """

    def __init__(
        self,
        width: int = 64,
        height: int = 64,
        focal: float = 64.0,
        depth: float = 2.0,
        cameras: Optional[Sequence[CameraRig]] = None,
        seed: int = 7,
    ):
        self.depth = float(depth)
        cams = cameras or [CameraRig(RigidTransform.identity())]
        super().__init__(width, height, focal, cams, seed)

    @classmethod
    def frontal(cls, **kwargs) -> "TexturedPlaneScene":
        return cls(cameras=[CameraRig(RigidTransform.identity())], **kwargs)

    @classmethod
    def stereo_pair(cls, shift_px: int = 8, depth: float = 2.0, focal: float = 64.0, **kwargs) -> "TexturedPlaneScene":
        """Two cameras translated along +x by an integer pixel disparity."""
        dx = shift_px * depth / focal
        second = RigidTransform(rotation=np.eye(3), translation=np.array([-dx, 0.0, 0.0]))
        cams = [CameraRig(RigidTransform.identity()), CameraRig(second)]
        return cls(cameras=cams, depth=depth, focal=focal, **kwargs)

    @classmethod
    def rotated_pair(cls, angle_deg: float = 10.0, **kwargs) -> "TexturedPlaneScene":
        """Two cameras sharing a center, the second rotated about the y axis."""
        rot = RigidTransform(rotation=rotation_about_y(angle_deg), translation=np.zeros(3))
        cams = [CameraRig(RigidTransform.identity()), CameraRig(rot)]
        return cls(cameras=cams, **kwargs)

    @classmethod
    def orbit(cls, n_views: int, max_angle_deg: float = 12.0, **kwargs) -> "TexturedPlaneScene":
        """In-place camera rotations sweeping symmetric angles about y."""
        angles = np.linspace(-max_angle_deg, max_angle_deg, n_views)
        angles = angles - angles[0]  # first view stays identity
        cams = [
            CameraRig(RigidTransform(rotation=rotation_about_y(a), translation=np.zeros(3)))
            for a in angles
        ]
        return cls(cameras=cams, **kwargs)

    def _intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        s = (self.depth - origin[2]) / dirs[..., 2]
        return origin + s[..., None] * dirs

    def _texels(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pitch = self.depth / self.focal
        tx = np.round(points[..., 0] / pitch).astype(np.int64)
        ty = np.round(points[..., 1] / pitch).astype(np.int64)
        return tx, ty


class SphereScene(SyntheticScene):
    """Sphere centered on the first camera's optical axis, filling the frame."""

    def __init__(
        self,
        width: int = 64,
        height: int = 64,
        focal: float = 64.0,
        center_z: float = 3.0,
        radius: float = 2.0,
        n_views: int = 1,
        orbit_deg: float = 20.0,
        seed: int = 11,
    ):
        self.center = np.array([0.0, 0.0, float(center_z)])
        self.radius = float(radius)
        cams = [CameraRig(RigidTransform.identity())]
        if n_views > 1:
            for a in np.linspace(0.0, orbit_deg, n_views)[1:]:
                rot = rotation_about_y(a)
                cam_center = self.center + rot @ (np.zeros(3) - self.center)
                cams.append(CameraRig(_look_at(cam_center, self.center)))
        super().__init__(width, height, focal, cams, seed)
        # Every pixel ray must hit the sphere; verify the frontal view's corner.
        half_diag = np.hypot((width - 1) / 2.0, (height - 1) / 2.0) / focal
        if np.arctan(half_diag) >= np.arcsin(min(self.radius / center_z, 1.0)):
            raise ValueError("sphere does not cover the field of view")

    def _intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        oc = origin - self.center
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * np.sum(dirs * oc, axis=-1)
        c = float(oc @ oc) - self.radius**2
        disc = b * b - 4.0 * a * c
        if np.any(disc < 0):
            raise ValueError("a pixel ray missed the sphere")
        s = (-b - np.sqrt(disc)) / (2.0 * a)
        return origin + s[..., None] * dirs

    def _texels(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rel = (points - self.center) / self.radius
        theta = np.arctan2(rel[..., 0], rel[..., 2])
        phi = np.arcsin(np.clip(rel[..., 1], -1.0, 1.0))
        scale = max(self.width, self.height)
        return (
            np.round(theta * scale).astype(np.int64),
            np.round(phi * scale).astype(np.int64),
        )


class SceneRegistry:
    """Maps rendered view bytes back to (scene, view) for the mocks."""

    def __init__(self) -> None:
        self._views: Dict[str, Tuple[SyntheticScene, int]] = {}

    @staticmethod
    def _key(image: np.ndarray) -> str:
        return hashlib.sha256(np.ascontiguousarray(image, dtype=np.uint8).tobytes()).hexdigest()

    def register(self, scene: SyntheticScene) -> List[np.ndarray]:
        frames = []
        for v in range(scene.view_count):
            img = scene.render(v)
            self._views[self._key(img)] = (scene, v)
            frames.append(img)
        return frames

    def lookup(self, image: np.ndarray) -> Optional[Tuple[SyntheticScene, int]]:
        return self._views.get(self._key(image))

    def __len__(self) -> int:
        return len(self._views)
