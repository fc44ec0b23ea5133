"""Software rasterizer producing per-frame guidance channels.

Each frame renders to a G-buffer holding, per pixel, the UV coordinate,
object id (0 = background) and camera-space depth of the nearest surface.
Conventions:

- pixel (0, 0) is top-left; pixel centers sit at half-integer coordinates
- coverage uses the top-left fill rule, so shared edges are never written twice
- UVs are interpolated perspective-correctly (1/z-weighted)
- triangles touching the near plane are culled whole, not clipped; triangles
  entirely beyond the far plane are dropped
- no backface culling: both windings render
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import AnimatedScene, CameraPose

BACKGROUND_ID = 0
BACKGROUND_DEPTH = np.inf


@dataclass
class GBufferFrame:
    uv: np.ndarray  # (H, W, 2), undefined where background
    object_id: np.ndarray  # (H, W) uint16, 0 = background
    depth: np.ndarray  # (H, W), +inf on background

    @property
    def height(self) -> int:
        return self.object_id.shape[0]

    @property
    def width(self) -> int:
        return self.object_id.shape[1]

    @property
    def coverage(self) -> np.ndarray:
        return self.object_id != BACKGROUND_ID

    @staticmethod
    def background(width: int, height: int) -> "GBufferFrame":
        return GBufferFrame(
            uv=np.zeros((height, width, 2), dtype=np.float64),
            object_id=np.zeros((height, width), dtype=np.uint16),
            depth=np.full((height, width), BACKGROUND_DEPTH, dtype=np.float64),
        )

    def validate(self):
        covered = self.coverage
        if not np.all(np.isinf(self.depth[~covered])):
            raise ValueError("background pixels must carry the depth sentinel")
        if not np.all(np.isfinite(self.depth[covered])) or np.any(self.depth[covered] <= 0):
            raise ValueError("covered pixels must have finite positive depth")
        if covered.any():
            uv = self.uv[covered]
            if uv.min() < 0.0 or uv.max() > 1.0:
                raise ValueError("covered pixels must have uv in [0, 1]")


def project_vertex(
    v, pose: CameraPose, width: int, height: int
) -> tuple[tuple[float, float], float]:
    """Perspective-project one world-space point.

    Returns continuous pixel coordinates (origin at the top-left corner of
    the top-left pixel) and positive camera-space depth. The caller must
    ensure the point is in front of the near plane.
    """
    cam = pose.world_to_camera(np.asarray(v, dtype=np.float64))
    x, y, z = cam
    focal = (height / 2.0) / math.tan(pose.fov_y / 2.0)
    px = width / 2.0 + focal * x / z
    py = height / 2.0 + focal * y / z
    return (float(px), float(py)), float(z)


def _edge(ax, ay, bx, by, px, py):
    # signed area (x2) of triangle (a, b, p); positive when p is left of a->b
    # in the y-down screen frame used here
    return (px - ax) * (by - ay) - (py - ay) * (bx - ax)


def _top_left(ex: float, ey: float) -> bool:
    # winding is normalized so interior edge functions are positive;
    # then top edges run toward -x and left edges toward +y
    return (ey == 0.0 and ex < 0.0) or ey > 0.0


def _raster_triangle(gbuf: GBufferFrame, obj_id: int, pts, depths, uvs):
    """Rasterize one screen-space triangle into the G-buffer (z-tested)."""
    height, width = gbuf.object_id.shape
    (x0, y0), (x1, y1), (x2, y2) = pts
    area = _edge(x0, y0, x1, y1, x2, y2)
    if area == 0.0:
        return
    if area < 0.0:
        (x1, y1, x2, y2) = (x2, y2, x1, y1)
        depths = (depths[0], depths[2], depths[1])
        uvs = (uvs[0], uvs[2], uvs[1])
        area = -area

    ix_lo = max(0, math.ceil(min(x0, x1, x2) - 0.5))
    ix_hi = min(width - 1, math.floor(max(x0, x1, x2) - 0.5))
    iy_lo = max(0, math.ceil(min(y0, y1, y2) - 0.5))
    iy_hi = min(height - 1, math.floor(max(y0, y1, y2) - 0.5))
    if ix_lo > ix_hi or iy_lo > iy_hi:
        return

    px = np.arange(ix_lo, ix_hi + 1, dtype=np.float64)[None, :] + 0.5
    py = np.arange(iy_lo, iy_hi + 1, dtype=np.float64)[:, None] + 0.5
    e0 = _edge(x1, y1, x2, y2, px, py)
    e1 = _edge(x2, y2, x0, y0, px, py)
    e2 = _edge(x0, y0, x1, y1, px, py)

    covered = np.ones(e0.shape, dtype=bool)
    for e, (ax, ay, bx, by) in (
        (e0, (x1, y1, x2, y2)),
        (e1, (x2, y2, x0, y0)),
        (e2, (x0, y0, x1, y1)),
    ):
        if _top_left(bx - ax, by - ay):
            covered &= e >= 0.0
        else:
            covered &= e > 0.0
    if not covered.any():
        return

    l0 = e0 / area
    l1 = e1 / area
    l2 = e2 / area
    z0, z1, z2 = depths
    inv_z = l0 / z0 + l1 / z1 + l2 / z2
    depth = 1.0 / inv_z
    u = (l0 * uvs[0][0] / z0 + l1 * uvs[1][0] / z1 + l2 * uvs[2][0] / z2) * depth
    v = (l0 * uvs[0][1] / z0 + l1 * uvs[1][1] / z1 + l2 * uvs[2][1] / z2) * depth

    window = (slice(iy_lo, iy_hi + 1), slice(ix_lo, ix_hi + 1))
    write = covered & (depth < gbuf.depth[window])
    gbuf.depth[window][write] = depth[write]
    gbuf.object_id[window][write] = obj_id
    gbuf.uv[window][:, :, 0][write] = np.clip(u[write], 0.0, 1.0)
    gbuf.uv[window][:, :, 1][write] = np.clip(v[write], 0.0, 1.0)


def rasterize_frame(
    scene: AnimatedScene, frame_index: int, width: int, height: int
) -> GBufferFrame:
    """Z-buffered rasterization of one frame into a G-buffer."""
    if not 0 <= frame_index < scene.frame_count:
        raise IndexError(f"frame_index {frame_index} outside 0..{scene.frame_count - 1}")
    pose = scene.camera_frames[frame_index]
    focal = (height / 2.0) / math.tan(pose.fov_y / 2.0)
    gbuf = GBufferFrame.background(width, height)

    for obj in scene.objects:
        cam = pose.world_to_camera(obj.frame_vertices(frame_index))
        zs = cam[:, 2]
        px = width / 2.0 + focal * cam[:, 0] / zs
        py = height / 2.0 + focal * cam[:, 1] / zs
        for face, uv_face in zip(obj.faces, obj.uv_faces):
            tz = zs[face]
            if np.any(tz < pose.near) or np.all(tz > pose.far):
                continue
            pts = tuple((px[i], py[i]) for i in face)
            uvs = tuple(obj.uvs[i] for i in uv_face)
            _raster_triangle(gbuf, obj.object_id, pts, tuple(tz), uvs)
    return gbuf


def rasterize_sequence(scene: AnimatedScene, width: int, height: int) -> list[GBufferFrame]:
    return [rasterize_frame(scene, i, width, height) for i in range(scene.frame_count)]


def depth_conditioning(gbuf: GBufferFrame) -> np.ndarray:
    """Inverse depth normalized to [0, 1] over covered pixels; background 0.

    Near surfaces map bright, far surfaces dark; a constant-depth frame maps
    to 1 everywhere covered.
    """
    out = np.zeros(gbuf.depth.shape, dtype=np.float64)
    covered = gbuf.coverage
    if not covered.any():
        return out
    inv = 1.0 / gbuf.depth[covered]
    lo, hi = inv.min(), inv.max()
    if hi - lo < 1e-12:
        out[covered] = 1.0
    else:
        out[covered] = (inv - lo) / (hi - lo)
    return out
