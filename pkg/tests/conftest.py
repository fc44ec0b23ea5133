"""Shared scene/G-buffer builders for the test suite."""

import math

import numpy as np
import pytest

from uvdiff.rasterizer import GBufferFrame
from uvdiff.scene import AnimatedScene, CameraPose, MeshObject, look_at_pose


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[ACCEPTANCE] {status} {name}")


def identity_pose(fov_y=math.pi / 2, near=0.1, far=100.0) -> CameraPose:
    """Camera at the origin with camera axes equal to world axes."""
    return CameraPose(np.eye(3), np.zeros(3), fov_y, near, far)


def unit_quad(object_id=1, size=1.0, z=0.0, n_frames=1, dx_per_frame=0.0) -> MeshObject:
    """Axis-aligned quad in the z=const plane with a full [0,1]^2 atlas."""
    base = np.array(
        [
            [-size, -size, z],
            [size, -size, z],
            [size, size, z],
            [-size, size, z],
        ]
    )
    frames = np.stack([base + np.array([i * dx_per_frame, 0.0, 0.0]) for i in range(n_frames)])
    return MeshObject(
        object_id=object_id,
        vertices_per_frame=frames,
        uvs=np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        faces=np.array([[0, 1, 2], [0, 2, 3]]),
        uv_faces=np.array([[0, 1, 2], [0, 2, 3]]),
    )


def facing_quad_scene(n_frames=1, dx_per_frame=0.0, distance=3.0, fov=1.0) -> AnimatedScene:
    """Quad facing a static camera; optionally sliding along +x."""
    quad = unit_quad(n_frames=n_frames if dx_per_frame else 1, dx_per_frame=dx_per_frame)
    pose = look_at_pose([0, 0, -distance], [0, 0, 0], [0, 1, 0], fov, 0.1, 50.0)
    return AnimatedScene([quad], [pose] * n_frames, n_frames)


def fullscreen_quad_scene(width, height, distance=2.0, n_frames=1) -> AnimatedScene:
    """Identity-pose camera with a quad exactly filling the image.

    With the identity pose the analytic UV at pixel (iy, ix) is
    ((ix + 0.5) / W, (iy + 0.5) / H).
    """
    fov = math.pi / 2
    s = distance * math.tan(fov / 2)
    quad = MeshObject(
        object_id=1,
        vertices_per_frame=np.array(
            [[[-s, -s, distance], [s, -s, distance], [s, s, distance], [-s, s, distance]]]
        ),
        uvs=np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        faces=np.array([[0, 1, 2], [0, 2, 3]]),
        uv_faces=np.array([[0, 1, 2], [0, 2, 3]]),
    )
    pose = identity_pose(fov)
    return AnimatedScene([quad], [pose] * n_frames, n_frames)


def grid_gbuffer(height, width, object_id=1, covered=None) -> GBufferFrame:
    """Synthetic G-buffer whose uv field is the pixel-center grid.

    With texel resolution R == width == height the pixel-to-texel map is
    the identity, hence injective.
    """
    gbuf = GBufferFrame.background(width, height)
    ys, xs = np.mgrid[0:height, 0:width]
    mask = np.ones((height, width), dtype=bool) if covered is None else covered
    gbuf.uv[:, :, 0] = np.where(mask, (xs + 0.5) / width, 0.0)
    gbuf.uv[:, :, 1] = np.where(mask, (ys + 0.5) / height, 0.0)
    gbuf.object_id[mask] = object_id
    gbuf.depth[mask] = 2.0
    return gbuf


def shifted_gbuffer(gbuf: GBufferFrame, shift_x: int) -> GBufferFrame:
    """Same surface points observed `shift_x` pixels to the right."""
    out = GBufferFrame.background(gbuf.width, gbuf.height)
    out.uv[:, shift_x:] = gbuf.uv[:, : gbuf.width - shift_x]
    out.object_id[:, shift_x:] = gbuf.object_id[:, : gbuf.width - shift_x]
    out.depth[:, shift_x:] = gbuf.depth[:, : gbuf.width - shift_x]
    return out


@pytest.fixture
def rng_features():
    """Deterministic feature-map factory."""

    def make(height, width, channels, seed=0):
        from uvdiff import rng

        return rng.normal_field((height, width, channels), seed, "test-features")

    return make
