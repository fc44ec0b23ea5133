"""Animated scene description: meshes with UV atlases, camera paths, parsing.

Scenes arrive baked: object animation is either per-frame vertex arrays or
per-frame rigid transforms applied to a base mesh. Cameras are keyframed
(position / look_at / up) and linearly interpolated per frame.

Camera space is x-right, y-down, z-forward; depth is camera-space z.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass
class CameraPose:
    """World-to-camera rigid transform plus a vertical-FOV pinhole intrinsic."""

    rotation: np.ndarray  # (3, 3), rows are camera axes in world coordinates
    translation: np.ndarray  # (3,)
    fov_y: float  # radians
    near: float
    far: float

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (0.0 < self.fov_y < math.pi):
            raise ValueError(f"fov_y must be in (0, pi), got {self.fov_y}")
        if not (0.0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        rtr = self.rotation @ self.rotation.T
        if not np.allclose(rtr, np.eye(3), atol=1e-6):
            raise ValueError("rotation is not orthonormal")

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) world points into camera space."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation


def look_at_pose(eye, target, up, fov_y: float, near: float, far: float) -> CameraPose:
    """Build a proper-rotation camera pose looking from eye toward target.

    `up` orients the image: points displaced toward `up` from the view axis
    land at smaller pixel rows.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera eye and target coincide")
    forward = forward / norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise ValueError("camera up vector is parallel to the view direction")
    right = right / norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return CameraPose(rotation, -rotation @ eye, fov_y, near, far)


@dataclass
class MeshObject:
    """Triangle mesh with a UV atlas and baked per-frame vertex positions.

    vertices_per_frame has shape (1, V, 3) for static objects or (N, V, 3)
    when animated; faces index vertices, uv_faces index the uv table.
    """

    object_id: int
    vertices_per_frame: np.ndarray  # (1 or N, V, 3)
    uvs: np.ndarray  # (V', 2) in [0, 1]^2
    faces: np.ndarray  # (F, 3) vertex indices
    uv_faces: np.ndarray  # (F, 3) uv indices

    def __post_init__(self):
        self.vertices_per_frame = np.asarray(self.vertices_per_frame, dtype=np.float64)
        self.uvs = np.asarray(self.uvs, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.uv_faces = np.asarray(self.uv_faces, dtype=np.int64)
        if not (0 < self.object_id < 65536):
            raise ValueError(f"object_id must be in 1..65535, got {self.object_id}")
        if self.vertices_per_frame.ndim != 3 or self.vertices_per_frame.shape[2] != 3:
            raise ValueError("vertices_per_frame must have shape (frames, V, 3)")
        if self.uvs.ndim != 2 or self.uvs.shape[1] != 2:
            raise ValueError("uvs must have shape (V', 2)")
        if self.uvs.size and (self.uvs.min() < 0.0 or self.uvs.max() > 1.0):
            raise ValueError("uv coordinates must lie in [0, 1]")
        if self.faces.shape != self.uv_faces.shape or self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces and uv_faces must both have shape (F, 3)")
        if len(self.faces) == 0:
            raise ValueError("object has no triangles")
        n_verts = self.vertices_per_frame.shape[1]
        if self.faces.min() < 0 or self.faces.max() >= n_verts:
            raise ValueError("face vertex index out of range")
        if self.uv_faces.min() < 0 or self.uv_faces.max() >= len(self.uvs):
            raise ValueError("face uv index out of range")

    def frame_vertices(self, frame_index: int) -> np.ndarray:
        if self.vertices_per_frame.shape[0] == 1:
            return self.vertices_per_frame[0]
        return self.vertices_per_frame[frame_index]


@dataclass
class AnimatedScene:
    objects: list[MeshObject]
    camera_frames: list[CameraPose]
    frame_count: int = field(default=0)

    def __post_init__(self):
        if self.frame_count == 0:
            self.frame_count = len(self.camera_frames)
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if len(self.camera_frames) != self.frame_count:
            raise ValueError("camera_frames length must equal frame_count")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids: {sorted(ids)}")
        for obj in self.objects:
            n = obj.vertices_per_frame.shape[0]
            if n not in (1, self.frame_count):
                raise ValueError(
                    f"object {obj.object_id}: {n} vertex frames, scene has {self.frame_count}"
                )

    @property
    def object_ids(self) -> list[int]:
        return [o.object_id for o in self.objects]


def rotation_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValueError("rotation axis must be nonzero")
    x, y, z = axis / norm
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


# ---------------------------------------------------------------------------
# Wavefront OBJ (positions + texture coordinates only)
# ---------------------------------------------------------------------------

def load_obj(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Load v/vt/f records from an OBJ file; polygons are fan-triangulated.

    Returns (vertices, uvs, faces, uv_faces). Every face vertex must carry a
    texture coordinate (v/vt or v/vt/vn form).
    """
    vertices, uvs, faces, uv_faces = [], [], [], []
    path = Path(path)
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag, args = parts[0], parts[1:]
        if tag == "v":
            if len(args) < 3:
                raise ConfigError(f"{path}:{line_no}: vertex needs 3 coordinates")
            vertices.append([float(c) for c in args[:3]])
        elif tag == "vt":
            if len(args) < 2:
                raise ConfigError(f"{path}:{line_no}: texture coordinate needs 2 values")
            uvs.append([float(c) for c in args[:2]])
        elif tag == "f":
            if len(args) < 3:
                raise ConfigError(f"{path}:{line_no}: face needs at least 3 vertices")
            corners = []
            for chunk in args:
                fields = chunk.split("/")
                if len(fields) < 2 or not fields[1]:
                    raise ConfigError(
                        f"{path}:{line_no}: face vertex '{chunk}' has no texture coordinate"
                    )
                vi, ti = int(fields[0]), int(fields[1])
                if vi < 0 or ti < 0:
                    raise ConfigError(f"{path}:{line_no}: negative OBJ indices unsupported")
                corners.append((vi - 1, ti - 1))
            for a, b in zip(corners[1:-1], corners[2:]):
                faces.append([corners[0][0], a[0], b[0]])
                uv_faces.append([corners[0][1], a[1], b[1]])
        # vn, o, g, s, usemtl, mtllib: ignored
    if not faces:
        raise ConfigError(f"{path}: no faces found")
    return (
        np.asarray(vertices, dtype=np.float64),
        np.asarray(uvs, dtype=np.float64),
        np.asarray(faces, dtype=np.int64),
        np.asarray(uv_faces, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Scene file (JSON document, unknown keys rejected)
# ---------------------------------------------------------------------------

def _check_keys(mapping: dict, allowed: set[str], context: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key '{key}'")
    return mapping[key]


def _parse_camera(doc: dict, frame_count: int, context: str) -> list[CameraPose]:
    _check_keys(doc, {"fov_deg", "fov_rad", "near", "far", "keyframes"}, context)
    if "fov_deg" in doc and "fov_rad" in doc:
        raise ConfigError(f"{context}: give fov_deg or fov_rad, not both")
    if "fov_deg" in doc:
        fov = math.radians(float(doc["fov_deg"]))
    elif "fov_rad" in doc:
        fov = float(doc["fov_rad"])
    else:
        raise ConfigError(f"{context}: missing fov_deg or fov_rad")
    near = float(doc.get("near", 0.1))
    far = float(doc.get("far", 1000.0))
    keyframes = _require(doc, "keyframes", context)
    if not keyframes:
        raise ConfigError(f"{context}: keyframes must be non-empty")

    knots = []
    for i, kf in enumerate(keyframes):
        kf_ctx = f"{context}.keyframes[{i}]"
        _check_keys(kf, {"frame", "position", "look_at", "up"}, kf_ctx)
        frame = int(_require(kf, "frame", kf_ctx))
        if not 0 <= frame < frame_count:
            raise ConfigError(f"{kf_ctx}: frame {frame} outside 0..{frame_count - 1}")
        knots.append(
            (
                frame,
                np.asarray(_require(kf, "position", kf_ctx), dtype=np.float64),
                np.asarray(_require(kf, "look_at", kf_ctx), dtype=np.float64),
                np.asarray(kf.get("up", [0.0, 1.0, 0.0]), dtype=np.float64),
            )
        )
    frames_sorted = [k[0] for k in knots]
    if frames_sorted != sorted(frames_sorted) or len(set(frames_sorted)) != len(frames_sorted):
        raise ConfigError(f"{context}: keyframe frames must be strictly increasing")

    poses = []
    for f in range(frame_count):
        if f <= knots[0][0]:
            _, pos, tgt, up = knots[0]
        elif f >= knots[-1][0]:
            _, pos, tgt, up = knots[-1]
        else:
            hi = next(j for j, k in enumerate(knots) if k[0] >= f)
            lo = hi - 1
            t = (f - knots[lo][0]) / (knots[hi][0] - knots[lo][0])
            pos = (1 - t) * knots[lo][1] + t * knots[hi][1]
            tgt = (1 - t) * knots[lo][2] + t * knots[hi][2]
            up = (1 - t) * knots[lo][3] + t * knots[hi][3]
        try:
            poses.append(look_at_pose(pos, tgt, up, fov, near, far))
        except ValueError as exc:
            raise ConfigError(f"{context}: frame {f}: {exc}") from exc
    return poses


def _parse_object(doc: dict, frame_count: int, base_dir: Path, context: str) -> MeshObject:
    _check_keys(
        doc,
        {"object_id", "mesh", "vertices", "uvs", "faces", "uv_faces",
         "vertices_per_frame", "frames"},
        context,
    )
    object_id = int(_require(doc, "object_id", context))

    if "mesh" in doc:
        if any(k in doc for k in ("vertices", "uvs", "faces", "uv_faces")):
            raise ConfigError(f"{context}: 'mesh' excludes inline geometry keys")
        base_vertices, uvs, faces, uv_faces = load_obj(base_dir / doc["mesh"])
    else:
        base_vertices = np.asarray(_require(doc, "vertices", context), dtype=np.float64)
        uvs = np.asarray(_require(doc, "uvs", context), dtype=np.float64)
        faces = np.asarray(_require(doc, "faces", context), dtype=np.int64)
        uv_faces = np.asarray(doc.get("uv_faces", faces), dtype=np.int64)

    if "vertices_per_frame" in doc and "frames" in doc:
        raise ConfigError(f"{context}: give vertices_per_frame or frames, not both")

    if "vertices_per_frame" in doc:
        vpf = np.asarray(doc["vertices_per_frame"], dtype=np.float64)
    elif "frames" in doc:
        transforms = doc["frames"]
        if len(transforms) != frame_count:
            raise ConfigError(
                f"{context}: frames has {len(transforms)} entries, scene has {frame_count}"
            )
        stacked = []
        for i, tr in enumerate(transforms):
            tr_ctx = f"{context}.frames[{i}]"
            _check_keys(tr, {"translate", "rotate_axis", "rotate_deg"}, tr_ctx)
            pts = base_vertices
            if "rotate_deg" in tr:
                rot = rotation_from_axis_angle(
                    tr.get("rotate_axis", [0.0, 1.0, 0.0]), math.radians(float(tr["rotate_deg"]))
                )
                pts = pts @ rot.T
            pts = pts + np.asarray(tr.get("translate", [0.0, 0.0, 0.0]), dtype=np.float64)
            stacked.append(pts)
        vpf = np.stack(stacked)
    else:
        vpf = base_vertices[None, :, :]

    try:
        return MeshObject(object_id, vpf, uvs, faces, uv_faces)
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def parse_scene(path) -> AnimatedScene:
    """Parse a scene document from disk. Raises ConfigError on any defect."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _check_keys(doc, {"frame_count", "camera", "objects"}, str(path))
    frame_count = int(_require(doc, "frame_count", str(path)))
    if frame_count < 1:
        raise ConfigError(f"{path}: frame_count must be >= 1")
    cameras = _parse_camera(_require(doc, "camera", str(path)), frame_count, f"{path}: camera")
    objects_doc = _require(doc, "objects", str(path))
    objects = [
        _parse_object(o, frame_count, path.parent, f"{path}: objects[{i}]")
        for i, o in enumerate(objects_doc)
    ]
    try:
        return AnimatedScene(objects, cameras, frame_count)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
