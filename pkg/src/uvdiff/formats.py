"""Binary file formats, image output, and manifest helpers.

G-buffer files: magic "GBUF", then u32 version/width/height (little
endian), then planar channels uv_u (f32), uv_v (f32), object_id (u16),
depth (f32), row-major.

Latent files: magic "LATF", then u32 version/width/height/channels, then
one f32 plane per channel, row-major.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .rasterizer import GBufferFrame
from .uvspace import TextureSet

GBUF_MAGIC = b"GBUF"
LATF_MAGIC = b"LATF"
FORMAT_VERSION = 1


def write_gbuffer(gbuf: GBufferFrame, path) -> None:
    height, width = gbuf.object_id.shape
    with open(path, "wb") as fh:
        fh.write(GBUF_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, width, height))
        fh.write(gbuf.uv[:, :, 0].astype("<f4").tobytes())
        fh.write(gbuf.uv[:, :, 1].astype("<f4").tobytes())
        fh.write(gbuf.object_id.astype("<u2").tobytes())
        fh.write(gbuf.depth.astype("<f4").tobytes())


def read_gbuffer(path) -> GBufferFrame:
    raw = Path(path).read_bytes()
    if raw[:4] != GBUF_MAGIC:
        raise ValueError(f"{path}: not a G-buffer file (bad magic)")
    version, width, height = struct.unpack_from("<III", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    n = width * height
    expected = 16 + 4 * n + 4 * n + 2 * n + 4 * n
    if len(raw) != expected:
        raise ValueError(f"{path}: {len(raw)} bytes, expected {expected}")
    offset = 16
    uv_u = np.frombuffer(raw, "<f4", n, offset).reshape(height, width)
    offset += 4 * n
    uv_v = np.frombuffer(raw, "<f4", n, offset).reshape(height, width)
    offset += 4 * n
    object_id = np.frombuffer(raw, "<u2", n, offset).reshape(height, width)
    offset += 2 * n
    depth = np.frombuffer(raw, "<f4", n, offset).reshape(height, width)
    return GBufferFrame(
        uv=np.stack([uv_u, uv_v], axis=2).astype(np.float64),
        object_id=object_id.copy(),
        depth=depth.astype(np.float64),
    )


def write_latent(latent: np.ndarray, path) -> None:
    height, width, channels = latent.shape
    with open(path, "wb") as fh:
        fh.write(LATF_MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, width, height, channels))
        for c in range(channels):
            fh.write(latent[:, :, c].astype("<f4").tobytes())


def read_latent(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != LATF_MAGIC:
        raise ValueError(f"{path}: not a latent file (bad magic)")
    version, width, height, channels = struct.unpack_from("<IIII", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    n = width * height
    if len(raw) != 20 + 4 * n * channels:
        raise ValueError(f"{path}: truncated latent file")
    planes = [
        np.frombuffer(raw, "<f4", n, 20 + 4 * n * c).reshape(height, width)
        for c in range(channels)
    ]
    return np.stack(planes, axis=2).astype(np.float64)


def latent_to_rgb(latent: np.ndarray) -> np.ndarray:
    """Fixed linear map from latent channels to an 8-bit RGB preview."""
    channels = latent.shape[2]
    if channels >= 3:
        rgb = latent[:, :, :3]
    else:
        rgb = np.stack([latent[:, :, c % channels] for c in range(3)], axis=2)
    return (np.clip(0.5 + 0.25 * rgb, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def write_image(array: np.ndarray, path) -> None:
    Image.fromarray(array).save(path)


def dump_texture_images(textures: TextureSet, out_dir, step: int) -> None:
    """Grayscale per-channel dump of each object's texture for one step."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for obj_id in textures.object_ids:
        tex = textures[obj_id]
        tiles = []
        for c in range(tex.channels):
            plane = tex.data[:, :, c]
            filled = tex.filled
            lo = plane[filled].min() if filled.any() else 0.0
            hi = plane[filled].max() if filled.any() else 1.0
            scale = hi - lo if hi > lo else 1.0
            tile = np.zeros(plane.shape)
            tile[filled] = (plane[filled] - lo) / scale
            tiles.append(tile)
        sheet = (np.concatenate(tiles, axis=1) * 255.0).round().astype(np.uint8)
        write_image(sheet, out_dir / f"texture_step{step:03d}_obj{obj_id}.png")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2)


def write_json(doc, path) -> None:
    Path(path).write_text(canonical_json(doc) + "\n")
