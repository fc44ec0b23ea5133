"""UV-space noise initialization.

Gaussian noise is sampled once per (object, texel, channel) and projected
into each frame through the G-buffer, so pixels that see the same surface
point start from bitwise-identical noise in every frame. Background pixels
get either one shared noise image or per-frame noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .rasterizer import GBufferFrame
from .uvspace import TextureSet, UVTexture, sample_from_textures

BACKGROUND_FIXED = "fixed"
BACKGROUND_PER_FRAME = "per-frame"
BACKGROUND_MODES = (BACKGROUND_FIXED, BACKGROUND_PER_FRAME)


@dataclass
class NoiseConfig:
    seed: int
    texel_resolution: int
    channels: int
    background_mode: str = BACKGROUND_FIXED

    def __post_init__(self):
        if self.texel_resolution <= 0:
            raise ValueError("texel_resolution must be positive")
        if self.channels <= 0:
            raise ValueError("channels must be positive")
        if self.background_mode not in BACKGROUND_MODES:
            raise ValueError(
                f"background_mode must be one of {BACKGROUND_MODES}, got {self.background_mode!r}"
            )


def init_uv_noise(object_ids, cfg: NoiseConfig) -> TextureSet:
    """One fully-filled standard-normal texture per object.

    Each texel/channel value is keyed on (seed, object id, flat texel
    index, channel), so textures are independent across objects and stable
    under any evaluation order.
    """
    ids = sorted(set(int(i) for i in object_ids))
    if not ids:
        raise ValueError("need at least one object id")
    r, c = cfg.texel_resolution, cfg.channels
    textures = {}
    for obj_id in ids:
        data = rng.normal_field((r, r, c), cfg.seed, "uv-noise", obj_id)
        textures[obj_id] = UVTexture(
            obj_id,
            data,
            np.ones((r, r), dtype=bool),
            np.ones((r, r), dtype=np.int64),
        )
    return TextureSet(textures, c)


def background_noise(cfg: NoiseConfig, height: int, width: int, frame_index: int) -> np.ndarray:
    """Noise image used on uncovered pixels; fixed mode ignores the frame."""
    if cfg.background_mode == BACKGROUND_FIXED:
        return rng.normal_field((height, width, cfg.channels), cfg.seed, "background")
    return rng.normal_field((height, width, cfg.channels), cfg.seed, "background", frame_index)


def project_noise(
    noise: TextureSet, gbuf: GBufferFrame, cfg: NoiseConfig, frame_index: int = 0
) -> np.ndarray:
    """Project UV noise into one frame; background filled per config."""
    sampled, valid = sample_from_textures(noise, gbuf)
    missing = gbuf.coverage & ~valid
    if missing.any():
        ids = sorted(set(gbuf.object_id[missing].tolist()))
        raise KeyError(f"no noise texture for object ids {ids}")
    bg = background_noise(cfg, gbuf.height, gbuf.width, frame_index)
    out = np.where(valid[:, :, None], sampled, bg)
    return out
