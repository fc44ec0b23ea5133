"""Canonical UV-space projection operators.

Per-frame feature maps are pushed into per-object texel grids (splatting),
read back into frames (sampling), blended across frames, or composed into a
frame-to-frame warp. Addressing is nearest-texel in both directions with no
filtering, which keeps splat/sample round trips exact and preserves the
distribution of projected noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rasterizer import BACKGROUND_ID, GBufferFrame


@dataclass
class UVTexture:
    """Square texel grid of feature vectors with fill mask and sample counts.

    data is indexed [v_texel, u_texel, channel]; a texel is filled iff at
    least one pixel contributed to it.
    """

    object_id: int
    data: np.ndarray  # (R, R, C)
    filled: np.ndarray  # (R, R) bool
    count: np.ndarray  # (R, R) int64

    @property
    def resolution(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class TextureSet:
    """One UVTexture per object; all share a channel count."""

    textures: dict[int, UVTexture]
    channels: int

    def __getitem__(self, object_id: int) -> UVTexture:
        return self.textures[object_id]

    def __contains__(self, object_id: int) -> bool:
        return object_id in self.textures

    @property
    def object_ids(self) -> list[int]:
        return sorted(self.textures)


def texel_indices(uv: np.ndarray, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Map uv in [0, 1]^2 to integer texel columns/rows; u == 1 folds to R-1."""
    tx = np.clip((uv[..., 0] * resolution).astype(np.int64), 0, resolution - 1)
    ty = np.clip((uv[..., 1] * resolution).astype(np.int64), 0, resolution - 1)
    return tx, ty


def _gbuf_object_ids(gbuf: GBufferFrame) -> list[int]:
    ids = np.unique(gbuf.object_id)
    return [int(i) for i in ids if i != BACKGROUND_ID]


def _accumulate(sums, counts, feature_map, gbuf, resolution):
    """Add each covered pixel's feature vector to its nearest texel."""
    for obj_id in _gbuf_object_ids(gbuf):
        if obj_id not in sums:
            raise ValueError(f"G-buffer references unknown object id {obj_id}")
        mask = gbuf.object_id == obj_id
        tx, ty = texel_indices(gbuf.uv[mask], resolution)
        flat = ty * resolution + tx
        channels = feature_map.shape[-1]
        np.add.at(sums[obj_id].reshape(-1, channels), flat, feature_map[mask])
        np.add.at(counts[obj_id].reshape(-1), flat, 1)


def _check_alignment(feature_map: np.ndarray, gbuf: GBufferFrame):
    if feature_map.ndim != 3 or feature_map.shape[:2] != gbuf.object_id.shape:
        raise ValueError(
            f"feature map shape {feature_map.shape} does not match "
            f"G-buffer {gbuf.object_id.shape}"
        )


def splat_to_textures(
    feature_map: np.ndarray,
    gbuf: GBufferFrame,
    resolution: int,
    object_ids=None,
) -> TextureSet:
    """Mean-accumulate per-pixel features into per-object textures.

    When object_ids is given, pixels carrying any other id are an error;
    otherwise textures are created for exactly the ids present in the
    G-buffer.
    """
    if resolution <= 0:
        raise ValueError(f"texel resolution must be positive, got {resolution}")
    _check_alignment(feature_map, gbuf)
    ids = _gbuf_object_ids(gbuf) if object_ids is None else sorted(object_ids)
    channels = feature_map.shape[-1]
    sums = {i: np.zeros((resolution, resolution, channels)) for i in ids}
    counts = {i: np.zeros((resolution, resolution), dtype=np.int64) for i in ids}
    _accumulate(sums, counts, feature_map, gbuf, resolution)
    textures = {}
    for i in ids:
        filled = counts[i] > 0
        data = np.zeros_like(sums[i])
        np.divide(sums[i], counts[i][:, :, None], out=data, where=filled[:, :, None])
        textures[i] = UVTexture(i, data, filled, counts[i])
    return TextureSet(textures, channels)


def sample_from_textures(
    textures: TextureSet, gbuf: GBufferFrame
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-texel lookup of per-object textures into a frame.

    Validity is false on background pixels, on pixels whose object has no
    texture in the set, and on pixels hitting unfilled texels; invalid
    pixels carry zeros.
    """
    height, width = gbuf.object_id.shape
    out = np.zeros((height, width, textures.channels))
    valid = np.zeros((height, width), dtype=bool)
    for obj_id in _gbuf_object_ids(gbuf):
        if obj_id not in textures:
            continue
        tex = textures[obj_id]
        mask = gbuf.object_id == obj_id
        tx, ty = texel_indices(gbuf.uv[mask], tex.resolution)
        hit = tex.filled[ty, tx]
        values = tex.data[ty, tx]
        values[~hit] = 0.0
        out[mask] = values
        valid[mask] = hit
    return out, valid


def blend_multi_frame(
    feature_maps: list[np.ndarray], gbufs: list[GBufferFrame], resolution: int
) -> TextureSet:
    """Blend feature maps from several frames into unified textures.

    Two aggregates are formed per texel: the mean over every contributing
    pixel of every frame, and a sequential fill where a texel takes the
    first frame's per-texel mean and later frames only fill texels still
    empty. The result is the average of the two; their fill masks coincide.
    """
    if resolution <= 0:
        raise ValueError(f"texel resolution must be positive, got {resolution}")
    if not feature_maps or len(feature_maps) != len(gbufs):
        raise ValueError("need equal, non-empty feature map and G-buffer lists")
    for fmap, gbuf in zip(feature_maps, gbufs):
        _check_alignment(fmap, gbuf)
    channels = feature_maps[0].shape[-1]
    ids = sorted({i for g in gbufs for i in _gbuf_object_ids(g)})

    total_sum = {i: np.zeros((resolution, resolution, channels)) for i in ids}
    total_count = {i: np.zeros((resolution, resolution), dtype=np.int64) for i in ids}
    seq_data = {i: np.zeros((resolution, resolution, channels)) for i in ids}
    seq_filled = {i: np.zeros((resolution, resolution), dtype=bool) for i in ids}

    for fmap, gbuf in zip(feature_maps, gbufs):
        frame_sum = {i: np.zeros((resolution, resolution, channels)) for i in ids}
        frame_count = {i: np.zeros((resolution, resolution), dtype=np.int64) for i in ids}
        _accumulate(frame_sum, frame_count, fmap, gbuf, resolution)
        for i in ids:
            total_sum[i] += frame_sum[i]
            total_count[i] += frame_count[i]
            new = (frame_count[i] > 0) & ~seq_filled[i]
            if new.any():
                seq_data[i][new] = frame_sum[i][new] / frame_count[i][new][:, None]
                seq_filled[i][new] = True

    textures = {}
    for i in ids:
        filled = total_count[i] > 0
        mean = np.zeros_like(total_sum[i])
        np.divide(total_sum[i], total_count[i][:, :, None], out=mean, where=filled[:, :, None])
        data = np.zeros_like(mean)
        data[filled] = 0.5 * (mean[filled] + seq_data[i][filled])
        textures[i] = UVTexture(i, data, filled, total_count[i])
    return TextureSet(textures, channels)


def warp_features(
    src_map: np.ndarray,
    src_gbuf: GBufferFrame,
    dst_gbuf: GBufferFrame,
    resolution: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Transport features from one frame to another through UV space.

    Validity marks destination pixels whose texel was observed in the
    source frame.
    """
    textures = splat_to_textures(src_map, src_gbuf, resolution)
    return sample_from_textures(textures, dst_gbuf)


def resample_gbuffer(gbuf: GBufferFrame, new_width: int, new_height: int) -> GBufferFrame:
    """Nearest-pixel decimation of a G-buffer; upsampling is rejected.

    All channels are taken from the source pixel under each target pixel's
    center so uv/object_id/depth stay mutually consistent.
    """
    height, width = gbuf.object_id.shape
    if new_width > width or new_height > height:
        raise ValueError(
            f"cannot upsample G-buffer {width}x{height} to {new_width}x{new_height}"
        )
    if new_width < 1 or new_height < 1:
        raise ValueError("target dimensions must be >= 1")
    sx = ((np.arange(new_width) + 0.5) * width / new_width).astype(np.int64)
    sy = ((np.arange(new_height) + 0.5) * height / new_height).astype(np.int64)
    return GBufferFrame(
        uv=gbuf.uv[np.ix_(sy, sx)].copy(),
        object_id=gbuf.object_id[np.ix_(sy, sx)].copy(),
        depth=gbuf.depth[np.ix_(sy, sx)].copy(),
    )
