"""Temporal consistency scoring with a pluggable deterministic embedder.

The default embedder summarizes a frame by per-channel mean/std pooled over
a coarse spatial grid, L2-normalized. Consistency at interval d is the mean
cosine similarity over frame pairs (i, i + d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_INTERVALS = (1, 5, 10, 15, 20)


@dataclass
class FrameEmbedder:
    name: str = "grid-moments"
    grid_size: int = 4

    def __post_init__(self):
        if self.name != "grid-moments":
            raise ValueError(f"unknown embedder {self.name!r}")
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")


def embed_frame(frame: np.ndarray, embedder: FrameEmbedder | None = None) -> np.ndarray:
    """Unit-norm embedding of one frame (H, W[, C])."""
    if embedder is None:
        embedder = FrameEmbedder()
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("frame is empty")
    if frame.ndim == 2:
        frame = frame[:, :, None]
    g = min(embedder.grid_size, frame.shape[0], frame.shape[1])
    parts = []
    for rows in np.array_split(frame, g, axis=0):
        for cell in np.array_split(rows, g, axis=1):
            flat = cell.reshape(-1, cell.shape[2])
            parts.append(flat.mean(axis=0))
            parts.append(flat.std(axis=0))
    vec = np.concatenate(parts)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError("frame embeds to the zero vector (all-zero constant frame)")
    return vec / norm


def frame_consistency(
    frames: list[np.ndarray],
    embedder: FrameEmbedder | None = None,
    interval: int = 1,
) -> float:
    """Mean cosine similarity over all frame pairs separated by `interval`."""
    if interval < 1:
        raise ValueError("interval must be >= 1")
    if len(frames) < interval + 1:
        raise ValueError(f"need at least {interval + 1} frames for interval {interval}")
    embeddings = [embed_frame(f, embedder) for f in frames]
    sims = [
        float(np.dot(embeddings[i], embeddings[i + interval]))
        for i in range(len(frames) - interval)
    ]
    return float(np.clip(np.mean(sims), -1.0, 1.0))


def consistency_report(
    frames: list[np.ndarray],
    intervals=DEFAULT_INTERVALS,
    embedder: FrameEmbedder | None = None,
) -> dict[int, float]:
    return {int(d): frame_consistency(frames, embedder, int(d)) for d in intervals}
