"""Multi-head scaled-dot-product self-attention with cross-frame variants.

Three manipulations on top of plain self-attention:

- extended attention: every frame's queries attend to the keys/values of
  all frames concatenated
- pre-attention injection: keyframe features are appended to a frame's own
  features before the key/value projections
- post-attention fusion: the attention output is blended, where a UV
  correspondence exists, with features warped from the keyframes

Scores are scaled by sqrt(head_dim); with one head this is the classic
sqrt(d) scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng


@dataclass
class AttentionWeights:
    w_query: np.ndarray  # (C_in, d)
    w_key: np.ndarray  # (C_in, d)
    w_value: np.ndarray  # (C_in, d)
    w_out: np.ndarray  # (d, C_in)
    n_heads: int = 1

    def __post_init__(self):
        c_in, d = self.w_query.shape
        for name in ("w_key", "w_value"):
            if getattr(self, name).shape != (c_in, d):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(c_in, d)}")
        if self.w_out.shape != (d, c_in):
            raise ValueError(f"w_out shape {self.w_out.shape} != {(d, c_in)}")
        if self.n_heads < 1 or d % self.n_heads != 0:
            raise ValueError(f"head count {self.n_heads} must divide d={d}")
        for name in ("w_query", "w_key", "w_value", "w_out"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def channels(self) -> int:
        return self.w_query.shape[0]

    @property
    def inner_dim(self) -> int:
        return self.w_query.shape[1]

    @property
    def head_dim(self) -> int:
        return self.inner_dim // self.n_heads


def init_attention_weights(channels: int, inner_dim: int, n_heads: int, *key_parts) -> AttentionWeights:
    """Seeded Gaussian weights scaled by 1/sqrt(fan_in)."""
    qs = 1.0 / np.sqrt(channels)
    os = 1.0 / np.sqrt(inner_dim)
    return AttentionWeights(
        w_query=qs * rng.normal_field((channels, inner_dim), *key_parts, "wq"),
        w_key=qs * rng.normal_field((channels, inner_dim), *key_parts, "wk"),
        w_value=qs * rng.normal_field((channels, inner_dim), *key_parts, "wv"),
        w_out=os * rng.normal_field((inner_dim, channels), *key_parts, "wo"),
        n_heads=n_heads,
    )


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction); input is not modified."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= np.sum(shifted, axis=axis, keepdims=True)
    return shifted


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, n_heads, d // n_heads).transpose(1, 0, 2)


def attention_with_kv(
    queries_from: np.ndarray,
    kv_from: np.ndarray,
    weights: AttentionWeights,
    return_probs: bool = False,
):
    """Attention where queries and keys/values come from different token sets.

    queries_from: (n, C_in); kv_from: (m, C_in); output (n, C_in).
    """
    queries_from = np.asarray(queries_from, dtype=np.float64)
    kv_from = np.asarray(kv_from, dtype=np.float64)
    if queries_from.ndim != 2 or kv_from.ndim != 2:
        raise ValueError("token features must be 2-d (tokens, channels)")
    if queries_from.shape[1] != weights.channels or kv_from.shape[1] != weights.channels:
        raise ValueError(
            f"channel mismatch: tokens have {queries_from.shape[1]}/{kv_from.shape[1]}, "
            f"weights expect {weights.channels}"
        )
    if kv_from.shape[0] == 0:
        raise ValueError("need at least one key/value token")

    q = _split_heads(queries_from @ weights.w_query, weights.n_heads)
    k = _split_heads(kv_from @ weights.w_key, weights.n_heads)
    v = _split_heads(kv_from @ weights.w_value, weights.n_heads)
    scores = q @ k.transpose(0, 2, 1)
    scores /= np.sqrt(weights.head_dim)
    probs = softmax(scores, axis=-1)
    merged = (probs @ v).transpose(1, 0, 2).reshape(queries_from.shape[0], weights.inner_dim)
    out = merged @ weights.w_out
    if return_probs:
        return out, probs
    return out


def self_attention(features: np.ndarray, weights: AttentionWeights) -> np.ndarray:
    """Plain multi-head self-attention over one frame's tokens."""
    return attention_with_kv(features, features, weights)


def extended_attention(frame_features: list[np.ndarray], weights: AttentionWeights) -> list[np.ndarray]:
    """Each frame's queries attend to all frames' keys/values.

    With a single frame this reduces exactly to self_attention.
    """
    if not frame_features:
        raise ValueError("need at least one frame")
    shapes = {np.asarray(f).shape for f in frame_features}
    if len(shapes) != 1:
        raise ValueError(f"frames disagree on token shape: {sorted(shapes)}")
    kv = np.concatenate([np.asarray(f, dtype=np.float64) for f in frame_features], axis=0)
    return [attention_with_kv(f, kv, weights) for f in frame_features]


def pre_attention_inject(
    features: np.ndarray,
    keyframe_features: list[np.ndarray],
    weights: AttentionWeights,
) -> np.ndarray:
    """Append keyframe tokens to the key/value set; queries stay the frame's own.

    An empty keyframe list degenerates to self_attention.
    """
    features = np.asarray(features, dtype=np.float64)
    if not keyframe_features:
        return self_attention(features, weights)
    extras = [np.asarray(f, dtype=np.float64) for f in keyframe_features]
    for f in extras:
        if f.ndim != 2 or f.shape[1] != features.shape[1]:
            raise ValueError(
                f"keyframe features shape {f.shape} incompatible with {features.shape}"
            )
    kv = np.concatenate([features] + extras, axis=0)
    return attention_with_kv(features, kv, weights)


def post_attention_fuse(
    attn_out: np.ndarray,
    warped: np.ndarray,
    validity: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """Blend the attention output with warped features where valid.

    Per token: alpha * warped + (1 - alpha) * attn_out on valid tokens,
    attn_out untouched elsewhere. Endpoints are exact.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    attn_out = np.asarray(attn_out, dtype=np.float64)
    warped = np.asarray(warped, dtype=np.float64)
    validity = np.asarray(validity, dtype=bool)
    if attn_out.shape != warped.shape:
        raise ValueError(f"shape mismatch {attn_out.shape} vs {warped.shape}")
    if validity.shape != attn_out.shape[:1]:
        raise ValueError(f"validity shape {validity.shape} != {attn_out.shape[:1]}")
    if alpha == 0.0:
        return attn_out.copy()
    if alpha == 1.0:
        return np.where(validity[:, None], warped, attn_out)
    blended = alpha * warped + (1.0 - alpha) * attn_out
    return np.where(validity[:, None], blended, attn_out)
