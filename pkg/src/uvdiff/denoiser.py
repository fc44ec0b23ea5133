"""Pluggable latent-space denoiser and the deterministic sampler pieces.

The "toy" model is a small conv + self-attention network predicting a
denoised latent (x0-style). Every attention block is tappable: a pass can
capture pre/post-attention features, or run with injected keyframe
key/value features and fuse its output with UV-warped features. Depth
conditions the network as an extra input channel; the prompt enters as a
per-channel bias after the first conv.

Named test models: "identity" (returns the latent), "blur" (fixed box
filter), "linear" (single conv over latent + depth).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import rng
from .attention import (
    AttentionWeights,
    init_attention_weights,
    post_attention_fuse,
    pre_attention_inject,
    attention_with_kv,
    self_attention,
)

MODEL_KINDS = ("toy", "identity", "blur", "linear")


@dataclass
class ModelConfig:
    kind: str = "toy"
    latent_channels: int = 4
    hidden_channels: int = 16
    attention_blocks: int = 2
    attention_heads: int = 2
    prompt_embed_dim: int = 8

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}, expected one of {MODEL_KINDS}")
        for name in ("latent_channels", "hidden_channels", "attention_blocks",
                     "attention_heads", "prompt_embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden_channels % self.attention_heads != 0:
            raise ValueError("attention_heads must divide hidden_channels")


@dataclass
class DenoiserModel:
    config: ModelConfig
    conv_in: np.ndarray | None = None  # (hidden, C+1, 3, 3)
    bias_in: np.ndarray | None = None  # (hidden,)
    prompt_proj: np.ndarray | None = None  # (hidden, E)
    blocks: list[AttentionWeights] = field(default_factory=list)
    conv_out: np.ndarray | None = None  # (C, hidden, 3, 3)
    bias_out: np.ndarray | None = None  # (C,)

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    def token_grids(self, height: int, width: int) -> list[tuple[int, int]]:
        """Token grid of each attention block for a given latent size."""
        return [(height, width)] * self.block_count


@dataclass
class FeatureTap:
    """Per-block features captured during one forward pass."""

    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)


@dataclass
class BlockInjection:
    """Injection inputs for one attention block of one frame's pass."""

    keyframe_features: list[np.ndarray]  # pre-attention tokens, one per keyframe
    fused_target: np.ndarray | None  # (n_tokens, hidden) warped features
    validity: np.ndarray | None  # (n_tokens,) bool
    alpha: float = 0.0


def init_toy_model(seed: int, config: ModelConfig) -> DenoiserModel:
    """Deterministic seeded weights; test kinds carry only what they need."""
    c = config.latent_channels
    if config.kind in ("identity", "blur"):
        return DenoiserModel(config)
    if config.kind == "linear":
        scale = 1.0 / math.sqrt(9 * (c + 1))
        return DenoiserModel(
            config,
            conv_in=scale * rng.normal_field((c, c + 1, 3, 3), seed, "linear-conv"),
            bias_in=np.zeros(c),
        )
    hidden = config.hidden_channels
    return DenoiserModel(
        config,
        conv_in=(1.0 / math.sqrt(9 * (c + 1)))
        * rng.normal_field((hidden, c + 1, 3, 3), seed, "conv-in"),
        bias_in=np.zeros(hidden),
        prompt_proj=(1.0 / math.sqrt(config.prompt_embed_dim))
        * rng.normal_field((hidden, config.prompt_embed_dim), seed, "prompt-proj"),
        blocks=[
            init_attention_weights(hidden, hidden, config.attention_heads, seed, "attn", l)
            for l in range(config.attention_blocks)
        ],
        conv_out=(1.0 / math.sqrt(9 * hidden))
        * rng.normal_field((c, hidden, 3, 3), seed, "conv-out"),
        bias_out=np.zeros(c),
    )


def prompt_embedding(prompt: str, dim: int) -> np.ndarray:
    """Deterministic stand-in for a text encoder; injective in practice."""
    return rng.normal_field((dim,), "prompt-embedding", prompt)


def conv2d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 convolution, zero padded, channels-last in/out."""
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    windows = sliding_window_view(padded, (3, 3), axis=(0, 1))  # (H, W, Cin, 3, 3)
    return np.einsum("hwcij,ocij->hwo", windows, kernel) + bias


def _box_blur(x: np.ndarray) -> np.ndarray:
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    windows = sliding_window_view(padded, (3, 3), axis=(0, 1))
    return windows.mean(axis=(3, 4))


def _validate_inputs(latent, sigma, depth, prompt_emb, model: DenoiserModel):
    if latent.ndim != 3 or latent.shape[2] != model.config.latent_channels:
        raise ValueError(
            f"latent shape {latent.shape} does not match {model.config.latent_channels} channels"
        )
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if depth.shape != latent.shape[:2]:
        raise ValueError(f"depth shape {depth.shape} != latent spatial {latent.shape[:2]}")
    if model.kind == "toy" and prompt_emb.shape != (model.config.prompt_embed_dim,):
        raise ValueError(
            f"prompt embedding shape {prompt_emb.shape} != ({model.config.prompt_embed_dim},)"
        )


def _check_injection(injections, model: DenoiserModel, n_tokens: int):
    if injections is None:
        return [None] * model.block_count
    if len(injections) != model.block_count:
        raise ValueError(
            f"injection plan has {len(injections)} blocks, model has {model.block_count}"
        )
    hidden = model.config.hidden_channels
    for inj in injections:
        if inj is None:
            continue
        for f in inj.keyframe_features:
            if f.ndim != 2 or f.shape[1] != hidden:
                raise ValueError(f"injected keyframe features shape {f.shape} invalid")
        if inj.fused_target is not None:
            if inj.fused_target.shape != (n_tokens, hidden):
                raise ValueError(
                    f"fused target shape {inj.fused_target.shape} != {(n_tokens, hidden)}"
                )
            if inj.validity is None or inj.validity.shape != (n_tokens,):
                raise ValueError("fused target requires a per-token validity mask")
    return list(injections)


def _forward(latents, sigma, depths, prompt_emb, model, *, extended, capture, injections):
    """Shared forward pass over one or more frames.

    extended=True makes every frame's attention read keys/values from the
    concatenation of all frames (capture mode); otherwise frames run
    independently with optional per-frame injection.
    """
    if capture and any(p is not None for p in injections):
        raise ValueError("a pass either captures or injects, not both")

    kind = model.kind
    preds, taps, token_sets = [], [], []
    for latent, depth, inj in zip(latents, depths, injections):
        latent = np.asarray(latent, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        _validate_inputs(latent, sigma, depth, prompt_emb, model)
        if kind != "toy" and inj is not None and len(inj) != 0:
            raise ValueError(f"model kind {kind!r} has no attention blocks to inject into")
        if kind == "identity":
            preds.append(latent.copy())
            taps.append(FeatureTap() if capture else None)
            continue
        if kind == "blur":
            preds.append(_box_blur(latent))
            taps.append(FeatureTap() if capture else None)
            continue
        if kind == "linear":
            stacked = np.concatenate([latent, depth[:, :, None]], axis=2)
            preds.append(conv2d_same(stacked, model.conv_in, model.bias_in))
            taps.append(FeatureTap() if capture else None)
            continue
        # toy: conditioning front end, then attention blocks on tokens
        scaled = latent / math.sqrt(sigma * sigma + 1.0)
        stacked = np.concatenate([scaled, depth[:, :, None]], axis=2)
        h = conv2d_same(stacked, model.conv_in, model.bias_in)
        h = h + model.prompt_proj @ prompt_emb
        h = np.tanh(h)
        token_sets.append((h.shape[:2], h.reshape(-1, model.config.hidden_channels), inj))
        taps.append(FeatureTap() if capture else None)

    if kind != "toy":
        return preds, taps

    n_tokens = token_sets[0][1].shape[0]
    if any(ts[1].shape[0] != n_tokens for ts in token_sets):
        raise ValueError("all frames must share the same latent dimensions")
    checked = [_check_injection(ts[2], model, n_tokens) for ts in token_sets]
    tokens = [ts[1] for ts in token_sets]
    for layer, weights in enumerate(model.blocks):
        if capture:
            for tap, tok in zip(taps, tokens):
                tap.pre.append(tok.copy())
        if extended:
            kv = np.concatenate(tokens, axis=0)
            outs = [attention_with_kv(tok, kv, weights) for tok in tokens]
        else:
            outs = []
            for tok, plan in zip(tokens, checked):
                inj = plan[layer]
                if inj is not None and inj.keyframe_features:
                    out = pre_attention_inject(tok, inj.keyframe_features, weights)
                else:
                    out = self_attention(tok, weights)
                if inj is not None and inj.fused_target is not None:
                    out = post_attention_fuse(out, inj.fused_target, inj.validity, inj.alpha)
                outs.append(out)
        if capture:
            for tap, out in zip(taps, outs):
                tap.post.append(out.copy())
        tokens = [tok + out for tok, out in zip(tokens, outs)]

    for (shape, _, _), tok in zip(token_sets, tokens):
        h = tok.reshape(shape[0], shape[1], model.config.hidden_channels)
        preds.append(conv2d_same(h, model.conv_out, model.bias_out))
    return preds, taps


def denoise(
    latent: np.ndarray,
    sigma: float,
    depth_cond: np.ndarray,
    prompt_emb: np.ndarray,
    model: DenoiserModel,
    capture: bool = False,
    injections: list[BlockInjection | None] | None = None,
) -> tuple[np.ndarray, FeatureTap | None]:
    """Denoised (x0-style) prediction for one frame.

    capture=True records pre/post attention features per block; injections
    supply keyframe key/values and fusion targets per block instead.
    """
    preds, taps = _forward(
        [latent], sigma, [depth_cond], prompt_emb, model,
        extended=False, capture=capture,
        injections=[injections],
    )
    return preds[0], taps[0]


def denoise_joint(
    latents: list[np.ndarray],
    sigma: float,
    depth_conds: list[np.ndarray],
    prompt_emb: np.ndarray,
    model: DenoiserModel,
    capture: bool = True,
) -> tuple[list[np.ndarray], list[FeatureTap | None]]:
    """Denoise several frames jointly with cross-frame (extended) attention."""
    if not latents or len(latents) != len(depth_conds):
        raise ValueError("need aligned, non-empty latent and depth lists")
    return _forward(
        latents, sigma, depth_conds, prompt_emb, model,
        extended=True, capture=capture,
        injections=[None] * len(latents),
    )


# ---------------------------------------------------------------------------
# Sigma schedule and sampler step
# ---------------------------------------------------------------------------

@dataclass
class SigmaSchedule:
    sigmas: np.ndarray  # length n_steps + 1, strictly decreasing, last exactly 0
    n_steps: int
    sigma_min: float
    sigma_max: float
    rho: float


def karras_sigmas(n_steps: int, sigma_min: float, sigma_max: float, rho: float = 7.0) -> SigmaSchedule:
    """Power-law noise schedule from sigma_max down to sigma_min, then 0.

    sigma_i = (smax^(1/rho) + i/(n-1) * (smin^(1/rho) - smax^(1/rho)))^rho.
    Endpoints are pinned exactly to sigma_max / sigma_min (the pow round
    trip would otherwise perturb them in the last ulp).
    """
    if n_steps < 2:
        raise ValueError(f"n_steps must be >= 2, got {n_steps}")
    if not 0 < sigma_min < sigma_max:
        raise ValueError(f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    ramp = np.arange(n_steps, dtype=np.float64) / (n_steps - 1)
    lo = sigma_min ** (1.0 / rho)
    hi = sigma_max ** (1.0 / rho)
    sigmas = (hi + ramp * (lo - hi)) ** rho
    sigmas[0] = sigma_max
    sigmas[-1] = sigma_min
    sigmas = np.append(sigmas, 0.0)
    if not np.all(np.diff(sigmas) < 0):
        raise ValueError("schedule is not strictly decreasing; check parameters")
    return SigmaSchedule(sigmas, n_steps, sigma_min, sigma_max, rho)


def euler_step(latent: np.ndarray, denoised: np.ndarray, sigma_t: float, sigma_next: float) -> np.ndarray:
    """First-order update along the probability-flow direction.

    z <- z + (sigma_next - sigma_t) * (z - denoised) / sigma_t; the final
    step (sigma_next == 0) lands exactly on the denoised prediction.
    """
    if sigma_t <= 0:
        raise ValueError(f"sigma_t must be positive, got {sigma_t}")
    if sigma_next >= sigma_t:
        raise ValueError(f"sigma_next must be below sigma_t, got {sigma_next} >= {sigma_t}")
    if sigma_next == 0.0:
        return np.asarray(denoised, dtype=np.float64).copy()
    return latent + (sigma_next - sigma_t) * (latent - denoised) / sigma_t


# ---------------------------------------------------------------------------
# Weight serialization: JSON descriptor + flat little-endian f32 blob
# ---------------------------------------------------------------------------

def _named_tensors(model: DenoiserModel) -> list[tuple[str, np.ndarray]]:
    out = []
    for name in ("conv_in", "bias_in", "prompt_proj", "conv_out", "bias_out"):
        tensor = getattr(model, name)
        if tensor is not None:
            out.append((name, tensor))
    for i, blk in enumerate(model.blocks):
        for name in ("w_query", "w_key", "w_value", "w_out"):
            out.append((f"block{i}.{name}", getattr(blk, name)))
    return out


def save_model(model: DenoiserModel, base_path) -> None:
    """Write <base>.json (descriptor) and <base>.bin (f32 LE payload)."""
    base = Path(base_path)
    tensors = _named_tensors(model)
    descriptor = {
        "kind": model.kind,
        "config": {
            "latent_channels": model.config.latent_channels,
            "hidden_channels": model.config.hidden_channels,
            "attention_blocks": model.config.attention_blocks,
            "attention_heads": model.config.attention_heads,
            "prompt_embed_dim": model.config.prompt_embed_dim,
        },
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in tensors],
    }
    base.with_suffix(".json").write_text(json.dumps(descriptor, indent=2))
    payload = b"".join(t.astype("<f4").tobytes() for _, t in tensors)
    base.with_suffix(".bin").write_bytes(payload)


def load_model(base_path) -> DenoiserModel:
    base = Path(base_path)
    descriptor = json.loads(base.with_suffix(".json").read_text())
    config = ModelConfig(kind=descriptor["kind"], **descriptor["config"])
    raw = base.with_suffix(".bin").read_bytes()
    tensors = {}
    offset = 0
    for entry in descriptor["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).astype(np.float64)
        tensors[entry["name"]] = arr.reshape(shape)
        offset += 4 * n
    if offset != len(raw):
        raise ValueError(f"weight blob has {len(raw)} bytes, descriptor expects {offset}")

    model = DenoiserModel(config)
    for name in ("conv_in", "bias_in", "prompt_proj", "conv_out", "bias_out"):
        if name in tensors:
            setattr(model, name, tensors[name])
    blocks = []
    for i in range(config.attention_blocks):
        prefix = f"block{i}."
        if prefix + "w_query" not in tensors:
            break
        blocks.append(
            AttentionWeights(
                w_query=tensors[prefix + "w_query"],
                w_key=tensors[prefix + "w_key"],
                w_value=tensors[prefix + "w_value"],
                w_out=tensors[prefix + "w_out"],
                n_heads=config.attention_heads,
            )
        )
    model.blocks = blocks
    return model
