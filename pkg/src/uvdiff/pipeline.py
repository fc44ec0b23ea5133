"""End-to-end multi-frame sampling loop.

Per diffusion step: draw a shuffled keyframe subset, run the keyframes
jointly with extended attention while capturing their attention features,
blend the captured post-attention features into per-object UV textures,
then advance every frame (keyframes included, their capture prediction is
discarded) through an injected pass and an Euler update. Optionally the
updated latents are normalized so each frame's background statistics match
the first frame's.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .config import RunConfig
from .denoiser import (
    BlockInjection,
    DenoiserModel,
    SigmaSchedule,
    denoise,
    denoise_joint,
    euler_step,
    init_toy_model,
    karras_sigmas,
    prompt_embedding,
)
from .formats import dump_texture_images
from .noise import NoiseConfig, background_noise, init_uv_noise, project_noise
from .rasterizer import GBufferFrame, depth_conditioning, rasterize_sequence
from .scene import AnimatedScene
from .uvspace import TextureSet, blend_multi_frame, resample_gbuffer, sample_from_textures

log = logging.getLogger(__name__)


@dataclass
class DiffusionRun:
    """Mutable state of one sampling run."""

    config: RunConfig
    schedule: SigmaSchedule
    latents: list[np.ndarray]
    step_index: int
    gbuffers: list[GBufferFrame]  # original resolution
    prompt_emb: np.ndarray
    _gbuffer_cache: dict = field(default_factory=dict)
    _depth_cache: list | None = None

    @property
    def frame_count(self) -> int:
        return len(self.gbuffers)

    @property
    def sigma_now(self) -> float:
        return float(self.schedule.sigmas[self.step_index])

    @property
    def sigma_next(self) -> float:
        return float(self.schedule.sigmas[self.step_index + 1])

    def gbuffers_at(self, height: int, width: int) -> list[GBufferFrame]:
        """Per-resolution G-buffer cache (hot path during injection)."""
        key = (height, width)
        if key not in self._gbuffer_cache:
            self._gbuffer_cache[key] = [
                resample_gbuffer(g, width, height) for g in self.gbuffers
            ]
        return self._gbuffer_cache[key]

    def latent_gbuffers(self) -> list[GBufferFrame]:
        return self.gbuffers_at(self.config.latent_height, self.config.latent_width)

    def depth_conds(self) -> list[np.ndarray]:
        if self._depth_cache is None:
            self._depth_cache = [depth_conditioning(g) for g in self.latent_gbuffers()]
        return self._depth_cache

    def background_masks(self) -> list[np.ndarray]:
        return [~g.coverage for g in self.latent_gbuffers()]


def sample_keyframes(n_frames: int, k: int, seed: int, step: int) -> list[int]:
    """k distinct frame indices, uniform without replacement, shuffled order;
    a fresh draw for every (seed, step)."""
    if k > n_frames:
        raise ValueError(f"cannot draw {k} keyframes from {n_frames} frames")
    return rng.sample_without_replacement(n_frames, k, seed, "keyframes", step)


def keyframe_pass(
    run: DiffusionRun, keyframes: list[int], model: DenoiserModel
) -> tuple[list[np.ndarray], list[list[np.ndarray]], list[TextureSet]]:
    """Joint extended-attention pass over the keyframes with feature capture.

    Returns the keyframe predictions, the captured pre-attention features
    (per block, one entry per keyframe) and the blended post-attention
    texture set per block.
    """
    depth_conds = run.depth_conds()
    preds, taps = denoise_joint(
        [run.latents[i] for i in keyframes],
        run.sigma_now,
        [depth_conds[i] for i in keyframes],
        run.prompt_emb,
        model,
        capture=True,
    )
    resolution = run.config.resolved_texel_resolution
    grids = model.token_grids(run.config.latent_height, run.config.latent_width)
    pre_features: list[list[np.ndarray]] = []
    blended: list[TextureSet] = []
    for layer, (h, w) in enumerate(grids):
        pre_features.append([tap.pre[layer] for tap in taps])
        gbufs = run.gbuffers_at(h, w)
        feature_maps = [tap.post[layer].reshape(h, w, -1) for tap in taps]
        blended.append(
            blend_multi_frame(feature_maps, [gbufs[i] for i in keyframes], resolution)
        )
    return preds, pre_features, blended


def frame_pass(
    run: DiffusionRun,
    frame_index: int,
    keyframe_features: list[list[np.ndarray]],
    blended_textures: list[TextureSet],
    model: DenoiserModel,
    alpha: float | None = None,
) -> np.ndarray:
    """Injected denoising pass plus Euler update for one frame.

    Keyframes run through this same path; their capture-pass prediction is
    discarded so every frame follows identical code.
    """
    if alpha is None:
        alpha = run.config.alpha
    injected = run.config.injected_block_set()
    grids = model.token_grids(run.config.latent_height, run.config.latent_width)
    injections = []
    for layer, (h, w) in enumerate(grids):
        if layer not in injected:
            injections.append(None)
            continue
        gbuf = run.gbuffers_at(h, w)[frame_index]
        warped, valid = sample_from_textures(blended_textures[layer], gbuf)
        injections.append(
            BlockInjection(
                keyframe_features=keyframe_features[layer],
                fused_target=warped.reshape(h * w, -1),
                validity=valid.reshape(h * w),
                alpha=alpha,
            )
        )
    depth = run.depth_conds()[frame_index]
    pred, _ = denoise(
        run.latents[frame_index], run.sigma_now, depth, run.prompt_emb, model,
        injections=injections if model.block_count else None,
    )
    return euler_step(run.latents[frame_index], pred, run.sigma_now, run.sigma_next)


def background_stats(latent: np.ndarray, background_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std over background pixels."""
    pixels = latent[background_mask]
    return pixels.mean(axis=0), pixels.std(axis=0)


def normalize_latent(
    latent: np.ndarray,
    ref_stats: tuple[np.ndarray, np.ndarray],
    background_mask: np.ndarray,
) -> np.ndarray:
    """Match the latent's background statistics to the reference, per channel.

    The affine map is applied to all pixels. Skipped (identity) when the
    mask is empty or the background variance vanishes.
    """
    if not background_mask.any():
        return latent.copy()
    mean, std = background_stats(latent, background_mask)
    if np.any(std == 0.0):
        log.warning("zero background std, skipping latent normalization")
        return latent.copy()
    ref_mean, ref_std = ref_stats
    return (latent - mean) / std * ref_std + ref_mean


@dataclass
class RenderResult:
    latents: list[np.ndarray]  # per frame (H, W, C)
    keyframe_history: list[list[int]]  # keyframe indices drawn at each step


def _prepare_run(gbuffers: list[GBufferFrame], config: RunConfig) -> DiffusionRun:
    n = len(gbuffers)
    if n < 1:
        raise ValueError("need at least one G-buffer frame")
    if config.keyframes > n:
        raise ValueError(f"config asks for {config.keyframes} keyframes, run has {n} frames")
    dims = {(g.height, g.width) for g in gbuffers}
    if len(dims) != 1:
        raise ValueError(f"inconsistent G-buffer dimensions: {sorted(dims)}")
    schedule = karras_sigmas(config.steps, config.sigma_min, config.sigma_max, config.rho)
    run = DiffusionRun(
        config=config,
        schedule=schedule,
        latents=[],
        step_index=0,
        gbuffers=list(gbuffers),
        prompt_emb=prompt_embedding(config.prompt, config.prompt_embed_dim),
    )
    noise_cfg = NoiseConfig(
        seed=rng.key_hash(config.seed, "noise"),
        texel_resolution=config.resolved_texel_resolution,
        channels=config.latent_channels,
        background_mode=config.background_noise,
    )
    object_ids = sorted({int(i) for g in gbuffers for i in np.unique(g.object_id) if i != 0})
    textures = init_uv_noise(object_ids, noise_cfg) if object_ids else None
    for i, gbuf in enumerate(run.latent_gbuffers()):
        if textures is None:
            z = background_noise(noise_cfg, gbuf.height, gbuf.width, i)
        else:
            z = project_noise(textures, gbuf, noise_cfg, frame_index=i)
        run.latents.append(z * schedule.sigmas[0])
    return run


def render_sequence(
    source,
    config: RunConfig,
    model: DenoiserModel | None = None,
    step_callback=None,
    texture_dump_dir=None,
) -> RenderResult:
    """Run the full sampling loop over an AnimatedScene or G-buffer list.

    Deterministic in (source, config, model); a scene source is rasterized
    at the latent resolution. step_callback(step_index, latents) fires after
    each completed step.
    """
    if isinstance(source, AnimatedScene):
        gbuffers = rasterize_sequence(source, config.latent_width, config.latent_height)
    else:
        gbuffers = list(source)
    run = _prepare_run(gbuffers, config)
    if model is None:
        model = init_toy_model(config.seed, config.model_config())
    elif model.config.latent_channels != config.latent_channels:
        raise ValueError("model latent channels disagree with config")

    background_masks = run.background_masks()
    history: list[list[int]] = []
    for step in range(config.steps):
        run.step_index = step
        keyframes = sample_keyframes(run.frame_count, config.keyframes, config.seed, step)
        history.append(keyframes)
        _, pre_features, blended = keyframe_pass(run, keyframes, model)
        if texture_dump_dir is not None and blended:
            dump_texture_images(blended[0], texture_dump_dir, step)
        next_latents = [
            frame_pass(run, i, pre_features, blended, model)
            for i in range(run.frame_count)
        ]
        if config.normalize_latents and background_masks[0].any():
            ref = background_stats(next_latents[0], background_masks[0])
            if np.any(ref[1] == 0.0):
                log.warning("zero reference background std at step %d, skipping", step)
            else:
                next_latents = [
                    normalize_latent(z, ref, mask)
                    for z, mask in zip(next_latents, background_masks)
                ]
        run.latents = next_latents
        if step_callback is not None:
            step_callback(step, run.latents)
    return RenderResult(latents=run.latents, keyframe_history=history)
