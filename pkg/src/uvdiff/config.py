"""Run configuration: one flat document, unknown keys are hard errors."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .denoiser import MODEL_KINDS, ModelConfig
from .errors import ConfigError
from .noise import BACKGROUND_MODES

RENDER_MANIFEST_KIND = "uvdiff-render-run"


@dataclass
class RunConfig:
    steps: int = 50
    keyframes: int = 2
    alpha: float = 0.5
    seed: int = 0
    texel_resolution: int = 0  # 0 = auto: 2x the larger latent dimension
    latent_width: int = 32
    latent_height: int = 32
    latent_channels: int = 4
    sigma_min: float = 0.02
    sigma_max: float = 14.0
    rho: float = 7.0
    background_noise: str = "fixed"
    prompt: str = ""
    normalize_latents: bool = True
    model: str = "toy"
    hidden_channels: int = 16
    attention_blocks: int = 2
    attention_heads: int = 2
    prompt_embed_dim: int = 8
    inject_blocks: list[int] | None = None  # None = inject at every block

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.steps < 2:
            raise ConfigError(f"steps must be >= 2, got {self.steps}")
        if self.keyframes < 1:
            raise ConfigError(f"keyframes must be >= 1, got {self.keyframes}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        for name in ("latent_width", "latent_height", "latent_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.texel_resolution < 0:
            raise ConfigError("texel_resolution must be >= 0 (0 = auto)")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ConfigError(
                f"need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}"
            )
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.background_noise not in BACKGROUND_MODES:
            raise ConfigError(
                f"background_noise must be one of {BACKGROUND_MODES}, got {self.background_noise!r}"
            )
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.inject_blocks is not None:
            bad = [b for b in self.inject_blocks if not 0 <= b < self.attention_blocks]
            if bad:
                raise ConfigError(f"inject_blocks out of range: {bad}")
        try:
            self.model_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def resolved_texel_resolution(self) -> int:
        if self.texel_resolution > 0:
            return self.texel_resolution
        return 2 * max(self.latent_width, self.latent_height)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            kind=self.model,
            latent_channels=self.latent_channels,
            hidden_channels=self.hidden_channels,
            attention_blocks=self.attention_blocks,
            attention_heads=self.attention_heads,
            prompt_embed_dim=self.prompt_embed_dim,
        )

    def injected_block_set(self) -> set[int]:
        if self.inject_blocks is None:
            return set(range(self.attention_blocks))
        return set(self.inject_blocks)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict, context: str = "config") -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"{context}: expected an object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
        kwargs = {}
        for field in dataclasses.fields(cls):
            if field.name not in doc:
                continue
            value = doc[field.name]
            try:
                if field.name == "inject_blocks":
                    kwargs[field.name] = None if value is None else [int(v) for v in value]
                elif field.type == "int":
                    kwargs[field.name] = int(value)
                elif field.type == "float":
                    kwargs[field.name] = float(value)
                elif field.type == "bool":
                    if not isinstance(value, bool):
                        raise ConfigError(f"{context}: {field.name} must be true/false")
                    kwargs[field.name] = value
                else:
                    kwargs[field.name] = value
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{context}: bad value for {field.name}: {value!r}") from exc
        return cls(**kwargs)


def load_run_config(path) -> RunConfig:
    """Read a config document; a render-run manifest is accepted and its
    embedded config reused, which makes reruns reproducible from the
    manifest alone."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    if isinstance(doc, dict) and doc.get("kind") == RENDER_MANIFEST_KIND:
        if "config" not in doc:
            raise ConfigError(f"{path}: manifest lacks a config block")
        return RunConfig.from_dict(doc["config"], context=f"{path}:config")
    return RunConfig.from_dict(doc, context=str(path))
