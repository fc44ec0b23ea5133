"""uvdiff: UV-correspondence guided multi-frame diffusion rendering.

Animated meshes are rasterized to per-frame guidance channels (UV + depth
G-buffers) that drive a multi-frame diffusion sampler. Temporal consistency
comes from sharing state through each object's canonical UV space: initial
noise lives on UV textures, and self-attention features are exchanged
across frames by splatting into and sampling out of those textures.
"""

from .config import RunConfig, load_run_config
from .pipeline import RenderResult, render_sequence
from .rasterizer import GBufferFrame, rasterize_frame, rasterize_sequence
from .scene import AnimatedScene, CameraPose, MeshObject, parse_scene

__version__ = "0.1.0"

__all__ = [
    "AnimatedScene",
    "CameraPose",
    "GBufferFrame",
    "MeshObject",
    "RenderResult",
    "RunConfig",
    "load_run_config",
    "parse_scene",
    "rasterize_frame",
    "rasterize_sequence",
    "render_sequence",
    "__version__",
]
