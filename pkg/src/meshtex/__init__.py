"""Progressive text-driven texturing for triangle meshes."""

from .backend import (
    GenerateRequest,
    GenerateResponse,
    LocalBackend,
    RemoteBackend,
    local_generate,
    make_backend,
    remote_generate,
)
from .camera import Camera, Viewpoint, candidate_refinement_views, preset_generation_views, viewpoint_to_camera
from .diffusion import (
    Conditioning,
    IdentityCodec,
    Latent,
    NoiseSchedule,
    SamplerConfig,
    ToyPredictor,
    ddpm_step,
    make_linear_schedule,
    masked_sample,
    q_sample,
)
from .errors import MeshTexError
from .geometry import Mesh, TexelGeometry, bake_texel_geometry, load_mesh, make_mesh, normalize_mesh
from .pipeline import HeatWeights, PipelineConfig, RunReport, compute_view_heat, run_full
from .raster import GBuffer, ViewImage, rasterize, render_view
from .texstate import GenerationMask, MaskLabel, TextureAtlas, back_project, downsample_mask, partition_view

__version__ = "0.1.0"

__all__ = [
    "Camera", "Conditioning", "GBuffer", "GenerateRequest", "GenerateResponse",
    "GenerationMask", "HeatWeights", "IdentityCodec", "Latent", "LocalBackend",
    "MaskLabel", "Mesh", "MeshTexError", "NoiseSchedule", "PipelineConfig",
    "RemoteBackend", "RunReport", "SamplerConfig", "TexelGeometry",
    "TextureAtlas", "ToyPredictor", "ViewImage", "Viewpoint",
    "back_project", "bake_texel_geometry", "candidate_refinement_views",
    "compute_view_heat", "ddpm_step", "downsample_mask", "load_mesh",
    "local_generate", "make_backend", "make_linear_schedule", "make_mesh",
    "masked_sample", "normalize_mesh", "partition_view",
    "preset_generation_views", "q_sample", "rasterize", "remote_generate",
    "render_view", "run_full", "viewpoint_to_camera",
]
