"""Progressive texturing pipeline: generation pass, then heat-driven refinement.

The generation pass walks six fixed axis views, asking the backend to
fill pixels the atlas has not covered (New) or now sees better
(Update), and back-projects each answer. Refinement then repeatedly
partitions every remaining candidate viewpoint against the current
atlas, scores each with a view heat

    heat = (w_new * |New| + w_update * |Update| + w_keep * |Keep|) / |non-Ignore|

and synthesizes the argmax until the pool, the selection budget, or the
heat threshold runs out. All seeds derive from one base seed, so a run
is bit-reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import pngio
from .backend import build_request, make_backend
from .camera import (
    DEFAULT_DISTANCE,
    DEFAULT_FOV_DEG,
    PRESET_ANGLES,
    Viewpoint,
    candidate_refinement_views,
    preset_generation_views,
    viewpoint_to_camera,
)
from .errors import MeshTexError, ProtocolError
from .geometry import Mesh, TexelGeometry, bake_texel_geometry, normalize_mesh
from .raster import UNPAINTED_GRAY, ViewImage, rasterize, render_view
from .texstate import (
    DEPTH_EPSILON,
    GenerationMask,
    MaskLabel,
    TextureAtlas,
    back_project,
    partition_view,
)

log = logging.getLogger(__name__)

GENERATION_STRENGTH = 0.5
REFINEMENT_STRENGTH = 0.3
HEAT_STOP_THRESHOLD = 0.01
MAX_REFINE_SELECT = 36

_STAGE_GENERATE = 1
_STAGE_REFINE = 2

_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class HeatWeights:
    new: float = 1.0
    update: float = 0.8
    keep: float = 0.0


@dataclass
class PipelineConfig:
    prompt: str = ""
    gamma_g: float = GENERATION_STRENGTH
    gamma_r: float = REFINEMENT_STRENGTH
    image_resolution: int = 512
    texture_resolution: int = 1024
    n_refine_select: int = 20
    weights: HeatWeights = field(default_factory=HeatWeights)
    heat_stop_threshold: float = HEAT_STOP_THRESHOLD
    seed: int = 0
    backend: str = "local"
    steps: int = 50
    camera_distance: float = DEFAULT_DISTANCE
    fov_deg: float = DEFAULT_FOV_DEG
    depth_eps: float = DEPTH_EPSILON
    unpainted_color: tuple = UNPAINTED_GRAY
    disable_partition: bool = False
    disable_update: bool = False
    debug_dir: str | None = None

    def validate(self) -> "PipelineConfig":
        if not 0.0 < self.gamma_g <= 1.0 or not 0.0 < self.gamma_r <= 1.0:
            raise ValueError("gamma_g and gamma_r must be in (0, 1]")
        if self.image_resolution < 1 or self.texture_resolution < 1:
            raise ValueError("resolutions must be >= 1")
        if not 0 <= self.n_refine_select <= MAX_REFINE_SELECT:
            raise ValueError(f"n_refine_select must be in [0, {MAX_REFINE_SELECT}]")
        if not self.weights.update > self.weights.keep:
            raise ValueError("w_update must exceed w_keep")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["weights"] = {"new": self.weights.new, "update": self.weights.update,
                        "keep": self.weights.keep}
        d["unpainted_color"] = list(self.unpainted_color)
        return d


@dataclass
class ViewRecord:
    stage: str                 # "generate" | "refine"
    view_index: int            # order over the whole run
    name: str
    viewpoint: Viewpoint
    counts: dict
    heat: float
    written_texels: int
    coverage_after: float
    wall_time_s: float
    candidate_index: int | None = None
    candidate_heats: dict | None = None

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "view_index": self.view_index,
            "name": self.name,
            "viewpoint": {"theta": self.viewpoint.theta,
                          "phi": self.viewpoint.phi,
                          "r": self.viewpoint.r},
            "counts": self.counts,
            "heat": self.heat,
            "written_texels": self.written_texels,
            "coverage_after": self.coverage_after,
            "wall_time_s": self.wall_time_s,
            "candidate_index": self.candidate_index,
            "candidate_heats": self.candidate_heats,
        }


@dataclass
class RunReport:
    config: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    final_coverage: float = 0.0
    total_views: int = 0
    status: str = "ok"
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "records": [r.to_dict() for r in self.records],
            "final_coverage": self.final_coverage,
            "total_views": self.total_views,
            "status": self.status,
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def derive_seed(base: int, stage: int, index: int) -> int:
    """Stable per-view seed from (base, stage, index); splitmix64 finalizer."""
    x = (base * 0x9E3779B97F4A7C15 + stage * 0xD1B54A32D192ED03 + index + 1) & _U64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _U64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _U64
    x ^= x >> 31
    return x


def compute_view_heat(mask: GenerationMask, weights: HeatWeights) -> float:
    """Weighted fraction of foreground pixels still worth synthesizing."""
    n_new = mask.count(MaskLabel.NEW)
    n_update = mask.count(MaskLabel.UPDATE)
    n_keep = mask.count(MaskLabel.KEEP)
    n_p = n_new + n_update + n_keep
    if n_p == 0:
        return 0.0
    return (n_new * weights.new + n_update * weights.update
            + n_keep * weights.keep) / n_p


def apply_ablations(mask: GenerationMask, config: PipelineConfig) -> GenerationMask:
    """Study knobs: no partition (all foreground New) / no updates."""
    if not config.disable_partition and not config.disable_update:
        return mask
    labels = mask.labels.copy()
    if config.disable_partition:
        labels[labels != int(MaskLabel.IGNORE)] = int(MaskLabel.NEW)
    elif config.disable_update:
        labels[labels == int(MaskLabel.UPDATE)] = int(MaskLabel.KEEP)
    return GenerationMask(labels)


def _check_similarity_monotone(before: np.ndarray, atlas: TextureAtlas):
    if not np.all(atlas.best_similarity >= before):
        raise MeshTexError("best_similarity decreased; back-projection bug")


def _dump_view(debug_dir, tag, gbuffer, mask, init, output):
    os.makedirs(debug_dir, exist_ok=True)
    p = os.path.join(debug_dir, tag)
    pngio.save_png(p + "_depth.png", pngio.encode_gray16(gbuffer.depth))
    pngio.save_png(p + "_similarity.png", pngio.encode_gray16(gbuffer.similarity))
    pngio.save_png(p + "_mask.png", pngio.encode_mask_png(mask.labels))
    pngio.save_png(p + "_init.png", pngio.encode_rgb8(init.rgb))
    pngio.save_png(p + "_output.png", pngio.encode_rgb8(output.rgb))


def _synthesize_view(mesh, texgeo, atlas, config, backend, camera,
                     gbuffer, mask, strength, seed):
    """Request one view from the backend and fold it into the atlas."""
    init = render_view(mesh, atlas, gbuffer, config.unpainted_color)
    request = build_request(config.prompt, gbuffer.depth, init, mask,
                            strength, seed, config.steps)
    response = backend.generate(request)
    output = ViewImage(pngio.decode_rgb8(pngio.from_b64(response.image)))
    if output.resolution != gbuffer.resolution:
        raise ProtocolError(
            f"backend returned {output.resolution}px, view is {gbuffer.resolution}px"
        )
    before = atlas.best_similarity.copy()
    written = back_project(output, mask, camera, gbuffer, texgeo, atlas,
                           config.depth_eps)
    _check_similarity_monotone(before, atlas)
    return init, output, written


def generate_stage(mesh: Mesh, texgeo: TexelGeometry, atlas: TextureAtlas,
                   config: PipelineConfig, backend, report: RunReport) -> None:
    """Synthesize the six preset views in order; abort on first failure."""
    views = preset_generation_views(config.camera_distance)
    for k, viewpoint in enumerate(views):
        t0 = time.perf_counter()
        name = PRESET_ANGLES[k][0]
        camera = viewpoint_to_camera(viewpoint, config.image_resolution,
                                     config.fov_deg)
        gbuffer = rasterize(mesh, camera)
        mask = apply_ablations(partition_view(gbuffer, mesh, atlas), config)
        heat = compute_view_heat(mask, config.weights)
        seed = derive_seed(config.seed, _STAGE_GENERATE, k)
        init, output, written = _synthesize_view(
            mesh, texgeo, atlas, config, backend, camera, gbuffer, mask,
            config.gamma_g, seed)
        if config.debug_dir:
            _dump_view(config.debug_dir, f"{len(report.records):03d}_generate_{name}",
                       gbuffer, mask, init, output)
        report.records.append(ViewRecord(
            stage="generate",
            view_index=len(report.records),
            name=name,
            viewpoint=viewpoint,
            counts=mask.counts(),
            heat=heat,
            written_texels=written,
            coverage_after=atlas.coverage(texgeo),
            wall_time_s=time.perf_counter() - t0,
        ))
        log.info("generate %-6s heat %.3f wrote %6d texels coverage %.3f",
                 name, heat, written, report.records[-1].coverage_after)


def refine_stage(mesh: Mesh, texgeo: TexelGeometry, atlas: TextureAtlas,
                 config: PipelineConfig, backend, report: RunReport) -> None:
    """Greedy next-best-view selection over the candidate ring set."""
    if config.n_refine_select == 0:
        return
    candidates = candidate_refinement_views(config.camera_distance)
    cameras = [viewpoint_to_camera(v, config.image_resolution, config.fov_deg)
               for v in candidates]
    # geometry never changes mid-run, rasterization is cacheable
    gbuffers = [rasterize(mesh, cam) for cam in cameras]

    remaining = list(range(len(candidates)))
    for selection in range(config.n_refine_select):
        t0 = time.perf_counter()
        heats = {}
        masks = {}
        for ci in remaining:
            m = apply_ablations(partition_view(gbuffers[ci], mesh, atlas), config)
            masks[ci] = m
            heats[ci] = compute_view_heat(m, config.weights)
        best = max(remaining, key=lambda ci: (heats[ci], -ci))
        if heats[best] < config.heat_stop_threshold:
            log.info("refinement stops: max heat %.4f < %.4f",
                     heats[best], config.heat_stop_threshold)
            break

        viewpoint = candidates[best]
        mask = masks[best]
        seed = derive_seed(config.seed, _STAGE_REFINE, selection)
        init, output, written = _synthesize_view(
            mesh, texgeo, atlas, config, backend, cameras[best], gbuffers[best],
            mask, config.gamma_r, seed)
        name = f"ring{viewpoint.phi:.0f}_az{viewpoint.theta:.0f}"
        if config.debug_dir:
            _dump_view(config.debug_dir, f"{len(report.records):03d}_refine_{name}",
                       gbuffers[best], mask, init, output)
        report.records.append(ViewRecord(
            stage="refine",
            view_index=len(report.records),
            name=name,
            viewpoint=viewpoint,
            counts=mask.counts(),
            heat=heats[best],
            written_texels=written,
            coverage_after=atlas.coverage(texgeo),
            wall_time_s=time.perf_counter() - t0,
            candidate_index=best,
            candidate_heats={str(ci): heats[ci] for ci in sorted(heats)},
        ))
        remaining.remove(best)
        log.info("refine   %-14s heat %.3f wrote %6d texels coverage %.3f",
                 name, heats[best], written, report.records[-1].coverage_after)


def run_full(mesh: Mesh, config: PipelineConfig,
             report: RunReport | None = None):
    """Normalize, bake, generate, refine. Returns (atlas, report).

    Pass a RunReport to keep partial per-view records if a stage raises;
    the same object is returned on success.
    """
    config.validate()
    if report is None:
        report = RunReport()
    report.config = config.to_dict()

    mesh = normalize_mesh(mesh)
    texgeo = bake_texel_geometry(mesh, config.texture_resolution)
    atlas = TextureAtlas.empty(config.texture_resolution)
    backend = make_backend(config.backend)

    generate_stage(mesh, texgeo, atlas, config, backend, report)
    refine_stage(mesh, texgeo, atlas, config, backend, report)

    report.final_coverage = atlas.coverage(texgeo)
    report.total_views = len(report.records)
    return atlas, report
