"""End-to-end orchestration: design (stage I), compose (stage II), and the
optional style pass (stage III), plus the artifact layout on disk.

Stage I loads or generates asset bundles, cleans and classifies their
skeletons. Stage II plans the assembly, executes it, maps region weights to
the voxel latents, and composes them. Stage III renders a reference view,
sends it through the image-editing backend, and regenerates features for the
composed structure; it is skipped cleanly when no backends are configured, so
stages I-II always run offline.

Every artifact gets a stable filename under the output directory and a sha256
entry in manifest.json; fixture-mode runs are byte-deterministic.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import formats, gateway
from .bitmap import encode_png
from .errors import BeastForgeError
from .gateway import AssetBundle, BackendConfig
from .planner import (AssembledSkeleton, AssemblyPart, AssemblyPlan, PartRef,
                      build_parts, plan_assembly, execute_plan)
from .regions import (DEFAULT_DISTANCE_FLOOR, DEFAULT_K,
                      aggregate_region_weights, grid_to_canonical, knn_transfer)
from .skeleton import (DEFAULT_PRUNE_FRACTION, CleanSkeleton, OrientationFrame,
                       SemanticPartition, classify_regions, clean_skeleton,
                       estimate_orientation)
from .voxels import (ComposedLatent, CompositionConfig, RegionLatent,
                     compose, downsample_to_coarse, extract_region_latents)

__all__ = [
    "PipelineConfig",
    "StageError",
    "PipelineResult",
    "AssetState",
    "load_config",
    "prepare_asset",
    "select_parts",
    "region_latents_for",
    "compose_from_plan",
    "run_pipeline",
    "render_occupancy",
]

_NUMBER_KEYS = {"k", "fill_passes", "coarse_factor", "sampling_steps"}
_FLOAT_KEYS = {"distance_floor", "prune_fraction", "timeout", "guidance_scale"}


@dataclass(frozen=True)
class PipelineConfig:
    sources: tuple[str, ...]
    request: str = ""
    planner: str = "rule"                 # "rule" or "llm"
    out_dir: str = "out"
    style_prompt: Optional[str] = None
    k: int = DEFAULT_K
    distance_floor: float = DEFAULT_DISTANCE_FLOOR
    prune_fraction: float = DEFAULT_PRUNE_FRACTION
    fill_passes: int = 2
    coarse_factor: int = 4
    timeout: float = 30.0

    def __post_init__(self):
        if not self.sources:
            raise ValueError("at least one asset source is required")
        if self.planner not in ("rule", "llm"):
            raise ValueError("planner must be 'rule' or 'llm'")
        if not (0 < self.k):
            raise ValueError("k must be positive")
        if not (0 < self.distance_floor):
            raise ValueError("distance_floor must be positive")
        if not (0 <= self.prune_fraction < 0.5):
            raise ValueError("prune_fraction must be in [0, 0.5)")
        if self.fill_passes < 0:
            raise ValueError("fill_passes must be >= 0")
        if self.coarse_factor < 1:
            raise ValueError("coarse_factor must be >= 1")


class StageError(BeastForgeError):
    """A pipeline failure tagged with the stage it happened in (1, 2, or 3)."""

    def __init__(self, stage: int, message: str):
        self.stage = stage
        super().__init__(message)


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    """Flat TOML-style key=value config file plus override mapping.

    Recognized keys: sources (list), request, planner, out_dir, style_prompt,
    k, distance_floor, prune_fraction, fill_passes, coarse_factor, timeout.
    """
    values: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        values[key.strip()] = _parse_value(val.strip())
    if overrides:
        values.update(overrides)
    if "sources" in values and isinstance(values["sources"], str):
        values["sources"] = [values["sources"]]
    values["sources"] = tuple(values.get("sources", ()))
    return PipelineConfig(**values)


def _parse_value(text: str):
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [_parse_value(v.strip()) for v in inner.split(",")] if inner else []
    if text.startswith('"') and text.endswith('"'):
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


# -----------------------------------------------------------------------------
# stage I: assets
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class AssetState:
    """One source asset after design-stage processing."""

    asset_id: str
    bundle: AssetBundle
    clean: CleanSkeleton
    partition: SemanticPartition
    frame: OrientationFrame
    parts: tuple[AssemblyPart, ...]


def _resolve_bundle(source: str, timeout: float) -> AssetBundle:
    if source.startswith("fixture:"):
        cfg = BackendConfig(endpoint=source, timeout=timeout)
        return gateway.generate_asset("", cfg)
    path = Path(source)
    if path.exists():
        return formats.bundle_from_json(path.read_bytes())
    endpoint = os.environ.get(gateway.ENV_GEN3D_ENDPOINT)
    if not endpoint:
        raise FileNotFoundError(
            f"asset source {source!r} is neither a fixture, an existing file, "
            f"nor resolvable via {gateway.ENV_GEN3D_ENDPOINT}")
    cfg = BackendConfig(endpoint=endpoint, timeout=timeout)
    return gateway.generate_asset(source, cfg)


def prepare_asset(asset_id: str, bundle: AssetBundle,
                  prune_fraction: float = DEFAULT_PRUNE_FRACTION) -> AssetState:
    clean = clean_skeleton(bundle.skeleton, prune_fraction)
    frame = estimate_orientation(clean)
    partition, frame = classify_regions(clean, frame)
    parts = tuple(build_parts(asset_id, partition, clean.skeleton, frame))
    return AssetState(asset_id=asset_id, bundle=bundle, clean=clean,
                      partition=partition, frame=frame, parts=parts)


# -----------------------------------------------------------------------------
# stage II: part selection, weights, composition
# -----------------------------------------------------------------------------

def select_parts(assets: Sequence[AssetState], request: str) -> list[AssemblyPart]:
    """The base asset's regions plus every donor region named in the request.

    The first asset is the base: all of its regions participate as-is. Donor
    assets contribute the regions whose label appears in the request. An
    empty request keeps only the base asset (identity rebuild).
    """
    base = assets[0]
    parts = list(base.parts)
    wanted = {w for w in ("head", "leg", "wing", "tail", "body")
              if w in request.lower() or w + "s" in request.lower()}
    for state in assets[1:]:
        for part in state.parts:
            if part.category in wanted:
                parts.append(part)
    return parts


def _whole_asset_part(state: AssetState) -> AssemblyPart:
    sk = state.clean.skeleton
    bones = tuple((min(int(i), int(j)), max(int(i), int(j))) for i, j in sk.bones)
    return AssemblyPart(
        ref=PartRef(state.asset_id, "body", 1),
        joints=np.asarray(sk.joints, dtype=np.float64),
        bones=bones,
        attach_local=int(state.partition.begin_node),
        attach_bone_length=0.0,
        frame=state.frame,
        root_local=int(sk.root),
        begin_local=int(state.partition.begin_node),
        trunk_local=(int(state.partition.trunk_junction)
                     if state.partition.trunk_junction is not None else None),
    )


def region_latents_for(state: AssetState) -> dict[str, RegionLatent]:
    """Extract per-region latents for an asset, keyed by full part reference."""
    rw = aggregate_region_weights(state.bundle.skinning, state.partition, state.clean)
    slat = state.bundle.slat
    voxel_canonical = grid_to_canonical(slat.positions, slat.resolution)
    sw = knn_transfer(rw, state.bundle.vertices, voxel_canonical)
    extracted = extract_region_latents(slat, sw)
    out = {}
    for region, latent in zip(state.partition.regions, extracted):
        ref = PartRef(state.asset_id, region.label.lower(), region.instance_id)
        out[str(ref)] = latent
    return out


def _whole_asset_latent(state: AssetState) -> RegionLatent:
    slat = state.bundle.slat
    return RegionLatent(ref=str(PartRef(state.asset_id, "body", 1)),
                        resolution=slat.resolution,
                        positions=slat.positions,
                        features=slat.features,
                        weights=np.ones(slat.num_voxels, dtype=np.float64))


def compose_from_plan(
    assembled: AssembledSkeleton,
    latents: dict[str, RegionLatent],
    config: CompositionConfig,
) -> ComposedLatent:
    """Pair every executed part copy with its region latent and compose."""
    inputs = []
    for (pidx, cidx), affine in sorted(assembled.per_part_transform.items()):
        decl = assembled.parts[pidx]
        latent = latents[str(decl.ref)]
        if latent.is_empty:
            continue
        ref = str(decl.ref) if cidx == 0 else f"{decl.ref}~{cidx}"
        inputs.append((RegionLatent(ref=ref, resolution=latent.resolution,
                                    positions=latent.positions,
                                    features=latent.features,
                                    weights=latent.weights), affine))
    return compose(inputs, config)


# -----------------------------------------------------------------------------
# stage III: style
# -----------------------------------------------------------------------------

def render_occupancy(composed: ComposedLatent, factor: int, size: int = 256) -> np.ndarray:
    """Orthographic depth render of the coarse occupancy, viewer at +z."""
    region = RegionLatent(ref="render", resolution=composed.latent.resolution,
                          positions=composed.latent.positions,
                          features=composed.latent.features,
                          weights=np.ones(composed.latent.num_voxels))
    grid = downsample_to_coarse([region], factor)
    d = grid.resolution
    img = np.zeros((size, size, 4), dtype=np.uint8)
    img[..., 3] = 255
    cell = size // d
    occ = grid.occupancy
    for x in range(d):
        for y in range(d):
            column = occ[x, y, :]
            if not column.any():
                continue
            depth = int(np.max(np.nonzero(column)[0]))
            shade = 64 + int(191 * (depth + 1) / d)
            r0, c0 = (d - 1 - y) * cell, x * cell
            img[r0:r0 + cell, c0:c0 + cell, :3] = shade
    return img


# -----------------------------------------------------------------------------
# the full pipeline
# -----------------------------------------------------------------------------

@dataclass
class PipelineResult:
    out_dir: Path
    assets: list[AssetState]
    plan: AssemblyPlan
    assembled: AssembledSkeleton
    composed: ComposedLatent
    manifest: dict
    stage3_ran: bool = False


def _write(path: Path, data: bytes, manifest: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    rel = str(path.relative_to(manifest["__root__"]))
    manifest["files"][rel] = hashlib.sha256(data).hexdigest()


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    out_dir = Path(cfg.out_dir)
    manifest: dict = {"__root__": out_dir, "files": {}}

    # ----- stage I: generate/load, rig, clean, classify -----
    try:
        assets = []
        for i, source in enumerate(cfg.sources):
            bundle = _resolve_bundle(source, cfg.timeout)
            state = prepare_asset(f"a{i}", bundle, cfg.prune_fraction)
            assets.append(state)
    except BeastForgeError as exc:
        raise StageError(1, str(exc)) from exc
    except (FileNotFoundError, ValueError) as exc:
        raise StageError(1, str(exc)) from exc

    for state in assets:
        _write(out_dir / "stage1" / f"{state.asset_id}.bundle.json",
               formats.bundle_to_json(state.bundle), manifest)
        _write(out_dir / "stage1" / f"{state.asset_id}.skeleton.json",
               formats.skeleton_to_json(state.clean.skeleton), manifest)
        _write(out_dir / "stage1" / f"{state.asset_id}.partition.json",
               formats.partition_to_json(state.partition), manifest)

    # ----- stage II: plan, execute, map, compose -----
    try:
        identity_rebuild = not cfg.request.strip()
        if identity_rebuild:
            parts = [_whole_asset_part(assets[0])]
            latents = {parts[0].ref.__str__(): _whole_asset_latent(assets[0])}
        else:
            parts = select_parts(assets, cfg.request)
            latents = {}
            for state in assets:
                latents.update(region_latents_for(state))
        backend = None
        if cfg.planner == "llm":
            backend = gateway.LlmPlanBackend.from_env(cfg.timeout)
            if backend is None:
                raise StageError(2, f"planner 'llm' needs {gateway.ENV_LLM_ENDPOINT}")
        plan = plan_assembly(parts, cfg.request, backend=backend)
        assembled = execute_plan(parts, plan)
        comp_cfg = CompositionConfig(coarse_factor=cfg.coarse_factor,
                                     fill_passes=cfg.fill_passes)
        composed = compose_from_plan(assembled, latents, comp_cfg)
    except StageError:
        raise
    except BeastForgeError as exc:
        raise StageError(2, str(exc)) from exc

    _write(out_dir / "stage2" / "plan.json", formats.plan_to_json(plan), manifest)
    _write(out_dir / "stage2" / "assembled.skeleton.json",
           formats.skeleton_to_json(assembled.skeleton), manifest)
    _write(out_dir / "stage2" / "composed.slat", formats.write_slat(composed.latent),
           manifest)
    provenance = {
        "region_order": list(composed.region_order),
        "voxel_regions": [int(v) for v in composed.provenance],
        "seam_voxels": [[int(v) for v in row] for row in composed.seam_mask],
        "parts": [{"asset": d.ref.asset, "region": d.ref.label,
                   "instance": d.ref.instance, "copies": d.copies}
                  for d in assembled.parts],
    }
    _write(out_dir / "stage2" / "provenance.json", formats.dumps_json(provenance),
           manifest)

    # ----- stage III: style (optional, requires remote backends) -----
    stage3_ran = False
    edit_endpoint = os.environ.get(gateway.ENV_IMGEDIT_ENDPOINT)
    regen_endpoint = os.environ.get(gateway.ENV_GEN3D_ENDPOINT)
    if cfg.style_prompt and edit_endpoint and regen_endpoint:
        try:
            reference = render_occupancy(composed, cfg.coarse_factor)
            edited = gateway.edit_image(
                gateway.EditRequest(image=reference, positive_prompt=cfg.style_prompt),
                BackendConfig(endpoint=edit_endpoint, timeout=cfg.timeout),
            )
            styled = gateway.regenerate_features(
                edited, composed.latent.positions, composed.latent.resolution,
                BackendConfig(endpoint=regen_endpoint, timeout=cfg.timeout),
                channels=composed.latent.channels,
            )
            _write(out_dir / "stage3" / "reference.png", encode_png(reference), manifest)
            _write(out_dir / "stage3" / "styled.slat", formats.write_slat(styled), manifest)
            stage3_ran = True
        except BeastForgeError as exc:
            raise StageError(3, str(exc)) from exc

    manifest_obj = {"files": dict(sorted(manifest["files"].items())),
                    "stage3": stage3_ran}
    (out_dir / "manifest.json").write_bytes(formats.dumps_json(manifest_obj))
    return PipelineResult(out_dir=out_dir, assets=assets, plan=plan,
                          assembled=assembled, composed=composed,
                          manifest=manifest_obj, stage3_ran=stage3_ran)
