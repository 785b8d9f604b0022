"""Command line interface.

Subcommands:
  classify   clean + classify one asset, write skeleton and partition JSON
  plan       produce a validated assembly plan for a set of assets
  compose    execute a plan and write the composed latent
  pipeline   run the full design-compose-generate pipeline
  serve      run the local composer service

Every subcommand accepts --config <path> (flat TOML-style key = value file)
with individual flags taking precedence.

Exit codes: 0 success, 2 bad configuration or arguments, 3/4/5 failures in
pipeline stages I/II/III.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

from . import formats, gateway, pipeline
from .errors import BeastForgeError
from .pipeline import PipelineConfig, StageError
from .planner import execute_plan, plan_assembly
from .voxels import CompositionConfig

_STAGE_EXIT = {1: 3, 2: 4, 3: 5}


def _base_parser(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--out", default=None, help="output directory")


def _collect_config(args, need_sources: bool = True) -> PipelineConfig:
    overrides: dict = {}
    if getattr(args, "assets", None):
        overrides["sources"] = list(args.assets)
    if getattr(args, "request", None) is not None:
        overrides["request"] = args.request
    if getattr(args, "planner", None):
        overrides["planner"] = args.planner
    if args.out:
        overrides["out_dir"] = args.out
    if getattr(args, "style", None):
        overrides["style_prompt"] = args.style
    for key in ("k", "distance_floor", "prune_fraction", "fill_passes",
                "coarse_factor", "timeout"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if args.config:
        return pipeline.load_config(args.config, overrides)
    if need_sources and not overrides.get("sources"):
        raise ValueError("no asset sources given (use --assets or --config)")
    overrides.setdefault("sources", ())
    overrides.setdefault("out_dir", "out")
    return PipelineConfig(**overrides)


def _add_knob_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--k", type=int, default=None)
    sub.add_argument("--distance-floor", dest="distance_floor", type=float, default=None)
    sub.add_argument("--prune-fraction", dest="prune_fraction", type=float, default=None)
    sub.add_argument("--fill-passes", dest="fill_passes", type=int, default=None)
    sub.add_argument("--coarse-factor", dest="coarse_factor", type=int, default=None)
    sub.add_argument("--timeout", type=float, default=None)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="beastforge",
                                     description="skeleton-guided creature composition")
    subs = parser.add_subparsers(dest="command", required=True)

    p_classify = subs.add_parser("classify", help="classify one asset's skeleton")
    p_classify.add_argument("--asset", required=True,
                            help="fixture:<name> or bundle JSON path")
    _base_parser(p_classify)
    _add_knob_flags(p_classify)

    p_plan = subs.add_parser("plan", help="produce an assembly plan")
    p_plan.add_argument("--assets", nargs="+", default=None)
    p_plan.add_argument("--request", default="")
    p_plan.add_argument("--planner", choices=("rule", "llm"), default=None)
    _base_parser(p_plan)
    _add_knob_flags(p_plan)

    p_compose = subs.add_parser("compose", help="execute a plan and compose latents")
    p_compose.add_argument("--assets", nargs="+", default=None)
    p_compose.add_argument("--plan", required=True, help="plan JSON path")
    _base_parser(p_compose)
    _add_knob_flags(p_compose)

    p_pipe = subs.add_parser("pipeline", help="run the full pipeline")
    p_pipe.add_argument("--assets", nargs="+", default=None)
    p_pipe.add_argument("--request", default=None)
    p_pipe.add_argument("--planner", choices=("rule", "llm"), default=None)
    p_pipe.add_argument("--style", default=None)
    _base_parser(p_pipe)
    _add_knob_flags(p_pipe)

    p_serve = subs.add_parser("serve", help="run the composer service")
    p_serve.add_argument("--bind", default="127.0.0.1:8787")
    _base_parser(p_serve)
    _add_knob_flags(p_serve)

    args = parser.parse_args(argv)
    try:
        return _run(args)
    except StageError as exc:
        print(f"error (stage {exc.stage}): {exc}", file=sys.stderr)
        return _STAGE_EXIT.get(exc.stage, 1)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BeastForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _run(args) -> int:
    if args.command == "classify":
        cfg = _collect_config_for_classify(args)
        out = Path(cfg.out_dir)
        try:
            bundle = pipeline._resolve_bundle(args.asset, cfg.timeout)
            state = pipeline.prepare_asset("a0", bundle, cfg.prune_fraction)
        except BeastForgeError as exc:
            raise StageError(1, str(exc)) from exc
        except FileNotFoundError as exc:
            raise StageError(1, str(exc)) from exc
        out.mkdir(parents=True, exist_ok=True)
        (out / "skeleton.json").write_bytes(formats.skeleton_to_json(state.clean.skeleton))
        (out / "partition.json").write_bytes(formats.partition_to_json(state.partition))
        print(f"classified {args.asset}: {len(state.partition.regions)} regions "
              f"-> {out}/partition.json")
        return 0

    if args.command == "plan":
        cfg = _collect_config(args)
        states = _prepare_assets(cfg)
        parts = pipeline.select_parts(states, cfg.request)
        backend = None
        if cfg.planner == "llm":
            backend = gateway.LlmPlanBackend.from_env(cfg.timeout)
            if backend is None:
                raise StageError(2, f"planner 'llm' needs {gateway.ENV_LLM_ENDPOINT}")
        try:
            plan = plan_assembly(parts, cfg.request, backend=backend)
        except BeastForgeError as exc:
            raise StageError(2, str(exc)) from exc
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_bytes(formats.plan_to_json(plan))
        print(f"plan with {len(plan.parts)} parts, {len(plan.ops)} ops "
              f"-> {out}/plan.json")
        return 0

    if args.command == "compose":
        cfg = _collect_config(args)
        states = _prepare_assets(cfg)
        try:
            plan = formats.plan_from_json(Path(args.plan).read_bytes())
            parts = []
            latents = {}
            for state in states:
                parts.extend(state.parts)
                latents.update(pipeline.region_latents_for(state))
            assembled = execute_plan(parts, plan)
            comp_cfg = CompositionConfig(coarse_factor=cfg.coarse_factor,
                                         fill_passes=cfg.fill_passes)
            composed = pipeline.compose_from_plan(assembled, latents, comp_cfg)
        except BeastForgeError as exc:
            raise StageError(2, str(exc)) from exc
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        blob = formats.write_slat(composed.latent)
        (out / "composed.slat").write_bytes(blob)
        (out / "assembled.skeleton.json").write_bytes(
            formats.skeleton_to_json(assembled.skeleton))
        digest = hashlib.sha256(blob).hexdigest()
        print(f"composed {composed.latent.num_voxels} voxels "
              f"({composed.seam_mask.shape[0]} seam) sha256={digest}")
        return 0

    if args.command == "pipeline":
        cfg = _collect_config(args)
        result = pipeline.run_pipeline(cfg)
        print(f"pipeline ok -> {result.out_dir} "
              f"({result.composed.latent.num_voxels} voxels, "
              f"stage3={'ran' if result.stage3_ran else 'skipped'})")
        return 0

    if args.command == "serve":
        from . import service as service_mod

        host, _, port = args.bind.partition(":")
        server = service_mod.serve(host or "127.0.0.1", int(port or 8787))
        bound_host, bound_port = server.server_address[:2]
        print(f"composer service on http://{bound_host}:{bound_port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            server.shutdown()
        return 0

    raise ValueError(f"unknown command {args.command}")


def _collect_config_for_classify(args) -> PipelineConfig:
    overrides = {"sources": [args.asset]}
    if args.out:
        overrides["out_dir"] = args.out
    for key in ("prune_fraction", "timeout"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if args.config:
        return pipeline.load_config(args.config, overrides)
    overrides.setdefault("out_dir", "out")
    return PipelineConfig(**overrides)


def _prepare_assets(cfg: PipelineConfig):
    try:
        states = []
        for i, source in enumerate(cfg.sources):
            bundle = pipeline._resolve_bundle(source, cfg.timeout)
            states.append(pipeline.prepare_asset(f"a{i}", bundle, cfg.prune_fraction))
        return states
    except BeastForgeError as exc:
        raise StageError(1, str(exc)) from exc
    except FileNotFoundError as exc:
        raise StageError(1, str(exc)) from exc


if __name__ == "__main__":
    sys.exit(main())
