"""Command line interface.

Subcommands: phantom, ingest, recon-geometry, recon-velocity, wss,
pipeline, rate-study. Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

from .errors import (
    ConfigError,
    FlowrecError,
    GridFormatError,
    NumericalError,
    StageError,
)
from .geometry import DiskTransform, GeometryBounds, RadiusFunction
from .geo_ident import GeoIdentConfig
from .grids import read_grid, write_grid
from .phantom import NoiseSpec, estimate_noise_level
from .pipeline import (
    TruthSpec,
    geometry_result_from_file,
    geometry_result_to_file,
    ingest,
    make_phantom,
    merge_config,
    run_pipeline,
    stage_geometry,
    stage_velocity,
    velocity_result_from_file,
    velocity_result_to_file,
    write_phantom,
    write_wss_csv,
)
from .velocity import VelocityReconConfig, compute_delta_u
from .wss import lowpass_filter, wall_shear_stress
from .study import StudyConfig, default_study_config, run_rate_study


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def _require_truth(cfg: dict) -> TruthSpec:
    if "truth" not in cfg:
        raise ConfigError("config must contain a 'truth' section")
    return TruthSpec.from_dict(cfg["truth"])


def _cmd_phantom(args) -> int:
    cfg = _load_config(args.config)
    truth = _require_truth(cfg)
    noise_cfg = dict(cfg.get("noise", {}))
    if args.seed is not None:
        noise_cfg["seed"] = args.seed
    noise = NoiseSpec(
        noise_cfg.get("sigma_mag", 0.0),
        noise_cfg.get("sigma_complex", 0.0),
        noise_cfg.get("seed", 0),
    )
    from .grids import GridSpec

    spec = GridSpec.fov(cfg.get("grid_n", 64))
    data = make_phantom(truth, spec, noise, cfg.get("subsamples", 16))
    write_phantom(data, truth, noise, args.out)
    print(f"phantom written to {args.out} (delta={data.delta!r}, eps={data.eps!r})")
    return 0


def _cmd_ingest(args) -> int:
    info = ingest(args.magnitude, args.phase, args.out, args.bins)
    print(f"ingested to {args.out} (delta={info['delta']!r})")
    return 0


def _geo_config_from_args(args, cfg):
    gcfg = dict(cfg.get("geometry", {}))
    bounds_cfg = gcfg.get("bounds") or cfg.get("bounds")
    bounds = (
        GeometryBounds.from_dict(bounds_cfg)
        if bounds_cfg
        else GeometryBounds(0.15, 0.85, 4)
    )
    gamma = None if args.gamma in (None, "auto") else float(args.gamma)
    return GeoIdentConfig(
        bounds=bounds,
        n_fourier=args.n_fourier or gcfg.get("n_fourier", 8),
        gamma=gamma,
        alpha0=gcfg.get("alpha0", 0.1),
        quad_order=gcfg.get("quad_order", 4),
        recenter=gcfg.get("recenter", True),
    )


def _cmd_recon_geometry(args) -> int:
    cfg = _load_config(args.config)
    grid = read_grid(args.input)
    geo_cfg = _geo_config_from_args(args, cfg)
    if args.delta == "auto":
        delta = estimate_noise_level(grid, grid.values < 0.1)
    else:
        delta = float(args.delta)
    alpha = args.alpha if args.alpha == "disc" else float(args.alpha)
    result = stage_geometry(grid, geo_cfg, alpha, delta)
    geometry_result_to_file(result, geo_cfg.bounds, args.out)
    print(
        f"geometry written to {args.out} "
        f"(alpha={result.alpha!r}, residual={result.residual_norm!r})"
    )
    return 0


def _cmd_recon_velocity(args) -> int:
    cfg = _load_config(args.config)
    grid = read_grid(args.grid)
    radius, bounds, center, _ = geometry_result_from_file(args.geometry)
    vcfg_in = dict(cfg.get("velocity", {}))
    vel_cfg = VelocityReconConfig(
        cutoff=args.cutoff or vcfg_in.get("cutoff"),
        beta0=vcfg_in.get("beta0", 1e-2),
        subsamples=vcfg_in.get("subsamples", 16),
    )
    beta = args.beta if args.beta == "disc" else float(args.beta)
    delta_u = None
    if beta == "disc":
        if args.delta_u == "auto":
            noise_path = os.path.join(os.path.dirname(args.grid) or ".", "noise.json")
            if not os.path.exists(noise_path):
                raise ConfigError(
                    "--delta-u auto needs noise.json next to the velocity grid"
                )
            with open(noise_path) as fh:
                noise_info = json.load(fh)
            delta_u = compute_delta_u(
                math.sqrt(max(noise_info["delta"], 0.0)), noise_info["eps"]
            )
        else:
            delta_u = float(args.delta_u)
    coeffs, info, _ = stage_velocity(grid, radius, bounds, vel_cfg, beta, delta_u, center)
    velocity_result_to_file(coeffs, info, args.out)
    print(f"velocity written to {args.out} (beta={info.beta!r}, residual={info.residual!r})")
    return 0


def _cmd_wss(args) -> int:
    radius, bounds, _center, _ = geometry_result_from_file(args.geometry)
    coeffs, _ = velocity_result_from_file(args.velocity)
    tau = wall_shear_stress(radius, coeffs, bounds, args.samples, args.viscosity)
    tau_f = lowpass_filter(tau, args.lowpass)
    write_wss_csv(args.out, tau, tau_f)
    print(f"wall shear stress written to {args.out} (mean={float(tau_f.values.mean())!r})")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_config(args.config)
    truth = _require_truth(cfg)
    if args.seed is not None:
        cfg = merge_config(cfg, {"noise": {"seed": args.seed}})
    summary = run_pipeline(truth, cfg, args.out)
    print(
        "pipeline done: "
        f"geometry residual={summary['geometry']['residual']!r}, "
        f"velocity residual={summary['velocity']['residual']!r}, "
        f"mean wss={summary['wss']['mean_filtered']!r}"
    )
    return 0


def _cmd_rate_study(args) -> int:
    cfg_dict = _load_config(args.config)
    if cfg_dict:
        truth = _require_truth(cfg_dict)
        fields = {
            k: v
            for k, v in cfg_dict.items()
            if k
            in (
                "resolutions",
                "noise_levels",
                "seeds",
                "parameter_mode",
                "n_fourier",
                "quad_order",
                "alpha0",
                "n_alpha",
                "beta0",
                "n_beta",
                "subsamples",
                "design_subsamples",
                "max_modes",
                "wss_samples",
                "lowpass",
                "geometry_only",
            )
        }
        if "resolutions" in fields:
            fields["resolutions"] = tuple(fields["resolutions"])
        if "noise_levels" in fields:
            fields["noise_levels"] = tuple(tuple(p) for p in fields["noise_levels"])
        if "seeds" in fields:
            fields["seeds"] = tuple(fields["seeds"])
        study_cfg = default_study_config(args.out, truth=truth, **fields)
    else:
        study_cfg = default_study_config(args.out)
    if args.seed is not None:
        study_cfg = replace(study_cfg, seeds=(args.seed,))
    if args.geometry_only:
        study_cfg = replace(study_cfg, geometry_only=True)
    if args.threads != 1:
        study_cfg = replace(study_cfg, threads=args.threads)
    report = run_rate_study(study_cfg)
    print(f"rate study written to {args.out} ({len(report['records'])} cells)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowrec",
        description="flow geometry, velocity and wall shear stress reconstruction",
    )
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for studies")
    parser.add_argument("--seed", type=int, default=None, help="override the noise seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate synthetic voxel data")
    p.add_argument("--out", default="phantom-out")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("ingest", help="normalize raw magnitude and phase data")
    p.add_argument("--magnitude", required=True)
    p.add_argument("--phase", required=True)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--out", default="ingest-out")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("recon-geometry", help="identify the flow boundary")
    p.add_argument("--input", required=True, help="magnitude grid file")
    p.add_argument("--delta", default="auto", help="noise level or 'auto'")
    p.add_argument("--alpha", default="disc", help="regularization weight or 'disc'")
    p.add_argument("--n-fourier", type=int, default=None)
    p.add_argument("--gamma", default="auto", help="indicator smoothing width or 'auto'")
    p.add_argument("--out", default="geometry.json")
    p.set_defaults(func=_cmd_recon_geometry)

    p = sub.add_parser("recon-velocity", help="reconstruct the velocity field")
    p.add_argument("--grid", required=True, help="velocity grid file")
    p.add_argument("--geometry", required=True, help="geometry result file")
    p.add_argument("--beta", default="disc", help="regularization weight or 'disc'")
    p.add_argument("--delta-u", default="auto", help="data error level or 'auto'")
    p.add_argument("--cutoff", type=float, default=None, help="eigenvalue cutoff")
    p.add_argument("--out", default="velocity_recon.json")
    p.set_defaults(func=_cmd_recon_velocity)

    p = sub.add_parser("wss", help="evaluate the wall shear stress")
    p.add_argument("--geometry", required=True)
    p.add_argument("--velocity", required=True)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--lowpass", type=int, default=8)
    p.add_argument("--viscosity", type=float, default=1.0)
    p.add_argument("--out", default="tau.csv")
    p.set_defaults(func=_cmd_wss)

    p = sub.add_parser("pipeline", help="run phantom, geometry, velocity and wss stages")
    p.add_argument("--out", default="pipeline-out")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("rate-study", help="run the convergence rate study")
    p.add_argument("--out", default="study-out")
    p.add_argument("--geometry-only", action="store_true")
    p.set_defaults(func=_cmd_rate_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (GridFormatError, FileNotFoundError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except StageError as exc:
        cause = exc.__cause__
        if isinstance(cause, (OSError, GridFormatError, FileNotFoundError)):
            print(f"i/o error: {exc}", file=sys.stderr)
            return 4
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FlowrecError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
