"""End-to-end reconstruction stages and their file artifacts.

A run decomposes into phantom generation (or ingestion of measured data),
geometry identification, velocity reconstruction and wall shear stress
evaluation. Stages communicate exclusively through files so each can be
re-run in isolation.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StageError
from .geometry import DiskTransform, GeometryBounds, RadiusFunction, radius_distance
from .geo_ident import (
    GeoIdentConfig,
    GeoIdentResult,
    choose_alpha_discrepancy,
    gauss_newton_minimize,
)
from .grids import GridSpec, VoxelGrid, read_grid, write_grid
from .phantom import (
    NoiseSpec,
    add_magnitude_noise,
    estimate_noise_level,
    normalize_magnitude,
    rasterize_characteristic,
    retrieve_velocity,
    synth_phase_contrast,
)
from .velocity import (
    DiskEigenBasis,
    VelocityCoefficients,
    VelocityReconConfig,
    assemble_design_matrix,
    choose_beta_discrepancy,
    project_radial_field,
    reconstruct_velocity,
)
from .wss import WssProfile, lowpass_filter, mean_wss, wall_shear_stress, wss_error

COS, SIN = 0, 1


# ---------------------------------------------------------------------------
# ground truth description


@dataclass(frozen=True)
class TruthSpec:
    """Phantom ground truth: boundary radius, transform bounds and a named
    velocity profile."""

    radius: RadiusFunction
    bounds: GeometryBounds
    profile: dict  # {"kind": ..., ...}
    venc: float = 2.5

    def __post_init__(self):
        kind = self.profile.get("kind")
        if kind not in ("poiseuille", "reference-parabola", "manufactured"):
            raise ConfigError(f"unknown velocity profile kind: {kind!r}")
        if kind == "poiseuille" and np.any(np.abs(self.radius.coeff_vector()[1:]) > 0):
            raise ConfigError("the poiseuille profile requires a circular truth radius")
        if kind == "manufactured" and len(self.profile.get("modes", [])) != len(
            self.profile.get("coefficients", [])
        ):
            raise ConfigError("manufactured profile needs matching modes and coefficients")

    def to_dict(self) -> dict:
        return {
            "radius": self.radius.to_dict(),
            "bounds": self.bounds.to_dict(),
            "velocity": self.profile,
            "venc": self.venc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TruthSpec":
        return cls(
            RadiusFunction.from_dict(d["radius"]),
            GeometryBounds.from_dict(d["bounds"]),
            dict(d["velocity"]),
            d.get("venc", 2.5),
        )

    # -- derived quantities ------------------------------------------------

    def transform(self) -> DiskTransform:
        return DiskTransform(self.radius, self.bounds)

    def u_field(self):
        """Physical-domain velocity as a callable on (n, 2) point arrays."""
        kind = self.profile["kind"]
        if kind == "poiseuille":
            u_max, r_pipe = self.profile.get("u_max", 1.0), self.radius.b0

            def u(pts):
                rho = np.hypot(pts[:, 0], pts[:, 1])
                return u_max * (1.0 - (rho / r_pipe) ** 2)

            return u
        transform = self.transform()
        if kind == "reference-parabola":
            u_max = self.profile.get("u_max", 1.0)

            def u(pts):
                rho = np.hypot(pts[:, 0], pts[:, 1])
                phi = np.arctan2(pts[:, 1], pts[:, 0])
                r_ref = transform.inverse_radius(rho, phi)
                return u_max * (1.0 - r_ref**2)

            return u
        basis, c = self._manufactured_coeffs()
        vc = VelocityCoefficients(basis, c)

        def u(pts):
            return vc.eval(transform.inverse(pts))

        return u

    def _manufactured_coeffs(self):
        modes = [tuple(m) for m in self.profile["modes"]]
        lam_max = 0.0
        from .bessel import bessel_zero

        for m, n, _par in modes:
            lam_max = max(lam_max, bessel_zero(m, n) ** 2)
        basis = DiskEigenBasis(lam_max + 1e-9)
        c = np.zeros(len(basis))
        tuples = basis.mode_tuples()
        for (m, n, par), val in zip(modes, self.profile["coefficients"]):
            c[tuples.index((m, n, par))] = val
        return basis, c

    def max_speed(self) -> float:
        u_max = self.profile.get("u_max", 1.0)
        if self.profile["kind"] == "manufactured":
            basis, c = self._manufactured_coeffs()
            vc = VelocityCoefficients(basis, c)
            phi = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
            r = np.linspace(0.0, 1.0, 64)
            rr, pp = np.meshgrid(r, phi, indexing="ij")
            pts = np.stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()], axis=-1)
            return float(np.max(np.abs(vc.eval(pts))))
        return u_max

    def coefficients_in(self, basis: DiskEigenBasis) -> np.ndarray:
        """Reference-domain truth velocity expanded in a reconstruction basis."""
        kind = self.profile["kind"]
        if kind == "manufactured":
            own_basis, own_c = self._manufactured_coeffs()
            c = np.zeros(len(basis))
            tuples = basis.mode_tuples()
            for j, t in enumerate(own_basis.mode_tuples()):
                if own_c[j] != 0.0:
                    if t not in tuples:
                        raise ConfigError(
                            f"truth mode {t} exceeds the reconstruction cutoff"
                        )
                    c[tuples.index(t)] = own_c[j]
            return c
        transform = self.transform()
        u_max = self.profile.get("u_max", 1.0)
        if kind == "poiseuille":
            r_pipe = self.radius.b0

            def v_radial(r):
                g = transform.profile(r, np.zeros_like(r))
                return u_max * (1.0 - (g / r_pipe) ** 2)

        else:

            def v_radial(r):
                return u_max * (1.0 - r**2)

        return project_radial_field(basis, v_radial)

    def tau_profile(self, n_samples: int) -> WssProfile:
        """Exact wall shear stress of the truth."""
        kind = self.profile["kind"]
        u_max = self.profile.get("u_max", 1.0)
        if kind == "poiseuille":
            return WssProfile.from_values(
                np.full(n_samples, 2.0 * u_max / self.radius.b0)
            )
        if kind == "reference-parabola":
            # grad v on the reference boundary is -2 u_max e_r, so the
            # stress has the closed form 2 u_max R / (J_rr sqrt(R^2 + R'^2))
            phi = np.arange(n_samples) * (2.0 * math.pi / n_samples)
            r = self.radius(phi)
            dr = self.radius.deriv(phi)
            r0, eta = self.bounds.r0, self.bounds.eta
            jrr = r0 + eta * (r - r0)
            vals = 2.0 * u_max * r / (jrr * np.sqrt(r * r + dr * dr))
            return WssProfile.from_values(vals)
        basis, c = self._manufactured_coeffs()
        return wall_shear_stress(
            self.radius, VelocityCoefficients(basis, c), self.bounds, n_samples
        )


# ---------------------------------------------------------------------------
# phantom stage


@dataclass
class PhantomData:
    magnitude: VoxelGrid
    phase: "object"
    velocity: VoxelGrid
    delta: float
    eps: float
    clean_magnitude: VoxelGrid = None
    clean_velocity: VoxelGrid = None
    fractions: np.ndarray = None


def make_phantom(
    truth: TruthSpec, spec: GridSpec, noise: NoiseSpec, subsamples: int = 16
) -> PhantomData:
    """Generate magnitude, phase-contrast and retrieved-velocity grids with
    the realized noise norms delta (magnitude) and eps (velocity)."""
    clean_m = rasterize_characteristic(truth.radius, spec, subsamples)
    m_noisy, delta = add_magnitude_noise(clean_m, noise)
    u = truth.u_field()
    pc = synth_phase_contrast(u, truth.radius, spec, truth.venc, noise, subsamples)
    pc_clean = synth_phase_contrast(
        u, truth.radius, spec, truth.venc, NoiseSpec(0.0, 0.0, noise.seed), subsamples
    )
    u_noisy = retrieve_velocity(pc)
    u_clean = retrieve_velocity(pc_clean)
    frac = clean_m.values.reshape(-1)
    gap = (u_noisy.values - u_clean.values).reshape(-1)
    eps = math.sqrt(spec.voxel_area * float(np.sum(frac * gap * gap)))
    return PhantomData(m_noisy, pc, u_noisy, delta, eps, clean_m, u_clean, frac)


def write_phantom(data: PhantomData, truth: TruthSpec, noise: NoiseSpec, outdir: str):
    os.makedirs(outdir, exist_ok=True)
    write_grid(os.path.join(outdir, "magnitude.grid"), data.magnitude)
    write_grid(os.path.join(outdir, "phase.grid"), data.phase)
    write_grid(os.path.join(outdir, "velocity.grid"), data.velocity)
    with open(os.path.join(outdir, "truth.json"), "w") as fh:
        json.dump(truth.to_dict(), fh, sort_keys=True, indent=1)
    with open(os.path.join(outdir, "noise.json"), "w") as fh:
        json.dump(
            {
                "delta": data.delta,
                "eps": data.eps,
                "seed": noise.seed,
                "sigma_complex": noise.sigma_complex,
                "sigma_mag": noise.sigma_mag,
            },
            fh,
            sort_keys=True,
            indent=1,
        )


# ---------------------------------------------------------------------------
# reconstruction stages (file-driven)


def stage_geometry(
    m_grid: VoxelGrid,
    geo_cfg: GeoIdentConfig,
    alpha,
    delta: float | None,
    center=None,
) -> GeoIdentResult:
    """alpha is either a positive number or "disc" for the discrepancy rule."""
    if alpha == "disc":
        if delta is None or delta <= 0.0:
            raise ConfigError("discrepancy mode needs a positive noise level delta")
        return choose_alpha_discrepancy(m_grid, delta, geo_cfg, center=center)
    return gauss_newton_minimize(m_grid, float(alpha), geo_cfg, center=center)


def geometry_result_to_file(result: GeoIdentResult, bounds: GeometryBounds, path: str):
    payload = result.to_dict()
    payload["bounds"] = bounds.to_dict()
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)


def geometry_result_from_file(path: str):
    with open(path) as fh:
        d = json.load(fh)
    radius = RadiusFunction.from_dict(d["radius"])
    bounds = GeometryBounds.from_dict(d["bounds"])
    center = tuple(d.get("center", (0.0, 0.0)))
    return radius, bounds, center, d


def stage_velocity(
    u_grid: VoxelGrid,
    radius: RadiusFunction,
    bounds: GeometryBounds,
    vel_cfg: VelocityReconConfig,
    beta,
    delta_u: float | None,
    center=(0.0, 0.0),
    design=None,
):
    transform = DiskTransform(radius, bounds)
    if beta == "disc":
        if delta_u is None or delta_u <= 0.0:
            raise ConfigError("discrepancy mode needs a positive data error delta_u")
        return choose_beta_discrepancy(u_grid, transform, delta_u, vel_cfg, center, design)
    return reconstruct_velocity(u_grid, transform, float(beta), vel_cfg, center, design)


def velocity_result_to_file(coeffs: VelocityCoefficients, info, path: str):
    basis = coeffs.basis
    payload = {
        "modes": [
            {"m": int(m), "n": int(n), "parity": "cos" if p == COS else "sin", "lambda": lam}
            for m, n, p, lam in zip(basis.m, basis.n, basis.parity, basis.lam)
        ],
        "coefficients": list(coeffs.c),
        "beta": info.beta,
        "residual": info.residual,
        "cutoff": basis.cutoff,
        "discrepancy_unreachable": info.discrepancy_unreachable,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)


def velocity_result_from_file(path: str):
    with open(path) as fh:
        d = json.load(fh)
    basis = DiskEigenBasis(d["cutoff"])
    expected = [
        (m["m"], m["n"], m["parity"]) for m in d["modes"]
    ]
    if expected != [(m, n, p) for m, n, p in basis.mode_tuples()]:
        raise ConfigError(f"{path}: mode list does not match the cutoff basis")
    return VelocityCoefficients(basis, np.asarray(d["coefficients"])), d


def write_wss_csv(path: str, tau: WssProfile, tau_filtered: WssProfile):
    with open(path, "w") as fh:
        fh.write("phi,tau_raw,tau_filtered\n")
        for p, raw, flt in zip(tau.angles, tau.values, tau_filtered.values):
            fh.write(f"{p!r},{raw!r},{flt!r}\n")


def read_wss_csv(path: str):
    raw, flt = [], []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != ["phi", "tau_raw", "tau_filtered"]:
            raise ConfigError(f"{path}: unexpected wss csv header")
        for line in fh:
            _, r, f = line.strip().split(",")
            raw.append(float(r))
            flt.append(float(f))
    return WssProfile.from_values(np.array(raw)), WssProfile.from_values(np.array(flt))


# ---------------------------------------------------------------------------
# full pipeline


DEFAULT_PIPELINE = {
    "grid_n": 64,
    "noise": {"sigma_mag": 0.0, "sigma_complex": 0.0, "seed": 0},
    "subsamples": 16,
    "geometry": {
        "n_fourier": 6,
        "alpha": "disc",
        "quad_order": 4,
        "gamma": None,
        "recenter": False,
        "alpha0": 0.1,
    },
    "velocity": {"cutoff": None, "beta": "disc", "beta0": 1e-2, "subsamples": 16},
    "wss": {"samples": 256, "lowpass": 8},
}


def merge_config(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_config(out[k], v)
        else:
            out[k] = v
    return out


def run_pipeline(truth: TruthSpec, config: dict, outdir: str) -> dict:
    """Phantom -> geometry -> velocity -> wall shear stress, file to file.

    Returns the summary dictionary (also written to summary.json), holding
    all three stage residuals plus truth-relative errors.
    """
    cfg = merge_config(DEFAULT_PIPELINE, config)
    os.makedirs(outdir, exist_ok=True)

    noise = NoiseSpec(**cfg["noise"])
    spec = GridSpec.fov(cfg["grid_n"])
    try:
        data = make_phantom(truth, spec, noise, cfg["subsamples"])
        write_phantom(data, truth, noise, outdir)
    except Exception as exc:
        raise StageError("phantom", str(exc)) from exc

    gcfg_in = cfg["geometry"]
    geo_cfg = GeoIdentConfig(
        bounds=truth.bounds,
        n_fourier=gcfg_in["n_fourier"],
        gamma=gcfg_in["gamma"],
        alpha0=gcfg_in["alpha0"],
        quad_order=gcfg_in["quad_order"],
        recenter=gcfg_in["recenter"],
    )
    try:
        m_grid = read_grid(os.path.join(outdir, "magnitude.grid"))
        delta = data.delta if data.delta > 0 else None
        alpha = gcfg_in["alpha"]
        if alpha == "disc" and delta is None:
            # noiseless run: fall back to a small fixed weight
            alpha = 1e-6
        geo = stage_geometry(m_grid, geo_cfg, alpha, delta)
        geometry_result_to_file(geo, truth.bounds, os.path.join(outdir, "geometry.json"))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("geometry", str(exc)) from exc

    vcfg_in = cfg["velocity"]
    vel_cfg = VelocityReconConfig(
        cutoff=vcfg_in["cutoff"],
        beta0=vcfg_in["beta0"],
        subsamples=vcfg_in["subsamples"],
    )
    try:
        u_grid = read_grid(os.path.join(outdir, "velocity.grid"))
        radius, bounds, center, _ = geometry_result_from_file(
            os.path.join(outdir, "geometry.json")
        )
        transform = DiskTransform(radius, bounds)
        from .velocity import _default_design

        design = _default_design(u_grid, transform, vel_cfg, center)
        beta = vcfg_in["beta"]
        delta_u = None
        if beta == "disc":
            c_truth = truth.coefficients_in(design.basis)
            gap = design.A @ c_truth - design.data_vector(u_grid)
            delta_u = math.sqrt(float(np.sum(design.weights * gap * gap)))
        coeffs, vinfo, design = stage_velocity(
            u_grid, radius, bounds, vel_cfg, beta, delta_u, center, design
        )
        velocity_result_to_file(coeffs, vinfo, os.path.join(outdir, "velocity_recon.json"))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("velocity", str(exc)) from exc

    wcfg = cfg["wss"]
    try:
        radius, bounds, center, geo_payload = geometry_result_from_file(
            os.path.join(outdir, "geometry.json")
        )
        coeffs, vel_payload = velocity_result_from_file(
            os.path.join(outdir, "velocity_recon.json")
        )
        tau = wall_shear_stress(radius, coeffs, bounds, wcfg["samples"])
        tau_f = lowpass_filter(tau, wcfg["lowpass"])
        write_wss_csv(os.path.join(outdir, "tau.csv"), tau, tau_f)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("wss", str(exc)) from exc

    tau_truth = truth.tau_profile(wcfg["samples"])
    c_truth = truth.coefficients_in(coeffs.basis)
    gap = VelocityCoefficients(coeffs.basis, coeffs.c - c_truth)
    truth_norm = VelocityCoefficients(coeffs.basis, c_truth)
    summary = {
        "delta": data.delta,
        "eps": data.eps,
        "geometry": {
            "alpha": geo.alpha,
            "residual": geo.residual_norm,
            "iterations": geo.iterations,
            "status": geo.status,
            "discrepancy_unreachable": geo.discrepancy_unreachable,
        },
        "velocity": {
            "beta": vinfo.beta,
            "residual": vinfo.residual,
            "delta_u": delta_u,
            "discrepancy_unreachable": vinfo.discrepancy_unreachable,
        },
        "wss": {
            "mean_raw": mean_wss(tau),
            "mean_filtered": mean_wss(tau_f),
            "residual": wss_error(tau_f, tau_truth),
        },
        "errors": {
            "radius_l2": radius_distance(radius, truth.radius, 0),
            "radius_h2": radius_distance(radius, truth.radius, 2),
            "velocity_h2_proxy": math.sqrt(gap.proxy_h2_norm_sq())
            / max(math.sqrt(truth_norm.proxy_h2_norm_sq()), 1e-300),
            "tau_l2_raw": wss_error(tau, tau_truth),
            "tau_l2_filtered": wss_error(tau_f, tau_truth),
        },
    }
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
    return summary


def ingest(raw_magnitude_path: str, raw_phase_path: str, outdir: str, bins: int = 64) -> dict:
    """Normalize raw magnitude data and retrieve velocity from raw phase data.

    The magnitude noise level is estimated on the exterior mask where the
    normalized magnitude stays below 0.1.
    """
    os.makedirs(outdir, exist_ok=True)
    raw_m = read_grid(raw_magnitude_path)
    if not isinstance(raw_m, VoxelGrid):
        raise ConfigError(f"{raw_magnitude_path}: expected a real magnitude grid")
    raw_d = read_grid(raw_phase_path)
    if isinstance(raw_d, VoxelGrid):
        raise ConfigError(f"{raw_phase_path}: expected a complex grid")
    m_norm = normalize_magnitude(raw_m, bins)
    u = retrieve_velocity(raw_d)
    delta = estimate_noise_level(m_norm, m_norm.values < 0.1)
    write_grid(os.path.join(outdir, "magnitude.grid"), m_norm)
    write_grid(os.path.join(outdir, "velocity.grid"), u)
    info = {"delta": delta, "venc": raw_d.venc}
    with open(os.path.join(outdir, "ingest.json"), "w") as fh:
        json.dump(info, fh, sort_keys=True, indent=1)
    return info
