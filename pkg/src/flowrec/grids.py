"""Voxel grid data model and its text file format.

A grid file is one JSON header line followed by CSV rows of values,
one row per x-index. Complex grids store re,im pairs and carry the
velocity-encoding value in the header.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridFormatError

FOV_HALF = 1.0  # field of view is the square (-1, 1)^2
_FOV_SLACK = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Uniform voxel lattice: voxel (ix, iy) is the square
    [ox + ix*h, ox + (ix+1)*h] x [oy + iy*h, oy + (iy+1)*h]."""

    nx: int
    ny: int
    h: float
    origin: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if self.nx < 1 or self.ny < 1 or self.h <= 0.0:
            raise ValueError("grid needs nx, ny >= 1 and h > 0")
        ox, oy = self.origin
        hi_x = ox + self.nx * self.h
        hi_y = oy + self.ny * self.h
        if (
            ox < -FOV_HALF - _FOV_SLACK
            or oy < -FOV_HALF - _FOV_SLACK
            or hi_x > FOV_HALF + _FOV_SLACK
            or hi_y > FOV_HALF + _FOV_SLACK
        ):
            raise ValueError("grid does not fit inside the field of view (-1,1)^2")

    @classmethod
    def fov(cls, n: int) -> "GridSpec":
        """Full field-of-view grid with n x n voxels."""
        return cls(n, n, 2.0 / n, (-1.0, -1.0))

    @property
    def voxel_area(self) -> float:
        return self.h * self.h

    def centers_x(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    def centers_y(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    def center_mesh(self):
        return np.meshgrid(self.centers_x(), self.centers_y(), indexing="ij")


@dataclass(frozen=True)
class VoxelGrid:
    """Real-valued voxel means on a GridSpec; values indexed [ix, iy]."""

    spec: GridSpec
    values: np.ndarray
    kind: str = "magnitude"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.spec.nx, self.spec.ny):
            raise ValueError(
                f"values shape {vals.shape} does not match grid {self.spec.nx}x{self.spec.ny}"
            )
        object.__setattr__(self, "values", vals)

    def with_values(self, values, kind=None) -> "VoxelGrid":
        return VoxelGrid(self.spec, values, kind or self.kind)

    def l2_norm(self) -> float:
        """Discrete L2(D) norm with voxel-area weighting."""
        return math.sqrt(self.spec.voxel_area * float(np.sum(self.values**2)))


@dataclass(frozen=True)
class PhaseContrastData:
    """Complex voxel signal with its velocity-encoding parameter."""

    spec: GridSpec
    values: np.ndarray
    venc: float

    def __post_init__(self):
        if self.venc <= 0.0:
            raise ValueError("venc must be positive")
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.spec.nx, self.spec.ny):
            raise ValueError("complex values shape does not match grid")
        object.__setattr__(self, "values", vals)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_grid(path, grid) -> None:
    """Write a VoxelGrid or PhaseContrastData in the header+CSV format."""
    if isinstance(grid, PhaseContrastData):
        header = {
            "nx": grid.spec.nx,
            "ny": grid.spec.ny,
            "h": grid.spec.h,
            "origin": list(grid.spec.origin),
            "kind": "complex",
            "venc": grid.venc,
        }
        rows = np.empty((grid.spec.nx, 2 * grid.spec.ny))
        rows[:, 0::2] = grid.values.real
        rows[:, 1::2] = grid.values.imag
    else:
        header = {
            "nx": grid.spec.nx,
            "ny": grid.spec.ny,
            "h": grid.spec.h,
            "origin": list(grid.spec.origin),
            "kind": grid.kind,
        }
        rows = grid.values
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True))
        fh.write("\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")


def read_grid(path):
    """Read a grid file; returns VoxelGrid or PhaseContrastData per its kind."""
    with open(path) as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise GridFormatError(f"{path}: bad header line: {exc}") from exc
        try:
            spec = GridSpec(header["nx"], header["ny"], header["h"], tuple(header["origin"]))
            kind = header["kind"]
        except (KeyError, ValueError) as exc:
            raise GridFormatError(f"{path}: {exc}") from exc
        try:
            rows = np.array(
                [[float(v) for v in line.split(",")] for line in fh if line.strip()]
            )
        except ValueError as exc:
            raise GridFormatError(f"{path}: bad data row: {exc}") from exc
    if kind == "complex":
        if "venc" not in header:
            raise GridFormatError(f"{path}: complex grid misses venc")
        if rows.shape != (spec.nx, 2 * spec.ny):
            raise GridFormatError(f"{path}: expected {spec.nx} rows of {2 * spec.ny} values")
        return PhaseContrastData(spec, rows[:, 0::2] + 1j * rows[:, 1::2], header["venc"])
    if rows.shape != (spec.nx, spec.ny):
        raise GridFormatError(f"{path}: expected {spec.nx} rows of {spec.ny} values")
    return VoxelGrid(spec, rows, kind)
