"""Sampled transverse fields for the OAM and petal modes, plus hologram export.

Fields live on a centred Cartesian grid.  The radial profile is a ring
Gaussian at a fixed radius, so every azimuthal order shares the same
envelope and the mode algebra is purely angular.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import DomainError, ResolutionError

RING_RADIUS_MM = 1.5
RING_WIDTH_MM = 0.1
SAMPLES_PER_CYCLE = 8


@dataclass(frozen=True)
class GridSpec:
    """Square-pixel sampling window of half-width ``radius_mm``."""

    width: int = 1024
    height: int = 1024
    radius_mm: float = 2.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ResolutionError(f"grid must be at least 2x2 px, got {self.width}x{self.height}")
        if self.radius_mm <= 0:
            raise DomainError("radius_mm must be positive")

    @property
    def pitch_mm(self) -> float:
        return 2 * self.radius_mm / max(self.width, self.height)

    @property
    def cell_area(self) -> float:
        return self.pitch_mm ** 2

    def axes(self):
        dx = self.pitch_mm
        x = (np.arange(self.width) - (self.width - 1) / 2) * dx
        y = (np.arange(self.height) - (self.height - 1) / 2) * dx
        return x, y

    def polar(self):
        x, y = self.axes()
        xx, yy = np.meshgrid(x, y)
        return np.hypot(xx, yy), np.arctan2(yy, xx)

    def max_ell(self, ring_radius_mm: float = RING_RADIUS_MM) -> int:
        """Largest |ell| whose 2|ell| petal cycles get SAMPLES_PER_CYCLE px each on the ring."""
        samples_on_ring = 2 * math.pi * ring_radius_mm / self.pitch_mm
        return int(samples_on_ring // (2 * SAMPLES_PER_CYCLE))


DEFAULT_GRID = GridSpec()


@dataclass(frozen=True, eq=False)
class SampledField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)
    ell_content: int | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.shape != (self.grid.height, self.grid.width):
            raise DomainError(f"values shape {vals.shape} does not match grid")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.values) ** 2)) * self.grid.cell_area)

    def normalized(self) -> "SampledField":
        return SampledField(self.grid, self.values / self.norm, self.ell_content)

    def __add__(self, other: "SampledField") -> "SampledField":
        if other.grid != self.grid:
            raise DomainError("cannot add fields on different grids")
        ell = self.ell_content if self.ell_content == other.ell_content else None
        return SampledField(self.grid, self.values + other.values, ell)

    def __mul__(self, scalar) -> "SampledField":
        return SampledField(self.grid, self.values * scalar, self.ell_content)

    __rmul__ = __mul__


def overlap(a: SampledField, b: SampledField) -> complex:
    """Discrete inner product <a|b> (sum times cell area)."""
    if a.grid != b.grid:
        raise DomainError("fields are sampled on different grids")
    return complex(np.sum(np.conj(a.values) * b.values)) * a.grid.cell_area


def normalized_overlap(a: SampledField, b: SampledField) -> complex:
    return overlap(a, b) / (a.norm * b.norm)


def _ring_envelope(grid: GridSpec):
    r, theta = grid.polar()
    env = np.exp(-((r - RING_RADIUS_MM) ** 2) / (2 * RING_WIDTH_MM ** 2))
    return env, theta


def _check_resolvable(ell: int, grid: GridSpec):
    if int(ell) != ell or ell == 0:
        raise DomainError(f"ell must be a non-zero integer, got {ell!r}")
    limit = grid.max_ell()
    if abs(ell) > limit:
        samples = 2 * abs(ell) * SAMPLES_PER_CYCLE
        need = math.ceil(samples * 2 * grid.radius_mm / (2 * math.pi * RING_RADIUS_MM))
        raise ResolutionError(
            f"|ell|={abs(ell)} is under-resolved on a {grid.width}x{grid.height} grid "
            f"(max {limit}); needs at least {need} px across the aperture")


def synth_oam(ell: int, grid: GridSpec = DEFAULT_GRID) -> SampledField:
    """Normalized ring field with azimuthal phase e^{i ell theta}."""
    _check_resolvable(ell, grid)
    env, theta = _ring_envelope(grid)
    return SampledField(grid, env * np.exp(1j * ell * theta), int(ell)).normalized()


class Petal(enum.Enum):
    M1 = "M1"
    M2 = "M2"


def synth_petal(ell: int, which: Petal | str, grid: GridSpec = DEFAULT_GRID) -> SampledField:
    """Petal field (e^{i ell theta} +/- e^{-i ell theta}) on the ring, normalized."""
    _check_resolvable(ell, grid)
    which = Petal(which)
    env, theta = _ring_envelope(grid)
    sign = 1 if which is Petal.M1 else -1
    vals = env * (np.exp(1j * ell * theta) + sign * np.exp(-1j * ell * theta))
    return SampledField(grid, vals, int(ell)).normalized()


def rotate_field(f: SampledField, phi: float, order: int = 1) -> SampledField:
    """Resample ``f`` on a frame rotated by ``phi`` radians (bilinear by default).

    The new value at polar angle theta is the old value at theta + phi, so a
    pure e^{i ell theta} field picks up the factor e^{i ell phi}, matching the
    phase convention of :func:`twistnoon.fock_core.rotation_unitary`.  The
    operation is linear; interpolation smoothing slightly reduces the norm.
    """
    if phi == 0:
        return SampledField(f.grid, f.values, f.ell_content)
    grid = f.grid
    x, y = grid.axes()
    xx, yy = np.meshgrid(x, y)
    c, s = math.cos(phi), math.sin(phi)
    xs = c * xx - s * yy
    ys = s * xx + c * yy
    dx = grid.pitch_mm
    coords = [ys / dx + (grid.height - 1) / 2, xs / dx + (grid.width - 1) / 2]
    re = map_coordinates(f.values.real, coords, order=order, mode="constant", cval=0.0)
    im = map_coordinates(f.values.imag, coords, order=order, mode="constant", cval=0.0)
    return SampledField(grid, re + 1j * im, f.ell_content)


def mub_overlap_matrix(ell: int, grid: GridSpec = DEFAULT_GRID) -> np.ndarray:
    """O[i, j] = <b_i|p_j> with b = (+ell, -ell) and p = (M1, M2)."""
    oam = [synth_oam(ell, grid), synth_oam(-ell, grid)]
    petals = [synth_petal(ell, Petal.M1, grid), synth_petal(ell, Petal.M2, grid)]
    return np.array([[overlap(b, p) for p in petals] for b in oam])


# -- holograms ----------------------------------------------------------------

class Masking(enum.Enum):
    NONE = "none"
    CARVE = "carve"


@dataclass(frozen=True)
class HologramSpec:
    grating_period: float = 8.0
    phase_depth: float = 2 * math.pi
    amplitude_masking: Masking = Masking.NONE
    resolution: tuple[int, int] | None = None
    carve_threshold: float = 0.5

    def __post_init__(self):
        if self.grating_period < 2:
            raise DomainError(f"grating_period must be >= 2 px, got {self.grating_period}")
        if not 0 < self.phase_depth <= 2 * math.pi:
            raise DomainError(f"phase_depth must lie in (0, 2pi], got {self.phase_depth}")
        if not 0 < self.carve_threshold <= 1:
            raise DomainError("carve_threshold must lie in (0, 1]")
        object.__setattr__(self, "amplitude_masking", Masking(self.amplitude_masking))


def hologram_levels(f: SampledField, spec: HologramSpec) -> np.ndarray:
    """8-bit phase levels: arg(field) plus a horizontal blazed grating, wrapped to 2pi.

    With ``carve`` masking, pixels where the field amplitude falls below
    ``carve_threshold`` of its maximum get no grating (level 0) so their light
    stays in the undiffracted order.
    """
    if f.ell_content == 0:
        raise DomainError("ell = 0 fields cannot be exported")
    if spec.resolution is not None and tuple(spec.resolution) != (f.grid.width, f.grid.height):
        raise DomainError(f"hologram resolution {spec.resolution} does not match field grid "
                          f"{(f.grid.width, f.grid.height)}")
    cols = np.arange(f.grid.width)
    grating = 2 * math.pi * cols / spec.grating_period
    phase = np.mod(np.angle(f.values) + grating[None, :], 2 * math.pi)
    levels = np.floor(phase / (2 * math.pi) * (spec.phase_depth / (2 * math.pi)) * 256)
    levels = np.clip(levels, 0, 255).astype(np.uint8)
    if spec.amplitude_masking is Masking.CARVE:
        amp = np.abs(f.values)
        levels[amp < spec.carve_threshold * amp.max()] = 0
    return levels


def write_pgm(levels: np.ndarray, path) -> Path:
    path = Path(path)
    header = f"P5\n{levels.shape[1]} {levels.shape[0]}\n255\n".encode("ascii")
    try:
        path.write_bytes(header + np.ascontiguousarray(levels, dtype=np.uint8).tobytes())
    except OSError as exc:
        raise OSError(f"could not write hologram to {path}: {exc}") from exc
    return path


def export_hologram(f: SampledField, spec: HologramSpec, path) -> Path:
    """Write the hologram as PGM, or PNG when ``path`` ends in .png (needs Pillow)."""
    levels = hologram_levels(f, spec)
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        try:
            Image.fromarray(levels).save(path, format="PNG", optimize=False)
        except OSError as exc:
            raise OSError(f"could not write hologram to {path}: {exc}") from exc
        return path
    return write_pgm(levels, path)


def write_field_csv(f: SampledField, path, stride: int = 1) -> Path:
    """Dump ``x, y, re, im`` rows (mm) for inspection; ``stride`` subsamples the grid."""
    path = Path(path)
    x, y = f.grid.axes()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_mm", "y_mm", "re", "im"])
        for i in range(0, f.grid.height, stride):
            for j in range(0, f.grid.width, stride):
                v = f.values[i, j]
                w.writerow([repr(float(x[j])), repr(float(y[i])), repr(float(v.real)), repr(float(v.imag))])
    return path
