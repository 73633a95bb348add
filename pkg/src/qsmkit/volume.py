"""Core volumetric data model, k-space grids, FFT contract, and mask morphology.

Conventions used throughout the toolkit:

* volumes are 3-D scalar fields stored as ``float64`` arrays of shape
  ``(nx, ny, nz)``; axis 0 is x.  On disk the payload is x-fastest
  (Fortran raveling of this layout) in 32-bit floats.
* the FFT pair is numpy's: forward unnormalized, inverse scaled by
  ``1/N``.  All k-space kernels are built directly in the unshifted
  layout (DC at index 0) and never fftshifted.
* fields and susceptibility maps are handled in ppm; ``unit`` tags make
  the choice explicit and mixed-unit arithmetic is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
from scipy import ndimage

UNITS = frozenset({"ppm", "hz", "radians", "dimensionless"})

# Refuse grids that cannot be addressed with 32-bit signed voxel counts.
MAX_VOXELS = 2**31 - 1


class UnitMismatchError(ValueError):
    """Arithmetic between volumes carrying different unit tags."""


class EmptyMaskError(ValueError):
    """A mask operation produced (or received) a mask with no voxels set."""


def _as_triple(values: Iterable[float]) -> tuple[float, float, float]:
    t = tuple(float(v) for v in values)
    if len(t) != 3:
        raise ValueError(f"expected 3 components, got {len(t)}")
    return t  # type: ignore[return-value]


@dataclass(frozen=True)
class Volume:
    """A 3-D scalar field with voxel geometry and a unit tag.

    ``data`` is always float64, C-contiguous, shape ``(nx, ny, nz)`` and
    marked read-only; construct modified copies via :func:`volume` or
    ``with_data``.
    """

    data: np.ndarray
    voxel_size_mm: tuple[float, float, float]
    unit: str = "dimensionless"
    b0_dir: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3-D, got shape {arr.shape}")
        if any(n < 1 for n in arr.shape):
            raise ValueError(f"invalid dims {arr.shape}: all dims must be >= 1")
        if arr.size > MAX_VOXELS:
            raise ValueError(f"dimension overflow: {arr.shape} exceeds {MAX_VOXELS} voxels")
        vs = _as_triple(self.voxel_size_mm)
        if any(not np.isfinite(d) or d <= 0 for d in vs):
            raise ValueError(f"voxel sizes must be strictly positive, got {vs}")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit tag {self.unit!r}, expected one of {sorted(UNITS)}")
        if arr is self.data and arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "voxel_size_mm", vs)
        if self.b0_dir is not None:
            object.__setattr__(self, "b0_dir", _as_triple(self.b0_dir))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def with_data(self, data: np.ndarray, unit: str | None = None) -> "Volume":
        """Copy of this volume with new voxel data (same geometry)."""
        if np.shape(data) != self.dims:
            raise ValueError(f"shape {np.shape(data)} does not match dims {self.dims}")
        return replace(self, data=np.array(data, dtype=np.float64), unit=unit or self.unit)

    def _check_compatible(self, other: "Volume") -> None:
        if self.dims != other.dims:
            raise ValueError(f"dims mismatch: {self.dims} vs {other.dims}")
        if not np.allclose(self.voxel_size_mm, other.voxel_size_mm):
            raise ValueError("voxel size mismatch")

    def __add__(self, other: "Volume") -> "Volume":
        self._check_compatible(other)
        if self.unit != other.unit:
            raise UnitMismatchError(f"cannot add {self.unit} to {other.unit}")
        return self.with_data(self.data + other.data)

    def __sub__(self, other: "Volume") -> "Volume":
        self._check_compatible(other)
        if self.unit != other.unit:
            raise UnitMismatchError(f"cannot subtract {other.unit} from {self.unit}")
        return self.with_data(self.data - other.data)

    def __mul__(self, other):
        if isinstance(other, Volume):
            self._check_compatible(other)
            # A dimensionless factor (mask, weight) preserves the other unit.
            if other.unit == "dimensionless":
                return self.with_data(self.data * other.data)
            if self.unit == "dimensionless":
                return other.with_data(self.data * other.data)
            raise UnitMismatchError(f"cannot multiply {self.unit} by {other.unit}")
        return self.with_data(self.data * float(other))

    __rmul__ = __mul__


def volume(
    data: np.ndarray,
    voxel_size_mm: Iterable[float] = (1.0, 1.0, 1.0),
    unit: str = "dimensionless",
    b0_dir: Iterable[float] | None = None,
) -> Volume:
    """Construct a :class:`Volume`, copying ``data`` to float64."""
    return Volume(
        data=np.array(data, dtype=np.float64),
        voxel_size_mm=_as_triple(voxel_size_mm),
        unit=unit,
        b0_dir=_as_triple(b0_dir) if b0_dir is not None else None,
    )


def is_binary(vol: Volume) -> bool:
    return bool(np.isin(vol.data, (0.0, 1.0)).all())


def require_mask(vol: Volume, nonempty: bool = True) -> Volume:
    """Validate that ``vol`` is a usable mask: binary, dimensionless data."""
    if vol.unit != "dimensionless":
        raise ValueError(f"mask must be dimensionless, got unit {vol.unit!r}")
    if not is_binary(vol):
        raise ValueError("mask data must be strictly binary (0/1)")
    if nonempty and not vol.data.any():
        raise EmptyMaskError("mask has no voxels set")
    return vol


def as_mask(data: np.ndarray, voxel_size_mm: Iterable[float] = (1.0, 1.0, 1.0)) -> Volume:
    """Build a binary dimensionless mask volume from truthy voxel data."""
    return volume((np.asarray(data) != 0).astype(np.float64), voxel_size_mm, "dimensionless")


def b0_direction(vec: Iterable[float]) -> np.ndarray:
    """Validate and return a unit B0 direction vector (norm 1 within 1e-9)."""
    h = np.asarray(tuple(vec), dtype=np.float64)
    if h.shape != (3,):
        raise ValueError("b0 direction must have 3 components")
    n = float(np.linalg.norm(h))
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"b0 direction must be a unit vector (norm {n:.3e})")
    return h


def normalize_b0(vec: Iterable[float]) -> np.ndarray:
    """Normalize an arbitrary nonzero vector to a valid B0 direction."""
    h = np.asarray(tuple(vec), dtype=np.float64)
    n = float(np.linalg.norm(h))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("b0 direction must be a finite nonzero vector")
    return h / n


@dataclass(frozen=True)
class KGrid:
    """Per-axis discrete frequencies in cycles/mm, unshifted FFT layout."""

    dims: tuple[int, int, int]
    voxel_size_mm: tuple[float, float, float]
    kx: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    ky: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    kz: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        axes = [
            np.fft.fftfreq(int(n)) / d
            for n, d in zip(self.dims, self.voxel_size_mm)
        ]
        object.__setattr__(self, "kx", axes[0])
        object.__setattr__(self, "ky", axes[1])
        object.__setattr__(self, "kz", axes[2])

    def broadcast(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The three axes shaped for mutual broadcasting over the grid."""
        return (
            self.kx[:, None, None],
            self.ky[None, :, None],
            self.kz[None, None, :],
        )


def kgrid(dims: Iterable[int], voxel_size_mm: Iterable[float]) -> KGrid:
    d = tuple(int(n) for n in dims)
    return KGrid(dims=d, voxel_size_mm=_as_triple(voxel_size_mm))


@dataclass(frozen=True)
class ComplexVolume:
    """A complex 3-D spectrum (or complex field) sharing Volume geometry."""

    data: np.ndarray
    voxel_size_mm: tuple[float, float, float]
    unit: str = "dimensionless"

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.complex128)
        if arr.ndim != 3:
            raise ValueError(f"complex volume data must be 3-D, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "voxel_size_mm", _as_triple(self.voxel_size_mm))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def real_volume(self) -> Volume:
        return volume(self.data.real, self.voxel_size_mm, self.unit)


def fft3_forward(vol: Volume) -> ComplexVolume:
    """Unnormalized 3-D DFT of a real volume.

    The pair convention is numpy's: ``fft3_inverse(fft3_forward(x)) == x``
    with the ``1/N`` factor applied on the inverse.  Parseval therefore
    reads ``sum|x|^2 == sum|X|^2 / N``.
    """
    if not np.isfinite(vol.data).all():
        raise ValueError("non-finite input values in FFT")
    return ComplexVolume(np.fft.fftn(vol.data), vol.voxel_size_mm, vol.unit)


def fft3_inverse(cv: ComplexVolume) -> ComplexVolume:
    """Inverse 3-D DFT (applies the ``1/N`` normalization)."""
    if not np.isfinite(cv.data).all():
        raise ValueError("non-finite input values in inverse FFT")
    return ComplexVolume(np.fft.ifftn(cv.data), cv.voxel_size_mm, cv.unit)


def _ball_structure(voxel_size_mm: tuple[float, float, float], radius_mm: float) -> np.ndarray:
    """Binary ellipsoidal structuring element covering a physical radius."""
    half = [int(np.floor(radius_mm / d)) for d in voxel_size_mm]
    grids = np.meshgrid(
        *[np.arange(-h, h + 1) * d for h, d in zip(half, voxel_size_mm)],
        indexing="ij",
    )
    dist2 = sum(g * g for g in grids)
    return dist2 <= radius_mm**2 + 1e-12


def erode_mask(mask: Volume, radius_mm: float) -> Volume:
    """Erode a binary mask by a physical spherical radius.

    A voxel survives iff the whole spherical neighborhood of
    ``radius_mm`` (in physical units) lies inside the input mask; the
    outside of the FOV counts as background.
    """
    require_mask(mask)
    if radius_mm < 0:
        raise ValueError("erosion radius must be >= 0")
    if radius_mm == 0:
        return mask
    structure = _ball_structure(mask.voxel_size_mm, float(radius_mm))
    eroded = ndimage.binary_erosion(
        mask.data.astype(bool), structure=structure, border_value=0
    )
    if not eroded.any():
        raise EmptyMaskError(
            f"erosion by {radius_mm} mm leaves an empty mask "
            f"(input had {int(mask.data.sum())} voxels)"
        )
    return volume(eroded.astype(np.float64), mask.voxel_size_mm, "dimensionless")
