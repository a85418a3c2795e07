"""Core tensors of the reconstruction toolkit and their invariants.

Every value is an immutable wrapper around a read-only ``numpy`` array in
complex128. Index order is fixed as (coil, frame, ky/y, kx/x), row-major.
Construction validates the invariants, so a value that exists is valid.
"""
from dataclasses import dataclass, field

import numpy as np

from ktclair.errors import (
    EmptyDimensionError,
    MaskError,
    NonFiniteError,
    NormalizationError,
    ShapeMismatchError,
)

NORMALIZATION_TOL = 1e-9


def _frozen(data, dtype) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype).view()
    arr.setflags(write=False)
    return arr


def _check_rank(name: str, arr: np.ndarray, ndim: int, axes: str) -> None:
    if arr.ndim != ndim:
        raise ShapeMismatchError(f"{name} must be indexed {axes}, got shape {arr.shape}")


def _check_extents(name: str, shape: tuple[int, ...], minimum: tuple[int, ...], axes: str) -> None:
    for extent, low, axis in zip(shape, minimum, axes.strip("()").split(", ")):
        if extent < low:
            raise EmptyDimensionError(f"{name} axis {axis} has extent {extent} < {low}")


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} holds NaN or Inf entries")


@dataclass(frozen=True, eq=False)
class ImageSeries:
    """Complex dynamic image m indexed (t, y, x)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.complex128))
        validate(self)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class TemporalSpectrum:
    """Temporal Fourier transform rho = F_t m, indexed (f, y, x)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.complex128))
        validate(self)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class KSpaceSeries:
    """Multi-coil k-space indexed (c, t, ky, kx)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.complex128))
        validate(self)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def n_coils(self) -> int:
        return self.data.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]


@dataclass(frozen=True, eq=False)
class SensitivityMaps:
    """Time-invariant coil profiles S indexed (c, y, x), normalized per pixel."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.complex128))
        validate(self)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_coils(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Binary ky-line pattern indexed (t, ky) with an inclusive ACS interval."""

    lines: np.ndarray
    acs_range: tuple[int, int] | None = None
    acceleration: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lines", _frozen(self.lines, np.bool_))
        if self.acs_range is not None:
            object.__setattr__(self, "acs_range", (int(self.acs_range[0]), int(self.acs_range[1])))
        validate(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.lines.shape

    @property
    def acs_lines(self) -> int:
        if self.acs_range is None:
            return 0
        return self.acs_range[1] - self.acs_range[0] + 1

    def kspace_weights(self) -> np.ndarray:
        """Float mask broadcastable against (c, t, ky, kx) arrays."""
        return self.lines.astype(np.float64)[None, :, :, None]


@dataclass(frozen=True, eq=False)
class KtKernel:
    """Calibrated k-t interpolation weights indexed (c_out, c_in, dt, dky, dkx)."""

    weights: np.ndarray
    tikhonov: float = 0.0
    extents: tuple[int, int, int] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights, np.complex128))
        object.__setattr__(self, "extents", tuple(int(e) for e in self.weights.shape[2:]))
        validate(self)

    @property
    def n_coils(self) -> int:
        return self.weights.shape[0]

    @property
    def half_extents(self) -> tuple[int, int, int]:
        return tuple(e // 2 for e in self.extents)


def _validate_image(name: str, arr: np.ndarray) -> None:
    _check_rank(name, arr, 3, "(t, y, x)")
    _check_extents(name, arr.shape, (1, 2, 2), "(t, y, x)")
    _check_finite(name, arr)


def _validate_kspace(arr: np.ndarray) -> None:
    _check_rank("KSpaceSeries", arr, 4, "(c, t, ky, kx)")
    _check_extents("KSpaceSeries", arr.shape, (1, 1, 2, 2), "(c, t, ky, kx)")
    _check_finite("KSpaceSeries", arr)


def _validate_maps(arr: np.ndarray) -> None:
    _check_rank("SensitivityMaps", arr, 3, "(c, y, x)")
    _check_extents("SensitivityMaps", arr.shape, (1, 2, 2), "(c, y, x)")
    _check_finite("SensitivityMaps", arr)
    energy = np.sum(np.abs(arr) ** 2, axis=0)
    bad = (energy != 0) & (np.abs(energy - 1.0) > NORMALIZATION_TOL)
    if np.any(bad):
        y, x = np.argwhere(bad)[0]
        raise NormalizationError(
            f"sum of |S_c|^2 is {energy[y, x]:.6g} at pixel ({y}, {x}), expected 0 or 1"
        )


def _validate_mask(mask: SamplingMask) -> None:
    lines = mask.lines
    _check_rank("SamplingMask", lines, 2, "(t, ky)")
    _check_extents("SamplingMask", lines.shape, (1, 2), "(t, ky)")
    if mask.acceleration < 1:
        raise MaskError(f"acceleration must be >= 1, got {mask.acceleration}")
    if not np.all(lines.any(axis=1)):
        frame = int(np.argmin(lines.any(axis=1)))
        raise MaskError(f"frame {frame} has no sampled line")
    if mask.acs_range is not None:
        lo, hi = mask.acs_range
        if not 0 <= lo <= hi < lines.shape[1]:
            raise MaskError(f"acs_range {mask.acs_range} outside [0, {lines.shape[1] - 1}]")
        if not np.all(lines[:, lo:hi + 1]):
            raise MaskError(f"ACS lines {lo}..{hi} are not sampled in every frame")


def _validate_kernel(kernel: KtKernel) -> None:
    w = kernel.weights
    _check_rank("KtKernel", w, 5, "(c_out, c_in, dt, dky, dkx)")
    _check_extents("KtKernel", w.shape, (1, 1, 1, 1, 1), "(c_out, c_in, dt, dky, dkx)")
    if w.shape[0] != w.shape[1]:
        raise ShapeMismatchError(f"kernel coil axes differ: {w.shape[0]} != {w.shape[1]}")
    if any(e % 2 == 0 for e in w.shape[2:]):
        raise ShapeMismatchError(f"kernel extents must be odd, got {w.shape[2:]}")
    _check_finite("KtKernel", w)
    ct, cy, cx = (e // 2 for e in w.shape[2:])
    centers = w[np.arange(w.shape[0]), np.arange(w.shape[0]), ct, cy, cx]
    if np.any(centers != 0):
        raise ShapeMismatchError("kernel self-center taps must be exactly zero")


def validate(value) -> None:
    """Check every invariant of a shape-bearing value; raise the violated rule."""
    match value:
        case ImageSeries(data=arr):
            _validate_image("ImageSeries", arr)
        case TemporalSpectrum(data=arr):
            _validate_image("TemporalSpectrum", arr)
        case KSpaceSeries(data=arr):
            _validate_kspace(arr)
        case SensitivityMaps(data=arr):
            _validate_maps(arr)
        case SamplingMask():
            _validate_mask(value)
        case KtKernel():
            _validate_kernel(value)
        case _:
            raise TypeError(f"no invariants known for {type(value).__name__}")


def check_same_shape(name: str, expected: tuple[int, ...], actual: tuple[int, ...]) -> None:
    if tuple(expected) != tuple(actual):
        raise ShapeMismatchError(f"{name}: expected {tuple(expected)}, got {tuple(actual)}")
