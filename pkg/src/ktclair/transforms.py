"""Centered unitary Fourier transforms and the multi-coil encoding operator.

Conventions: ``fftshift(fft(ifftshift(x), norm="ortho"))`` along the
transformed axes, so the zero frequency sits at index N // 2 for every N
and each direction scales by 1/sqrt(N). The encoding operator is
A = M F_s S and its adjoint A^H = S^H F_s^H M.
"""
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.fft as sfft

from ktclair.errors import ShapeMismatchError
from ktclair.sampling import mask_array
from ktclair.tensors import (
    ImageSeries,
    KSpaceSeries,
    SamplingMask,
    SensitivityMaps,
    TemporalSpectrum,
)

Direction = Literal["forward", "inverse"]

_fft_workers = 1


def set_fft_workers(workers: int | None) -> None:
    """Set the FFT thread count; 1 is the bit-reproducible serial mode."""
    global _fft_workers
    _fft_workers = 1 if workers is None else int(workers)


def get_fft_workers() -> int:
    return _fft_workers


def fftc(x: np.ndarray, axes: tuple[int, ...], direction: Direction = "forward") -> np.ndarray:
    """Centered orthonormal DFT of ``x`` along ``axes``."""
    tmp = sfft.ifftshift(x, axes=axes)
    if direction == "forward":
        tmp = sfft.fftn(tmp, axes=axes, norm="ortho", workers=_fft_workers)
    elif direction == "inverse":
        tmp = sfft.ifftn(tmp, axes=axes, norm="ortho", workers=_fft_workers)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return sfft.fftshift(tmp, axes=axes)


def fft2c(x: np.ndarray, direction: Direction = "forward") -> np.ndarray:
    """Centered unitary 2D DFT over the trailing (y, x) axes."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim < 2:
        raise ShapeMismatchError(f"fft2c needs at least 2 axes, got shape {x.shape}")
    return fftc(x, (-2, -1), direction)


def fft1t(value: ImageSeries | TemporalSpectrum, direction: Direction = "forward"):
    """Centered unitary DFT along frames: ImageSeries <-> TemporalSpectrum."""
    if direction == "forward":
        if not isinstance(value, ImageSeries):
            raise TypeError("forward temporal transform expects an ImageSeries")
        return TemporalSpectrum(fftc(value.data, (0,), "forward"))
    if not isinstance(value, TemporalSpectrum):
        raise TypeError("inverse temporal transform expects a TemporalSpectrum")
    return ImageSeries(fftc(value.data, (0,), "inverse"))


def _check_maps(m_shape: tuple[int, ...], sens: SensitivityMaps) -> None:
    if tuple(m_shape[-2:]) != tuple(sens.shape[1:]):
        raise ShapeMismatchError(f"image plane {tuple(m_shape[-2:])} != map plane {tuple(sens.shape[1:])}")


def coil_expand(m: ImageSeries, sens: SensitivityMaps) -> np.ndarray:
    """Per-coil images S m, shape (Nc, T, Ny, Nx)."""
    _check_maps(m.shape, sens)
    return sens.data[:, None] * m.data[None]


def coil_combine(x: np.ndarray, sens: SensitivityMaps) -> ImageSeries:
    """Adjoint projection S^H x = sum_c conj(S_c) x_c."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 4 or x.shape[0] != sens.n_coils:
        raise ShapeMismatchError(f"coil stack {x.shape} does not match {sens.n_coils} maps")
    _check_maps(x.shape, sens)
    return ImageSeries(np.sum(np.conj(sens.data)[:, None] * x, axis=0))


def rss(x: np.ndarray) -> np.ndarray:
    """Root sum of squares over the coil axis."""
    x = np.asarray(x)
    if x.shape[0] < 1:
        raise ShapeMismatchError("rss needs at least one coil")
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=0))


@dataclass(frozen=True, eq=False)
class EncodingContext:
    """Operator A = M F_s S for one acquisition."""

    sens: SensitivityMaps
    mask: SamplingMask

    def __post_init__(self):
        ny = self.sens.shape[1]
        if self.mask.shape[1] != ny:
            raise ShapeMismatchError(f"mask has {self.mask.shape[1]} ky lines, maps have {ny} rows")

    def check_image(self, shape: tuple[int, ...]) -> None:
        expected = (self.mask.shape[0],) + tuple(self.sens.shape[1:])
        if tuple(shape) != expected:
            raise ShapeMismatchError(f"image shape {tuple(shape)} != encoding shape {expected}")

    def check_kspace(self, shape: tuple[int, ...]) -> None:
        expected = (self.sens.n_coils, self.mask.shape[0]) + tuple(self.sens.shape[1:])
        if tuple(shape) != expected:
            raise ShapeMismatchError(f"k-space shape {tuple(shape)} != encoding shape {expected}")


def encode_array(m: np.ndarray, ctx: EncodingContext) -> np.ndarray:
    """M F_s S m on raw arrays."""
    return mask_array(fft2c(ctx.sens.data[:, None] * m[None]), ctx.mask)


def decode_array(v: np.ndarray, ctx: EncodingContext) -> np.ndarray:
    """S^H F_s^H M v on raw arrays."""
    coil_images = fft2c(mask_array(v, ctx.mask), "inverse")
    return np.sum(np.conj(ctx.sens.data)[:, None] * coil_images, axis=0)


def forward_op(m: ImageSeries, ctx: EncodingContext) -> KSpaceSeries:
    ctx.check_image(m.shape)
    return KSpaceSeries(encode_array(m.data, ctx))


def adjoint_op(v: KSpaceSeries, ctx: EncodingContext) -> ImageSeries:
    ctx.check_kspace(v.shape)
    return ImageSeries(decode_array(v.data, ctx))


def fidelity_grad_array(m: np.ndarray, v_acq: np.ndarray, ctx: EncodingContext) -> np.ndarray:
    return decode_array(encode_array(m, ctx) - v_acq, ctx)


def fidelity_grad(m: ImageSeries, v_acq: KSpaceSeries, ctx: EncodingContext) -> ImageSeries:
    """Gradient A^H (A m - v_acq) of 0.5 * ||A m - v_acq||^2; callers apply lambda."""
    ctx.check_image(m.shape)
    ctx.check_kspace(v_acq.shape)
    return ImageSeries(fidelity_grad_array(m.data, v_acq.data, ctx))


def data_residual(m: np.ndarray, v_acq: np.ndarray, ctx: EncodingContext) -> float:
    """Relative data-consistency residual ||A m - v_acq|| / ||v_acq||, 0/0 -> 0."""
    num = float(np.linalg.norm(encode_array(m, ctx) - v_acq))
    den = float(np.linalg.norm(v_acq))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den
