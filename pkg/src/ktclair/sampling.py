"""Cartesian ky-line undersampling with a fully sampled ACS block."""
import numpy as np

from ktclair.errors import EmptyACSError, MaskError, ShapeMismatchError
from ktclair.logging_utils import get_logger
from ktclair.models import MaskSpec
from ktclair.tensors import KSpaceSeries, SamplingMask

logger = get_logger("sampling")


def acs_interval(ny: int, acs_lines: int) -> tuple[int, int] | None:
    """Inclusive ky interval of ``acs_lines`` lines around ny // 2 (extra line to the left)."""
    if acs_lines == 0:
        return None
    start = min(max(ny // 2 - acs_lines // 2, 0), ny - acs_lines)
    return start, start + acs_lines - 1


def make_mask(spec: MaskSpec) -> SamplingMask:
    """Equispaced lines k = offset_t (mod R) per frame plus the ACS block."""
    if spec.ny is None or spec.t_frames is None:
        raise MaskError("mask spec needs ny and t_frames before a mask can be built")
    if spec.acs_lines > spec.ny:
        raise MaskError(f"acs_lines {spec.acs_lines} exceeds ny {spec.ny}")

    ky = np.arange(spec.ny)
    frames = np.arange(spec.t_frames)
    if spec.interleaved:
        offsets = (spec.offset + frames) % spec.acceleration
    else:
        offsets = np.full(spec.t_frames, spec.offset)
    lines = (ky[None, :] - offsets[:, None]) % spec.acceleration == 0

    acs = acs_interval(spec.ny, spec.acs_lines)
    if acs is not None:
        lines[:, acs[0]:acs[1] + 1] = True

    mask = SamplingMask(lines, acs_range=acs, acceleration=spec.acceleration)
    logger.debug(
        "Built sampling mask",
        ny=spec.ny,
        t_frames=spec.t_frames,
        acceleration=spec.acceleration,
        acs_range=acs,
        effective_acceleration=effective_acceleration(mask),
    )
    return mask


def effective_acceleration(mask: SamplingMask) -> float:
    """ny divided by the mean number of sampled lines per frame."""
    return mask.shape[1] / float(np.mean(np.count_nonzero(mask.lines, axis=1)))


def mask_array(v: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Zero unsampled (t, ky) lines of a (..., t, ky, kx) array; sampled entries untouched."""
    if tuple(v.shape[-3:-1]) != mask.shape:
        raise ShapeMismatchError(f"k-space (t, ky) {tuple(v.shape[-3:-1])} != mask {mask.shape}")
    return np.where(mask.lines[..., None], v, 0)


def apply_mask(v: KSpaceSeries, mask: SamplingMask) -> KSpaceSeries:
    return KSpaceSeries(mask_array(v.data, mask))


def extract_acs(v: KSpaceSeries, mask: SamplingMask) -> KSpaceSeries:
    """Contiguous ACS sub-block (Nc, T, acs_lines, Nx)."""
    if mask.acs_range is None:
        raise EmptyACSError("mask carries no ACS lines")
    if tuple(v.shape[1:3]) != mask.shape:
        raise ShapeMismatchError(f"k-space (t, ky) {tuple(v.shape[1:3])} != mask {mask.shape}")
    lo, hi = mask.acs_range
    return KSpaceSeries(v.data[:, :, lo:hi + 1, :])


def embed_acs(block: KSpaceSeries, mask: SamplingMask, nx: int | None = None) -> np.ndarray:
    """Place an ACS block back at ``mask.acs_range`` inside a zero k-space array."""
    if mask.acs_range is None:
        raise EmptyACSError("mask carries no ACS lines")
    nc, nt, lines, bx = block.shape
    lo, hi = mask.acs_range
    if lines != hi - lo + 1:
        raise ShapeMismatchError(f"block has {lines} lines, ACS range holds {hi - lo + 1}")
    out = np.zeros((nc, nt, mask.shape[1], nx or bx), dtype=np.complex128)
    out[:, :, lo:hi + 1, :] = block.data
    return out
