"""Coil sensitivity estimation from the calibration block."""
import numpy as np
from scipy.signal import windows

from ktclair.errors import AllZeroACSError, EmptyACSError
from ktclair.logging_utils import get_logger
from ktclair.sampling import embed_acs, extract_acs
from ktclair.tensors import KSpaceSeries, SamplingMask, SensitivityMaps
from ktclair.transforms import fft2c, rss

logger = get_logger("sensitivity")


def acs_window(n_lines: int) -> np.ndarray:
    """Hann taper over the ACS ky extent, strictly positive on every line."""
    return windows.hann(n_lines + 2, sym=True)[1:-1]


def low_resolution_images(v_acq: KSpaceSeries, mask: SamplingMask) -> np.ndarray:
    """Frame-averaged, Hann-windowed ACS transformed to coil images (Nc, Ny, Nx)."""
    block = extract_acs(v_acq, mask)
    averaged = KSpaceSeries(block.data.mean(axis=1, keepdims=True))
    kspace = embed_acs(averaged, mask)[:, 0]
    lo, hi = mask.acs_range
    kspace[:, lo:hi + 1, :] *= acs_window(hi - lo + 1)[None, :, None]
    return fft2c(kspace, "inverse")


def estimate_maps(v_acq: KSpaceSeries, mask: SamplingMask, eps_rel: float = 1e-6) -> SensitivityMaps:
    """Normalized maps S_c = L_c / rss(L) on the support rss(L) >= eps_rel * max rss(L).

    Raises:
        EmptyACSError: the mask has no calibration lines
        AllZeroACSError: the calibration block holds no signal
    """
    if mask.acs_range is None:
        raise EmptyACSError("sensitivity estimation needs ACS lines")
    low_res = low_resolution_images(v_acq, mask)
    magnitude = rss(low_res)
    peak = float(magnitude.max())
    if peak == 0.0:
        raise AllZeroACSError("ACS block is identically zero")

    eps = eps_rel * peak
    support = magnitude >= eps
    maps = np.where(support[None], low_res / np.maximum(magnitude, eps)[None], 0)
    logger.debug(
        "Estimated coil maps",
        coils=maps.shape[0],
        acs_range=mask.acs_range,
        support_fraction=float(support.mean()),
    )
    return SensitivityMaps(maps)
