"""Temporal-frequency (x-f) gradient step with a soft-threshold sparsity prior."""
import numpy as np

from ktclair.errors import IterationIndexError
from ktclair.models import XfParams
from ktclair.tensors import KSpaceSeries, TemporalSpectrum
from ktclair.transforms import EncodingContext, fftc, fidelity_grad_array


def dc_plane(n_frames: int) -> int:
    return n_frames // 2


def shrink(z: np.ndarray, tau: float) -> np.ndarray:
    """Complex soft threshold z * max(|z| - tau, 0) / |z|, 0 where z = 0."""
    mag = np.abs(z)
    scale = np.maximum(mag - tau, 0.0) / np.where(mag > 0, mag, 1.0)
    return z * scale


def soft_threshold_residual(rho: TemporalSpectrum, tau: float, protect_dc: bool = True) -> TemporalSpectrum:
    """rho - shrink(rho, tau); zero on the temporal DC plane when protected."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    residual = rho.data - shrink(rho.data, tau)
    if protect_dc:
        residual[dc_plane(rho.shape[0])] = 0
    return TemporalSpectrum(residual)


def xf_step(
    rho: TemporalSpectrum,
    v_acq: KSpaceSeries,
    ctx: EncodingContext,
    params: XfParams,
    n: int,
) -> TemporalSpectrum:
    """rho - zeta_n * (soft_threshold_residual(rho) + lambda_n * F_t A^H (A F_t^H rho - v_acq))."""
    if not 0 <= n < len(params.zeta):
        raise IterationIndexError(f"iteration {n} outside schedule of length {len(params.zeta)}")
    ctx.check_image(rho.shape)
    ctx.check_kspace(v_acq.shape)
    zeta, lam = params.zeta[n], params.lambda_[n]
    tau = params.tau_rel * float(np.max(np.abs(rho.data)))
    prior = soft_threshold_residual(rho, tau, params.protect_dc).data

    m = fftc(rho.data, (0,), "inverse")
    fidelity = fftc(fidelity_grad_array(m, v_acq.data, ctx), (0,), "forward")
    return TemporalSpectrum(rho.data - zeta * (prior + lam * fidelity))
