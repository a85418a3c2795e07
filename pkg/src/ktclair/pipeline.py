"""Frequency fusion and the unrolled multi-prior reconstruction.

Each iteration runs four steps in a fixed order:

1. x-t step on the coil-combined fused k-space
2. x-f step on the temporal spectrum of the new image
3. k-t kernel on the acquired samples completed by F S F_t^H rho,
   acquired samples re-imposed
4. frequency fusion of the three estimates

Disabled priors pass their input through unchanged, so with every prior off
the unsampled lines still receive the coil-expanded image estimate.
"""
import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, Field

from ktclair.errors import IterationIndexError, ShapeMismatchError
from ktclair.logging_utils import get_logger
from ktclair.metrics import ssim
from ktclair.models import FusionCoeffs, MetricParams, ReconConfig
from ktclair.prior_kt import apply_kernel, calib_residual, calibrate_kernel
from ktclair.prior_xf import xf_step
from ktclair.prior_xt import xt_step
from ktclair.sampling import extract_acs
from ktclair.sensitivity import estimate_maps
from ktclair.tensors import (
    ImageSeries,
    KSpaceSeries,
    KtKernel,
    SamplingMask,
    SensitivityMaps,
    TemporalSpectrum,
    check_same_shape,
)
from ktclair.transforms import (
    EncodingContext,
    coil_expand,
    data_residual,
    decode_array,
    encode_array,
    fft1t,
    fft2c,
    fftc,
    rss,
)

logger = get_logger("recon")

DIAGNOSTIC_COLUMNS = ["iteration", "dc_residual", "calib_residual", "l1", "ssim_loss"]


@dataclass(frozen=True, eq=False)
class PipelineState:
    """Iterates of the three domains: image m, spectrum rho, k-space v."""

    m: ImageSeries
    rho: TemporalSpectrum
    v: KSpaceSeries


class IterationDiagnostics(BaseModel):
    """Per-iteration residuals and, in simulation mode, loss terms."""

    iteration: int = Field(description="Zero-based unroll index.")
    dc_residual: float = Field(description="||M F S m - v_acq|| / ||v_acq||.")
    calib_residual: float | None = Field(default=None, description="Normalized L1 kernel residual on interior ACS.")
    l1: float | None = Field(default=None, description="Mean |m* - m_G| of the current output.")
    ssim_loss: float | None = Field(default=None, description="1 - SSIM of the current output.")


class LossComponents(BaseModel):
    l1: float
    ssim_loss: float
    calib_l1: float
    total: float


@dataclass(eq=False)
class ReconReport:
    """Final magnitude image plus per-iteration diagnostics."""

    image: np.ndarray
    diagnostics: list[IterationDiagnostics]
    unroll_T: int
    priors: dict[str, bool]
    output_from: str
    sens: SensitivityMaps
    kernel: KtKernel | None = None
    state: PipelineState | None = None
    elapsed_s: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def calib_loss_total(self) -> float:
        return float(sum(d.calib_residual or 0.0 for d in self.diagnostics))

    def summary(self) -> dict:
        return {
            "unroll_T": self.unroll_T,
            "priors": self.priors,
            "output_from": self.output_from,
            "final_dc_residual": self.diagnostics[-1].dc_residual if self.diagnostics else 0.0,
            "calib_loss_total": self.calib_loss_total,
            "elapsed_s": round(self.elapsed_s, 3),
            **self.metadata,
        }


def frequency_fusion(
    m: ImageSeries,
    rho: TemporalSpectrum,
    v: KSpaceSeries,
    ctx: EncodingContext,
    coeffs: FusionCoeffs,
) -> KSpaceSeries:
    """alpha M F S m + beta M F S F_t^H rho on sampled lines, gamma v elsewhere."""
    ctx.check_image(m.shape)
    ctx.check_image(rho.shape)
    ctx.check_kspace(v.shape)
    # alpha A m + beta A F_t^H rho, encoded once
    sampled = encode_array(coeffs.alpha * m.data + coeffs.beta * fftc(rho.data, (0,), "inverse"), ctx)
    return KSpaceSeries(np.where(ctx.mask.lines[None, :, :, None], sampled, coeffs.gamma * v.data))


def initial_state(v_acq: KSpaceSeries, ctx: EncodingContext) -> PipelineState:
    """Zero-filled start: m = S^H F^H v_acq, rho = F_t m, v = v_acq."""
    m = ImageSeries(decode_array(v_acq.data, ctx))
    return PipelineState(m=m, rho=fft1t(m), v=v_acq)


def _coil_combined(v: np.ndarray, ctx: EncodingContext) -> ImageSeries:
    return ImageSeries(np.sum(np.conj(ctx.sens.data)[:, None] * fft2c(v, "inverse"), axis=0))


def kt_input(rho: TemporalSpectrum, v_acq: KSpaceSeries, ctx: EncodingContext) -> KSpaceSeries:
    """Acquired samples on sampled lines, F S F_t^H rho on the rest."""
    ctx.check_image(rho.shape)
    estimate = fft2c(coil_expand(ImageSeries(fftc(rho.data, (0,), "inverse")), ctx.sens), "forward")
    return KSpaceSeries(np.where(ctx.mask.lines[None, :, :, None], v_acq.data, estimate))


def _iterate(
    state: PipelineState,
    v_acq: KSpaceSeries,
    ctx: EncodingContext,
    kernel: KtKernel | None,
    config: ReconConfig,
    n: int,
    data_scale: float,
) -> tuple[PipelineState, np.ndarray | None]:
    if not 0 <= n < config.unroll_T:
        raise IterationIndexError(f"iteration {n} outside unroll depth {config.unroll_T}")
    priors = config.priors

    m = _coil_combined(state.v.data, ctx)
    if priors.xt:
        m = xt_step(m, v_acq, ctx, config.xt, n, data_scale)

    rho = fft1t(m)
    if priors.xf:
        rho = xf_step(rho, v_acq, ctx, config.xf, n)

    v = kt_input(rho, v_acq, ctx)
    predicted = None
    if priors.kt and kernel is not None:
        predicted = apply_kernel(v, kernel).data
        v = KSpaceSeries(np.where(ctx.mask.lines[None, :, :, None], v_acq.data, predicted))

    v = frequency_fusion(m, rho, v, ctx, config.fusion)
    return PipelineState(m=m, rho=rho, v=v), predicted


def run_iteration(
    state: PipelineState,
    v_acq: KSpaceSeries,
    ctx: EncodingContext,
    kernel: KtKernel | None,
    config: ReconConfig,
    n: int,
    data_scale: float = 1.0,
) -> PipelineState:
    """Advance the state by one unrolled iteration ``n``."""
    return _iterate(state, v_acq, ctx, kernel, config, n, data_scale)[0]


def output_image(state: PipelineState, v_acq: KSpaceSeries, ctx: EncodingContext, output_from: str) -> np.ndarray:
    """Magnitude series of the fused k-space (acquired samples re-imposed) or of m."""
    if output_from == "image_state":
        return rss(coil_expand(state.m, ctx.sens))
    consistent = np.where(ctx.mask.lines[None, :, :, None], v_acq.data, state.v.data)
    return rss(fft2c(consistent, "inverse"))


def _iterate_consistency(predicted: np.ndarray, v_acq: KSpaceSeries, mask: SamplingMask, kernel: KtKernel) -> float:
    """calib residual of the kernel output on the current iterate, restricted to interior ACS."""
    _, hy, hx = kernel.half_extents
    lo, hi = mask.acs_range
    rows = slice(lo + hy, hi - hy + 1)
    cols = slice(hx, v_acq.shape[3] - hx)
    target = v_acq.data[:, :, rows, cols]
    num = float(np.sum(np.abs(predicted[:, :, rows, cols] - target)))
    den = float(np.sum(np.abs(target)))
    if den == 0.0:
        return 0.0
    return num / den


def diagnostic_loss(
    m_star: np.ndarray,
    m_ground: np.ndarray,
    kernel: KtKernel | None = None,
    v_acs: KSpaceSeries | None = None,
    params: MetricParams | None = None,
) -> LossComponents:
    """Unit-weighted training-loss terms: L1, 1 - SSIM and the calibration L1."""
    m_star = np.asarray(m_star, dtype=np.float64)
    m_ground = np.asarray(m_ground, dtype=np.float64)
    check_same_shape("diagnostic_loss", m_ground.shape, m_star.shape)
    l1 = float(np.mean(np.abs(m_star - m_ground)))
    ssim_loss = 1.0 - ssim(m_star, m_ground, params or MetricParams())
    calib = calib_residual(kernel, v_acs) if kernel is not None and v_acs is not None else 0.0
    return LossComponents(l1=l1, ssim_loss=ssim_loss, calib_l1=calib, total=l1 + ssim_loss + calib)


def _zero_report(v_acq: KSpaceSeries, config: ReconConfig) -> ReconReport:
    n_c, n_t, n_y, n_x = v_acq.shape
    logger.warning("Acquired k-space is identically zero, returning a zero image")
    diagnostics = [
        IterationDiagnostics(iteration=n, dc_residual=0.0, calib_residual=0.0, l1=0.0, ssim_loss=0.0)
        for n in range(config.unroll_T)
    ]
    return ReconReport(
        image=np.zeros((n_t, n_y, n_x)),
        diagnostics=diagnostics,
        unroll_T=config.unroll_T,
        priors=config.priors.model_dump(),
        output_from=config.output_from,
        sens=SensitivityMaps(np.zeros((n_c, n_y, n_x), dtype=np.complex128)),
    )


def reconstruct(
    v_acq: KSpaceSeries,
    mask: SamplingMask,
    config: ReconConfig,
    kernel: KtKernel | None = None,
    sens: SensitivityMaps | None = None,
    ground_truth: np.ndarray | None = None,
    metric_params: MetricParams | None = None,
) -> ReconReport:
    """Run the unrolled pipeline on acquired k-space.

    Args:
        v_acq: acquired k-space, zero off the mask
        mask: sampling pattern with its ACS interval
        config: unroll depth, prior parameters and fusion coefficients
        kernel: pre-calibrated k-t kernel; calibrated on the ACS when omitted
        sens: coil maps; estimated from the ACS when omitted
        ground_truth: magnitude reference enabling per-iteration L1 and SSIM loss
        metric_params: SSIM settings for the per-iteration loss

    Returns:
        ReconReport with the final magnitude series and ``unroll_T`` diagnostic rows
    """
    check_same_shape("mask", v_acq.shape[1:3], mask.shape)
    if ground_truth is not None:
        check_same_shape("ground truth", v_acq.image_shape, np.shape(ground_truth))
    if not np.any(v_acq.data):
        return _zero_report(v_acq, config)

    started = time.perf_counter()
    if sens is None:
        sens = estimate_maps(v_acq, mask, config.sens_eps_rel)
    if sens.n_coils != v_acq.n_coils:
        raise ShapeMismatchError(f"{sens.n_coils} maps for {v_acq.n_coils} coils")
    ctx = EncodingContext(sens=sens, mask=mask)
    ctx.check_kspace(v_acq.shape)

    if config.priors.kt and kernel is None:
        kernel = calibrate_kernel(extract_acs(v_acq, mask), config.kt.extents, config.kt.tikhonov_rel)
    if not config.priors.kt:
        kernel = None

    state = initial_state(v_acq, ctx)
    data_scale = float(np.max(np.abs(state.m.data)))
    logger.info(
        "Starting unrolled reconstruction",
        unroll_T=config.unroll_T,
        disabled=config.priors.disabled(),
        data_scale=data_scale,
    )

    diagnostics = []
    for n in range(config.unroll_T):
        state, predicted = _iterate(state, v_acq, ctx, kernel, config, n, data_scale)
        row = IterationDiagnostics(
            iteration=n,
            dc_residual=data_residual(state.m.data, v_acq.data, ctx),
        )
        if predicted is not None and mask.acs_range is not None:
            row.calib_residual = _iterate_consistency(predicted, v_acq, mask, kernel)
        if ground_truth is not None:
            current = output_image(state, v_acq, ctx, config.output_from)
            loss = diagnostic_loss(current, ground_truth, params=metric_params)
            row.l1, row.ssim_loss = loss.l1, loss.ssim_loss
        logger.debug("Iteration complete", **row.model_dump(exclude_none=True))
        diagnostics.append(row)

    image = output_image(state, v_acq, ctx, config.output_from)
    report = ReconReport(
        image=image,
        diagnostics=diagnostics,
        unroll_T=config.unroll_T,
        priors=config.priors.model_dump(),
        output_from=config.output_from,
        sens=sens,
        kernel=kernel,
        state=state,
        elapsed_s=time.perf_counter() - started,
    )
    logger.info(
        "Reconstruction finished",
        final_dc_residual=diagnostics[-1].dc_residual,
        elapsed_s=round(report.elapsed_s, 3),
    )
    return report


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def diagnostics_csv(report: ReconReport) -> str:
    """Per-iteration diagnostics as CSV; absent values are left empty."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(DIAGNOSTIC_COLUMNS)
    for row in report.diagnostics:
        values = row.model_dump()
        writer.writerow([_cell(values[k]) for k in DIAGNOSTIC_COLUMNS])
    return buffer.getvalue()
