"""Image-quality metrics on magnitude series and the tabular report."""
import csv
import io
import math
from pathlib import Path
from typing import Iterable

import numpy as np
from pydantic import BaseModel, Field
from skimage import io as skio
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from ktclair.errors import MetricError
from ktclair.logging_utils import get_logger
from ktclair.models import MetricParams
from ktclair.tensors import check_same_shape

logger = get_logger("metrics")

REPORT_COLUMNS = ["method", "acceleration", "tag", "ssim", "nmse", "psnr", "crop_fraction"]
INF = "inf"


class CaseMetrics(BaseModel):
    """Metrics of one reconstruction against its reference."""

    method: str = Field(description="Reconstruction method or ablation label.")
    acceleration: int = Field(description="Nominal acceleration R.")
    tag: str = Field(description="View/contrast tag of the case.")
    ssim: float
    nmse: float
    psnr: float


def _crop_extent(n: int, fraction: float) -> int:
    # guard against ceil(1.9999999999999998) style rounding
    return min(n, max(1, math.ceil(fraction * n - 1e-9)))


def center_crop(x: np.ndarray, fraction: float, min_extent: int = 1) -> np.ndarray:
    """Keep the floor-centered ceil(fraction * N) region of both trailing axes."""
    if not 0 < fraction <= 1:
        raise MetricError(f"crop fraction must lie in (0, 1], got {fraction}")
    x = np.asarray(x)
    n_y, n_x = x.shape[-2:]
    k_y, k_x = _crop_extent(n_y, fraction), _crop_extent(n_x, fraction)
    if min(k_y, k_x) < min_extent:
        raise MetricError(f"crop {k_y}x{k_x} is smaller than the {min_extent}x{min_extent} SSIM window")
    y0, x0 = n_y // 2 - k_y // 2, n_x // 2 - k_x // 2
    return x[..., y0:y0 + k_y, x0:x0 + k_x]


def nmse(recon: np.ndarray, ref: np.ndarray) -> float:
    """||recon - ref||^2 / ||ref||^2 over all frames."""
    recon, ref = np.asarray(recon, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    check_same_shape("nmse", ref.shape, recon.shape)
    denom = float(np.sum(ref**2))
    if denom == 0.0:
        raise MetricError("NMSE is undefined for an all-zero reference")
    return float(np.sum((recon - ref) ** 2)) / denom


def psnr(recon: np.ndarray, ref: np.ndarray, data_range: float | None = None) -> float:
    """10 log10(L^2 / MSE) with L = max(ref) by default; identical inputs give inf.

    An all-zero reference without an explicit range falls back to L = 1.
    """
    recon, ref = np.asarray(recon, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    check_same_shape("psnr", ref.shape, recon.shape)
    if np.array_equal(recon, ref):
        return math.inf
    level = float(data_range) if data_range is not None else _data_range(ref, MetricParams())
    return float(peak_signal_noise_ratio(ref, recon, data_range=level))


def _data_range(ref: np.ndarray, params: MetricParams) -> float:
    if params.data_range is not None:
        return params.data_range
    level = float(ref.max())
    if level == 0.0:
        logger.warning("Reference has zero data range, using L = 1")
        return 1.0
    return level


def ssim(recon: np.ndarray, ref: np.ndarray, params: MetricParams | None = None) -> float:
    """Uniform-window SSIM per frame (valid positions only), averaged over frames."""
    params = params or MetricParams()
    recon, ref = np.asarray(recon, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    check_same_shape("ssim", ref.shape, recon.shape)
    if ref.ndim == 2:
        recon, ref = recon[None], ref[None]
    if min(ref.shape[-2:]) < params.ssim_window:
        raise MetricError(f"image {ref.shape[-2:]} is smaller than the SSIM window {params.ssim_window}")
    level = _data_range(ref, params)
    scores = [
        structural_similarity(
            a,
            b,
            win_size=params.ssim_window,
            data_range=level,
            gaussian_weights=False,
            use_sample_covariance=False,
            K1=params.k1,
            K2=params.k2,
        )
        for a, b in zip(recon, ref)
    ]
    return float(np.mean(scores))


def evaluate_case(
    recon: np.ndarray,
    ref: np.ndarray,
    params: MetricParams,
    method: str,
    acceleration: int,
    tag: str,
) -> CaseMetrics:
    """All three metrics on the center crop of magnitude images."""
    if params.crop_fraction < 1:
        recon = center_crop(recon, params.crop_fraction, params.ssim_window)
        ref = center_crop(ref, params.crop_fraction, params.ssim_window)
    return CaseMetrics(
        method=method,
        acceleration=acceleration,
        tag=tag,
        ssim=ssim(recon, ref, params),
        nmse=nmse(recon, ref),
        psnr=psnr(recon, ref, params.data_range),
    )


def _fmt(value: float, digits: int) -> str:
    if math.isinf(value):
        return INF if value > 0 else "-" + INF
    return f"{value:.{digits}f}"


def _row(method: str, acceleration, tag: str, rows: list[CaseMetrics], crop_fraction: float) -> list[str]:
    return [
        method,
        str(acceleration),
        tag,
        _fmt(float(np.mean([r.ssim for r in rows])), 4),
        _fmt(float(np.mean([r.nmse for r in rows])), 4),
        _fmt(float(np.mean([r.psnr for r in rows])), 2),
        f"{crop_fraction:.6g}",
    ]


def report_table(results: Iterable[CaseMetrics], crop_fraction: float) -> str:
    """CSV with per-case rows, per-acceleration averages and one overall average per method.

    Methods keep their first-appearance order; rows within a method are sorted
    by (acceleration, tag). A per-acceleration ``avg`` row is added only when
    that acceleration holds more than one tag.
    """
    results = list(results)
    if not results:
        raise MetricError("report_table needs at least one result")
    methods = list(dict.fromkeys(r.method for r in results))

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for method in methods:
        rows = sorted((r for r in results if r.method == method), key=lambda r: (r.acceleration, r.tag))
        for acceleration in dict.fromkeys(r.acceleration for r in rows):
            group = [r for r in rows if r.acceleration == acceleration]
            for r in group:
                writer.writerow(_row(method, acceleration, r.tag, [r], crop_fraction))
            if len({r.tag for r in group}) > 1:
                writer.writerow(_row(method, acceleration, "avg", group, crop_fraction))
        writer.writerow(_row(method, "avg", "Avg.", rows, crop_fraction))
    return buffer.getvalue()


def write_pgm(path: Path, frame: np.ndarray, max_value: float | None = None) -> None:
    """8-bit grayscale dump of one magnitude frame, scaled so ``max_value`` maps to 255."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise MetricError(f"PGM frames are 2D, got shape {frame.shape}")
    level = float(frame.max()) if max_value is None else float(max_value)
    scaled = np.zeros_like(frame) if level <= 0 else np.clip(frame / level, 0.0, 1.0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    skio.imsave(path, np.round(scaled * 255).astype(np.uint8), check_contrast=False)


def write_error_maps(out_dir: Path, recon: np.ndarray, ref: np.ndarray, max_error: float | None = None) -> list[Path]:
    """Reconstruction and |error| frames; errors share one stated scale (default max |ref|)."""
    recon, ref = np.asarray(recon, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    check_same_shape("error maps", ref.shape, recon.shape)
    scale = float(ref.max()) if max_error is None else max_error
    written = []
    for t, (a, b) in enumerate(zip(recon, ref)):
        recon_path = Path(out_dir) / f"recon_t{t:02d}.pgm"
        error_path = Path(out_dir) / f"error_t{t:02d}.pgm"
        write_pgm(recon_path, a, float(ref.max()))
        write_pgm(error_path, np.abs(a - b), scale)
        written.extend([recon_path, error_path])
    logger.debug("Wrote PGM frames", count=len(written), error_scale=scale)
    return written
