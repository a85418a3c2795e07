"""k-t interpolation kernel: least-squares calibration on ACS and application.

One linear shift-invariant kernel predicts every sample of every coil from its
(coil, frame, ky, kx) neighborhood, excluding the sample itself. Frames wrap
circularly; (ky, kx) neighbors outside the grid read as zero.
"""
import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
from numpy.lib.stride_tricks import sliding_window_view

from ktclair.errors import InsufficientACSError, ShapeMismatchError
from ktclair.logging_utils import get_logger
from ktclair.tensors import KSpaceSeries, KtKernel
from ktclair.transforms import get_fft_workers

logger = get_logger("calib")

ROWS_PER_UNKNOWN = 4


def temporal_extent(requested: int, t_frames: int) -> int:
    """Largest odd extent <= ``requested`` whose circular taps stay distinct."""
    usable = t_frames if t_frames % 2 == 1 else t_frames - 1
    return max(1, min(requested, usable))


def _neighborhoods(block: np.ndarray, t: int, extents: tuple[int, int, int]) -> np.ndarray:
    """Rows of vectorized (c_in, dt, dky, dkx) windows centered in frame ``t``."""
    dt, dy, dx = extents
    n_t = block.shape[1]
    frames = [(t + o) % n_t for o in range(-(dt // 2), dt // 2 + 1)]
    stack = block[:, frames]
    windows = sliding_window_view(stack, (dy, dx), axis=(2, 3))
    # (c, dt, py, px, dky, dkx) -> (py, px, c, dt, dky, dkx)
    windows = windows.transpose(2, 3, 0, 1, 4, 5)
    return windows.reshape(-1, block.shape[0] * dt * dy * dx)


def gram_matrix(block: np.ndarray, extents: tuple[int, int, int]) -> tuple[np.ndarray, int]:
    """Accumulate P^H P over every interior window; returns ``(gram, rows)``."""
    n_cols = block.shape[0] * int(np.prod(extents))
    gram = np.zeros((n_cols, n_cols), dtype=np.complex128)
    rows = 0
    for t in range(block.shape[1]):
        patches = _neighborhoods(block, t, extents)
        gram += patches.conj().T @ patches
        rows += patches.shape[0]
    return gram, rows


def _solve(system: np.ndarray, rhs: np.ndarray, coil: int) -> np.ndarray:
    try:
        factor = sla.cho_factor(system, lower=False, check_finite=False)
        return sla.cho_solve(factor, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        logger.warning("Normal equations not positive definite, falling back to lstsq", coil=coil)
        return sla.lstsq(system, rhs, check_finite=False)[0]


def calibrate_kernel(
    v_acs: KSpaceSeries,
    extents: tuple[int, int, int] = (3, 5, 5),
    tikhonov_rel: float = 1e-2,
) -> KtKernel:
    """Fit one kernel per output coil by Tikhonov-regularized least squares.

    For output coil c the unknowns are all (c_in, dt, dky, dkx) taps except
    c's own center tap. The regularization weight is
    ``tikhonov_rel * trace(P^H P) / rows`` computed on that coil's columns.

    Raises:
        InsufficientACSError: fewer than 4 interior windows per unknown
    """
    block = v_acs.data
    n_coils, n_t, n_lines, n_x = block.shape
    dt, dy, dx = (int(e) for e in extents)
    if any(e < 1 or e % 2 == 0 for e in (dt, dy, dx)):
        raise ShapeMismatchError(f"kernel extents must be odd and positive, got {extents}")
    fitted_dt = temporal_extent(dt, n_t)
    if fitted_dt != dt:
        logger.warning("Temporal kernel extent reduced to fit the frame count", requested=dt, used=fitted_dt, frames=n_t)
    extents = (fitted_dt, dy, dx)

    taps = fitted_dt * dy * dx
    unknowns = n_coils * taps - 1
    rows = n_t * max(n_lines - dy + 1, 0) * max(n_x - dx + 1, 0)
    if rows < ROWS_PER_UNKNOWN * unknowns:
        raise InsufficientACSError(
            f"ACS block {n_lines}x{n_x} over {n_t} frames gives {rows} windows, "
            f"need {ROWS_PER_UNKNOWN * unknowns} for {unknowns} unknowns"
        )

    gram, rows = gram_matrix(block, extents)
    center = ((fitted_dt // 2) * dy + dy // 2) * dx + dx // 2
    weights = np.zeros((n_coils, n_coils * taps), dtype=np.complex128)
    total_trace = float(np.real(np.trace(gram)))

    for c_out in range(n_coils):
        j = c_out * taps + center
        keep = np.delete(np.arange(n_coils * taps), j)
        trace = total_trace - float(np.real(gram[j, j]))
        if trace <= 0.0:
            continue
        system = gram[np.ix_(keep, keep)]
        system[np.diag_indices_from(system)] += tikhonov_rel * trace / rows
        weights[c_out, keep] = _solve(system, gram[keep, j], c_out)

    kernel = KtKernel(weights.reshape(n_coils, n_coils, *extents), tikhonov=tikhonov_rel)
    logger.info(
        "Calibrated k-t kernel",
        coils=n_coils,
        extents=list(extents),
        rows=rows,
        unknowns=unknowns,
        tikhonov_rel=tikhonov_rel,
    )
    return kernel


def temporal_taps(weights: np.ndarray, n_t: int) -> np.ndarray:
    """Kernel taps per temporal frequency, shaped (f, dky, dkx, c_in, c_out).

    A circular frame shift ``s`` becomes the phase ``exp(2j pi f s / n_t)``
    under the unnormalized DFT along t.
    """
    dt = weights.shape[2]
    shifts = np.arange(dt) - dt // 2
    phase = np.exp(2j * np.pi * np.outer(np.arange(n_t), shifts) / n_t)
    return np.einsum("fa,oiayx->fyxio", phase, weights)


def apply_kernel(v: KSpaceSeries, kernel: KtKernel) -> KSpaceSeries:
    """v'[c_out] = sum of weights times neighbors, zero outside (ky, kx), circular in t."""
    if v.n_coils != kernel.n_coils:
        raise ShapeMismatchError(f"k-space has {v.n_coils} coils, kernel expects {kernel.n_coils}")
    _, hy, hx = kernel.half_extents
    _, dy, dx = kernel.extents
    n_c, n_t, n_y, n_x = v.shape
    workers = get_fft_workers()
    taps = temporal_taps(kernel.weights, n_t)

    # (f, ky, kx, coil) so every spatial offset is one batched coil-mixing matmul
    padded = np.zeros((n_t, n_y + 2 * hy, n_x + 2 * hx, n_c), dtype=np.complex128)
    padded[:, hy:hy + n_y, hx:hx + n_x] = sfft.fft(v.data, axis=1, workers=workers).transpose(1, 2, 3, 0)
    mixed = np.zeros((n_t, n_y, n_x, n_c), dtype=np.complex128)
    for a in range(dy):
        for b in range(dx):
            mixed += padded[:, a:a + n_y, b:b + n_x] @ taps[:, a, b][:, None]
    out = sfft.ifft(mixed, axis=0, workers=workers)
    return KSpaceSeries(np.ascontiguousarray(out.transpose(3, 0, 1, 2)))


def calib_residual(kernel: KtKernel, v_acs: KSpaceSeries, coils: list[int] | None = None) -> float:
    """Normalized L1 self-consistency error over interior ACS positions.

    Returns sum |G(v_acs) - v_acs| / sum |v_acs| with 0/0 guarded to 0.
    ``coils`` restricts the sums to a subset of output coils.
    """
    _, hy, hx = kernel.half_extents
    n_lines, n_x = v_acs.shape[2:]
    if n_lines <= 2 * hy or n_x <= 2 * hx:
        raise InsufficientACSError(f"ACS block {n_lines}x{n_x} has no interior for extents {kernel.extents}")
    predicted = apply_kernel(v_acs, kernel).data
    selection = slice(None) if coils is None else list(coils)
    interior = (selection, slice(None), slice(hy, n_lines - hy), slice(hx, n_x - hx))
    num = float(np.sum(np.abs(predicted[interior] - v_acs.data[interior])))
    den = float(np.sum(np.abs(v_acs.data[interior])))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den
