"""Image-domain (x-t) gradient step with a smoothed 3D total-variation prior."""
import numpy as np

from ktclair.errors import IterationIndexError
from ktclair.models import XtParams
from ktclair.tensors import ImageSeries, KSpaceSeries
from ktclair.transforms import EncodingContext, fidelity_grad_array


def forward_diff(x: np.ndarray, axis: int) -> np.ndarray:
    """x[i+1] - x[i] along ``axis``, zero on the last slice (Neumann boundary)."""
    out = np.zeros_like(x)
    n = x.shape[axis]
    if n > 1:
        head = [slice(None)] * x.ndim
        head[axis] = slice(0, n - 1)
        out[tuple(head)] = np.diff(x, axis=axis)
    return out


def forward_diff_adjoint(p: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of :func:`forward_diff`."""
    n = p.shape[axis]
    q = np.moveaxis(p, axis, 0).copy()
    q[n - 1] = 0
    out = -q
    out[1:] += q[:-1]
    return np.moveaxis(out, 0, axis)


def _magnitude(m: np.ndarray, tv_eps: float) -> tuple[list[np.ndarray], np.ndarray]:
    diffs = [forward_diff(m, axis) for axis in (0, 1, 2)]
    phi = np.sqrt(sum(np.abs(d) ** 2 for d in diffs) + tv_eps**2)
    return diffs, phi


def smoothed_tv(m: np.ndarray, tv_eps: float) -> float:
    """Sum over voxels of sqrt(|D_t m|^2 + |D_y m|^2 + |D_x m|^2 + eps^2)."""
    _, phi = _magnitude(np.asarray(m, dtype=np.complex128), tv_eps)
    return float(np.sum(phi))


def tv_residual(m: ImageSeries, tv_eps: float, tv_weight: float) -> ImageSeries:
    """tv_weight times the gradient of :func:`smoothed_tv` at ``m``."""
    if tv_eps <= 0:
        raise ValueError(f"tv_eps must be positive, got {tv_eps}")
    if tv_weight == 0:
        return ImageSeries(np.zeros(m.shape, dtype=np.complex128))
    diffs, phi = _magnitude(m.data, tv_eps)
    grad = sum(forward_diff_adjoint(d / phi, axis) for axis, d in enumerate(diffs))
    return ImageSeries(tv_weight * grad)


def prior_residual(m: ImageSeries, params: XtParams, data_scale: float = 1.0) -> ImageSeries:
    """Regularization direction; ``tv_eps``/``tv_weight`` are scaled by ``data_scale``."""
    if params.prior_kind == "zero":
        return ImageSeries(np.zeros(m.shape, dtype=np.complex128))
    return tv_residual(m, params.tv_eps * data_scale, params.tv_weight * data_scale)


def xt_step(
    m: ImageSeries,
    v_acq: KSpaceSeries,
    ctx: EncodingContext,
    params: XtParams,
    n: int,
    data_scale: float = 1.0,
) -> ImageSeries:
    """m - eta_n * (prior_residual(m) + lambda_n * S^H F^H (M F S m - v_acq))."""
    if not 0 <= n < len(params.eta):
        raise IterationIndexError(f"iteration {n} outside schedule of length {len(params.eta)}")
    ctx.check_image(m.shape)
    ctx.check_kspace(v_acq.shape)
    eta, lam = params.eta[n], params.lambda_[n]
    direction = prior_residual(m, params, data_scale).data + lam * fidelity_grad_array(m.data, v_acq.data, ctx)
    return ImageSeries(m.data - eta * direction)
