"""In-process invariant checks behind the ``selftest`` command.

Each check draws seeded random instances, measures a relative error and
compares it with its tolerance. A failing check raises
:class:`NumericalContractError`.
"""
from typing import Callable

import numpy as np
from pydantic import BaseModel

from ktclair.errors import NumericalContractError
from ktclair.ktc import decode, encode, from_buffer, to_buffer
from ktclair.logging_utils import get_logger
from ktclair.models import FusionCoeffs, MaskSpec, PhantomSpec, ReconConfig
from ktclair.phantom import generate_phantom, simulate_acquisition
from ktclair.pipeline import frequency_fusion, reconstruct
from ktclair.prior_kt import apply_kernel, calib_residual, calibrate_kernel
from ktclair.prior_xt import smoothed_tv, tv_residual
from ktclair.sampling import apply_mask, make_mask
from ktclair.tensors import ImageSeries, KSpaceSeries, KtKernel, SensitivityMaps, TemporalSpectrum
from ktclair.transforms import (
    EncodingContext,
    adjoint_op,
    coil_combine,
    coil_expand,
    fft1t,
    fft2c,
    fidelity_grad,
    forward_op,
    rss,
)

logger = get_logger("selftest")


class CheckResult(BaseModel):
    name: str
    error: float
    tolerance: float
    passed: bool


def _cplx(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _rel(a: complex | float, b: complex | float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def random_maps(rng: np.random.Generator, n_coils: int, n_y: int, n_x: int) -> SensitivityMaps:
    raw = _cplx(rng, n_coils, n_y, n_x)
    return SensitivityMaps(raw / np.sqrt(np.sum(np.abs(raw) ** 2, axis=0)))


def random_context(rng: np.random.Generator, n_coils: int, n_t: int, n_y: int, n_x: int) -> EncodingContext:
    spec = MaskSpec(ny=n_y, t_frames=n_t, acceleration=2, acs_lines=2, interleaved=True)
    return EncodingContext(sens=random_maps(rng, n_coils, n_y, n_x), mask=make_mask(spec))


def check_unitarity(rng: np.random.Generator) -> float:
    worst = 0.0
    for _ in range(20):
        x = _cplx(rng, 3, 8, 6)
        worst = max(worst, _rel(np.linalg.norm(fft2c(x)), np.linalg.norm(x)))
        worst = max(worst, float(np.max(np.abs(fft2c(fft2c(x), "inverse") - x)) / np.linalg.norm(x)))
        m = ImageSeries(x)
        worst = max(worst, _rel(np.linalg.norm(fft1t(m).data), np.linalg.norm(x)))
    return worst


def check_adjoints(rng: np.random.Generator) -> float:
    worst = 0.0
    for _ in range(100):
        n_c, n_t = rng.integers(1, 5), rng.integers(1, 9)
        n_y, n_x = (int(n) for n in rng.integers(2, 33, size=2))
        ctx = random_context(rng, int(n_c), int(n_t), n_y, n_x)
        m, m2 = _cplx(rng, n_t, n_y, n_x), _cplx(rng, n_t, n_y, n_x)
        v = _cplx(rng, n_c, n_t, n_y, n_x)

        pairs = [
            (np.vdot(fft2c(m), m2), np.vdot(m, fft2c(m2, "inverse"))),
            (np.vdot(fft1t(ImageSeries(m)).data, m2), np.vdot(m, fft1t(TemporalSpectrum(m2), "inverse").data)),
            (np.vdot(coil_expand(ImageSeries(m), ctx.sens), v), np.vdot(m, coil_combine(v, ctx.sens).data)),
            (
                np.vdot(forward_op(ImageSeries(m), ctx).data, v),
                np.vdot(m, adjoint_op(KSpaceSeries(v), ctx).data),
            ),
        ]
        worst = max(worst, *(_rel(a, b) for a, b in pairs))
    return worst


def check_fidelity_gradient(rng: np.random.Generator) -> float:
    ctx = random_context(rng, 3, 4, 8, 8)
    m = ImageSeries(_cplx(rng, 4, 8, 8))
    v_acq = KSpaceSeries(apply_mask(KSpaceSeries(_cplx(rng, 3, 4, 8, 8)), ctx.mask).data)
    grad = fidelity_grad(m, v_acq, ctx).data

    def objective(x: np.ndarray) -> float:
        return 0.5 * float(np.linalg.norm(forward_op(ImageSeries(x), ctx).data - v_acq.data) ** 2)

    return _directional_error(rng, objective, m.data, grad)


def check_tv_gradient(rng: np.random.Generator) -> float:
    m = _cplx(rng, 4, 6, 6)
    eps = 0.1
    grad = tv_residual(ImageSeries(m), eps, 1.0).data
    return _directional_error(rng, lambda x: smoothed_tv(x, eps), m, grad)


def _directional_error(
    rng: np.random.Generator,
    objective: Callable[[np.ndarray], float],
    x: np.ndarray,
    grad: np.ndarray,
    step: float = 1e-6,
) -> float:
    worst = 0.0
    for _ in range(20):
        d = _cplx(rng, *x.shape)
        d /= np.linalg.norm(d)
        numeric = (objective(x + step * d) - objective(x - step * d)) / (2 * step)
        analytic = float(np.real(np.vdot(grad, d)))
        worst = max(worst, abs(numeric - analytic) / max(abs(analytic), 1e-8))
    return worst


def planted_block(rng: np.random.Generator, n_coils: int = 3, shape=(5, 14, 16), extents=(3, 3, 3)):
    """Free random coils plus one coil that is an exact k-t correlation of them."""
    free = _cplx(rng, n_coils - 1, *shape)
    weights = np.zeros((n_coils, n_coils) + tuple(extents), dtype=np.complex128)
    weights[-1, :-1] = _cplx(rng, n_coils - 1, *extents)
    planted = KtKernel(weights)
    stack = np.concatenate([free, np.zeros((1,) + tuple(shape))])
    stack[-1] = apply_kernel(KSpaceSeries(stack), planted).data[-1]
    return KSpaceSeries(stack), planted


def check_kernel_identifiability(rng: np.random.Generator) -> float:
    block, planted = planted_block(rng)
    kernel = calibrate_kernel(block, planted.extents, tikhonov_rel=0.0)
    last = planted.n_coils - 1
    weight_error = float(np.max(np.abs(kernel.weights[last] - planted.weights[last])))
    return max(weight_error, calib_residual(kernel, block, coils=[last]))


def check_fusion_partition(rng: np.random.Generator) -> float:
    ctx = random_context(rng, 2, 3, 8, 8)
    m = ImageSeries(_cplx(rng, 3, 8, 8))
    rho = TemporalSpectrum(_cplx(rng, 3, 8, 8))
    v = KSpaceSeries(_cplx(rng, 2, 3, 8, 8))
    fused = frequency_fusion(m, rho, v, ctx, FusionCoeffs(alpha=0.0, beta=0.0, gamma=1.0)).data
    expected = np.where(ctx.mask.lines[None, :, :, None], 0, v.data)
    return 0.0 if np.array_equal(fused, expected) else 1.0


def check_full_sampling(rng: np.random.Generator) -> float:
    spec = PhantomSpec(ny=32, nx=32, t_frames=4, n_coils=4, noise_std=0.0, seed=int(rng.integers(1 << 16)))
    ground_truth, maps = generate_phantom(spec)
    mask = make_mask(MaskSpec(ny=32, t_frames=4, acceleration=1, acs_lines=8))
    v_acq = simulate_acquisition(ground_truth, maps, mask, 0.0, spec.seed)
    config = ReconConfig.model_validate({"unroll_T": 2, "kt": {"extents": [1, 3, 3]}})
    report = reconstruct(v_acq, mask, config)
    reference = rss(coil_expand(ground_truth, maps))
    return float(np.sum((report.image - reference) ** 2) / np.sum(reference**2))


def check_ktc_roundtrip(rng: np.random.Generator) -> float:
    value = KSpaceSeries(_cplx(rng, 2, 3, 4, 5))
    back = from_buffer(decode(encode(to_buffer(value, precision="c128"))))
    return 0.0 if np.array_equal(back.data, value.data) else 1.0


CHECKS: list[tuple[str, Callable[[np.random.Generator], float], float]] = [
    ("unitarity", check_unitarity, 1e-12),
    ("adjointness", check_adjoints, 1e-10),
    ("fidelity-gradient", check_fidelity_gradient, 1e-5),
    ("tv-gradient", check_tv_gradient, 1e-5),
    ("kernel-identifiability", check_kernel_identifiability, 1e-6),
    ("fusion-partition", check_fusion_partition, 0.0),
    ("full-sampling-recovery", check_full_sampling, 1e-10),
    ("ktc-roundtrip", check_ktc_roundtrip, 0.0),
]


def run_selftest(seed: int = 0) -> list[CheckResult]:
    """Run every check; raises on the first failure after logging it."""
    results = []
    for name, check, tolerance in CHECKS:
        error = check(np.random.Generator(np.random.PCG64(seed)))
        passed = error <= tolerance
        results.append(CheckResult(name=name, error=error, tolerance=tolerance, passed=passed))
        if not passed:
            logger.error("Self-test check failed", check=name, error=error, tolerance=tolerance)
            raise NumericalContractError(f"{name}: error {error:.3e} exceeds {tolerance:.1e}")
        logger.info("Self-test check passed", check=name, error=error)
    return results
