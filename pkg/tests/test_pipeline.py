import numpy as np
import pytest

from conftest import context, cplx, small_phantom, unit_maps
from ktclair.errors import IterationIndexError, ShapeMismatchError
from ktclair.metrics import nmse
from ktclair.models import FusionCoeffs, MaskSpec, MetricParams, ReconConfig
from ktclair.phantom import generate_phantom, simulate_acquisition
from ktclair.pipeline import (
    DIAGNOSTIC_COLUMNS,
    diagnostic_loss,
    diagnostics_csv,
    frequency_fusion,
    initial_state,
    kt_input,
    reconstruct,
    run_iteration,
)
from ktclair.prior_kt import calibrate_kernel
from ktclair.sampling import apply_mask, extract_acs, make_mask
from ktclair.sensitivity import estimate_maps
from ktclair.tensors import ImageSeries, KSpaceSeries, KtKernel, SensitivityMaps, TemporalSpectrum
from ktclair.transforms import EncodingContext, coil_expand, encode_array, fft2c, fftc, rss

ALL_OFF = {"xt": False, "xf": False, "kt": False}


def _config(**values) -> ReconConfig:
    return ReconConfig.model_validate(values)


def _fusion_inputs(rng):
    ctx = context(rng, n_coils=2, n_t=3, n_y=8, n_x=6)
    m = ImageSeries(cplx(rng, 3, 8, 6))
    rho = TemporalSpectrum(cplx(rng, 3, 8, 6))
    v = KSpaceSeries(cplx(rng, 2, 3, 8, 6))
    return ctx, m, rho, v


def _phantom_case(acceleration=4, **overrides):
    spec = small_phantom(**overrides)
    ground_truth, maps = generate_phantom(spec)
    mask = make_mask(MaskSpec(ny=spec.ny, t_frames=spec.t_frames, acceleration=acceleration, acs_lines=8))
    v_acq = simulate_acquisition(ground_truth, maps, mask, spec.noise_std, spec.seed)
    return v_acq, mask, rss(coil_expand(ground_truth, maps))


def test_fusion_keeps_only_kspace_branch_off_mask(rng):
    ctx, m, rho, v = _fusion_inputs(rng)
    fused = frequency_fusion(m, rho, v, ctx, FusionCoeffs(alpha=0.0, beta=0.0, gamma=1.0)).data
    sampled = ctx.mask.lines[None, :, :, None]
    assert np.array_equal(fused, np.where(sampled, 0, v.data))


def test_fusion_image_branch_on_mask(rng):
    ctx, m, rho, v = _fusion_inputs(rng)
    fused = frequency_fusion(m, rho, v, ctx, FusionCoeffs(alpha=1.0, beta=0.0, gamma=0.0)).data
    sampled = ctx.mask.lines[None, :, :, None]
    assert np.array_equal(fused, np.where(sampled, encode_array(m.data, ctx), 0))


def test_fusion_spectrum_branch_on_mask(rng):
    ctx, m, rho, v = _fusion_inputs(rng)
    fused = frequency_fusion(m, rho, v, ctx, FusionCoeffs(alpha=0.0, beta=1.0, gamma=0.0)).data
    sampled = ctx.mask.lines[None, :, :, None]
    expected = np.where(sampled, encode_array(fftc(rho.data, (0,), "inverse"), ctx), 0)
    assert np.array_equal(fused, expected)


def test_fusion_checks_shapes(rng):
    ctx, m, rho, v = _fusion_inputs(rng)
    with pytest.raises(ShapeMismatchError):
        frequency_fusion(m, rho, KSpaceSeries(cplx(rng, 3, 3, 8, 6)), ctx, FusionCoeffs())


def test_disabled_priors_keep_zero_filled_input(rng):
    mask = make_mask(MaskSpec(ny=12, t_frames=4, acceleration=3, acs_lines=4))
    sens = SensitivityMaps(np.ones((1, 12, 10)))
    v_acq = apply_mask(KSpaceSeries(cplx(rng, 1, 4, 12, 10)), mask)
    report = reconstruct(v_acq, mask, _config(unroll_T=5, priors=ALL_OFF), sens=sens)
    np.testing.assert_allclose(report.state.v.data, v_acq.data, atol=1e-12)
    np.testing.assert_allclose(report.image, np.abs(fft2c(v_acq.data[0], "inverse")), atol=1e-12)
    assert report.kernel is None


def test_kt_input_completes_unsampled_lines_from_spectrum(rng):
    ctx = context(rng, n_coils=3, n_t=4, n_y=12, n_x=10)
    rho = TemporalSpectrum(cplx(rng, 4, 12, 10))
    v_acq = apply_mask(KSpaceSeries(cplx(rng, 3, 4, 12, 10)), ctx.mask)
    filled = kt_input(rho, v_acq, ctx).data
    estimate = fft2c(coil_expand(ImageSeries(fftc(rho.data, (0,), "inverse")), ctx.sens))
    sampled = ctx.mask.lines[None, :, :, None]
    np.testing.assert_array_equal(filled, np.where(sampled, v_acq.data, estimate))


def test_image_only_fusion_moves_multicoil_state(rng):
    # A S^H-projected state is consistent only when S S^H acts as the identity
    ctx = EncodingContext(sens=unit_maps(rng, 4, 12, 10), mask=context(rng, n_t=4).mask)
    v_acq = apply_mask(KSpaceSeries(cplx(rng, 4, 4, 12, 10)), ctx.mask)
    config = _config(unroll_T=1, priors=ALL_OFF, fusion={"alpha": 1.0, "beta": 0.0, "gamma": 1.0})
    state = run_iteration(initial_state(v_acq, ctx), v_acq, ctx, None, config, 0)

    coil_images = fft2c(apply_mask(v_acq, ctx.mask).data, "inverse")
    projected = np.sum(np.conj(ctx.sens.data)[:, None] * coil_images, axis=0)
    expected = fft2c(ctx.sens.data[:, None] * projected[None])
    np.testing.assert_allclose(state.v.data, expected, atol=1e-12)
    change = np.linalg.norm(state.v.data - v_acq.data) / np.linalg.norm(v_acq.data)
    assert change > 1e-3


def test_single_unroll_equals_one_iteration(rng):
    v_acq, mask, _ = _phantom_case(acceleration=2)
    config = _config(unroll_T=1, kt={"extents": [1, 3, 3]})
    sens = estimate_maps(v_acq, mask)
    kernel = calibrate_kernel(extract_acs(v_acq, mask), (1, 3, 3))
    report = reconstruct(v_acq, mask, config, kernel=kernel, sens=sens)

    ctx = EncodingContext(sens=sens, mask=mask)
    start = initial_state(v_acq, ctx)
    state = run_iteration(start, v_acq, ctx, kernel, config, 0, data_scale=float(np.max(np.abs(start.m.data))))
    np.testing.assert_array_equal(report.state.v.data, state.v.data)
    np.testing.assert_array_equal(report.state.m.data, state.m.data)


def test_run_iteration_checks_index(rng):
    v_acq, mask, _ = _phantom_case(acceleration=2)
    ctx = EncodingContext(sens=estimate_maps(v_acq, mask), mask=mask)
    with pytest.raises(IterationIndexError):
        run_iteration(initial_state(v_acq, ctx), v_acq, ctx, None, _config(unroll_T=2), 2)


def test_acquired_lines_survive_every_iteration(rng):
    v_acq, mask, _ = _phantom_case(acceleration=4, noise_std=0.01)
    report = reconstruct(v_acq, mask, _config(unroll_T=3, kt={"extents": [1, 3, 3]}))
    consistent = np.where(mask.lines[None, :, :, None], v_acq.data, report.state.v.data)
    np.testing.assert_allclose(report.image, rss(fft2c(consistent, "inverse")), atol=1e-12)


def test_kernel_alone_fills_missing_lines():
    # each coil line is c(t, kx) * (A e^{0.3i ky} + B e^{1.1i ky}), exactly predictable from ky +- 1
    rng = np.random.Generator(np.random.PCG64(5))
    n_t, n_y, n_x = 3, 17, 8
    ky = np.arange(n_y)[None, :, None]
    c = cplx(rng, n_t, 1, n_x)
    full = (c * (1.5 * np.exp(0.3j * ky) + (0.5 - 1j) * np.exp(1.1j * ky)))[None]
    mask = make_mask(MaskSpec(ny=n_y, t_frames=n_t, acceleration=2, acs_lines=5))
    v_acq = apply_mask(KSpaceSeries(full), mask)
    config = _config(
        unroll_T=2,
        priors={"xt": False, "xf": False, "kt": True},
        kt={"extents": [1, 3, 1], "tikhonov_rel": 0.0},
    )
    report = reconstruct(v_acq, mask, config, sens=SensitivityMaps(np.ones((1, n_y, n_x))))
    missing = ~mask.lines
    recovered = report.state.v.data[0][missing]
    truth = full[0][missing]
    assert np.sum(np.abs(recovered - truth) ** 2) / np.sum(np.abs(truth) ** 2) < 1e-8


def test_kernel_alone_recovers_multicoil_lines_in_one_pass():
    # coil i is c_i(t, kx) * (A_i e^{0.3i ky} + B_i e^{1.1i ky}); only its own ky +- 1 taps predict it
    rng = np.random.Generator(np.random.PCG64(8))
    n_c, n_t, n_y, n_x = 3, 3, 17, 8
    ky = np.arange(n_y)[None, None, :, None]
    c = cplx(rng, n_c, n_t, 1, n_x)
    a, b = cplx(rng, n_c, 1, 1, 1), cplx(rng, n_c, 1, 1, 1)
    full = c * (a * np.exp(0.3j * ky) + b * np.exp(1.1j * ky))
    mask = make_mask(MaskSpec(ny=n_y, t_frames=n_t, acceleration=2, acs_lines=5))
    v_acq = apply_mask(KSpaceSeries(full), mask)
    config = _config(
        unroll_T=1,
        priors={"xt": False, "xf": False, "kt": True},
        kt={"extents": [1, 3, 1], "tikhonov_rel": 1e-9},
    )
    sens = SensitivityMaps(np.full((n_c, n_y, n_x), 1 / np.sqrt(n_c)))
    report = reconstruct(v_acq, mask, config, sens=sens)
    missing = ~mask.lines
    recovered = report.state.v.data[:, missing]
    truth = full[:, missing]
    assert np.sum(np.abs(recovered - truth) ** 2) / np.sum(np.abs(truth) ** 2) < 1e-6


def test_full_sampling_reproduces_coil_combined_truth():
    v_acq, mask, reference = _phantom_case(acceleration=1)
    report = reconstruct(v_acq, mask, _config(unroll_T=2, kt={"extents": [1, 3, 3]}))
    assert nmse(report.image, reference) < 1e-10


def test_zero_input_gives_zero_image():
    mask = make_mask(MaskSpec(ny=8, t_frames=2, acceleration=2, acs_lines=2))
    report = reconstruct(KSpaceSeries(np.zeros((2, 2, 8, 8))), mask, _config(unroll_T=3))
    assert not np.any(report.image)
    assert report.image.shape == (2, 8, 8)
    assert [d.iteration for d in report.diagnostics] == [0, 1, 2]


def test_diagnostics_rows_and_csv():
    v_acq, mask, reference = _phantom_case(acceleration=2)
    report = reconstruct(
        v_acq,
        mask,
        _config(unroll_T=3, kt={"extents": [1, 3, 3]}),
        ground_truth=reference,
        metric_params=MetricParams(ssim_window=7),
    )
    assert len(report.diagnostics) == 3
    for row in report.diagnostics:
        assert row.dc_residual >= 0
        assert row.calib_residual is not None and row.calib_residual >= 0
        assert row.l1 is not None and 0 <= row.ssim_loss <= 2

    lines = diagnostics_csv(report).splitlines()
    assert lines[0] == ",".join(DIAGNOSTIC_COLUMNS)
    assert len(lines) == 4
    assert report.calib_loss_total == pytest.approx(sum(d.calib_residual for d in report.diagnostics))

    no_kernel = reconstruct(v_acq, mask, _config(unroll_T=2, priors={"kt": False}))
    assert all(d.calib_residual is None for d in no_kernel.diagnostics)
    assert diagnostics_csv(no_kernel).splitlines()[1].split(",")[2:] == ["", "", ""]


def test_reconstruction_is_deterministic():
    v_acq, mask, _ = _phantom_case(acceleration=4, noise_std=0.01)
    config = _config(unroll_T=2, kt={"extents": [1, 3, 3]})
    first = reconstruct(v_acq, mask, config)
    second = reconstruct(v_acq, mask, config)
    assert np.array_equal(first.image, second.image)


def test_image_state_output(rng):
    v_acq, mask, _ = _phantom_case(acceleration=2)
    report = reconstruct(v_acq, mask, _config(unroll_T=1, output_from="image_state", kt={"extents": [1, 3, 3]}))
    np.testing.assert_allclose(report.image, rss(coil_expand(report.state.m, report.sens)), atol=1e-12)


def test_ground_truth_shape_checked():
    v_acq, mask, reference = _phantom_case(acceleration=2)
    with pytest.raises(ShapeMismatchError):
        reconstruct(v_acq, mask, _config(unroll_T=1), ground_truth=reference[:, :-1])


def test_diagnostic_loss_terms(rng):
    ref = np.abs(cplx(rng, 2, 12, 12))
    exact = diagnostic_loss(ref, ref)
    assert exact.l1 == 0.0
    assert exact.ssim_loss == pytest.approx(0.0, abs=1e-9)
    assert exact.total == pytest.approx(0.0, abs=1e-9)

    recon = ref + 0.1 * np.abs(cplx(rng, 2, 12, 12))
    expected_l1 = sum(abs(a - b) for a, b in zip(recon.ravel(), ref.ravel())) / recon.size
    loss = diagnostic_loss(recon, ref)
    assert loss.l1 == pytest.approx(expected_l1, rel=1e-12)
    assert 0 < loss.ssim_loss < 1

    v_acs = KSpaceSeries(cplx(rng, 2, 2, 6, 6))
    zero = KtKernel(np.zeros((2, 2, 1, 3, 3)))
    with_kernel = diagnostic_loss(ref, ref, kernel=zero, v_acs=v_acs)
    assert with_kernel.calib_l1 == pytest.approx(1.0)
    assert with_kernel.total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.slow
def test_full_pipeline_beats_zero_filled():
    spec = small_phantom(ny=64, nx=64, t_frames=6, n_coils=4, noise_std=0.005, seed=11)
    ground_truth, maps = generate_phantom(spec)
    mask = make_mask(MaskSpec(ny=64, t_frames=6, acceleration=4, acs_lines=24))
    v_acq = simulate_acquisition(ground_truth, maps, mask, spec.noise_std, spec.seed)
    reference = rss(coil_expand(ground_truth, maps))

    zero_filled = rss(fft2c(v_acq.data, "inverse"))
    report = reconstruct(v_acq, mask, ReconConfig())
    assert nmse(report.image, reference) < nmse(zero_filled, reference)
