import numpy as np
import pytest

from conftest import context, cplx, unit_maps
from ktclair.errors import ShapeMismatchError
from ktclair.tensors import ImageSeries, KSpaceSeries, TemporalSpectrum
from ktclair.transforms import (
    adjoint_op,
    coil_combine,
    coil_expand,
    data_residual,
    fft1t,
    fft2c,
    fidelity_grad,
    forward_op,
    rss,
)


def test_constant_image_lands_on_center():
    k = fft2c(np.ones((4, 4)))
    assert k[2, 2] == pytest.approx(4.0)
    k[2, 2] = 0
    np.testing.assert_allclose(k, 0, atol=1e-12)


def test_odd_size_center_is_floor_half():
    k = fft2c(np.ones((5, 3)))
    assert abs(k[2, 1]) == pytest.approx(np.sqrt(15))


@pytest.mark.parametrize("shape", [(4, 6), (5, 7), (2, 3, 8, 9)])
def test_fft2c_is_unitary(rng, shape):
    x = cplx(rng, *shape)
    assert np.linalg.norm(fft2c(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    np.testing.assert_allclose(fft2c(fft2c(x), "inverse"), x, atol=1e-12)


def test_temporal_transform_round_trip(rng):
    m = ImageSeries(cplx(rng, 7, 4, 4))
    rho = fft1t(m)
    assert isinstance(rho, TemporalSpectrum)
    np.testing.assert_allclose(fft1t(rho, "inverse").data, m.data, atol=1e-12)
    assert np.linalg.norm(rho.data) == pytest.approx(np.linalg.norm(m.data), rel=1e-12)


def test_temporal_transform_checks_direction_types(rng):
    with pytest.raises(TypeError):
        fft1t(TemporalSpectrum(cplx(rng, 2, 2, 2)))
    with pytest.raises(TypeError):
        fft1t(ImageSeries(cplx(rng, 2, 2, 2)), "inverse")


def test_static_series_has_only_dc_plane(rng):
    frame = cplx(rng, 4, 4)
    rho = fft1t(ImageSeries(np.stack([frame] * 6))).data
    np.testing.assert_allclose(rho[3], np.sqrt(6) * frame, atol=1e-12)
    np.testing.assert_allclose(np.delete(rho, 3, axis=0), 0, atol=1e-12)


def test_coil_combine_inverts_expand(rng):
    sens = unit_maps(rng, 2, 5, 6)
    m = ImageSeries(cplx(rng, 3, 5, 6))
    np.testing.assert_allclose(coil_combine(coil_expand(m, sens), sens).data, m.data, atol=1e-12)


def test_rss_of_normalized_expansion_is_magnitude(rng):
    sens = unit_maps(rng, 4, 5, 6)
    m = ImageSeries(cplx(rng, 2, 5, 6))
    np.testing.assert_allclose(rss(coil_expand(m, sens)), np.abs(m.data), atol=1e-12)


def test_rss_pythagorean():
    x = np.array([3.0 + 0j, 4j]).reshape(2, 1, 1, 1)
    assert rss(x)[0, 0, 0] == pytest.approx(5.0)


def test_encoding_adjointness(rng):
    for _ in range(20):
        ctx = context(rng)
        m = cplx(rng, 4, 12, 10)
        v = cplx(rng, 3, 4, 12, 10)
        lhs = np.vdot(forward_op(ImageSeries(m), ctx).data, v)
        rhs = np.vdot(m, adjoint_op(KSpaceSeries(v), ctx).data)
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_forward_zeroes_unsampled_lines(rng):
    ctx = context(rng)
    v = forward_op(ImageSeries(cplx(rng, 4, 12, 10)), ctx).data
    unsampled = ~ctx.mask.lines
    assert np.all(v[:, unsampled, :] == 0)


def test_fidelity_gradient_matches_finite_differences(rng):
    ctx = context(rng, n_coils=2, n_t=3, n_y=8, n_x=8)
    m = cplx(rng, 3, 8, 8)
    v_acq = forward_op(ImageSeries(cplx(rng, 3, 8, 8)), ctx)
    grad = fidelity_grad(ImageSeries(m), v_acq, ctx).data

    def objective(x):
        return 0.5 * np.linalg.norm(forward_op(ImageSeries(x), ctx).data - v_acq.data) ** 2

    h = 1e-6
    for _ in range(10):
        d = cplx(rng, 3, 8, 8)
        numeric = (objective(m + h * d) - objective(m - h * d)) / (2 * h)
        assert numeric == pytest.approx(np.real(np.vdot(grad, d)), rel=1e-6)


def test_data_residual_of_consistent_image_is_zero(rng):
    ctx = context(rng)
    m = cplx(rng, 4, 12, 10)
    v_acq = forward_op(ImageSeries(m), ctx).data
    assert data_residual(m, v_acq, ctx) == pytest.approx(0.0, abs=1e-14)
    assert data_residual(np.zeros_like(m), np.zeros_like(v_acq), ctx) == 0.0


def test_shape_mismatch_is_reported(rng):
    ctx = context(rng)
    with pytest.raises(ShapeMismatchError):
        forward_op(ImageSeries(cplx(rng, 4, 12, 8)), ctx)
    with pytest.raises(ShapeMismatchError):
        coil_combine(cplx(rng, 2, 4, 12, 10), ctx.sens)
