import numpy as np
import pytest

from conftest import cplx, unit_maps
from ktclair.errors import (
    EmptyDimensionError,
    MaskError,
    NonFiniteError,
    NormalizationError,
    ShapeError,
    ShapeMismatchError,
)
from ktclair.tensors import (
    ImageSeries,
    KSpaceSeries,
    KtKernel,
    SamplingMask,
    SensitivityMaps,
    TemporalSpectrum,
    validate,
)


def test_valid_values_are_read_only(rng):
    m = ImageSeries(cplx(rng, 2, 4, 4))
    assert m.data.dtype == np.complex128
    with pytest.raises(ValueError):
        m.data[0, 0, 0] = 1.0


def test_image_needs_two_spatial_samples():
    with pytest.raises(EmptyDimensionError) as exc:
        ImageSeries(np.zeros((1, 1, 4)))
    assert exc.value.rule == "empty-dimension"


def test_wrong_rank_is_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        KSpaceSeries(np.zeros((2, 4, 4)))


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_non_finite_entries_rejected(rng, bad):
    data = cplx(rng, 2, 3, 4, 4)
    data[1, 2, 0, 3] = bad
    with pytest.raises(NonFiniteError):
        KSpaceSeries(data)


def test_maps_half_energy_pixel_is_non_normalized(rng):
    maps = unit_maps(rng, 2, 4, 4).data.copy()
    maps[:, 1, 2] *= np.sqrt(0.5)
    with pytest.raises(NormalizationError) as exc:
        SensitivityMaps(maps)
    assert "(1, 2)" in str(exc.value)


def test_maps_may_vanish_outside_support(rng):
    maps = unit_maps(rng, 3, 4, 4).data.copy()
    maps[:, 0, 0] = 0
    SensitivityMaps(maps)


def test_mask_frame_without_lines():
    lines = np.ones((3, 8), dtype=bool)
    lines[1] = False
    with pytest.raises(MaskError, match="frame 1"):
        SamplingMask(lines)


def test_mask_acs_must_be_fully_sampled():
    lines = np.zeros((2, 8), dtype=bool)
    lines[:, 3:5] = True
    lines[0, 5] = True
    SamplingMask(lines, acs_range=(3, 4))
    with pytest.raises(MaskError):
        SamplingMask(lines, acs_range=(3, 5))
    with pytest.raises(MaskError):
        SamplingMask(lines, acs_range=(6, 9))


def test_mask_acs_line_count():
    lines = np.ones((2, 8), dtype=bool)
    assert SamplingMask(lines, acs_range=(2, 5)).acs_lines == 4
    assert SamplingMask(lines).acs_lines == 0


def test_kernel_center_tap_must_vanish(rng):
    weights = cplx(rng, 2, 2, 3, 3, 3)
    with pytest.raises(ShapeMismatchError, match="self-center"):
        KtKernel(weights)
    weights[0, 0, 1, 1, 1] = 0
    weights[1, 1, 1, 1, 1] = 0
    kernel = KtKernel(weights)
    assert kernel.extents == (3, 3, 3)
    assert kernel.half_extents == (1, 1, 1)


def test_kernel_extents_must_be_odd():
    with pytest.raises(ShapeMismatchError, match="odd"):
        KtKernel(np.zeros((1, 1, 1, 2, 3)))


def test_kernel_coil_axes_must_agree():
    with pytest.raises(ShapeMismatchError):
        KtKernel(np.zeros((2, 3, 1, 3, 3)))


def test_shape_errors_are_value_errors():
    assert issubclass(ShapeError, ValueError)
    with pytest.raises(ValueError):
        TemporalSpectrum(np.zeros((0, 4, 4)))


def test_validate_rejects_unknown_types():
    with pytest.raises(TypeError):
        validate(np.zeros((2, 2)))
