import numpy as np
import pytest

from ktclair.models import MaskSpec, PhantomSpec
from ktclair.sampling import make_mask
from ktclair.tensors import SensitivityMaps
from ktclair.transforms import EncodingContext, set_fft_workers


def cplx(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def unit_maps(rng: np.random.Generator, n_coils: int, n_y: int, n_x: int) -> SensitivityMaps:
    raw = cplx(rng, n_coils, n_y, n_x)
    return SensitivityMaps(raw / np.sqrt(np.sum(np.abs(raw) ** 2, axis=0)))


def context(rng, n_coils=3, n_t=4, n_y=12, n_x=10, acceleration=2, acs_lines=4) -> EncodingContext:
    mask = make_mask(MaskSpec(ny=n_y, t_frames=n_t, acceleration=acceleration, acs_lines=acs_lines, interleaved=True))
    return EncodingContext(sens=unit_maps(rng, n_coils, n_y, n_x), mask=mask)


def small_phantom(**overrides) -> PhantomSpec:
    base = {"ny": 32, "nx": 32, "t_frames": 6, "n_coils": 4, "noise_std": 0.0, "seed": 3}
    return PhantomSpec(**(base | overrides))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture(autouse=True)
def serial_fft():
    set_fft_workers(1)
    yield
    set_fft_workers(1)
