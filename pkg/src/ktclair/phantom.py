"""Synthetic cine phantom, Gaussian coil profiles and k-space acquisition."""
import math

import numpy as np

from ktclair.errors import ShapeMismatchError
from ktclair.logging_utils import get_logger
from ktclair.models import CoilProfile, EllipseSpec, PhantomSpec
from ktclair.sampling import mask_array
from ktclair.tensors import ImageSeries, KSpaceSeries, SamplingMask, SensitivityMaps
from ktclair.transforms import coil_expand, fft2c

logger = get_logger("phantom")

# Default ellipse geometry: (center, axes, pulsation amplitude, pulsation phase, angle)
_CARDIAC_GEOMETRY = [
    ((0.0, 0.0), (0.82, 0.72), (0.0, 0.0), (0.0, 0.0), 0.0),  # thorax
    ((0.02, -0.42), (0.42, 0.22), (0.02, 0.02), (0.0, 0.0), 10.0),  # right lung
    ((0.02, 0.44), (0.40, 0.20), (0.02, 0.02), (0.0, 0.0), -10.0),  # left lung
    ((-0.08, 0.08), (0.30, 0.28), (0.10, 0.10), (0.0, 0.0), 0.0),  # myocardium
    ((-0.08, 0.08), (0.20, 0.18), (0.18, 0.18), (0.0, 0.0), 0.0),  # LV blood pool
    ((-0.02, -0.22), (0.16, 0.10), (0.15, 0.20), (0.6, 0.6), 20.0),  # RV blood pool
    ((0.62, 0.0), (0.09, 0.09), (0.0, 0.0), (0.0, 0.0), 0.0),  # spine
]

# Additive complex intensities (magnitude, phase) per contrast, same order as above
_INTENSITIES = {
    "cine": [(0.30, 0.0), (-0.22, 0.0), (-0.22, 0.0), (0.25, 0.1), (0.45, 0.1), (0.60, 0.1), (0.35, 0.0)],
    "t1w": [(0.40, 0.0), (-0.32, 0.0), (-0.32, 0.0), (0.35, 0.1), (0.15, 0.1), (0.20, 0.1), (0.50, 0.0)],
    "t2w": [(0.25, 0.0), (-0.18, 0.0), (-0.18, 0.0), (0.10, 0.1), (0.65, 0.1), (0.70, 0.1), (0.20, 0.0)],
}


def default_ellipses(contrast: str) -> list[EllipseSpec]:
    """Cardiac short-axis-like ellipse set with the intensity table of ``contrast``."""
    return [
        EllipseSpec(
            center=center,
            axes=axes,
            intensity=magnitude,
            phase=phase,
            angle=angle,
            pulsation=amplitude,
            pulsation_phase=pulse_phase,
        )
        for (center, axes, amplitude, pulse_phase, angle), (magnitude, phase) in zip(
            _CARDIAC_GEOMETRY, _INTENSITIES[contrast]
        )
    ]


def default_coils(n_coils: int, radius: float, width: float) -> list[CoilProfile]:
    """Coils evenly spaced on a ring, each with a distinct constant phase."""
    profiles = []
    for c in range(n_coils):
        angle = 2 * math.pi * c / n_coils
        profiles.append(
            CoilProfile(center=(radius * math.sin(angle), radius * math.cos(angle)), width=width, phase=angle)
        )
    return profiles


def normalized_grid(n_y: int, n_x: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates (j - N//2) / (N/2), broadcastable to (n_y, n_x)."""
    y = (np.arange(n_y) - n_y // 2) / (n_y / 2)
    x = (np.arange(n_x) - n_x // 2) / (n_x / 2)
    return y[:, None], x[None, :]


def semi_axes(ellipse: EllipseSpec, t: int, t_frames: int) -> tuple[float, float]:
    """Semi-axes at frame ``t``; the pulsation period is the whole sequence."""
    return tuple(
        a * (1 + amp * math.sin(2 * math.pi * t / t_frames + phase))
        for a, amp, phase in zip(ellipse.axes, ellipse.pulsation, ellipse.pulsation_phase)
    )


def ellipse_indicator(ellipse: EllipseSpec, n_y: int, n_x: int, t: int = 0, t_frames: int = 1) -> np.ndarray:
    """Boolean membership of every pixel in ``ellipse`` at frame ``t``."""
    y, x = normalized_grid(n_y, n_x)
    a_y, a_x = semi_axes(ellipse, t, t_frames)
    theta = math.radians(ellipse.angle)
    dy, dx = y - ellipse.center[0], x - ellipse.center[1]
    y_rot = math.cos(theta) * dy - math.sin(theta) * dx
    x_rot = math.sin(theta) * dy + math.cos(theta) * dx
    return (y_rot / a_y) ** 2 + (x_rot / a_x) ** 2 <= 1.0


def _jittered(ellipses: list[EllipseSpec], jitter: float, rng: np.random.Generator) -> list[EllipseSpec]:
    out = []
    for e in ellipses:
        dy, dx, di = rng.standard_normal(3) * jitter
        out.append(
            e.model_copy(
                update={
                    "center": (e.center[0] + dy, e.center[1] + dx),
                    "intensity": e.intensity * (1 + di),
                }
            )
        )
    return out


def coil_maps(spec: PhantomSpec) -> SensitivityMaps:
    """Gaussian profiles normalized so sum_c |S_c|^2 = 1 at every pixel."""
    profiles = spec.coils or default_coils(spec.n_coils, spec.coil_radius, spec.coil_width)
    y, x = normalized_grid(spec.ny, spec.nx)
    raw = np.stack(
        [
            np.exp(-((y - p.center[0]) ** 2 + (x - p.center[1]) ** 2) / (2 * p.width**2)) * np.exp(1j * p.phase)
            for p in profiles
        ]
    )
    norm = np.sqrt(np.sum(np.abs(raw) ** 2, axis=0))
    return SensitivityMaps(np.where(norm > 0, raw / np.where(norm > 0, norm, 1.0), 0))


def generate_phantom(spec: PhantomSpec) -> tuple[ImageSeries, SensitivityMaps]:
    """Temporally periodic ellipse phantom and its true coil maps, seeded by ``spec.seed``."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    ellipses = spec.ellipses if spec.ellipses is not None else default_ellipses(spec.contrast)
    if spec.jitter > 0:
        ellipses = _jittered(ellipses, spec.jitter, rng)

    frames = np.zeros((spec.t_frames, spec.ny, spec.nx), dtype=np.complex128)
    for t in range(spec.t_frames):
        for e in ellipses:
            value = e.intensity * np.exp(1j * e.phase)
            frames[t] += value * ellipse_indicator(e, spec.ny, spec.nx, t, spec.t_frames)

    logger.debug(
        "Generated phantom",
        shape=[spec.t_frames, spec.ny, spec.nx],
        ellipses=len(ellipses),
        coils=spec.n_coils,
        tag=spec.tag,
        seed=spec.seed,
    )
    return ImageSeries(frames), coil_maps(spec)


def simulate_acquisition(
    ground_truth: ImageSeries,
    maps: SensitivityMaps,
    mask: SamplingMask,
    noise_std: float,
    seed: int,
) -> KSpaceSeries:
    """M F S m plus masked circular Gaussian noise of per-component std noise_std * max|F S m|."""
    if tuple(maps.shape[1:]) != tuple(ground_truth.shape[1:]):
        raise ShapeMismatchError(f"maps {maps.shape[1:]} do not match image {ground_truth.shape[1:]}")
    clean = fft2c(coil_expand(ground_truth, maps))
    if noise_std > 0:
        rng = np.random.Generator(np.random.PCG64(seed))
        sigma = noise_std * float(np.max(np.abs(clean)))
        noise = rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
        clean = clean + sigma * noise
    return KSpaceSeries(mask_array(clean, mask))
