"""Configuration records for masks, phantoms, reconstruction and evaluation.

Every record forbids unknown keys. Defaults follow the published protocol
where one exists: 12 unrolled iterations, fusion coefficients
(0.5, 0.5, 1.0), 24 ACS lines, acceleration 4.
"""
import hashlib
import json
import tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ktclair.errors import ConfigError

PriorName = Literal["xt", "xf", "kt"]

DEFAULT_ETA = 0.5
DEFAULT_ZETA = 0.5
DEFAULT_LAMBDA = 1.0


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class MaskSpec(_Record):
    """Cartesian ky-line sampling pattern."""

    ny: int | None = Field(default=None, ge=2, description="Number of ky lines; taken from the phantom when omitted.")
    t_frames: int | None = Field(default=None, ge=1, description="Number of frames; taken from the phantom when omitted.")
    acceleration: int = Field(default=4, ge=1, description="Nominal acceleration R.")
    acs_lines: int = Field(default=24, ge=0, description="Fully sampled calibration lines around ny // 2.")
    offset: int = Field(default=0, ge=0, description="First sampled residue class.")
    interleaved: bool = Field(default=False, description="Shift the offset by one per frame, modulo R.")

    @model_validator(mode="after")
    def _check_geometry(self):
        if self.offset >= self.acceleration:
            raise ValueError(f"offset {self.offset} must be < acceleration {self.acceleration}")
        if self.ny is not None and self.acs_lines > self.ny:
            raise ValueError(f"acs_lines {self.acs_lines} exceeds ny {self.ny}")
        return self


class CoilProfile(_Record):
    """Gaussian receive profile in normalized coordinates [-1, 1]."""

    center: tuple[float, float] = Field(description="Profile center (y, x).")
    width: float = Field(gt=0, description="Gaussian standard deviation.")
    phase: float = Field(default=0.0, description="Constant coil phase in radians.")


class EllipseSpec(_Record):
    """One additive ellipse with sinusoidally pulsating semi-axes."""

    center: tuple[float, float] = Field(description="Center (y, x) in normalized coordinates.")
    axes: tuple[float, float] = Field(description="Semi-axes (ay, ax) at zero pulsation.")
    intensity: float = Field(description="Magnitude of the complex intensity.")
    phase: float = Field(default=0.0, description="Phase of the complex intensity in radians.")
    angle: float = Field(default=0.0, description="Rotation in degrees.")
    pulsation: tuple[float, float] = Field(default=(0.0, 0.0), description="Relative pulsation amplitude per axis.")
    pulsation_phase: tuple[float, float] = Field(default=(0.0, 0.0), description="Pulsation phase per axis in radians.")

    @model_validator(mode="after")
    def _check_axes(self):
        if min(self.axes) <= 0:
            raise ValueError(f"semi-axes must be positive, got {self.axes}")
        if any(not 0.0 <= a < 1.0 for a in self.pulsation):
            raise ValueError(f"pulsation amplitudes must lie in [0, 1), got {self.pulsation}")
        return self


class PhantomSpec(_Record):
    """Synthetic dynamic phantom and multi-coil acquisition settings."""

    ny: int = Field(default=192, ge=2)
    nx: int = Field(default=192, ge=2)
    t_frames: int = Field(default=12, ge=1)
    n_coils: int = Field(default=8, ge=1)
    ellipses: list[EllipseSpec] | None = Field(default=None, description="Explicit ellipse set; the cardiac default when omitted.")
    coils: list[CoilProfile] | None = Field(default=None, description="Explicit coil profiles; a ring around the field of view when omitted.")
    coil_width: float = Field(default=0.8, gt=0, description="Gaussian width of the default coil ring.")
    coil_radius: float = Field(default=1.1, ge=0, description="Radius of the default coil ring.")
    noise_std: float = Field(default=0.01, ge=0, description="Noise std relative to max |F_s S m|.")
    seed: int = Field(default=0, ge=0)
    contrast: Literal["cine", "t1w", "t2w"] = Field(default="cine", description="Intensity table of the default ellipses.")
    view: str = Field(default="sax", description="View tag used in reports.")
    jitter: float = Field(default=0.02, ge=0, description="Seeded perturbation of ellipse centers and intensities.")

    @model_validator(mode="after")
    def _check_coils(self):
        if self.coils is not None and len(self.coils) != self.n_coils:
            raise ValueError(f"{len(self.coils)} coil profiles given for n_coils={self.n_coils}")
        return self

    @property
    def tag(self) -> str:
        return f"{self.view}-{self.contrast}"


class XtParams(_Record):
    """Image-domain gradient step and smoothed-TV prior."""

    eta: list[float] | None = Field(default=None, description="Step sizes per iteration.")
    lambda_: list[float] | None = Field(default=None, alias="lambda", description="Data weights per iteration.")
    prior_kind: Literal["zero", "smoothed-tv-3d"] = "smoothed-tv-3d"
    tv_eps: float = Field(default=1e-3, gt=0, description="Smoothing constant relative to max |A^H v|.")
    tv_weight: float = Field(default=2e-3, ge=0, description="Prior weight relative to max |A^H v|.")


class XfParams(_Record):
    """Temporal-frequency gradient step and soft-threshold prior."""

    zeta: list[float] | None = Field(default=None, description="Step sizes per iteration.")
    lambda_: list[float] | None = Field(default=None, alias="lambda", description="Data weights per iteration.")
    tau_rel: float = Field(default=0.02, ge=0, lt=1, description="Threshold as a fraction of max |rho|.")
    protect_dc: bool = Field(default=True, description="Leave the zero temporal frequency unshrunk.")


class KtParams(_Record):
    """Calibrated k-t kernel geometry."""

    extents: tuple[int, int, int] = Field(default=(3, 5, 5), description="Kernel extents (dt, dky, dkx).")
    tikhonov_rel: float = Field(default=1e-2, ge=0, description="Tikhonov weight relative to trace(P^H P)/rows.")

    @model_validator(mode="after")
    def _check_extents(self):
        if any(e < 1 or e % 2 == 0 for e in self.extents):
            raise ValueError(f"kernel extents must be odd and positive, got {self.extents}")
        return self


class FusionCoeffs(_Record):
    alpha: float = Field(default=0.5, ge=0)
    beta: float = Field(default=0.5, ge=0)
    gamma: float = Field(default=1.0, ge=0)


class PriorToggles(_Record):
    """Per-prior enable flags used for ablations."""

    xt: bool = True
    xf: bool = True
    kt: bool = True

    def disabled(self) -> list[str]:
        return [name for name in ("xt", "xf", "kt") if not getattr(self, name)]


class ReconConfig(_Record):
    """Unrolled multi-prior reconstruction settings."""

    unroll_T: int = Field(default=12, ge=1, description="Number of unrolled iterations.")
    xt: XtParams = Field(default_factory=XtParams)
    xf: XfParams = Field(default_factory=XfParams)
    kt: KtParams = Field(default_factory=KtParams)
    fusion: FusionCoeffs = Field(default_factory=FusionCoeffs)
    sens_eps_rel: float = Field(default=1e-6, gt=0, description="Relative support threshold for map estimation.")
    priors: PriorToggles = Field(default_factory=PriorToggles)
    output_from: Literal["fused_kspace", "image_state"] = "fused_kspace"

    @model_validator(mode="after")
    def _fill_schedules(self):
        n = self.unroll_T
        if self.xt.eta is None:
            self.xt.eta = [DEFAULT_ETA] * n
        if self.xt.lambda_ is None:
            self.xt.lambda_ = [DEFAULT_LAMBDA] * n
        if self.xf.zeta is None:
            self.xf.zeta = [DEFAULT_ZETA] * n
        if self.xf.lambda_ is None:
            self.xf.lambda_ = [DEFAULT_LAMBDA] * n
        for name, schedule in (
            ("xt.eta", self.xt.eta),
            ("xt.lambda", self.xt.lambda_),
            ("xf.zeta", self.xf.zeta),
            ("xf.lambda", self.xf.lambda_),
        ):
            if len(schedule) != n:
                raise ValueError(f"{name} has {len(schedule)} entries, unroll_T is {n}")
        if any(e <= 0 for e in self.xt.eta) or any(z <= 0 for z in self.xf.zeta):
            raise ValueError("step sizes must be positive")
        return self


class MetricParams(_Record):
    """SSIM constants and the evaluation crop."""

    ssim_window: int = Field(default=7, ge=1, description="Odd side of the uniform SSIM window.")
    k1: float = Field(default=0.01, gt=0)
    k2: float = Field(default=0.03, gt=0)
    data_range: float | None = Field(default=None, gt=0, description="Explicit L; max of the reference when omitted.")
    crop_fraction: float = Field(default=1.0 / 6.0, gt=0, le=1, description="Kept fraction of each spatial axis.")

    @model_validator(mode="after")
    def _check_window(self):
        if self.ssim_window % 2 == 0:
            raise ValueError(f"ssim_window must be odd, got {self.ssim_window}")
        return self


class BenchConfig(_Record):
    """Sweep performed by the ``bench`` command."""

    accelerations: list[int] = Field(default_factory=lambda: [4, 8, 10])
    seeds: list[int] | None = Field(default=None, description="Phantom seeds; the phantom seed alone when omitted.")


class ExperimentConfig(_Record):
    """Complete, reproducible experiment description."""

    phantom: PhantomSpec = Field(default_factory=PhantomSpec)
    mask: MaskSpec = Field(default_factory=MaskSpec)
    recon: ReconConfig = Field(default_factory=ReconConfig)
    metrics: MetricParams = Field(default_factory=MetricParams)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    output_dir: str = Field(default="output", description="Artifact directory.")
    ablations: list[list[PriorName]] = Field(
        default_factory=lambda: [["xt"], ["xf"], ["kt"]],
        description="Prior subsets disabled by the bench sweep.",
    )

    @model_validator(mode="after")
    def _resolve_mask(self):
        for name, ours, theirs in (
            ("ny", self.mask.ny, self.phantom.ny),
            ("t_frames", self.mask.t_frames, self.phantom.t_frames),
        ):
            if ours is not None and ours != theirs:
                raise ValueError(f"mask.{name}={ours} disagrees with phantom.{name}={theirs}")
        self.mask = MaskSpec.model_validate(
            self.mask.model_dump() | {"ny": self.phantom.ny, "t_frames": self.phantom.t_frames}
        )
        return self


def _describe(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(text: str) -> ExperimentConfig:
    """Parse a JSON experiment document, applying defaults for absent fields."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON parse error at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return config_from_dict(data)


def config_from_dict(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


def load_config(path: Path | str | None) -> ExperimentConfig:
    """Read a JSON or TOML experiment file; ``None`` yields the default config."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            return config_from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"TOML parse error: {e}") from e
    return parse_config(text)


def dump_config(config: ExperimentConfig) -> str:
    return config.model_dump_json(by_alias=True, indent=2)


def config_hash(config: ExperimentConfig) -> str:
    """First 16 hex digits of SHA-256 over the canonical JSON form."""
    canonical = json.dumps(config.model_dump(mode="json", by_alias=True), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def with_overrides(
    config: ExperimentConfig,
    seed: int | None = None,
    ablate: list[str] | tuple[str, ...] = (),
) -> ExperimentConfig:
    """Copy of ``config`` with the command-line overrides applied."""
    data = config.model_dump(by_alias=True)
    if seed is not None:
        data["phantom"]["seed"] = seed
    for name in ablate:
        data["recon"]["priors"][name] = False
    return config_from_dict(data)


STAGE_SECTIONS: dict[str, tuple[str, ...] | None] = {
    "phantom": ("phantom",),
    "mask": ("mask",),
    "kspace": ("phantom", "mask"),
    "recon": None,
}


def stage_hash(config: ExperimentConfig, stage: str) -> str:
    """Hash of the configuration sections an artifact of ``stage`` depends on."""
    if stage not in STAGE_SECTIONS:
        raise ConfigError(f"unknown artifact stage {stage!r}")
    sections = STAGE_SECTIONS[stage]
    if sections is None:
        return config_hash(config)
    data = config.model_dump(mode="json", by_alias=True, include=set(sections))
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
