"""Unrolled multi-prior dynamic parallel-MRI reconstruction."""
from ktclair.models import ExperimentConfig, ReconConfig, load_config, parse_config
from ktclair.pipeline import ReconReport, reconstruct
from ktclair.tensors import ImageSeries, KSpaceSeries, KtKernel, SamplingMask, SensitivityMaps, TemporalSpectrum

__all__ = [
    "ExperimentConfig",
    "ImageSeries",
    "KSpaceSeries",
    "KtKernel",
    "ReconConfig",
    "ReconReport",
    "SamplingMask",
    "SensitivityMaps",
    "TemporalSpectrum",
    "load_config",
    "parse_config",
    "reconstruct",
]
