"""Acceleration x ablation sweep over seeded phantoms.

Every cell reconstructs one phantom at one acceleration with one set of
enabled priors and is scored against the RSS ground truth. Sensitivity maps
and the k-t kernel depend only on the ACS block, which every acceleration of
a phantom shares, so both are estimated once per phantom.
"""
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ktclair.logging_utils import get_logger
from ktclair.metrics import CaseMetrics, evaluate_case, report_table
from ktclair.models import ExperimentConfig, PriorToggles, ReconConfig, config_hash
from ktclair.phantom import generate_phantom, simulate_acquisition
from ktclair.pipeline import reconstruct
from ktclair.prior_kt import calibrate_kernel
from ktclair.sampling import extract_acs, make_mask
from ktclair.sensitivity import estimate_maps
from ktclair.tensors import KSpaceSeries, KtKernel, SamplingMask, SensitivityMaps
from ktclair.transforms import coil_expand, fft2c, rss

logger = get_logger("bench")

ZERO_FILLED = "zero-filled"
FULL = "full"


def method_label(disabled: list[str]) -> str:
    return FULL if not disabled else "minus-" + "-".join(disabled)


def bench_methods(config: ExperimentConfig) -> list[tuple[str, PriorToggles | None]]:
    """Zero-filled baseline, the full pipeline, then one entry per configured ablation."""
    methods: list[tuple[str, PriorToggles | None]] = [(ZERO_FILLED, None), (FULL, PriorToggles())]
    for subset in config.ablations:
        toggles = PriorToggles(**{name: False for name in subset})
        methods.append((method_label(toggles.disabled()), toggles))
    return methods


@dataclass(frozen=True, eq=False)
class PhantomCase:
    """One seeded phantom with its per-acceleration acquisitions and shared calibration."""

    seed: int
    tag: str
    reference: np.ndarray
    acquisitions: dict[int, tuple[KSpaceSeries, SamplingMask]]
    sens: SensitivityMaps
    kernel: KtKernel | None


@dataclass(frozen=True)
class CellResult:
    metrics: CaseMetrics
    seed: int
    elapsed_s: float
    final_dc_residual: float | None


def prepare_case(config: ExperimentConfig, seed: int, tag: str) -> PhantomCase:
    spec = config.phantom.model_copy(update={"seed": seed})
    ground_truth, true_maps = generate_phantom(spec)
    reference = rss(coil_expand(ground_truth, true_maps))

    acquisitions = {}
    for acceleration in config.bench.accelerations:
        mask_spec = config.mask.model_copy(
            update={"acceleration": acceleration, "offset": config.mask.offset % acceleration}
        )
        mask = make_mask(mask_spec)
        v_acq = simulate_acquisition(ground_truth, true_maps, mask, spec.noise_std, seed)
        acquisitions[acceleration] = (v_acq, mask)

    v_acq, mask = acquisitions[config.bench.accelerations[0]]
    sens = estimate_maps(v_acq, mask, config.recon.sens_eps_rel)
    kernel = None
    if any(toggles is not None and toggles.kt for _, toggles in bench_methods(config)):
        kernel = calibrate_kernel(extract_acs(v_acq, mask), config.recon.kt.extents, config.recon.kt.tikhonov_rel)
    return PhantomCase(seed, tag, reference, acquisitions, sens, kernel)


def run_cell(
    case: PhantomCase,
    acceleration: int,
    method: str,
    toggles: PriorToggles | None,
    config: ExperimentConfig,
) -> CellResult:
    started = time.perf_counter()
    v_acq, mask = case.acquisitions[acceleration]
    dc = None
    if toggles is None:
        image = rss(fft2c(v_acq.data, "inverse"))
    else:
        recon_cfg: ReconConfig = config.recon.model_copy(update={"priors": toggles})
        report = reconstruct(v_acq, mask, recon_cfg, kernel=case.kernel, sens=case.sens)
        image = report.image
        dc = report.diagnostics[-1].dc_residual
    metrics = evaluate_case(image, case.reference, config.metrics, method, acceleration, case.tag)
    elapsed = time.perf_counter() - started
    logger.info(
        "Bench cell done",
        method=method,
        acceleration=acceleration,
        seed=case.seed,
        nmse=metrics.nmse,
        ssim=metrics.ssim,
    )
    return CellResult(metrics=metrics, seed=case.seed, elapsed_s=elapsed, final_dc_residual=dc)


def run_bench(config: ExperimentConfig, serial: bool = True, max_workers: int | None = None) -> list[CellResult]:
    """Evaluate every (seed, acceleration, method) cell; results keep sweep order."""
    seeds = config.bench.seeds if config.bench.seeds is not None else [config.phantom.seed]
    base_tag = config.phantom.tag
    methods = bench_methods(config)

    results: list[CellResult] = []
    for seed in seeds:
        tag = base_tag if len(seeds) == 1 else f"{base_tag}#{seed}"
        case = prepare_case(config, seed, tag)
        cells = [(acc, name, toggles) for acc in config.bench.accelerations for name, toggles in methods]
        if serial:
            results.extend(run_cell(case, acc, name, toggles, config) for acc, name, toggles in cells)
        else:
            workers = max_workers or min(len(cells), os.cpu_count() or 1)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_cell, case, acc, name, toggles, config) for acc, name, toggles in cells]
                results.extend(f.result() for f in futures)
    return results


def calculate_bench_results(
    results: list[CellResult],
    config: ExperimentConfig,
    time_used: float,
) -> tuple[dict, str, str]:
    """Aggregate cells into ``(result_data, csv_text, summary)``."""
    rows = [r.metrics for r in results]
    csv_text = report_table(rows, config.metrics.crop_fraction)

    by_method: dict[str, list[CaseMetrics]] = {}
    for row in rows:
        by_method.setdefault(row.method, []).append(row)
    averages = {
        method: {
            "ssim": float(np.mean([r.ssim for r in group])),
            "nmse": float(np.mean([r.nmse for r in group])),
            "psnr": float(np.mean([r.psnr for r in group])),
            "cells": len(group),
        }
        for method, group in by_method.items()
    }

    zero_filled = {(r.seed, r.metrics.acceleration): r.metrics for r in results if r.metrics.method == ZERO_FILLED}
    full_cells = [r for r in results if r.metrics.method == FULL]
    beats_zero_filled = sum(
        1
        for r in full_cells
        if (r.seed, r.metrics.acceleration) in zero_filled
        and r.metrics.nmse < zero_filled[(r.seed, r.metrics.acceleration)].nmse
        and r.metrics.ssim > zero_filled[(r.seed, r.metrics.acceleration)].ssim
    )

    result_data = {
        "config_hash": config_hash(config),
        "unroll_T": config.recon.unroll_T,
        "accelerations": config.bench.accelerations,
        "crop_fraction": config.metrics.crop_fraction,
        "averages": averages,
        "full_beats_zero_filled": {"cells": beats_zero_filled, "of": len(full_cells)},
        "cells": [
            {**r.metrics.model_dump(), "seed": r.seed, "elapsed_s": round(r.elapsed_s, 3), "final_dc_residual": r.final_dc_residual}
            for r in results
        ],
        "time_used": time_used,
    }

    method_lines = "\n".join(
        f"  {method:<16} SSIM {a['ssim']:.4f}  NMSE {a['nmse']:.4f}  PSNR {a['psnr']:.2f}  ({a['cells']} cells)"
        for method, a in averages.items()
    )
    summary = f"""k-t reconstruction bench
Cells: {len(results)}
Accelerations: {", ".join(str(a) for a in config.bench.accelerations)}
Full beats zero-filled: {beats_zero_filled}/{len(full_cells)}
Time: {time_used:.1f}s

Averages by method:
{method_lines}"""
    return result_data, csv_text, summary
