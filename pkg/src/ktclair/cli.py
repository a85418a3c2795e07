"""Command-line front end: phantom, mask, acquire, recon, eval, bench, selftest.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O, file-format or
artifact-mismatch error, 3 numerical failure.
"""
import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

from ktclair.bench import calculate_bench_results, method_label, run_bench
from ktclair.errors import (
    ArtifactMismatchError,
    ConfigError,
    KtcFormatError,
    KtClairError,
)
from ktclair.ktc import read_ktc, write_ktc
from ktclair.logging_utils import configure_logger
from ktclair.metrics import evaluate_case, report_table, write_error_maps
from ktclair.models import ExperimentConfig, config_hash, load_config, stage_hash, with_overrides
from ktclair.phantom import generate_phantom, simulate_acquisition
from ktclair.pipeline import diagnostics_csv, reconstruct
from ktclair.sampling import make_mask
from ktclair.selftest import run_selftest
from ktclair.tensors import ImageSeries, KSpaceSeries, SamplingMask, SensitivityMaps
from ktclair.transforms import coil_expand, rss, set_fft_workers

# Load .env for local development only (doesn't override existing env vars)
load_dotenv(override=False)
logger = configure_logger(role="cli")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3

GROUND_TRUTH = "ground_truth.ktc"
TRUE_MAPS = "true_maps.ktc"
MASK = "mask.ktc"
KSPACE = "kspace.ktc"
RECON = "recon.ktc"
MAPS = "maps.ktc"
KERNEL = "kernel.ktc"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(out: Path, name: str, expected_hash: str, kind: type):
    path = out / name
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run the producing command first")
    value, header = read_ktc(path)
    if not isinstance(value, kind):
        raise KtcFormatError(f"{path} holds {header.kind}, expected {kind.__name__}")
    if header.config_hash != expected_hash:
        raise ArtifactMismatchError(
            f"{path} was produced under config {header.config_hash}, current config is {expected_hash}"
        )
    return value


def cmd_phantom(config: ExperimentConfig, out: Path) -> None:
    ground_truth, maps = generate_phantom(config.phantom)
    digest = stage_hash(config, "phantom")
    write_ktc(out / GROUND_TRUTH, ground_truth, config_hash=digest)
    write_ktc(out / TRUE_MAPS, maps, config_hash=digest)
    logger.info("Wrote phantom", out=str(out), shape=list(ground_truth.shape), tag=config.phantom.tag)


def cmd_mask(config: ExperimentConfig, out: Path) -> None:
    mask = make_mask(config.mask)
    write_ktc(out / MASK, mask, config_hash=stage_hash(config, "mask"))
    logger.info("Wrote mask", acceleration=mask.acceleration, acs_range=mask.acs_range)


def cmd_acquire(config: ExperimentConfig, out: Path) -> None:
    ground_truth = _read(out, GROUND_TRUTH, stage_hash(config, "phantom"), ImageSeries)
    maps = _read(out, TRUE_MAPS, stage_hash(config, "phantom"), SensitivityMaps)
    mask = _read(out, MASK, stage_hash(config, "mask"), SamplingMask)
    v_acq = simulate_acquisition(ground_truth, maps, mask, config.phantom.noise_std, config.phantom.seed)
    write_ktc(out / KSPACE, v_acq, config_hash=stage_hash(config, "kspace"))
    logger.info("Wrote acquired k-space", coils=v_acq.n_coils, noise_std=config.phantom.noise_std)


def _reference(out: Path, config: ExperimentConfig) -> np.ndarray | None:
    if not (out / GROUND_TRUTH).exists():
        return None
    ground_truth = _read(out, GROUND_TRUTH, stage_hash(config, "phantom"), ImageSeries)
    maps = _read(out, TRUE_MAPS, stage_hash(config, "phantom"), SensitivityMaps)
    return rss(coil_expand(ground_truth, maps))


def cmd_recon(config: ExperimentConfig, out: Path) -> None:
    v_acq = _read(out, KSPACE, stage_hash(config, "kspace"), KSpaceSeries)
    mask = _read(out, MASK, stage_hash(config, "mask"), SamplingMask)
    reference = _reference(out, config)

    report = reconstruct(v_acq, mask, config.recon, ground_truth=reference, metric_params=config.metrics)
    digest = config_hash(config)
    write_ktc(out / RECON, ImageSeries(report.image), config_hash=digest)
    write_ktc(out / MAPS, report.sens, config_hash=digest)
    if report.kernel is not None:
        write_ktc(out / KERNEL, report.kernel, config_hash=digest)
    (out / "report.csv").write_text(diagnostics_csv(report), encoding="utf-8")

    summary = {"config_hash": digest, **report.summary()}
    if reference is not None:
        metrics = evaluate_case(
            report.image, reference, config.metrics, method_label(config.recon.priors.disabled()),
            config.mask.acceleration, config.phantom.tag,
        )
        summary["metrics"] = metrics.model_dump()
    (out / "report.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    logger.info("Wrote reconstruction", out=str(out), **{k: summary[k] for k in ("unroll_T", "final_dc_residual")})


def cmd_eval(config: ExperimentConfig, out: Path, pgm: bool = False) -> None:
    recon = _read(out, RECON, config_hash(config), ImageSeries)
    reference = _reference(out, config)
    if reference is None:
        raise FileNotFoundError(f"{out / GROUND_TRUTH} not found; run `phantom` first")
    image = np.abs(recon.data)
    metrics = evaluate_case(
        image, reference, config.metrics, method_label(config.recon.priors.disabled()),
        config.mask.acceleration, config.phantom.tag,
    )
    (out / "metrics.csv").write_text(report_table([metrics], config.metrics.crop_fraction), encoding="utf-8")
    if pgm:
        write_error_maps(out / "pgm", image, reference)
    logger.info("Wrote metrics", ssim=metrics.ssim, nmse=metrics.nmse, psnr=metrics.psnr)


def cmd_bench(config: ExperimentConfig, out: Path, serial: bool) -> None:
    started = time.perf_counter()
    results = run_bench(config, serial=serial)
    result_data, csv_text, summary = calculate_bench_results(results, config, time.perf_counter() - started)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.csv").write_text(csv_text, encoding="utf-8")
    (out / "bench.json").write_text(json.dumps(result_data, indent=2), encoding="utf-8")
    logger.info(f"Bench complete\n{summary}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ktclair", description="Unrolled multi-prior k-t reconstruction toolkit")
    parser.add_argument("command", choices=["phantom", "mask", "acquire", "recon", "eval", "bench", "selftest"])
    parser.add_argument("--config", type=Path, help="Experiment config (JSON or TOML)")
    parser.add_argument("--out", type=Path, help="Artifact directory (default: config output_dir)")
    parser.add_argument("--seed", type=int, help="Override the phantom seed")
    parser.add_argument("--serial", action="store_true", help="Single FFT worker and sequential bench cells")
    parser.add_argument("--ablate", action="append", choices=["xt", "xf", "kt"], default=[],
                        help="Disable a prior (repeatable)")
    parser.add_argument("--pgm", action="store_true", help="eval: also dump reconstruction and error frames")
    return parser


def run_command(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = with_overrides(load_config(args.config), seed=args.seed, ablate=args.ablate)
    except ConfigError as e:
        logger.error("Invalid configuration", error=str(e))
        return EXIT_USAGE
    except OSError as e:
        logger.error("Cannot read configuration", error=str(e))
        return EXIT_IO

    set_fft_workers(1 if args.serial else -1)
    out = args.out or Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        match args.command:
            case "phantom":
                cmd_phantom(config, out)
            case "mask":
                cmd_mask(config, out)
            case "acquire":
                cmd_acquire(config, out)
            case "recon":
                cmd_recon(config, out)
            case "eval":
                cmd_eval(config, out, pgm=args.pgm)
            case "bench":
                cmd_bench(config, out, serial=args.serial)
            case "selftest":
                run_selftest(seed=config.phantom.seed)
    except (OSError, KtcFormatError, ArtifactMismatchError) as e:
        logger.error("I/O failure", command=args.command, error=f"{type(e).__name__}: {e}")
        return EXIT_IO
    except ConfigError as e:
        logger.error("Invalid configuration", command=args.command, error=str(e))
        return EXIT_USAGE
    except (KtClairError, np.linalg.LinAlgError) as e:
        logger.error("Numerical failure", command=args.command, error=f"{type(e).__name__}: {e}")
        return EXIT_NUMERICAL
    return EXIT_OK


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
