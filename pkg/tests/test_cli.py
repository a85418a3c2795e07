import json

import pytest

from ktclair.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, run_command

FULL_SAMPLING = {
    "phantom": {"ny": 32, "nx": 32, "t_frames": 4, "n_coils": 4, "noise_std": 0.0},
    "mask": {"acceleration": 1, "acs_lines": 12},
    "recon": {"unroll_T": 2, "kt": {"extents": [1, 3, 3]}},
    "metrics": {"crop_fraction": 1.0},
}

TINY_BENCH = {
    "phantom": {"ny": 32, "nx": 32, "t_frames": 4, "n_coils": 4},
    "mask": {"acs_lines": 8},
    "recon": {"unroll_T": 2, "kt": {"extents": [1, 3, 3]}},
    "metrics": {"crop_fraction": 0.5},
    "bench": {"accelerations": [2, 4]},
}


def _write(tmp_path, document, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)


def _run(command, config, out, *extra):
    return run_command([command, "--config", config, "--out", str(out), "--serial", *extra])


def test_full_sampling_pipeline_recovers_truth(tmp_path):
    config = _write(tmp_path, FULL_SAMPLING)
    out = tmp_path / "out"
    for command in ("phantom", "mask", "acquire", "recon", "eval"):
        assert _run(command, config, out) == EXIT_OK, command

    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["unroll_T"] == 2
    assert report["metrics"]["nmse"] < 1e-10
    for name in ("recon.ktc", "maps.ktc", "kernel.ktc", "report.csv", "metrics.csv"):
        assert (out / name).exists(), name
    assert len((out / "report.csv").read_text(encoding="utf-8").splitlines()) == 3


def test_eval_rejects_artifacts_from_another_config(tmp_path):
    config = _write(tmp_path, FULL_SAMPLING)
    out = tmp_path / "out"
    for command in ("phantom", "mask", "acquire", "recon"):
        assert _run(command, config, out) == EXIT_OK

    changed = _write(tmp_path, FULL_SAMPLING | {"recon": {"unroll_T": 3, "kt": {"extents": [1, 3, 3]}}}, "other.json")
    assert _run("eval", changed, out) == EXIT_IO
    assert _run("acquire", config, out, "--seed", "5") == EXIT_IO


def test_ablation_flag_skips_kernel(tmp_path):
    config = _write(tmp_path, FULL_SAMPLING)
    out = tmp_path / "out"
    for command in ("phantom", "mask", "acquire"):
        assert _run(command, config, out) == EXIT_OK
    assert _run("recon", config, out, "--ablate", "kt") == EXIT_OK
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["priors"] == {"xt": True, "xf": True, "kt": False}
    assert report["metrics"]["method"] == "minus-kt"
    assert not (out / "kernel.ktc").exists()


def test_eval_dumps_pgm_frames(tmp_path):
    config = _write(tmp_path, FULL_SAMPLING)
    out = tmp_path / "out"
    for command in ("phantom", "mask", "acquire", "recon"):
        assert _run(command, config, out) == EXIT_OK
    assert _run("eval", config, out, "--pgm") == EXIT_OK
    assert len(list((out / "pgm").glob("*.pgm"))) == 2 * 4


def test_missing_artifact_is_an_io_error(tmp_path):
    config = _write(tmp_path, FULL_SAMPLING)
    assert _run("recon", config, tmp_path / "empty") == EXIT_IO


def test_invalid_config_is_a_usage_error(tmp_path):
    config = _write(tmp_path, {"recon": {"unroll_T": 0}})
    assert _run("phantom", config, tmp_path / "out") == EXIT_USAGE
    assert _run("phantom", str(tmp_path / "absent.json"), tmp_path / "out") == EXIT_IO


def test_unknown_command_exits_with_usage_code():
    with pytest.raises(SystemExit) as exc:
        run_command(["teleport"])
    assert exc.value.code == EXIT_USAGE


def test_selftest_command_passes(tmp_path):
    assert run_command(["selftest", "--serial", "--out", str(tmp_path)]) == EXIT_OK


def test_bench_is_reproducible(tmp_path):
    config = _write(tmp_path, TINY_BENCH)
    assert _run("bench", config, tmp_path / "a") == EXIT_OK
    assert _run("bench", config, tmp_path / "b") == EXIT_OK

    first = (tmp_path / "a" / "bench.csv").read_bytes()
    assert first == (tmp_path / "b" / "bench.csv").read_bytes()

    lines = first.decode("utf-8").splitlines()
    assert lines[0] == "method,acceleration,tag,ssim,nmse,psnr,crop_fraction"
    methods = [line.split(",")[0] for line in lines[1:]]
    assert list(dict.fromkeys(methods)) == ["zero-filled", "full", "minus-xt", "minus-xf", "minus-kt"]
    assert len(lines) == 1 + 5 * 3
    assert lines[1].startswith("zero-filled,2,sax-cine,")
    assert lines[3].startswith("zero-filled,avg,Avg.,")

    result = json.loads((tmp_path / "a" / "bench.json").read_text(encoding="utf-8"))
    assert len(result["cells"]) == 10
    assert result["crop_fraction"] == 0.5
