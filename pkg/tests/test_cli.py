import json
import math

import pytest

from stochdyn.cli import (
    ConfigParseError,
    SystemConfig,
    build_system,
    load_config,
    main,
    parse_alpha,
)
from stochdyn.exactnum import INFINITY, normalize_point

EXAMPLE = {
    "maps": [
        {"num_coeffs": [0, 0, 1], "den_coeffs": [1], "prob": "1/2"},
        {"num_coeffs": [0, 0, 2], "den_coeffs": [1], "prob": "1/2"},
    ],
    "seed": 11,
    "depth": 20,
    "samples": 4000,
    "tol": 1e-3,
}


@pytest.fixture()
def example_config(tmp_path):
    path = tmp_path / "example.json"
    path.write_text(json.dumps(EXAMPLE))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_parse_alpha():
    assert parse_alpha("inf") == INFINITY
    assert parse_alpha("7/3") == normalize_point(7, 3)
    assert parse_alpha("-2") == normalize_point(-2, 1)
    with pytest.raises(ConfigParseError):
        parse_alpha("abc")


def test_load_config_defaults(tmp_path):
    path = tmp_path / "min.json"
    path.write_text(json.dumps({"maps": EXAMPLE["maps"]}))
    cfg = load_config(str(path))
    assert cfg.depth == 30 and cfg.samples == 100000 and cfg.seed == 0
    assert cfg.tol == 1e-3 and len(cfg.sha256) == 64
    system = build_system(cfg)
    assert len(system.maps) == 2


def test_validate_report(capsys, example_config):
    code, out, _ = run_cli(capsys, "validate", "--config", example_config)
    assert code == 0
    record = json.loads(out)
    assert record["stochastic_degree"] == 2.0
    assert record["exceptional_set"] == ["0", "inf"]
    assert record["maps"][1]["bad_primes"] == [2]
    assert record["distortion_budget"] == pytest.approx(math.log(2) / 2)
    assert record["seed"] == 11
    assert record["version"] and len(record["config_sha256"]) == 64


def test_exit_codes(capsys, tmp_path, example_config):
    code, _, err = run_cli(capsys, "validate", "--config",
                           str(tmp_path / "missing.json"))
    assert code == 2 and "cannot read" in err

    mangled = tmp_path / "mangled.json"
    mangled.write_text("{nope")
    code, _, _ = run_cli(capsys, "validate", "--config", str(mangled))
    assert code == 2

    badprob = tmp_path / "badprob.json"
    badprob.write_text(json.dumps({"maps": [
        {"num_coeffs": [0, 0, 1], "den_coeffs": [1], "prob": "9/10"}]}))
    code, _, err = run_cli(capsys, "validate", "--config", str(badprob))
    assert code == 3

    deg1 = tmp_path / "deg1.json"
    deg1.write_text(json.dumps({"maps": [
        {"num_coeffs": [0, 1], "den_coeffs": [1], "prob": "1"}]}))
    code, _, err = run_cli(capsys, "validate", "--config", str(deg1))
    assert code == 3 and "DegreeTooLow" in err

    code, _, err = run_cli(capsys, "equidist", "--config", example_config,
                           "0", "--samples", "10", "--depth", "3")
    assert code == 4 and "ExceptionalStart" in err

    code, _, _ = run_cli(capsys, "equidist", "--config", example_config,
                         "1", "--place", "xyz")
    assert code == 2


def test_height_command(capsys, example_config):
    code, out, _ = run_cli(capsys, "height", "--config", example_config, "3/2")
    assert code == 0
    record = json.loads(out)
    assert record["weil_height"] == pytest.approx(math.log(3))
    assert record["alpha"] == "3/2"


def test_stoch_height_command(capsys, example_config):
    code, out, _ = run_cli(capsys, "stoch-height", "--config", example_config,
                           "1")
    assert code == 0
    record = json.loads(out)
    assert record["mode"] == "exact"
    assert record["value"] == pytest.approx(math.log(2) / 2, abs=1e-3)
    assert record["tail_bound"] <= 1e-3


def test_green_eval_command(capsys, example_config):
    code, out, _ = run_cli(capsys, "green-eval", "--config", example_config,
                           "0")
    assert code == 0
    record = json.loads(out)
    assert record["green"] == pytest.approx(-math.log(2) / 2, abs=1e-3)
    assert record["depth"] == 10


def test_radii_command(capsys, example_config):
    code, out, _ = run_cli(capsys, "radii", "--config", example_config)
    assert code == 0
    record = json.loads(out)
    assert record["r_in"] == pytest.approx(2 ** (-1 / 6), rel=0.01)
    assert record["r_out"] == pytest.approx(2 ** (1 / 3), rel=0.01)


def test_equidist_byte_identical(capsys, example_config):
    args = ("equidist", "--config", example_config, "1",
            "--samples", "2000", "--depth", "15")
    code1, out1, _ = run_cli(capsys, *args)
    code2, out2, _ = run_cli(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2
    record = json.loads(out1)
    assert record["ks_radial"] <= 0.05


def test_orbit_sample_csv(capsys, tmp_path, example_config):
    out_csv = tmp_path / "orbit.csv"
    code, out, _ = run_cli(capsys, "orbit-sample", "--config", example_config,
                           "1", "--samples", "50", "--depth", "5",
                           "--out", str(out_csv))
    assert code == 0
    record = json.loads(out)
    assert record["csv"] == str(out_csv)
    lines = out_csv.read_text().strip().splitlines()
    assert len(lines) == 51
    assert lines[0].startswith("index,")


def test_orbit_sample_stdout(capsys, example_config):
    code, out, _ = run_cli(capsys, "orbit-sample", "--config", example_config,
                           "1", "--samples", "5", "--depth", "2")
    assert code == 0
    assert out.startswith("index,")
    assert len(out.strip().splitlines()) == 6


def test_equidist_csv_outputs(capsys, tmp_path, example_config):
    arch_csv = tmp_path / "arch.csv"
    code, out, _ = run_cli(capsys, "equidist", "--config", example_config,
                           "1", "--samples", "500", "--depth", "10",
                           "--out", str(arch_csv))
    assert code == 0
    assert arch_csv.read_text().startswith("r,empirical_cdf,reference_cdf")

    p_csv = tmp_path / "p2.csv"
    code, out, _ = run_cli(capsys, "equidist", "--config", example_config,
                           "1", "--place", "2", "--samples", "500",
                           "--depth", "10", "--out", str(p_csv))
    assert code == 0
    record = json.loads(out)
    assert record["ks"] <= 0.2
    assert p_csv.read_text().startswith("v,empirical_cdf,reference_cdf")


def test_unsupported_place_exit(capsys, tmp_path):
    cfg = tmp_path / "bad2.json"
    cfg.write_text(json.dumps({"maps": [
        {"num_coeffs": [1, 0, 1], "den_coeffs": [2], "prob": "1"}]}))
    code, _, err = run_cli(capsys, "equidist", "--config", str(cfg), "3",
                           "--place", "2", "--samples", "10", "--depth", "3")
    assert code == 3 and "UnsupportedStructure" in err


def test_suite_requires_reference_system(capsys, tmp_path):
    cfg = tmp_path / "z2.json"
    cfg.write_text(json.dumps({"maps": [
        {"num_coeffs": [0, 0, 1], "den_coeffs": [1], "prob": "1"}]}))
    code, _, err = run_cli(capsys, "suite", "--config", str(cfg))
    assert code == 3 and "reference system" in err
