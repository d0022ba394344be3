import json
import math
import os

import numpy as np
import pytest

from modspace_nls.cli import main
from modspace_nls.errors import ConfigError
from modspace_nls.experiments import (
    apply_overrides,
    emit_plot_data,
    emit_record,
    run_decay_experiment,
    run_existence_experiment,
    run_scan,
    summary_dict,
    validate_config,
)


def decay_cfg(outdir, p=2):
    # box sized so the fastest resolved waves stay inside the margin up to t = 2
    return {
        "experiment": "decay",
        "seed": 3,
        "outdir": str(outdir),
        "emit_figures": False,
        "grid": {"d": 1, "n": [16384], "box_length": [4096.0]},
        "dispersion": {"alpha": 1.5, "beta": 2.0, "gamma": 1.0},
        "initial_data": {"kind": "gaussian", "amplitude": 1.0, "width": 1.0},
        "times": {"start": 0.2, "stop": 2.0, "count": 8, "spacing": "log"},
        "lebesgue_p": p,
    }


def existence_cfg(outdir):
    return {
        "experiment": "existence",
        "seed": 5,
        "outdir": str(outdir),
        "emit_figures": False,
        "grid": {"d": 1, "n": [256], "box_length": [64.0]},
        "dispersion": {"alpha": 1.5, "beta": 2.0, "gamma": 1.0},
        "initial_data": {"kind": "gaussian", "amplitude": 0.2, "width": 1.0},
        "modulation": {"p": 7, "q": 1, "s": 0.0},
        "nonlinearity": {"kind": "power", "m": 5, "sign": 1, "variant": "modulus"},
        "solver": {"R": 1.0, "tol": 1e-9, "max_iter": 20, "t_max": 10.0,
                   "t_count": 51},
    }


# ---------------------------------------------------------------------------
# Config machinery
# ---------------------------------------------------------------------------

def test_validate_fills_defaults(tmp_path):
    cfg = validate_config(decay_cfg(tmp_path))
    assert cfg["workers"] == 1
    assert cfg["emit_figures"] is False


def test_validate_missing_field_names_it(tmp_path):
    cfg = decay_cfg(tmp_path)
    del cfg["dispersion"]["alpha"]
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    assert "dispersion.alpha" in str(err.value)


def test_validate_rejects_bad_kind():
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "blowup"})
    assert "experiment" in str(err.value)


def test_overrides_dotted_paths(tmp_path):
    cfg = decay_cfg(tmp_path)
    out = apply_overrides(cfg, ["dispersion.alpha=2.5", "seed=9",
                                "initial_data.kind=gaussian"])
    assert out["dispersion"]["alpha"] == 2.5
    assert out["seed"] == 9
    assert cfg["dispersion"]["alpha"] == 1.5  # original untouched
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["noequalsign"])


def test_embedding_scan_hypothesis_violation_is_config_error(tmp_path):
    cfg = {
        "experiment": "scan",
        "outdir": str(tmp_path),
        "grid": {"d": 1, "n": [256], "box_length": [64.0]},
        "scan": {"kind": "embedding", "count": 3, "radius": 3.0,
                 "from": {"p": 4, "q": 1, "s": 0.0},
                 "to": {"p": 2, "q": 1, "s": 0.0}},
    }
    with pytest.raises(ConfigError):
        validate_config(cfg)


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def test_decay_runner_flat_verdict(tmp_path):
    record = run_decay_experiment(decay_cfg(tmp_path))
    assert record.verdict == "flat"
    assert record.payload.fitted_slope == pytest.approx(0.0, abs=0.02)
    assert record.validity["all_samples_valid"]
    assert record.config["resolved_grid"]["n"] == [16384]


def test_decay_runner_emits_files(tmp_path):
    cfg = decay_cfg(tmp_path / "run")
    cfg["emit_figures"] = True
    record = run_decay_experiment(cfg)
    paths = emit_record(record, tmp_path / "run")
    names = {p.name for p in paths}
    assert {"decay.csv", "summary.json", "decay_raw.dat",
            "decay_compensated.dat", "decay.png"} <= names
    text = (tmp_path / "run" / "decay.csv").read_text()
    assert text.startswith("# schema: modspace-nls/decay-v1\n")
    assert text.splitlines()[1] == "t,raw_norm,compensated_ratio,margin_mass,valid"
    raw = (tmp_path / "run" / "decay_raw.dat").read_text().splitlines()
    assert len(raw) == 8 and len(raw[0].split()) == 2


def test_existence_runner(tmp_path):
    record = run_existence_experiment(existence_cfg(tmp_path))
    assert record.verdict == "converged-in-ball"
    assert record.payload.diagnostics["converged"]
    assert record.constants["m0"] == pytest.approx((3 + math.sqrt(41)) / 2)
    paths = emit_record(record, tmp_path, emit_figures=False)
    names = {p.name for p in paths}
    assert {"convergence.csv", "weighted_norm.csv", "summary.json",
            "picard_residual.dat", "weighted_norm.dat"} <= names
    # residuals decrease monotonically for a converged run
    residuals = record.payload.residuals
    assert all(b < a for a, b in zip(residuals, residuals[1:]))


def test_existence_runner_subthreshold_guard(tmp_path):
    cfg = existence_cfg(tmp_path)
    cfg["nonlinearity"]["m"] = 1
    with pytest.raises(ConfigError):
        run_existence_experiment(cfg)
    cfg["solver"]["allow_subthreshold"] = True
    cfg["solver"]["allow_divergence"] = True
    cfg["modulation"]["p"] = 3
    record = run_existence_experiment(cfg)
    assert record.verdict in ("converged-in-ball", "converged-out-of-ball",
                              "diverged", "no-convergence")


def test_existence_bisection(tmp_path):
    cfg = existence_cfg(tmp_path)
    cfg["solver"]["t_max"] = 5.0
    cfg["solver"]["t_count"] = 21
    cfg["solver"]["tol"] = 1e-7
    cfg["solver"]["bisect_delta"] = True
    cfg["solver"]["bisect_steps"] = 2
    record = run_existence_experiment(cfg)
    assert record.payload.bisection is not None
    assert record.payload.bisection["probes"]


def test_holder_scan_runner(tmp_path):
    cfg = {
        "experiment": "scan",
        "seed": 11,
        "outdir": str(tmp_path),
        "emit_figures": False,
        "grid": {"d": 1, "n": [128], "box_length": [64.0]},
        "scan": {"kind": "holder", "pairs": 10, "p": 2, "p1": 4, "p2": 4,
                 "q": 1, "s": 0.0, "radius": 3.0, "refine": True},
    }
    record = run_scan(cfg)
    assert record.payload.ratios.size == 10
    assert np.isfinite(record.payload.max_ratio)
    assert record.payload.refinement_delta is not None
    assert record.verdict in ("stable", "refinement-unstable")
    paths = emit_record(record, tmp_path, emit_figures=False)
    assert any(p.name == "holder.csv" for p in paths)


def test_embedding_scan_runner(tmp_path):
    cfg = {
        "experiment": "scan",
        "seed": 12,
        "outdir": str(tmp_path),
        "emit_figures": False,
        "grid": {"d": 1, "n": [256], "box_length": [64.0]},
        "scan": {"kind": "embedding", "count": 5, "radius": 3.0,
                 "from": {"p": 4, "q": 1, "s": 0.0},
                 "to": {"p": "inf", "q": 1, "s": 0.0}},
    }
    record = run_scan(cfg)
    assert record.payload.ratios.size == 5
    assert record.payload.max_ratio > 0.0


def test_kernel_scan_classification_flips_at_threshold(tmp_path):
    cfg = {
        "experiment": "scan",
        "outdir": str(tmp_path),
        "emit_figures": False,
        "scan": {"kind": "kernel", "m_values": [1, 2, 3, 4, 5, 6, 7, 8],
                 "d": 1, "gamma_is_zero": False,
                 "t_start": 1.0, "t_stop": 1e6, "t_count": 13},
    }
    record = run_scan(cfg)
    cls = record.payload.classification
    for m in (1, 2, 3, 4):
        assert cls[m]["classified"] == "divergent"
    for m in (5, 6, 7, 8):
        assert cls[m]["classified"] == "finite"
    assert record.validity["matches_theory"]
    paths = emit_record(record, tmp_path, emit_figures=False)
    assert any(p.name == "kernel.csv" for p in paths)
    assert any(p.name == "kernel_m1.dat" for p in paths)


def test_emit_plot_data_empty_payload(tmp_path, caplog):
    from modspace_nls.experiments import ResultRecord
    record = ResultRecord("decay", {"outdir": str(tmp_path)}, "none", None)
    with caplog.at_level("WARNING"):
        written = emit_plot_data(record, tmp_path)
    assert written == []
    assert "empty payload" in caplog.text


def test_summary_is_json_serializable(tmp_path):
    record = run_decay_experiment(decay_cfg(tmp_path))
    blob = json.dumps(summary_dict(record), sort_keys=True)
    assert "fitted_slope" in blob


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------

def test_existence_run_is_byte_deterministic(tmp_path):
    cfg = existence_cfg(tmp_path)
    cfg["solver"]["t_count"] = 21
    cfg["solver"]["t_max"] = 5.0
    rec1 = run_existence_experiment(json.loads(json.dumps(cfg)))
    rec2 = run_existence_experiment(json.loads(json.dumps(cfg)))
    d1, d2 = tmp_path / "a", tmp_path / "b"
    emit_record(rec1, d1, emit_figures=False)
    emit_record(rec2, d2, emit_figures=False)
    for name in ("convergence.csv", "weighted_norm.csv"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_holder_scan_worker_count_does_not_change_results(tmp_path):
    base = {
        "experiment": "scan",
        "seed": 21,
        "outdir": str(tmp_path),
        "emit_figures": False,
        "grid": {"d": 1, "n": [128], "box_length": [64.0]},
        "scan": {"kind": "holder", "pairs": 8, "p": 2, "p1": 4, "p2": 4,
                 "radius": 3.0, "refine": False},
    }
    serial = run_scan(json.loads(json.dumps(base)))
    parallel_cfg = json.loads(json.dumps(base))
    parallel_cfg["workers"] = 4
    parallel = run_scan(parallel_cfg)
    np.testing.assert_array_equal(serial.payload.ratios, parallel.payload.ratios)


# ---------------------------------------------------------------------------
# CLI surface
# ---------------------------------------------------------------------------

def test_cli_run_and_validate(tmp_path, capsys):
    cfg = decay_cfg(tmp_path / "out")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["validate", str(path)]) == 0
    assert main(["run", str(path), "seed=4"]) == 0
    out = capsys.readouterr().out
    assert "verdict: flat" in out
    assert (tmp_path / "out" / "decay.csv").is_file()
    echoed = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert echoed["config"]["seed"] == 4


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = decay_cfg(tmp_path)
    del cfg["dispersion"]["alpha"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", str(path)]) == 2
    assert "dispersion.alpha" in capsys.readouterr().err
    assert main(["validate", str(path)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_cli_margin_breach_exit_code(tmp_path, capsys):
    cfg = decay_cfg(tmp_path)
    cfg["times"] = {"start": 200.0, "stop": 400.0, "count": 3, "spacing": "log"}
    cfg["lebesgue_p"] = "inf"
    path = tmp_path / "breach.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", str(path)]) == 3


def test_cli_divergence_exit_code(tmp_path):
    cfg = existence_cfg(tmp_path)
    # large data at a coarse tolerance cannot converge within two sweeps
    cfg["initial_data"]["amplitude"] = 3.0
    cfg["solver"].update({"max_iter": 2, "tol": 1e-14, "R": 100.0,
                          "t_max": 5.0, "t_count": 21})
    path = tmp_path / "div.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", str(path)]) == 4
    # permitting the outcome turns it into a structured report
    assert main(["run", str(path), "solver.allow_divergence=true"]) == 0


def test_cli_constants_json(capsys):
    assert main(["constants", "--d", "2", "--gamma-zero", "false",
                 "--m", "2", "--p", "4"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["gamma_exp"] == pytest.approx(3.0 / 8.0)
    assert data["mu"] == pytest.approx(3.0 / 8.0)
    assert data["m0"] == pytest.approx((1 + math.sqrt(97)) / 6)


def test_cli_outdir_env_override(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv("MODSPACE_NLS_OUTDIR", str(target))
    cfg = decay_cfg(tmp_path / "ignored")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", str(path)]) == 0
    assert (target / "decay.csv").is_file()
    assert not (tmp_path / "ignored").exists()
