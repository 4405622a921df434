import json
import math

import numpy as np
import pytest

from diqrng import presets
from diqrng.cli import main
from diqrng.extractor import extract_naive, insecure_test_seed, read_bits, write_bits
from diqrng.trials import CountsTable, read_dirt1, read_dirt1_header


def run(*argv):
    return main([str(a) for a in argv])


# --- simulate ----------------------------------------------------------------

def test_simulate_zero_trials_writes_valid_empty_file(tmp_path):
    out = tmp_path / "empty.dirt"
    assert run("simulate", "--preset", "paper", "--n", 0, "--out", out) == 0
    assert read_dirt1_header(out) == 0
    meta = json.loads((tmp_path / "empty.dirt.meta.json").read_text())
    assert meta["trials_written"] == 0
    assert "config_sha256" in meta


def test_simulate_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.dirt", tmp_path / "b.dirt"
    for out in (a, b):
        assert run("simulate", "--preset", "paper", "--n", 20000,
                   "--seed", 7, "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.dirt"
    assert run("simulate", "--preset", "paper", "--n", 20000,
               "--seed", 8, "--out", c) == 0
    assert a.read_bytes() != c.read_bytes()


def test_simulate_with_config_file(tmp_path):
    cfg = tmp_path / "src.json"
    cfg.write_text(json.dumps(presets.published_source_params().to_json_dict()))
    out = tmp_path / "t.dirt"
    assert run("simulate", "--config", cfg, "--n", 100, "--out", out) == 0
    assert read_dirt1_header(out) == 100


# --- counts ---------------------------------------------------------------------

def test_counts_aggregates_and_relabels(tmp_path):
    trials_path = tmp_path / "t.dirt"
    run("simulate", "--preset", "paper", "--n", 50000, "--seed", 1,
        "--out", trials_path)
    counts_path = tmp_path / "counts.json"
    assert run("counts", "--trials", trials_path, "--out", counts_path) == 0
    table = CountsTable.load(counts_path)
    assert table.total() == 50000
    swapped_path = tmp_path / "swapped.json"
    assert run("counts", "--trials", trials_path, "--out", swapped_path,
               "--relabel-rows") == 0
    swapped = CountsTable.load(swapped_path)
    assert swapped == table.relabel_rows_swapped()


# --- rate -----------------------------------------------------------------------

def test_rate_preset_reproduces_published_bits(tmp_path):
    out = tmp_path / "rate.json"
    assert run("rate", "--preset", "paper", "--out", out) == 0
    payload = json.loads(out.read_text())
    assert payload["extractable_bits"] == pytest.approx(
        presets.PUBLISHED_OUTPUT_BITS, rel=0.02)
    assert payload["soundness"] < 1e-5
    assert payload["provenance"]["toolkit_version"]


def test_rate_with_config(tmp_path):
    cfg = tmp_path / "rate.json"
    cfg.write_text(json.dumps({
        "n": 10 ** 10, "q": 1.0, "omega_win": 0.7505,
        "eps_s": 1e-6, "eps_ea": 1e-6, "delta_est": 1e-6, "t_e": 100}))
    out = tmp_path / "out.json"
    assert run("rate", "--config", cfg, "--out", out) == 0
    assert json.loads(out.read_text())["extractable_bits"] > 0


# --- spacetime ----------------------------------------------------------------------

def test_spacetime_preset_passes(tmp_path):
    out = tmp_path / "st.json"
    assert run("spacetime", "--preset", "paper", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["all_pass"] is True
    assert len(rep["checks"]) == 4


def test_spacetime_failing_config_exits_4(tmp_path):
    cfg_dict = presets.published_timing().to_json_dict()
    cfg_dict["t_delay1"] += 200.0
    cfg = tmp_path / "timing.json"
    cfg.write_text(json.dumps(cfg_dict))
    out = tmp_path / "st.json"
    assert run("spacetime", "--config", cfg, "--out", out) == 4
    rep = json.loads(out.read_text())  # report still written
    assert rep["all_pass"] is False


# --- certify --------------------------------------------------------------------------

def test_certify_counts_only(tmp_path):
    counts_path = tmp_path / "counts.json"
    presets.published_counts(relabel_rows=True).save(counts_path)
    out = tmp_path / "cert.json"
    assert run("certify", "--counts", counts_path, "--out", out) == 0
    payload = json.loads(out.read_text())
    assert len(payload["ztest_pvalues"]) == 4
    assert payload["jbar"] == pytest.approx(2.757e-4, abs=2e-7)


def test_certify_trials_pbr(tmp_path):
    trials_path = tmp_path / "t.dirt"
    run("simulate", "--preset", "paper", "--n", 400_000, "--seed", 3,
        "--out", trials_path)
    out = tmp_path / "cert.json"
    assert run("certify", "--trials", trials_path, "--out", out,
               "--block-size", 50_000, "--null", "both") == 0
    payload = json.loads(out.read_text())
    assert payload["nulls"]["NS"]["p_value_log10"] == 0.0
    assert payload["nulls"]["LR"]["blocks"] == 8
    assert payload["nulls"]["LR"]["p_value_log10"] <= 0.0


# --- extract -------------------------------------------------------------------------

def test_extract_matches_naive_and_reports(tmp_path):
    rng = np.random.default_rng(5)
    n, m = 4096, 256
    raw = rng.integers(0, 2, n, dtype=np.uint8)
    raw_path = tmp_path / "raw.bin"
    write_bits(raw_path, raw)
    seed = insecure_test_seed(n, m, rng_seed=9)
    seed_path = tmp_path / "seed.bin"
    write_bits(seed_path, seed.bits)
    out = tmp_path / "out.bin"
    assert run("extract", "--raw", raw_path, "--bits", n, "--m", m,
               "--seed-file", seed_path, "--blocks", 3, "--out", out) == 0
    got = read_bits(out, m)
    assert np.array_equal(got, extract_naive(raw, seed))
    rep = json.loads((tmp_path / "out.bin.report.json").read_text())
    assert rep["n"] == n and rep["m"] == m and rep["block_count"] == 3
    assert rep["hash_failure"] == 2.0 ** -100


def test_extract_reads_sidecar_bits(tmp_path):
    rng = np.random.default_rng(6)
    n, m = 1000, 64
    raw_path = tmp_path / "raw.bin"
    write_bits(raw_path, rng.integers(0, 2, n, dtype=np.uint8))
    (tmp_path / "raw.bin.meta.json").write_text(json.dumps({"n_bits": n}))
    out = tmp_path / "out.bin"
    assert run("extract", "--raw", raw_path, "--m", m,
               "--insecure-seed", 4, "--out", out) == 0
    assert len(read_bits(out, m)) == m


def test_extract_missing_length_is_config_error(tmp_path):
    raw_path = tmp_path / "raw.bin"
    write_bits(raw_path, np.ones(64, dtype=np.uint8))
    assert run("extract", "--raw", raw_path, "--m", 8,
               "--out", tmp_path / "o.bin") == 3


# --- rate curve -----------------------------------------------------------------------

def test_rate_curve_outputs(tmp_path):
    csv_path = tmp_path / "curve.csv"
    fig_path = tmp_path / "curve.png"
    assert run("rate-curve", "--preset", "paper", "--n-min", 1e9, "--n-max", 1e12,
               "--points", 7, "--out-csv", csv_path, "--fig", fig_path) == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "n,rate,total_bits"
    assert len(lines) == 8
    assert fig_path.stat().st_size > 1000


# --- report ----------------------------------------------------------------------------

def test_report_preset_artifacts(tmp_path):
    out_dir = tmp_path / "rep"
    assert run("report", "--preset", "paper", "--relabel-rows",
               "--out-dir", out_dir) == 0
    payload = json.loads((out_dir / "report.json").read_text())
    assert payload["game_value"]["jbar"] == pytest.approx(2.757e-4, abs=2e-7)
    assert payload["abort"]["aborted"] is False
    assert payload["rate"]["matches_published_bits"] == "eps=3.8e-06"
    assert payload["asymptote_fraction"] == pytest.approx(0.569, abs=0.02)
    assert payload["spacetime"]["all_pass"] is True
    assert payload["extraction_plan"]["block_count"] == 500
    assert 0.09 <= payload["source_model"]["mu_star"] <= 0.13
    for artifact in ("rate_curve.csv", "rate_curve.png",
                     "mu_sweep.csv", "mu_sweep.png"):
        assert (out_dir / artifact).stat().st_size > 0
    zp = [v["p_value"] for v in payload["ztest_no_signaling"].values()]
    assert min(zp) > 0.01


def test_report_deterministic_json(tmp_path):
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    for d in (d1, d2):
        assert run("report", "--preset", "paper", "--relabel-rows",
                   "--out-dir", d) == 0
    assert (d1 / "report.json").read_bytes() == (d2 / "report.json").read_bytes()
    assert (d1 / "rate_curve.csv").read_bytes() == (d2 / "rate_curve.csv").read_bytes()


# --- error handling ---------------------------------------------------------------------

def test_unknown_command_usage_error(capsys):
    assert run("frobnicate") == 2
    capsys.readouterr()


def test_malformed_config_is_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("rate", "--config", bad, "--out", tmp_path / "o.json") == 3
    err = capsys.readouterr().err
    assert "code=config-invalid" in err


def test_missing_input_is_exit_3(tmp_path, capsys):
    assert run("counts", "--trials", tmp_path / "absent.dirt",
               "--out", tmp_path / "c.json") == 3
    assert "code=config-invalid" in capsys.readouterr().err


def test_invalid_values_are_exit_4(tmp_path, capsys):
    cfg = tmp_path / "rate.json"
    cfg.write_text(json.dumps({
        "n": 10, "q": 1.5, "omega_win": 0.75,
        "eps_s": 1e-6, "eps_ea": 1e-6, "delta_est": 1e-6, "t_e": 100}))
    assert run("rate", "--config", cfg, "--out", tmp_path / "o.json") == 4
    assert "code=validation-failed" in capsys.readouterr().err


# --- seeded end-to-end -----------------------------------------------------------------

def test_pipeline_end_to_end_seeded(tmp_path):
    # block estimates need >= ~1e6 trials for this violation strength
    trials_path = tmp_path / "t.dirt"
    assert run("simulate", "--preset", "paper", "--n", 10 ** 7, "--seed", 11,
               "--out", trials_path) == 0

    counts_path = tmp_path / "counts.json"
    assert run("counts", "--trials", trials_path, "--out", counts_path) == 0

    cert_path = tmp_path / "cert.json"
    assert run("certify", "--trials", trials_path, "--counts", counts_path,
               "--block-size", 10 ** 6, "--out", cert_path) == 0
    cert = json.loads(cert_path.read_text())
    assert cert["nulls"]["LR"]["p_value_log10"] < -3.0
    assert cert["nulls"]["NS"]["p_value_log10"] == 0.0

    # hash the raw outcome bits (a then b per trial) down to 4096 bits
    ta = read_dirt1(trials_path)
    raw = np.empty(2 * len(ta), dtype=np.uint8)
    raw[0::2] = ta.a
    raw[1::2] = ta.b
    raw_path = tmp_path / "raw.bin"
    write_bits(raw_path, raw)
    out_path = tmp_path / "rand.bin"
    m = 4096
    assert run("extract", "--raw", raw_path, "--bits", len(raw), "--m", m,
               "--insecure-seed", 99, "--out", out_path) == 0
    bits = read_bits(out_path, m)
    assert abs(bits.mean() - 0.5) < 4.0 / math.sqrt(m)
