import hashlib
import logging
import subprocess
import sys

import numpy as np
import pytest

from ahx.cli import run
from ahx.config import ConfigError, parse_config
from ahx.io import read_csv, write_csv


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(tmp_path, text, cmd=None, out="out", extra=()):
    p = _cfg(tmp_path, text)
    cmd = cmd or parse_config(text)["experiment"]
    return run([cmd, "--config", str(p), "--out", str(tmp_path / out), *extra])


# config parsing


def test_parse_values():
    cfg = parse_config("experiment = interp\nNs = 4:16:4\nzeta = 0.5  # comment\nfamily = identity, linear\n"
                       "grid = [-5, 5, 101]\nname = hello\n")
    assert cfg["Ns"] == [4, 8, 12, 16]
    assert cfg["zeta"] == 0.5
    assert cfg["family"] == ["identity", "linear"]
    assert cfg["grid"] == [-5, 5, 101]
    assert cfg["name"] == "hello"


@pytest.mark.parametrize("text", [
    "experiment = nope",
    "experiment = interp\nfamily = spline",
    "experiment = interp\ntarget = f9",
    "experiment = interp\nzeta = 1.5",
    "experiment = interp\nNs = []",
    "experiment = interp\ngrid = [1, 0, 10]",
    "experiment = interp\nseed = -1",
    "experiment = interp\nlr = 0",
    "experiment = interp\nNs = 4:10:0",
    "this is not a config",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


# exit codes


def test_interp_identity_outputs(tmp_path):
    text = "experiment = interp\ntarget = f1\nfamily = identity\nNs = 4:24:4\n"
    assert _run(tmp_path, text) == 0
    meta, cols, arr = read_csv(tmp_path / "out" / "interp_f1_errors.csv")
    assert cols == ["N", "error_identity"]
    assert np.all(np.diff(arr[:, 1]) < 0)
    digest = hashlib.sha256(text.encode()).hexdigest()[:12]
    assert meta == {"command": "interp", "config_hash": digest, "seed": "0"}
    first = (tmp_path / "out" / "interp_f1_rates.csv").read_text().splitlines()
    assert first[0].startswith(f"# ahx command=interp config_hash={digest}")
    assert first[1] == "family,model,l,nu,kappa,n_points,excluded"


def test_byte_identical_rerun(tmp_path):
    text = "experiment = interp\ntarget = f2\nfamily = identity, linear\nNs = 4:20:4\niters = 30\n"
    assert _run(tmp_path, text, out="a") == 0
    assert _run(tmp_path, text, out="b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_seed_flag_recorded(tmp_path):
    assert _run(tmp_path, "experiment = interp\nfamily = identity\nNs = 4:12:4\n", extra=["--seed", "5"]) == 0
    meta, _, _ = read_csv(tmp_path / "out" / "interp_f1_errors.csv")
    assert meta["seed"] == "5"


def test_h3_at_floor(tmp_path, caplog):
    text = "experiment = interp\ntarget = h3\nfamily = identity\nNs = 4:16:4\n"
    with caplog.at_level(logging.WARNING):
        assert _run(tmp_path, text) == 0
    _, _, arr = read_csv(tmp_path / "out" / "interp_h3_errors.csv")
    assert np.all(arr[:, 1] <= 1e-14)
    assert "no rate fitted" in caplog.text


def test_unknown_family_exit_2(tmp_path):
    assert _run(tmp_path, "experiment = interp\nfamily = spline\n", cmd="interp") == 2


def test_missing_config_exit_2(tmp_path):
    assert run(["interp", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_command_mismatch_exit_2(tmp_path):
    assert _run(tmp_path, "experiment = morse\n", cmd="interp") == 2


def test_bad_usage_exit_2(tmp_path):
    assert run(["frobnicate", "--config", "x"]) == 2


def test_empty_samples_exit_2(tmp_path):
    (tmp_path / "empty.csv").write_text("")
    assert _run(tmp_path, "experiment = transport\nsamples = empty.csv\n") == 2
    (tmp_path / "hdr.csv").write_text("x,f\n")
    assert _run(tmp_path, "experiment = transport\nsamples = hdr.csv\n") == 2


def test_numerical_failure_exit_3(tmp_path):
    write_csv(tmp_path / "errs.csv", {}, ["N", "e"], [[4, 1e-3], [8, 2e-3], [12, 4e-3]])
    assert _run(tmp_path, "experiment = rates\ninput = errs.csv\nmodel = exponential\n") == 3


def test_rates_command(tmp_path):
    Ns = np.arange(4, 41, 4)
    write_csv(tmp_path / "errs.csv", {}, ["N", "a", "b"], [[n, n ** -2.0, n ** -3.5] for n in Ns])
    assert _run(tmp_path, "experiment = rates\ninput = errs.csv\n") == 0
    lines = (tmp_path / "out" / "rates_errs.csv").read_text().splitlines()
    a = lines[2].split(",")
    b = lines[3].split(",")
    assert a[0] == "a" and float(a[2]) == pytest.approx(2.0, abs=1e-12)
    assert b[0] == "b" and float(b[2]) == pytest.approx(3.5, abs=1e-12)


def test_transport_gaussian_samples(tmp_path):
    x = np.linspace(-13, 13, 4001)
    write_csv(tmp_path / "g.csv", {}, ["x", "f"], zip(x, np.exp(-x * x / 2)))
    assert _run(tmp_path, "experiment = transport\nsamples = g.csv\nregularizer = none\n") == 0
    lines = (tmp_path / "out" / "transport_g_diagnostics.csv").read_text().splitlines()
    vals = dict(ln.split(",") for ln in lines[2:])
    assert float(vals["max_deviation_from_identity_abs_x_le_3"]) <= 1e-3
    _, _, arr = read_csv(tmp_path / "out" / "transport_g_map.csv")
    assert np.all(np.diff(arr[:, 1]) > 0)


def test_morse_single_N_warning(tmp_path, caplog):
    text = "experiment = morse\nfamily = identity\nNs = 23\n"
    with caplog.at_level(logging.WARNING):
        assert _run(tmp_path, text) == 0
    assert "no exponents fitted" in caplog.text
    _, cols, arr = read_csv(tmp_path / "out" / "morse_relerr.csv")
    assert arr.shape == (23, len(cols)) and np.all(arr[:, 0] == 23)
    lines = (tmp_path / "out" / "morse_exponents.csv").read_text().splitlines()
    assert all(ln.endswith(",nan") for ln in lines[2:])


def test_morse_too_many_levels(tmp_path):
    assert _run(tmp_path, "experiment = morse\nfamily = identity\nlevels = 40\n") == 2


def test_moments_missing_checkpoint(tmp_path, capsys):
    assert _run(tmp_path, "experiment = moments\ncheckpoint_dir = ck\n") == 2
    err = capsys.readouterr().err
    assert "morse_linear_params.json" in err


def test_console_script_entry_point(tmp_path):
    p = _cfg(tmp_path, "experiment = interp\nfamily = identity\nNs = 4:12:4\n")
    r = subprocess.run([sys.executable, "-m", "ahx.cli", "interp", "--config", str(p), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "ahx.cli", "interp", "--config", str(tmp_path / "missing")],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "config error" in r.stderr
