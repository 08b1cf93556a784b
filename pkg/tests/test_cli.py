import json
import subprocess
import sys

import numpy as np
import pytest

from freedisc import cli, csvio
from freedisc.functional import GridSignal


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _write_step(path, n=400, z=1.0, noise=0.0, seed=0):
    t = np.linspace(0, 1, n)
    v = np.where(t < 0.5, 0.0, z) + np.random.default_rng(seed).uniform(-noise, noise, n)
    csvio.write_signal(path, GridSignal(v, 1 / (n - 1)))


def test_profile_output(capsys):
    code, out, _ = run(capsys, "profile", "--k", 2)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("m_2 = 3.26598632")
    assert lines[2] == "A_2 = 12/1 (12)"
    code, out, _ = run(capsys, "profile", "--k", 1)
    assert out.splitlines()[:2] == ["m_1 = 2", "T* = 1"]


def test_profile_constrained_and_json(capsys, tmp_path):
    js = tmp_path / "p.json"
    code, out, _ = run(capsys, "profile", "--k", 2, "--n", 1, "--N", 10, "--json", js)
    assert code == 0 and out.startswith("m_2^1(N=10) = ")
    data = json.loads(js.read_text())
    assert data["n"] == 1 and data["energy"] <= 3.2659864
    code, _, err = run(capsys, "profile", "--k", 2, "--n", 1)
    assert code == 2 and "--N" in err


def test_calibrate(capsys):
    code, out, _ = run(capsys, "calibrate", "--k", 2, "--mu", 1)
    c = float(out.split("=")[1])
    assert code == 0 and c == pytest.approx((1 / 3.2659863237109037) ** 4, rel=1e-12)
    assert run(capsys, "calibrate", "--k", 2, "--mu", -1)[0] == 2


def test_bad_arguments_exit_2(capsys):
    assert run(capsys, "profile")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "profile", "--k", 0)[0] == 2
    assert run(capsys, "interp", "--k", 2)[0] == 2
    assert run(capsys, "bz", "--eps", "0.1,-1")[0] == 2


def test_denoise_constant_is_identity(capsys, tmp_path):
    src, dst = tmp_path / "in.csv", tmp_path / "out.csv"
    csvio.write_signal(src, GridSignal(np.full(50, 0.7), 1 / 49))
    code, _, _ = run(capsys, "denoise", "--input", src, "--output", dst, "--k", 2, "--eps", 0.01, "--lambda", 5)
    assert code == 0
    assert dst.read_text() == src.read_text()


def test_denoise_step(capsys, tmp_path):
    src, dst, js = tmp_path / "in.csv", tmp_path / "out.csv", tmp_path / "r.json"
    _write_step(src, noise=0.05, seed=1)
    before = src.read_bytes()
    code, out, _ = run(capsys, "denoise", "--input", src, "--output", dst, "--k", 2,
                       "--eps", 2 ** -5, "--lambda", 300, "--json", js)
    assert code == 0
    assert src.read_bytes() == before
    u = csvio.read_signal(dst)
    g = csvio.read_signal(src)
    assert u.n == g.n and u.h == pytest.approx(g.h)
    assert np.std(np.diff(u.values)[:150]) < np.std(np.diff(g.values)[:150])
    assert json.loads(js.read_text())["converged"] is True


def test_denoise_input_errors(capsys, tmp_path):
    dst = tmp_path / "out.csv"
    assert run(capsys, "denoise", "--input", tmp_path / "missing.csv", "--output", dst,
               "--k", 2, "--eps", 0.1, "--lambda", 1)[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n0,1\n1,2\n")
    assert run(capsys, "denoise", "--input", bad, "--output", dst, "--k", 2, "--eps", 0.1, "--lambda", 1)[0] == 2
    uneven = tmp_path / "uneven.csv"
    uneven.write_text("t,value\n0,0\n0.1,0\n0.5,1\n1,1\n")
    assert run(capsys, "denoise", "--input", uneven, "--output", dst, "--k", 1, "--eps", 0.1, "--lambda", 1)[0] == 2
    ok = tmp_path / "ok.csv"
    _write_step(ok, n=100)
    assert run(capsys, "denoise", "--input", ok, "--output", dst, "--k", 2, "--eps", 0, "--lambda", 1)[0] == 2
    cfg = tmp_path / "s.ini"
    cfg.write_text("[solver]\nbogus = 1\n")
    assert run(capsys, "denoise", "--input", ok, "--output", dst, "--k", 2, "--eps", 0.1,
               "--lambda", 1, "--config", cfg)[0] == 2
    assert not dst.exists()


def test_denoise_nonconvergence_exit_1(capsys, tmp_path):
    # a gradient tolerance below round-off cannot be met
    src, dst = tmp_path / "in.csv", tmp_path / "out.csv"
    _write_step(src, noise=0.05)
    code, _, err = run(capsys, "denoise", "--input", src, "--output", dst, "--k", 2, "--eps", 2 ** -5,
                       "--lambda", 300, "--tolerance", 1e-300)
    assert code == 1 and "converge" in err
    assert not dst.exists()


def test_csv_roundtrip(tmp_path):
    u = GridSignal(np.random.default_rng(2).standard_normal(30), 1 / 29)
    csvio.write_signal(tmp_path / "a.csv", u)
    v = csvio.read_signal(tmp_path / "a.csv")
    np.testing.assert_array_equal(u.values, v.values)


def test_sweep_command(capsys, tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text("[experiment]\nname = density\n[parameters]\nk = 2\neps = 0.0625 0.03125\n")
    js = tmp_path / "s.json"
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--json", js)
    assert code == 0 and "finest_density" in out
    assert len(json.loads(js.read_text())["records"]) == 2
    cfg.write_text("[experiment]\nname = density\n[parameters]\nk = 2\neps = 0.1 0.2\n")
    assert run(capsys, "sweep", "--config", cfg)[0] == 2


def test_interp_command(capsys, tmp_path):
    csv = tmp_path / "r.csv"
    code, out, _ = run(capsys, "interp", "--k", 3, "--samples", 200, "--seed", 5, "--csv", csv)
    assert code == 0 and out.startswith("R_hat_3 = ")
    assert len(csv.read_text().splitlines()) == 201


def test_bz_command(capsys):
    code, out, _ = run(capsys, "bz", "--k", 3, "--eps", "0.0625,0.03125")
    assert code == 0
    vals = dict(line.split(" = ") for line in out.splitlines())
    assert float(vals["flat"]) == 0.0
    assert float(vals["crease"]) == pytest.approx(1.0, rel=0.1)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "freedisc.cli", "profile", "--k", "3"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and r.stdout.startswith("m_3 = 4.69784")
