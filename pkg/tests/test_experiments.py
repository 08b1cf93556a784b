import json

import numpy as np
import pytest

import freedisc.experiments as ex
from freedisc.experiments import (
    SweepPlan,
    bz_target_signal,
    default_eps_list,
    default_fidelity,
    load_config,
    profile_fit_error,
    run_bz_approximation,
    run_from_config,
    run_jump_density_sweep,
    run_ms_approximation,
    run_profile_fit,
    transition_energy,
)
from freedisc.functional import EnergyParams, GridSignal, SolverError, detect_transitions, evaluate, recovery_sequence
from freedisc.piecewise import PiecewiseFunction
from freedisc.profile import m_k

COARSE = [2.0 ** -4, 2.0 ** -5, 2.0 ** -6]


def _strip_time(d):
    d = json.loads(json.dumps(d))
    d["provenance"].pop("timestamp")
    return d


def test_default_ladders():
    assert default_eps_list(1.0) == [2.0 ** -(i + 3) for i in range(1, 8)]
    assert default_eps_list(1 / 16, 3) == [2.0 ** -(i + 7) for i in range(1, 4)]
    assert default_eps_list(16.0, 2) == [2.0 ** -4, 2.0 ** -5]
    assert default_fidelity(1.0) == 300.0
    assert default_fidelity(1 / 16) == pytest.approx(300 * 16 ** 3)
    assert default_fidelity(16.0) == pytest.approx(300 / 64)


@pytest.mark.parametrize("bad", [
    dict(k=0), dict(eps=[0.1, 0.2]), dict(eps=[0.1, -0.1]), dict(cells=16),
    dict(lam=-1.0), dict(noise=-0.1), dict(repetitions=0), dict(workers=0), dict(b=0.0),
])
def test_plan_validation(bad):
    with pytest.raises(ValueError):
        SweepPlan(**bad)


def test_plan_spacing_and_hash():
    p = SweepPlan(k=2, z=4.0, eps=[0.01])
    assert p.spacing(0.01) == pytest.approx(0.01 * 2 * m_k(2).T_star / 64)
    q = SweepPlan(k=2, z=4.0, eps=[0.01])
    assert p.config_hash() == q.config_hash()
    q.seed = 1
    assert p.config_hash() != q.config_hash()


def test_zero_jump_has_no_transitions():
    rep = run_jump_density_sweep(SweepPlan(k=2, z=0.0, eps=COARSE))
    assert rep.summary["transition_counts"] == [0, 0, 0]
    assert rep.summary["expected_density"] == 0.0
    assert all(r["density"] == 0.0 for r in rep.records)


def test_density_sweep_trend():
    # monotone once past the coarsest, pre-asymptotic eps = 2^-4
    rep = run_jump_density_sweep(SweepPlan(k=2, z=1.0, eps=COARSE[1:] + [2.0 ** -7]))
    d = [r["density"] for r in rep.records]
    assert all(r["transitions"] == 1 for r in rep.records)
    assert all(b > a for a, b in zip(d, d[1:]))
    assert d[-1] < m_k(2).energy
    assert rep.summary["failures"] == 0


def test_sweep_json_reproducible():
    plan = SweepPlan(k=2, z=1.0, eps=COARSE[:2], noise=0.01, seed=3)
    a = run_jump_density_sweep(plan)
    b = run_jump_density_sweep(SweepPlan(k=2, z=1.0, eps=COARSE[:2], noise=0.01, seed=3))
    assert _strip_time(a.to_dict()) == _strip_time(b.to_dict())
    c = run_jump_density_sweep(SweepPlan(k=2, z=1.0, eps=COARSE[:2], noise=0.01, seed=4))
    assert c.records[0]["energy"] != a.records[0]["energy"]


def test_workers_match_serial():
    a = run_jump_density_sweep(SweepPlan(k=2, z=1.0, eps=COARSE, workers=1))
    b = run_jump_density_sweep(SweepPlan(k=2, z=1.0, eps=COARSE, workers=2))
    assert _strip_time(a.to_dict())["records"] == _strip_time(b.to_dict())["records"]


def test_failed_point_is_recorded(monkeypatch):
    real = ex.minimize

    def flaky(u, p, opts=None):
        if p.eps == COARSE[1]:
            raise SolverError("forced")
        return real(u, p, opts)

    monkeypatch.setattr(ex, "minimize", flaky)
    rep = run_jump_density_sweep(SweepPlan(k=2, z=1.0, eps=COARSE))
    assert rep.summary["failures"] == 1
    assert "forced" in rep.records[1]["error"]
    assert rep.records[2]["density"] is not None


def test_profile_fit_of_recovery_sequence():
    # the constructed sequence is the optimal profile itself
    eps = 2.0 ** -6
    u = recovery_sequence(PiecewiseFunction.step(0.5, 0.0, 1.0), 2, eps)
    p = EnergyParams(2, eps)
    tr = detect_transitions(u, p)
    assert tr.count == 1
    # only linear interpolation error on ~30 cells per transition remains
    assert profile_fit_error(u, tr.cells[0], 2, eps) < 5e-3
    # sub-threshold tails of the profile are counted as smooth energy
    assert transition_energy(u, p) < evaluate(u, p) < m_k(2).energy
    assert evaluate(u, p) == pytest.approx(m_k(2).energy, rel=0.1)


def test_profile_fit_report():
    rep = run_profile_fit(SweepPlan(k=2, z=1.0, eps=COARSE))
    s = rep.summary
    assert rep.experiment == "profile_fit"
    assert s["fit_decreasing"] and s["flagged_eps"] == []
    assert s["finest_fit_error"] < 0.05


def test_ms_scales_with_mu():
    # larger mu converges more slowly in eps; by 2^-8 the ratio is within 10%
    fine = lambda k, z: [2.0 ** -i for i in range(5, 9)]
    a = run_ms_approximation(1.0, [2], eps_rule=fine)
    b = run_ms_approximation(3.0, [2], eps_rule=fine)
    ca, cb = a.records[0]["jump_cost"], b.records[0]["jump_cost"]
    assert cb / ca == pytest.approx(3.0, rel=0.1)
    with pytest.raises(ValueError):
        run_ms_approximation(0.0, [2])


def test_bz_targets():
    flat = bz_target_signal("flat", 3, 0.01)
    assert np.all(flat.values == 0)
    rep = run_bz_approximation(3, [2.0 ** -4, 2.0 ** -5])
    assert rep.summary["flat"] == 0.0
    fin = rep.records[-1]
    assert fin["crease"] == pytest.approx(1.0, rel=0.1)
    assert fin["jump"] == pytest.approx(2.0, rel=0.1)
    with pytest.raises(ValueError):
        run_bz_approximation(2)
    with pytest.raises(ValueError):
        run_bz_approximation(3, [0.01, 0.1])
    with pytest.raises(KeyError):
        bz_target_signal("ramp", 3, 0.01)


def test_config_roundtrip(tmp_path):
    cfg = tmp_path / "sweep.ini"
    out = tmp_path / "out"
    cfg.write_text(f"""[experiment]
name = density
output = {out}

[parameters]
k = 2          ; inline comments are allowed
z = 1
eps = 0.0625, 0.03125

[solver]
tolerance = 1e-7
max-iter = 300
""")
    name, params, output = load_config(cfg)
    assert name == "density" and params["max_iter"] == 300 and params["eps"] == [0.0625, 0.03125]
    rep = run_from_config(cfg)
    data = json.loads((out / "jump_density.json").read_text())
    assert data["summary"]["k"] == 2
    csv_lines = (out / "jump_density.csv").read_text().splitlines()
    assert csv_lines[0] == "eps,energy,density,fit_error" and len(csv_lines) == 3
    assert rep.records[0]["eps"] == 0.0625


@pytest.mark.parametrize("body", [
    "[parameters]\nk = 2\n",
    "[experiment]\nname = nope\n",
    "[experiment]\nname = density\n[parameters]\ncolour = red\n",
    "[experiment]\nname = density\n[parameters]\nmu = 2\n",
])
def test_config_errors(tmp_path, body):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(body)
    with pytest.raises(ValueError):
        run_from_config(cfg)
