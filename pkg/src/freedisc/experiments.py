"""Epsilon sweeps that measure the emergent jump cost of the discrete energies.

A sweep denoises a step of height z at a decreasing list of eps values and
splits each minimizer's energy into a smooth part (Dirichlet energy of the
below-threshold cells) and a transition part (everything else except the
fidelity).  The transition part divided by |z|^(1/k) is compared with the
profile constant.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError

from .functional import (
    EnergyParams,
    GridSignal,
    MinimizeOptions,
    SolverError,
    TruncatedQuadratic,
    bz_functional,
    detect_transitions,
    energy_terms,
    minimize,
    optimal_length,
    primitive_on_grid,
    recovery_function,
    resolved_count,
)
from .piecewise import Piece, PiecewiseFunction
from .profile import BoundarySpec, calibrate_c_k, hermite_profile, m_k_general

log = logging.getLogger(__name__)

MIN_CELLS = 32
FIDELITY_SCALE = 300.0


def default_eps_list(z: float, count: int = 7) -> list:
    """eps_i = s 2^-(i+3), i = 1..count, with s = min(|z|, 1).

    The scale factor keeps eps/|z| on the same ladder for small jumps: the
    saturation threshold 1/sqrt(eps) is fixed while transition slopes scale
    like |z|^(1/k)/eps, so small jumps need proportionally smaller eps.
    """
    s = min(abs(z), 1.0) if z else 1.0
    return [s * 2.0 ** -(i + 3) for i in range(1, count + 1)]


def default_fidelity(z: float) -> float:
    """lam = 300 |z|^-3/2 min(|z|, 1)^-3/2.

    Flattening a jump saves about m |z|^(1/k) and costs about lam z^2 / 4, so
    lam must grow like |z|^-3/2 for the jump to survive; on the shrunken eps
    ladder of small jumps the second factor keeps the problem self-similar.
    """
    if not z:
        return FIDELITY_SCALE
    z = abs(z)
    return FIDELITY_SCALE * z ** -1.5 * min(z, 1.0) ** -1.5


@dataclass
class SweepPlan:
    k: int = 2
    z: float = 1.0
    eps: list = field(default_factory=list)
    lam: float | None = None
    cells: int = 64
    noise: float = 0.0
    seed: int = 0
    repetitions: int = 1
    c: float = 1.0
    b: float = 1.0
    tolerance: float = 1e-6
    max_iter: int = 500
    smoothing: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if not self.eps:
            self.eps = default_eps_list(self.z)
        self.eps = [float(e) for e in self.eps]
        if self.lam is None:
            self.lam = default_fidelity(self.z)
        self.validate()

    def validate(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if any(e <= 0 for e in self.eps):
            raise ValueError("eps values must be positive")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError("eps list must be strictly decreasing")
        if self.cells < MIN_CELLS:
            raise ValueError(f"resolution rule needs at least {MIN_CELLS} cells per transition")
        if not self.lam > 0:
            raise ValueError("fidelity weight must be positive")
        if self.noise < 0 or self.repetitions < 1 or self.workers < 1:
            raise ValueError("noise >= 0, repetitions >= 1 and workers >= 1 required")
        if not (self.b > 0 and self.c > 0):
            raise ValueError("b and c must be positive")

    def spacing(self, eps: float) -> float:
        """h = eps |z|^(1/k) T / cells, the transition width split into ``cells`` cells."""
        scale = abs(self.z) ** (1.0 / self.k) if self.z else 1.0
        return eps * scale * optimal_length(self.k, self.b, self.c) / self.cells

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class ExperimentReport:
    experiment: str
    records: list
    summary: dict
    provenance: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        cols = ["eps", "energy", "density", "fit_error"]
        lines = [",".join(cols)]
        for r in self.records:
            lines.append(",".join(_fmt(r.get(c)) for c in cols))
        return "\n".join(lines) + "\n"

    def write(self, directory, stem: str | None = None):
        from pathlib import Path

        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.experiment
        (out / f"{stem}.json").write_text(self.to_json(indent=2))
        (out / f"{stem}.csv").write_text(self.to_csv())
        return out / f"{stem}.json", out / f"{stem}.csv"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


# ---- one eps -------------------------------------------------------------------

def _step_data(plan: SweepPlan, eps: float, rep: int) -> tuple:
    h = plan.spacing(eps)
    n = int(math.ceil(1.0 / h)) + 1
    t = np.linspace(0.0, 1.0, n)
    g = np.where(t < 0.5, 0.0, plan.z)
    seed = [plan.seed, rep, int(round(-math.log2(eps) * 1e6))]
    if plan.noise > 0:
        g = g + np.random.default_rng(seed).uniform(-plan.noise, plan.noise, n)
    return GridSignal(g, 1.0 / (n - 1)), seed


def transition_energy(u: GridSignal, p: EnergyParams) -> float:
    """Total energy minus fidelity minus the Dirichlet part of the below-threshold cells."""
    terms = energy_terms(u, p)
    du = u.slopes()
    below = np.abs(du) < p.potential.threshold(p.eps)
    smooth = float(np.sum(p.potential.a * du[below] ** 2) * u.h)
    return terms.potential + terms.penalty - smooth


def profile_fit_error(u: GridSignal, cells: tuple, k: int, eps: float, b: float = 1.0,
                      c: float = 1.0, samples: int = 2001) -> float:
    """Sup-norm distance between the rescaled transition and the optimal profile.

    The transition is centred where u crosses the mean of its run-end values,
    rescaled by beta = eps |z|^(1/k) and normalized to unit height.
    """
    a, b_cell = cells
    t, v = u.t, u.values
    seg = v[a:b_cell + 2]
    z = seg[-1] - seg[0]
    if z == 0:
        raise ValueError("transition has zero height")
    mid = 0.5 * (seg[0] + seg[-1])
    sgn = 1.0 if z > 0 else -1.0
    j = a + int(np.searchsorted(sgn * seg, sgn * mid))
    j = min(max(j, a + 1), b_cell + 1)
    centre = t[j - 1] + (mid - v[j - 1]) * (t[j] - t[j - 1]) / (v[j] - v[j - 1])
    T = optimal_length(k, b, c)
    w = hermite_profile(k, BoundarySpec.clamped(k), T, exact=False)
    beta = eps * abs(z) ** (1.0 / k)
    s = np.linspace(-T / 2, T / 2, samples)
    vals = np.interp(centre + beta * s, t, v)
    span = vals[-1] - vals[0]
    if span == 0:
        raise ValueError("rescaled window is flat")
    return float(np.max(np.abs((vals - vals[0]) / span - 0.5 - w(s))))


def _run_one(args) -> dict:
    plan, eps, rep = args
    rec = {"eps": eps, "repetition": rep}
    try:
        g, seed = _step_data(plan, eps, rep)
        rec.update(n=g.n, h=g.h, seed=seed)
        p = EnergyParams(plan.k, eps, TruncatedQuadratic(1.0, plan.b), c=plan.c, lam=plan.lam, data=g)
        opts = MinimizeOptions(tolerance=plan.tolerance, max_iter=plan.max_iter, smoothing=plan.smoothing)
        res = minimize(g, p, opts)
        u = res.signal
        tr = detect_transitions(u, p)
        terms = energy_terms(u, p)
        trans = transition_energy(u, p)
        scale = sum(abs(j) ** (1.0 / plan.k) for j in tr.jumps)
        rec.update(
            energy=res.energy,
            potential=terms.potential,
            penalty=terms.penalty,
            fidelity=terms.fidelity,
            transitions=tr.count,
            intervals=[list(x) for x in tr.intervals],
            jumps=tr.jumps,
            transition_energy=trans if tr.count else 0.0,
            density=trans / scale if tr.count else 0.0,
            converged=res.converged,
            iterations=res.iterations,
            message=res.message,
            fit_error=None,
            error=None,
        )
        if tr.count == 1:
            rec["fit_error"] = profile_fit_error(u, tr.cells[0], plan.k, eps, plan.b, plan.c)
        elif tr.count > 1:
            rec["message"] += f"; {tr.count} transitions, profile fit skipped"
    except (SolverError, ArithmeticError, LinAlgError, ValueError) as exc:
        log.warning("eps=%g failed: %s", eps, exc)
        rec.update(error=f"{type(exc).__name__}: {exc}", density=None, fit_error=None, energy=None,
                   transitions=None)
    return rec


def _aitken(seq):
    """Delta-squared extrapolation of the last three terms (None when degenerate)."""
    if len(seq) < 3 or any(x is None for x in seq[-3:]):
        return None
    x0, x1, x2 = seq[-3:]
    d = (x2 - x1) - (x1 - x0)
    if d == 0:
        return None
    return x2 - (x2 - x1) ** 2 / d


def _provenance(plan: SweepPlan | None, extra: dict | None = None) -> dict:
    out = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    if plan is not None:
        out.update(config=plan.to_dict(), config_hash=plan.config_hash(), seed=plan.seed)
    if extra:
        out.update(extra)
    return out


def _sweep_records(plan: SweepPlan) -> list:
    jobs = [(plan, e, r) for e in plan.eps for r in range(plan.repetitions)]
    if plan.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def run_jump_density_sweep(plan: SweepPlan) -> ExperimentReport:
    plan.validate()
    records = _sweep_records(plan)
    expected = m_k_general(plan.k, plan.b, plan.c).energy
    dens = [r["density"] for r in records if r.get("repetition") == 0]
    finest = dens[-1] if dens else None
    summary = {
        "k": plan.k,
        "z": plan.z,
        "m_k": expected,
        "expected_density": expected if plan.z else 0.0,
        "finest_eps": plan.eps[-1],
        "finest_density": finest,
        "extrapolated_density": _aitken(dens),
        "relative_error": (abs(finest / expected - 1.0) if plan.z and finest is not None else None),
        "transition_counts": [r.get("transitions") for r in records],
        "failures": sum(1 for r in records if r.get("error")),
    }
    return ExperimentReport("jump_density", records, summary, _provenance(plan))


def run_profile_fit(plan: SweepPlan) -> ExperimentReport:
    report = run_jump_density_sweep(plan)
    fits = [r.get("fit_error") for r in report.records if r.get("repetition") == 0]
    flagged = [r["eps"] for r in report.records if r.get("transitions") not in (1, None)]
    good = [f for f in fits if f is not None]
    report.summary.update(
        finest_fit_error=fits[-1] if fits else None,
        fit_errors=fits,
        fit_decreasing=bool(len(good) >= 2 and good[-1] < good[0]),
        flagged_eps=flagged,
    )
    report.experiment = "profile_fit"
    return report


def run_ms_approximation(mu: float, k_list, eps_rule=None, z: float = 1.0, lam: float | None = None,
                         cells: int = 64, workers: int = 1) -> ExperimentReport:
    """Calibrated sweeps c = c_k(mu): the jump cost tends to mu |z|^(1/k)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    records = []
    for k in k_list:
        c = calibrate_c_k(k, mu)
        eps = eps_rule(k, z) if eps_rule else default_eps_list(z, 5)
        plan = SweepPlan(k=k, z=z, eps=eps, lam=lam, c=c, cells=cells, workers=workers)
        rep = run_jump_density_sweep(plan)
        fin = rep.records[-1]
        cost = fin.get("transition_energy")
        target = mu * abs(z) ** (1.0 / k)
        records.append({
            "k": k,
            "c_k": c,
            "eps": fin["eps"],
            "transitions": fin.get("transitions"),
            "jump_cost": cost,
            "target": target,
            "relative_error": abs(cost / target - 1.0) if cost is not None else None,
            "sweep": rep.records,
        })
    summary = {"mu": mu, "z": z, "k_list": list(k_list),
               "costs": [r["jump_cost"] for r in records]}
    return ExperimentReport("ms_approximation", records, summary,
                            _provenance(None, {"mu": mu, "z": z, "k_list": list(k_list)}))


# ---- Blake-Zisserman targets ---------------------------------------------------

def _crease_slope() -> PiecewiseFunction:
    # u = max(t - 1/2, 0): slope steps from 0 to 1
    return PiecewiseFunction.step(0.5, 0.0, 1.0)


def _jump_slope(width: float) -> PiecewiseFunction:
    # steep unit-slope ramp of the given width: slope bump of unit height
    lo, hi = 0.5 - width / 2, 0.5 + width / 2
    return PiecewiseFunction.from_pieces([Piece(0.0, lo, [0.0]), Piece(lo, hi, [1.0]), Piece(hi, 1.0, [0.0])])


def bz_target_signal(kind: str, k: int, eps: float, width: float = 0.25, n: int | None = None) -> GridSignal:
    """Primitive of a recovery sequence for the slope of a crease, jump or flat target."""
    c = calibrate_c_k(k - 1, 1.0)
    if kind == "flat":
        return GridSignal(np.zeros(n or 1025), 1.0 / ((n or 1025) - 1))
    slope = {"crease": _crease_slope, "jump": lambda: _jump_slope(width)}[kind]()
    g, _ = recovery_function(slope, k - 1, eps, c=c)
    n = n or resolved_count(slope, k - 1, eps, cells=64, c=c)
    return primitive_on_grid(g, n)


def run_bz_approximation(k: int, eps_list=None, width: float = 0.25) -> ExperimentReport:
    """G_k along constructed sequences: crease -> 1, jump -> 2, flat -> 0."""
    if k < 3:
        raise ValueError("the Blake-Zisserman approximation needs k >= 3")
    eps_list = list(eps_list) if eps_list else [2.0 ** -i for i in range(4, 8)]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or any(e <= 0 for e in eps_list):
        raise ValueError("eps list must be positive and strictly decreasing")
    targets = {"flat": 0.0, "crease": 1.0, "jump": 2.0}
    records = []
    for eps in eps_list:
        rec = {"eps": eps}
        for kind, target in targets.items():
            u = bz_target_signal(kind, k, eps, width)
            val = bz_functional(u, k, eps)
            rec[kind] = val
            rec[f"{kind}_n"] = u.n
        records.append(rec)
    fin = records[-1]
    summary = {
        "k": k,
        "width": width,
        "targets": targets,
        "finest_eps": eps_list[-1],
        "relative_errors": {kind: abs(fin[kind] / t - 1.0) for kind, t in targets.items() if t},
        "flat": fin["flat"],
    }
    return ExperimentReport("bz_approximation", records, summary,
                            _provenance(None, {"k": k, "eps": eps_list, "width": width}))


# ---- config files ----------------------------------------------------------------

_FLOAT_KEYS = {"z", "lam", "noise", "c", "b", "tolerance", "smoothing", "mu", "width"}
_INT_KEYS = {"k", "cells", "seed", "repetitions", "max-iter", "workers"}


def _parse_list(text, conv=float):
    return [conv(x) for x in text.replace(",", " ").split()]


def load_config(path) -> tuple:
    """Read an INI-style config.  Returns (experiment, parameters, output directory).

    [experiment]
    name = density | profile-fit | ms | bz
    output = results/
    [parameters]
    k = 2
    z = 1
    eps = 0.0625 0.03125 ...
    lam, cells, noise, seed, repetitions, c, b, workers, mu, k-list, width
    [solver]
    tolerance, max-iter, smoothing
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:
        cp.read_file(fh)
    if "experiment" not in cp:
        raise ValueError("config needs an [experiment] section")
    name = cp["experiment"].get("name", "density").strip()
    output = cp["experiment"].get("output")
    params = {}
    for section in ("parameters", "solver"):
        if section not in cp:
            continue
        for key, raw in cp[section].items():
            if key in _FLOAT_KEYS:
                params[key] = float(raw)
            elif key in _INT_KEYS:
                params[key] = int(raw)
            elif key == "eps":
                params["eps"] = _parse_list(raw)
            elif key == "k-list":
                params["k_list"] = _parse_list(raw, int)
            else:
                raise ValueError(f"unknown config key {key!r} in [{section}]")
    if "max-iter" in params:
        params["max_iter"] = params.pop("max-iter")
    return name, params, output


def run_from_config(path) -> ExperimentReport:
    name, params, output = load_config(path)
    if name in ("density", "profile-fit"):
        allowed = set(SweepPlan.__dataclass_fields__)
        extra = set(params) - allowed
        if extra:
            raise ValueError(f"keys {sorted(extra)} do not apply to a sweep")
        plan = SweepPlan(**params)
        report = run_jump_density_sweep(plan) if name == "density" else run_profile_fit(plan)
    elif name == "ms":
        report = run_ms_approximation(params.get("mu", 1.0), params.get("k_list", [2, 3]),
                                      z=params.get("z", 1.0), lam=params.get("lam"),
                                      cells=params.get("cells", 64), workers=params.get("workers", 1))
    elif name == "bz":
        report = run_bz_approximation(params.get("k", 3), params.get("eps"), params.get("width", 0.25))
    else:
        raise ValueError(f"unknown experiment {name!r}")
    if output:
        report.write(output)
    return report
