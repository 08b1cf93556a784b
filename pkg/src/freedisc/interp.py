"""Empirical constant of the local interpolation inequality

    eps^g ||u^(l)||^2  <=  R_k ( ||u'||^2 + eps^(2k-1) ||u^(k)||^2 + eps^g |I|^(-2(l-1)) ||u'||^2 )

on an interval I, with g = (2k-1)(l-1)/(k-1) and 2 <= l <= k-1.

With N_j the squared L2 norm of the j-th derivative of the shape rescaled to
[0, 1] and s = eps^((2k-1)/(k-1)) / |I|^2, the ratio of the two sides is

    s^(l-1) N_l / (N_1 + s^(k-1) N_k + s^(l-1) N_1),

so sampling separates into random shapes and random (eps, |I|).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial import legendre as L
from scipy.interpolate import BSpline, make_interp_spline

from .functional import GridSignal
from .polynomial import Polynomial

CHUNK = 1000


def gamma(k: int, ell: int):
    """(2k-1)(l-1)/(k-1) as an exact rational."""
    return Fraction((2 * k - 1) * (ell - 1), k - 1)


@dataclass
class InterpCase:
    k: int
    ell: int
    eps: float
    interval: tuple
    u: object  # Polynomial or GridSignal

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("the interpolation inequality needs k >= 3")
        if not 2 <= self.ell <= self.k - 1:
            raise ValueError(f"l must lie in 2..{self.k - 1}")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        a, b = self.interval
        if not a < b:
            raise ValueError("empty interval")
        if not isinstance(self.u, (Polynomial, GridSignal)):
            raise TypeError("u must be a Polynomial or a GridSignal")

    @property
    def gamma(self) -> Fraction:
        return gamma(self.k, self.ell)

    @property
    def length(self):
        a, b = self.interval
        return b - a


def _spline(u: GridSignal, k: int) -> BSpline:
    deg = max(3, k)
    if u.n <= deg:
        raise ValueError(f"need more than {deg} nodes for a degree-{deg} spline")
    return make_interp_spline(u.t, u.values, k=deg)


def _spline_norms(spl: BSpline, orders, lo: float, hi: float) -> dict:
    """Squared L2 norms of spline derivatives on [lo, hi], Gauss-Legendre per knot span."""
    knots = np.unique(spl.t[(spl.t > lo) & (spl.t < hi)])
    edges = np.concatenate([[lo], knots, [hi]])
    x, w = L.leggauss(spl.k + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    out = {}
    for j in orders:
        vals = spl(pts, nu=j) if j <= spl.k else np.zeros_like(pts)
        out[j] = float(np.sum(wts * vals * vals))
    return out


def derivative_norms(case: InterpCase, orders) -> dict:
    a, b = case.interval
    if isinstance(case.u, Polynomial):
        exact = case.u.exact and all(isinstance(x, (int, Fraction)) for x in (a, b))
        if not exact:
            a, b = float(a), float(b)
        return {j: case.u.square_integral(j, a, b) for j in orders}
    t0, t1 = case.u.t[0], case.u.t[-1]
    if a < t0 - 1e-12 or b > t1 + 1e-12:
        raise ValueError("interval leaves the sampled grid")
    return _spline_norms(_spline(case.u, case.k), orders, float(a), float(b))


def _power(x, g: Fraction):
    # exact when x is rational and g an integer
    if isinstance(x, (int, Fraction)) and g.denominator == 1:
        return Fraction(x) ** g.numerator
    return float(x) ** float(g)


def interp_sides(case: InterpCase) -> tuple:
    """(lhs, rhs without the constant) of the inequality on the case's interval."""
    k, ell = case.k, case.ell
    N = derivative_norms(case, sorted({1, ell, k}))
    g = case.gamma
    eg = _power(case.eps, g)
    lhs = eg * N[ell]
    rhs = N[1] + _power(case.eps, Fraction(2 * k - 1)) * N[k] + eg * N[1] / _power(case.length, Fraction(2 * (ell - 1)))
    return lhs, rhs


def below_threshold(case: InterpCase, nodes: int = 257) -> bool:
    """|u'|^2 <= 1/eps at the sample nodes of the interval."""
    a, b = (float(x) for x in case.interval)
    if isinstance(case.u, Polynomial):
        t = np.linspace(a, b, nodes)
        d = np.asarray(case.u.to_float()(t, 1), dtype=float)
    else:
        m = (case.u.t >= a - 1e-12) & (case.u.t <= b + 1e-12)
        d = _spline(case.u, case.k)(case.u.t[m], nu=1)
    return bool(np.all(d * d <= 1.0 / case.eps))


def localized_sides(case: InterpCase) -> tuple:
    """(||u^(l)||^2, eps^-g F_eps(u, I) + |I|^-2(l-1) ||u'||^2) for cases below the threshold.

    Below the threshold the potential is the quadratic branch, so F_eps(u, I)
    is ||u'||^2 + eps^(2k-1) ||u^(k)||^2 on I.
    """
    if not below_threshold(case):
        raise ValueError("|u'|^2 exceeds 1/eps on the interval")
    k, ell = case.k, case.ell
    N = derivative_norms(case, sorted({1, ell, k}))
    eps, length = float(case.eps), float(case.length)
    F = float(N[1]) + eps ** (2 * k - 1) * float(N[k])
    g = float(case.gamma)
    return float(N[ell]), eps ** -g * F + length ** (-2 * (ell - 1)) * float(N[1])


# ---- random sampling -----------------------------------------------------------

def _legendre_norms(coeffs: np.ndarray, orders) -> dict:
    """N_j on [0, 1] for u(s) = sum a_i P_i(2s - 1); rows of ``coeffs`` are samples."""
    out = {}
    for j in orders:
        d = L.legder(coeffs, j, scl=2.0, axis=1) if j else coeffs
        w = 1.0 / (2 * np.arange(d.shape[1]) + 1)
        out[j] = np.sum(d * d * w, axis=1) if d.shape[1] else np.zeros(coeffs.shape[0])
    return out


def _random_spline_norms(rng, k: int, orders) -> dict:
    deg = max(3, k)
    m = int(rng.integers(1, 9))
    inner = np.sort(rng.uniform(0.0, 1.0, m))
    t = np.concatenate([np.zeros(deg + 1), inner, np.ones(deg + 1)])
    spl = BSpline(t, rng.standard_normal(t.size - deg - 1), deg)
    return _spline_norms(spl, orders, 0.0, 1.0)


def _chunk(k: int, size: int, seed: int, index: int) -> dict:
    rng = np.random.default_rng([seed, index])
    orders = sorted(set(range(1, k + 1)))
    dmax = 2 * k + 2
    is_poly = rng.random(size) < 0.5
    degree = rng.integers(1, dmax + 1, size)
    coeffs = rng.standard_normal((size, dmax + 1))
    coeffs[np.arange(dmax + 1)[None, :] > degree[:, None]] = 0.0
    N = _legendre_norms(coeffs, orders)
    kind = np.where(is_poly, "poly", "spline")
    for i in np.flatnonzero(~is_poly):
        sn = _random_spline_norms(rng, k, orders)
        for j in orders:
            N[j][i] = sn[j]
    eps = np.exp(rng.uniform(math.log(1e-4), 0.0, size))
    length = np.exp(rng.uniform(math.log(1e-3), 0.0, size))
    return {"kind": kind, "N": N, "eps": eps, "length": length}


@dataclass
class InterpReport:
    k: int
    samples: int
    seed: int
    R_hat: float
    rows: dict  # column arrays: kind, ell, eps, length, lhs, rhs, ratio

    def summary(self) -> dict:
        return {"k": self.k, "R_hat": self.R_hat, "samples": self.samples, "seed": self.seed}

    def to_json(self, **kw) -> str:
        return json.dumps(self.summary(), **kw)

    def to_csv(self) -> str:
        cols = ["k", "ell", "eps", "length", "lhs", "rhs", "ratio"]
        lines = [",".join(cols)]
        r = self.rows
        for i in range(len(r["ratio"])):
            lines.append(",".join([str(self.k), str(int(r["ell"][i]))]
                                  + [repr(float(r[c][i])) for c in cols[2:]]))
        return "\n".join(lines) + "\n"


def sample_cases(k: int, samples: int, seed: int = 0) -> InterpReport:
    """Random shapes and scales; every l in 2..k-1 is evaluated for each shape.

    Shapes come in chunks of 1000 drawn from the substream [seed, chunk], so a
    larger sample count extends a smaller one with the same seed.
    """
    if k < 3:
        raise ValueError("the interpolation inequality needs k >= 3")
    if samples < 1:
        raise ValueError("sample count must be >= 1")
    cols = {c: [] for c in ("kind", "ell", "eps", "length", "lhs", "rhs", "ratio")}
    for index in range(math.ceil(samples / CHUNK)):
        size = min(CHUNK, samples - index * CHUNK)
        ch = _chunk(k, size, seed, index)
        eps, length, N = ch["eps"], ch["length"], ch["N"]
        for ell in range(2, k):
            g = (2 * k - 1) * (ell - 1) / (k - 1)
            # sides on I of length |I|: N_j picks up |I|^(1-2j)
            n1 = N[1] / length
            nl = N[ell] * length ** (1 - 2 * ell)
            nk = N[k] * length ** (1 - 2 * k)
            lhs = eps ** g * nl
            rhs = n1 + eps ** (2 * k - 1) * nk + eps ** g * n1 / length ** (2 * (ell - 1))
            cols["kind"].append(ch["kind"])
            cols["ell"].append(np.full(size, ell))
            cols["eps"].append(eps)
            cols["length"].append(length)
            cols["lhs"].append(lhs)
            cols["rhs"].append(rhs)
            cols["ratio"].append(lhs / rhs)
    rows = {c: np.concatenate(v) for c, v in cols.items()}
    R = float(np.max(rows["ratio"]))
    return InterpReport(k, samples, seed, R, rows)


def estimate_Rk(k: int, samples: int, seed: int = 0) -> float:
    """Largest sampled ratio lhs / rhs (an empirical lower estimate of R_k)."""
    return sample_cases(k, samples, seed).R_hat
