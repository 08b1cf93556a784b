"""Small dense box-constrained convex quadratic programs.

Objective is written in least-squares form, ``||B x + r||^2``, which keeps
positive-semidefinite Hessians honest (``H = 2 B^T B``).  Bounds may be
infinite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear


@dataclass
class BoxQPResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    polished: bool


def _value(B, r, x):
    res = B @ x + r
    return float(res @ res)


def _grad(B, r, x):
    return 2.0 * (B.T @ (B @ x + r))


def _projected_gradient_norm(x, g, lo, hi):
    # the step a tiny projected move would take, per coordinate
    pg = g.copy()
    pg[(x <= lo) & (g > 0)] = 0.0
    pg[(x >= hi) & (g < 0)] = 0.0
    return float(np.max(np.abs(pg), initial=0.0))


def solve_box_qp(B, r, lo, hi, x0=None, tol=1e-14, max_iter=20000, method="bvls") -> BoxQPResult:
    """Minimize ``||B x + r||^2`` subject to ``lo <= x <= hi``.

    ``bvls`` (default) is the bounded-variable least-squares active-set
    method; its answer is kept when it satisfies the KKT conditions, else
    the projected-gradient path below runs from it.  ``pg``: projected gradient with Barzilai-Borwein steps (safeguarded by a
    nonmonotone-free Armijo backtrack), followed by an active-set polish that
    re-solves the free block exactly and keeps it only if it is feasible and
    no worse.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    r = np.asarray(r, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m = B.shape[1]
    if np.any(lo > hi):
        raise ValueError("infeasible box: lo > hi")
    if m == 0:
        return BoxQPResult(np.zeros(0), _value(B, r, np.zeros(0)), 0, True, False)

    x = np.zeros(m) if x0 is None else np.asarray(x0, dtype=float).copy()
    x = np.clip(x, lo, hi)
    if method == "bvls":
        res = lsq_linear(B, -r, bounds=(lo, hi), method="bvls", tol=1e-15, lsmr_tol=None)
        xb = np.clip(res.x, lo, hi)
        if _kkt_ok(B, r, lo, hi, xb):
            return BoxQPResult(xb, _value(B, r, xb), int(res.nit), True, False)
        x = xb
    elif method != "pg":
        raise ValueError(f"unknown method {method!r}")
    L = 2.0 * np.linalg.norm(B, 2) ** 2
    if L == 0.0:
        return BoxQPResult(x, _value(B, r, x), 0, True, False)
    scale = max(1.0, float(np.max(np.abs(_grad(B, r, np.clip(np.zeros(m), lo, hi))))))

    g = _grad(B, r, x)
    f = _value(B, r, x)
    step = 1.0 / L
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if _projected_gradient_norm(x, g, lo, hi) <= tol * scale:
            converged = True
            break
        while True:
            x_new = np.clip(x - step * g, lo, hi)
            f_new = _value(B, r, x_new)
            d = x_new - x
            if f_new <= f + 1e-4 * float(g @ d) or step <= 1e-3 / L:
                break
            step *= 0.5
        g_new = _grad(B, r, x_new)
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 1.0 / L
        step = min(max(step, 1e-3 / L), 1e12 / L)
        if not np.any(s):
            converged = True
            x, g, f = x_new, g_new, f_new
            break
        x, g, f = x_new, g_new, f_new

    x_pol, polished = _polish(B, r, lo, hi, x, g)
    if polished:
        f_pol = _value(B, r, x_pol)
        if f_pol <= f:
            x, f = x_pol, f_pol
        else:
            polished = False
    return BoxQPResult(x, f, it, converged or polished, polished)


def _kkt_ok(B, r, lo, hi, x, rtol=1e-9):
    g = _grad(B, r, x)
    scale = max(1.0, float(np.max(np.abs(B.T @ r), initial=0.0)))
    span = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    eps = 1e-9 * np.maximum(span, 1e-300)
    return _projected_gradient_norm(np.where(x - lo <= eps, lo, np.where(hi - x <= eps, hi, x)), g, lo, hi) <= rtol * scale


def _polish(B, r, lo, hi, x, g, rounds=8):
    """Active-set refinement starting from the projected-gradient iterate."""
    m = x.size
    span = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    eps = 1e-9 * np.maximum(span, 1e-300)
    at_lo = (x - lo <= eps) & (g > 0)
    at_hi = (hi - x <= eps) & (g < 0)
    for _ in range(rounds):
        fixed = at_lo | at_hi
        free = ~fixed
        xa = np.where(at_lo, lo, np.where(at_hi, hi, 0.0))
        xf = np.zeros(m)
        if np.any(free):
            rhs = -(r + B[:, fixed] @ xa[fixed])
            sol, *_ = np.linalg.lstsq(B[:, free], rhs, rcond=None)
            xf[free] = sol
        cand = np.where(fixed, xa, xf)
        gc = _grad(B, r, cand)
        feasible = np.all(cand >= lo - eps) and np.all(cand <= hi + eps)
        # multipliers: gradient must push outward on active bounds
        kkt = np.all(gc[at_lo] >= -1e-10 * max(1.0, np.abs(gc).max())) and np.all(
            gc[at_hi] <= 1e-10 * max(1.0, np.abs(gc).max())
        )
        if feasible and kkt:
            return np.clip(cand, lo, hi), True
        # release wrong-signed actives, add violated frees
        at_lo = (at_lo & (gc > 0)) | (free & (cand < lo))
        at_hi = (at_hi & (gc < 0)) | (free & (cand > hi))
    return x, False
