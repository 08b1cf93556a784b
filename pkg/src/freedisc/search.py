"""Scalar searches used for the outer minimization over the profile length."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar


def log_golden(f, lo, hi, seeds=64, xtol=1e-10, refine=4):
    """Minimize ``f`` over ``[lo, hi]`` (lo > 0) by golden section in log scale.

    ``seeds`` log-spaced samples locate candidate brackets; golden section
    then refines the ``refine`` lowest local minima of the samples (an end
    sample counts when it beats its neighbour).  No global unimodality is
    assumed, so the result is the best value found.  Returns ``(x, f(x))``.
    """
    if not (0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    xs = np.geomspace(lo, hi, max(int(seeds), 3))
    vals = np.array([f(x) for x in xs])
    last = len(xs) - 1
    cand = [i for i in range(1, last) if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]]
    cand += [i for i, j in ((0, 1), (last, last - 1)) if vals[i] < vals[j]]
    cand = sorted(cand, key=lambda i: vals[i])[:max(refine, 1)]

    i0 = int(np.argmin(vals))
    best_x, best_f = float(xs[i0]), float(vals[i0])
    g = lambda s: f(math.exp(s))
    for i in cand:
        if 0 < i < last and vals[i] < vals[i - 1] and vals[i] < vals[i + 1]:
            br = (math.log(xs[i - 1]), math.log(xs[i]), math.log(xs[i + 1]))
            res = minimize_scalar(g, bracket=br, method="golden", options={"xtol": xtol})
        else:
            # flat stretch or end of the range: bounded search on the adjacent cells
            a = math.log(xs[max(i - 1, 0)])
            b = math.log(xs[min(i + 1, last)])
            res = minimize_scalar(g, bounds=(a, b), method="bounded", options={"xatol": xtol})
        if res.fun < best_f:
            best_x, best_f = math.exp(res.x), float(res.fun)
    return best_x, best_f
