"""Optimal transition profiles and the jump-energy constants m_k.

Every minimizer of the integral of (v^(k))^2 with prescribed endpoint jets
solves v^(2k) = 0, so it is the Hermite interpolant of degree <= 2k-1 of
those jets.  Everything below reduces to that fact plus the scaling
v_T(t) = v_1(t/T), under which the equality-constrained energy is
A_k * T^(1-2k).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .polynomial import Polynomial, as_fraction, falling, solve_exact, solve_float
from .qp import solve_box_qp
from .search import log_golden

MAX_EXACT_K = 16


@dataclass(frozen=True)
class BoundarySpec:
    """Endpoint conditions for the jump profile on (-T/2, T/2).

    ``v(+-T/2) = +-jump/2`` always.  Orders in ``exact_orders`` take the value
    ``values.get(order, 0)`` at both ends; orders in ``boxed_orders`` satisfy
    ``|v^(order)(+-T/2)| <= bound``; any remaining order in 1..k-1 is free.
    """

    k: int
    jump: float = 1.0
    exact_orders: tuple = ()
    boxed_orders: tuple = ()
    bound: float = 0.0
    values: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        orders = set(self.exact_orders) | set(self.boxed_orders)
        if not orders <= set(range(1, self.k)):
            raise ValueError("constrained orders must lie in 1..k-1")
        if set(self.exact_orders) & set(self.boxed_orders):
            raise ValueError("an order cannot be both exact and boxed")
        if self.boxed_orders and self.bound < 0:
            raise ValueError("box bound must be nonnegative")

    @classmethod
    def clamped(cls, k: int, jump: float = 1.0) -> "BoundarySpec":
        """All derivatives 1..k-1 vanish at both ends (the m_k problem)."""
        return cls(k, jump, exact_orders=tuple(range(1, k)))

    @classmethod
    def boxed(cls, k: int, n: int, N: float, jump: float = 1.0) -> "BoundarySpec":
        return cls(k, jump, boxed_orders=tuple(range(1, n + 1)), bound=1.0 / N)

    @property
    def fully_clamped(self) -> bool:
        return set(self.exact_orders) == set(range(1, self.k))


def fraction_str(x: Fraction) -> str:
    """Lossless "num/den" form, denominator always present."""
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


@dataclass
class ProfileResult:
    k: int
    T_star: float
    energy: float
    profile: Polynomial
    A_k: Fraction | None = None
    n: int | None = None
    N: float | None = None
    b: float = 1.0
    c: float = 1.0

    def to_dict(self) -> dict:
        A = self.A_k
        return {
            "k": self.k,
            "n": self.n,
            "N": self.N,
            "b": self.b,
            "c": self.c,
            "T_star": self.T_star,
            "energy": self.energy,
            "A_k": None if A is None else fraction_str(A),
            "A_k_float": None if A is None else float(A),
            "coefficients": [fraction_str(x) if isinstance(x, Fraction) else float(x) for x in self.profile.coeffs],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _check_k(k: int, exact: bool = True):
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError("k must be a positive integer")
    if exact and k > MAX_EXACT_K:
        raise ValueError(f"k={k} exceeds the exact-arithmetic cap {MAX_EXACT_K}")


def hermite_matrix(k: int, half_width, exact: bool = True) -> list:
    """Rows: (left end, orders 0..k-1) then (right end, orders 0..k-1); columns: t**j."""
    a = as_fraction(half_width) if exact else float(half_width)
    rows = []
    for s in (-a, a):
        for order in range(k):
            rows.append([falling(j, order) * s ** (j - order) if j >= order else 0 * a for j in range(2 * k)])
    return rows


def hermite_interpolant(left_jet: Sequence, right_jet: Sequence, half_width, center=0,
                        exact: bool = True) -> Polynomial:
    """The unique degree <= 2k-1 polynomial with the given endpoint jets.

    Jets hold orders 0..k-1 at ``center -+ half_width``.
    """
    k = len(left_jet)
    if len(right_jet) != k or k < 1:
        raise ValueError("jets must have equal, positive length")
    if not half_width > 0:
        raise ValueError("interval length must be positive")
    rhs = list(left_jet) + list(right_jet)
    A = hermite_matrix(k, half_width, exact)
    if exact:
        _check_k(k)
        cs = solve_exact(A, [as_fraction(v) for v in rhs])
        return Polynomial(tuple(cs), as_fraction(half_width), as_fraction(center))
    cs = solve_float(A, rhs)
    return Polynomial(tuple(float(c) for c in cs), float(half_width), float(center))


def hermite_profile(k: int, spec: BoundarySpec, T, exact: bool = True) -> Polynomial:
    """Minimizer of the integral of (v^(k))^2 under fully prescribed endpoint jets.

    With zero derivative data the solution is odd; only the odd coefficients
    are solved for, and the full set of 2k conditions is re-checked at both
    ends, which by uniqueness certifies that the even coefficients vanish.
    """
    _check_k(k, exact)
    if spec.k != k:
        raise ValueError("spec.k does not match k")
    if not spec.fully_clamped:
        raise ValueError("hermite_profile needs equality data for every order 1..k-1")
    if not T > 0:
        raise ValueError("T must be positive")
    a = as_fraction(T) / 2 if exact else float(T) / 2
    z = as_fraction(spec.jump) if exact else float(spec.jump)
    vals = {o: (as_fraction(v) if exact else float(v)) for o, v in spec.values.items()}

    if any(vals.get(o, 0) != 0 for o in range(1, k)):
        left = [-z / 2] + [vals.get(o, 0 * z) for o in range(1, k)]
        right = [z / 2] + [vals.get(o, 0 * z) for o in range(1, k)]
        return hermite_interpolant(left, right, a, exact=exact)

    odd = [2 * i + 1 for i in range(k)]
    if not exact:
        return _odd_profile_float(k, a, z)
    A = [[falling(j, order) * a ** (j - order) if j >= order else 0 * a for j in odd] for order in range(k)]
    rhs = [z / 2] + [0 * z] * (k - 1)
    sol = solve_exact(A, rhs)
    coeffs = [0 * z] * (2 * k)
    for j, c in zip(odd, sol):
        coeffs[j] = c
    p = Polynomial(tuple(coeffs), a)
    for order in range(k):
        target = z / 2 if order == 0 else 0
        assert p(a, order) == target and p(-a, order) == (-target if order == 0 else 0), \
            "odd Hermite profile violates a boundary condition"
    return p


@lru_cache(maxsize=None)
def profile_energy_constant(k: int) -> Fraction:
    """A_k: the integral of (v^(k))^2 for the clamped unit-jump profile with T = 1."""
    _check_k(k)
    p = hermite_profile(k, BoundarySpec.clamped(k), Fraction(1))
    return p.square_integral(k)


def _odd_unit_coeffs(k: int) -> np.ndarray:
    """Odd coefficients of q on [-1, 1] with q(1) = 1/2, q^(l)(1) = 0 (float).

    Columns are equilibrated and the solve is refined twice; the monomial
    system is badly conditioned for large k.
    """
    odd = [2 * i + 1 for i in range(k)]
    A = np.array([[float(falling(j, o)) for j in odd] for o in range(k)])
    b = np.zeros(k)
    b[0] = 0.5
    D = 1.0 / np.abs(A).max(axis=0)
    As = A * D
    y = solve_float(As, b)
    for _ in range(2):
        y += solve_float(As, b - As @ y)
    return y * D


def _odd_profile_float(k: int, a: float, z: float) -> Polynomial:
    c = _odd_unit_coeffs(k)
    coeffs = np.zeros(2 * k)
    coeffs[1::2] = z * c / a ** np.arange(1, 2 * k, 2)
    return Polynomial(tuple(float(x) for x in coeffs), float(a))


def profile_energy_constant_float(k: int) -> float:
    """Floating A_k; Gauss-Legendre quadrature of (q^(k))^2 on [-1, 1], rescaled."""
    _check_k(k, exact=False)
    cs = np.zeros(2 * k)
    cs[1::2] = _odd_unit_coeffs(k)
    d = np.polynomial.polynomial.polyder(cs, k)
    x, w = np.polynomial.legendre.leggauss(2 * k)
    return float(w @ np.polynomial.polynomial.polyval(x, d) ** 2) * 2.0 ** (2 * k - 1)


@lru_cache(maxsize=None)
def hermite_energy_matrix(k: int) -> tuple:
    """Exact Gram matrix H with  integral_{-1/2}^{1/2} (p^(k))^2 = J^T H J  for the
    Hermite interpolant p of the jet vector J (left orders 0..k-1, then right)."""
    _check_k(k)
    A = hermite_matrix(k, Fraction(1, 2))
    basis = []
    for i in range(2 * k):
        e = [Fraction(0)] * (2 * k)
        e[i] = Fraction(1)
        basis.append(Polynomial(tuple(solve_exact(A, e)), Fraction(1, 2)).derivative(k))
    H = [[Fraction(0)] * (2 * k) for _ in range(2 * k)]
    for i in range(2 * k):
        for j in range(i, 2 * k):
            prod = Polynomial(_mul(basis[i].coeffs, basis[j].coeffs), Fraction(1, 2))
            v = _integrate(prod.coeffs, Fraction(1, 2))
            H[i][j] = H[j][i] = v
    return tuple(tuple(row) for row in H)


def _mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return tuple(out)


def _integrate(coeffs, a):
    return sum(c * (a ** (j + 1) - (-a) ** (j + 1)) / (j + 1) for j, c in enumerate(coeffs))


@lru_cache(maxsize=None)
def _energy_factor(k: int) -> np.ndarray:
    """Matrix B with H = B^T B (float), from the exact Gram matrix."""
    H = np.array([[float(v) for v in row] for row in hermite_energy_matrix(k)])
    w, V = np.linalg.eigh(H)
    w = np.where(w > 1e-13 * w.max(), w, 0.0)
    return (np.sqrt(w)[:, None] * V.T)


def _jet_scaling(k: int, length: float) -> np.ndarray:
    """W = D J: jets on an interval of the given length mapped to the unit interval."""
    return np.concatenate([length ** np.arange(k)] * 2)


def jet_energy(k: int, length: float, left_jet, right_jet) -> float:
    """Minimal integral of (v^(k))^2 over an interval of the given length."""
    if not length > 0:
        raise ValueError("interval length must be positive")
    J = np.concatenate([np.asarray(left_jet, float), np.asarray(right_jet, float)])
    if J.size != 2 * k:
        raise ValueError("jets must contain orders 0..k-1")
    W = _jet_scaling(k, length) * J
    H = np.array([[float(v) for v in row] for row in hermite_energy_matrix(k)])
    return float(length ** (1 - 2 * k) * (W @ H @ W))


def _optimal_T(k: int, A, b: float = 1.0, c: float = 1.0) -> float:
    # stationary point of b T + c A T^(1-2k)
    return ((2 * k - 1) * c * float(A) / b) ** (1.0 / (2 * k))


def m_k(k: int) -> ProfileResult:
    """The clamped optimal-profile constant: inf over T of T + A_k T^(1-2k)."""
    return m_k_general(k, 1.0, 1.0)


def m_k_general(k: int, b: float, c: float) -> ProfileResult:
    """inf over T of b T + c A_k T^(1-2k) (surface-to-bulk weighted constant)."""
    if not (b > 0 and c > 0):
        raise ValueError("b and c must be positive")
    A = profile_energy_constant(k)
    T = _optimal_T(k, A, b, c)
    energy = 2 * k / (2 * k - 1) * b * T
    prof = hermite_profile(k, BoundarySpec.clamped(k), as_fraction(T))
    return ProfileResult(k=k, T_star=T, energy=energy, profile=prof, A_k=A, b=b, c=c)


def energy_in_T(k: int, T: float, b: float = 1.0, c: float = 1.0) -> float:
    return b * T + c * float(profile_energy_constant(k)) * T ** (1 - 2 * k)


def constrained_inner(k: int, n: int, N: float, T: float, c: float = 1.0):
    """Minimal c * integral of (v^(k))^2 at fixed T with orders 1..n boxed by 1/N.

    Returns (value, jets) where jets = (left, right) physical endpoint jets.
    """
    B = _energy_factor(k)
    scale = _jet_scaling(k, T)
    # variable layout: derivative orders 1..k-1 at left then right, in unit-interval units
    idx = [o for o in range(1, k)] + [k + o for o in range(1, k)]
    fixed = np.zeros(2 * k)
    fixed[0], fixed[k] = -0.5, 0.5
    lo = np.full(len(idx), -np.inf)
    hi = np.full(len(idx), np.inf)
    for pos, col in enumerate(idx):
        order = col % k
        if order <= n:
            lim = scale[col] / N
            lo[pos], hi[pos] = -lim, lim
    res = solve_box_qp(B[:, idx], B @ fixed, lo, hi)
    W = fixed.copy()
    W[idx] = res.x
    J = W / scale
    value = c * T ** (1 - 2 * k) * res.value
    return value, (J[:k], J[k:])


def m_k_constrained(k: int, n: int, N: float, seeds: int = 64, xtol: float = 1e-10) -> ProfileResult:
    """m_k^n(N): jump profile with |v^(l)(+-T/2)| <= 1/N for l = 1..n.

    Orders n+1..k-1 are free.  The outer minimization over T is a multi-seed
    golden-section search on [1e-3 T*, 1e3 T*] around the clamped optimum.
    """
    _check_k(k)
    if k < 2:
        raise ValueError("constrained profiles need k >= 2")
    if not (1 <= n <= k - 1):
        raise ValueError("need 1 <= n <= k-1")
    if 2 * n < k:
        raise ValueError(f"2n >= k required for a positive constant (got n={n}, k={k})")
    if not N > 0:
        raise ValueError("N must be positive")
    T_eq = _optimal_T(k, profile_energy_constant(k))

    def E(T):
        return T + constrained_inner(k, n, N, T)[0]

    T_best, e_best = log_golden(E, 1e-3 * T_eq, 1e3 * T_eq, seeds=seeds, xtol=xtol)
    # the clamped optimum is always admissible; never report worse than it
    e_eq = E(T_eq)
    if e_eq < e_best:
        T_best, e_best = T_eq, e_eq
    _, (left, right) = constrained_inner(k, n, N, T_best)
    prof = hermite_interpolant(left, right, T_best / 2, exact=False)
    return ProfileResult(k=k, T_star=T_best, energy=e_best, profile=prof, n=n, N=N)


def transition_cost(k: int, eps: float, length: float, left_jet, right_jet, c: float = 1.0,
                    b: float = 1.0) -> float:
    """b |I|/eps + c eps^(2k-1) min integral of (v^(k))^2 with the given endpoint jets."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not length > 0:
        raise ValueError("interval length must be positive")
    return b * length / eps + c * eps ** (2 * k - 1) * jet_energy(k, length, left_jet, right_jet)


def calibrate_c_k(k: int, mu: float, check: bool = True) -> float:
    """Weight c with m_k^{1,c} = mu, i.e. c = (mu / m_k)^(2k).

    With ``check`` the closed form is confirmed by a bracketing root solve.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    mk = m_k(k).energy
    c = (mu / mk) ** (2 * k)
    if check:
        c_root = calibrate_c_k_rootfind(k, mu)
        if abs(c_root - c) > 1e-10 * c:
            raise ArithmeticError(f"calibration mismatch: closed form {c!r}, root {c_root!r}")
    return c


def calibrate_c_k_rootfind(k: int, mu: float) -> float:
    """Root of c -> m_k^{1,c} - mu found by Brent's method in log c.

    m_k^{1,c} is evaluated by direct minimization of T + c A_k T^(1-2k).
    """
    A = float(profile_energy_constant(k))

    def m_of(logc):
        c = math.exp(logc)
        T = ((2 * k - 1) * c * A) ** (1.0 / (2 * k))
        return T + c * A * T ** (1 - 2 * k)

    lo, hi = -1.0, 1.0
    while m_of(lo) > mu:
        lo *= 2
    while m_of(hi) < mu:
        hi *= 2
    root = brentq(lambda s: m_of(s) / mu - 1.0, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(root)
