"""Centered monomial polynomials with exact (Fraction) or float coefficients."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Sequence, Union

import numpy as np

Number = Union[Fraction, float, int]


def falling(j: int, order: int) -> int:
    """j * (j-1) * ... * (j-order+1), i.e. the factor from differentiating t**j."""
    if order > j:
        return 0
    return factorial(j) // factorial(j - order)


@dataclass(frozen=True)
class Polynomial:
    """p(t) = sum_j coeffs[j] * (t - center)**j on [center - half_width, center + half_width].

    Coefficients stay whatever numeric type they were built with, so a
    Fraction polynomial evaluates and integrates exactly at Fraction points.
    """

    coeffs: tuple
    half_width: Number
    center: Number = 0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def degree(self) -> int:
        for j in range(len(self.coeffs) - 1, -1, -1):
            if self.coeffs[j] != 0:
                return j
        return 0

    @property
    def exact(self) -> bool:
        return all(isinstance(c, (Fraction, int)) for c in self.coeffs)

    @property
    def interval(self) -> tuple:
        return (self.center - self.half_width, self.center + self.half_width)

    def derivative(self, order: int = 1) -> "Polynomial":
        if order < 0:
            raise ValueError("order must be nonnegative")
        if order == 0:
            return self
        cs = [falling(j, order) * c for j, c in enumerate(self.coeffs) if j >= order]
        return Polynomial(tuple(cs) or (0 * self.coeffs[0],), self.half_width, self.center)

    def __call__(self, t, order: int = 0):
        p = self.derivative(order)
        if isinstance(t, np.ndarray):
            s = t - float(p.center)
            return np.polynomial.polynomial.polyval(s, [float(c) for c in p.coeffs])
        s = t - p.center
        acc = 0 * s
        for c in reversed(p.coeffs):
            acc = acc * s + c
        return acc

    def to_float(self) -> "Polynomial":
        return Polynomial(tuple(float(c) for c in self.coeffs), float(self.half_width), float(self.center))

    def square_integral(self, order: int = 0, lo: Number | None = None, hi: Number | None = None):
        """Integral of (p^(order))**2 over [lo, hi] (defaults to the whole interval).

        Exact when the coefficients and the limits are rationals.
        """
        q = self.derivative(order).coeffs
        sq = [0 * q[0]] * (2 * len(q) - 1)
        for i, a in enumerate(q):
            for j, b in enumerate(q):
                sq[i + j] += a * b
        lo = -self.half_width if lo is None else lo - self.center
        hi = self.half_width if hi is None else hi - self.center
        total = 0 * sq[0]
        exact = self.exact and isinstance(lo, (Fraction, int)) and isinstance(hi, (Fraction, int))
        for j, c in enumerate(sq):
            if c == 0:
                continue
            w = Fraction(1, j + 1) if exact else 1.0 / (j + 1)
            total += c * w * (hi ** (j + 1) - lo ** (j + 1))
        return total


def as_fraction(x: Number) -> Fraction:
    """Exact conversion; floats are taken at their binary value."""
    return x if isinstance(x, Fraction) else Fraction(x)


def solve_exact(A: Sequence[Sequence[Number]], b: Sequence[Number]) -> list:
    """Gauss-Jordan elimination over the rationals."""
    n = len(A)
    M = [[as_fraction(v) for v in row] + [as_fraction(rhs)] for row, rhs in zip(A, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            raise np.linalg.LinAlgError("singular system in exact solve")
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        row = [v / p for v in M[col]]
        M[col] = row
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * c for a, c in zip(M[r], row)]
    return [M[r][n] for r in range(n)]


def solve_float(A, b) -> np.ndarray:
    """LU with partial pivoting (LAPACK gesv)."""
    return np.linalg.solve(np.asarray(A, dtype=float), np.asarray(b, dtype=float))
