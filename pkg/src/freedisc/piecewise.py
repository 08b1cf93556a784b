"""Piecewise-smooth functions with jumps and creases, and their limit energies."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad


@dataclass
class Piece:
    """Smooth piece on [a, b].  Either polynomial coefficients (ascending powers
    of t) or a callable with its derivative callables."""

    a: float
    b: float
    coeffs: Optional[Sequence[float]] = None
    func: Optional[Callable] = None
    derivs: Sequence[Callable] = ()

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty piece [{self.a}, {self.b}]")
        if self.coeffs is None and self.func is None:
            raise ValueError("a piece needs coefficients or a callable")
        if self.coeffs is not None:
            self.coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))

    def __call__(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        if self.coeffs is not None:
            c = P.polyder(self.coeffs, order) if order else self.coeffs
            return P.polyval(t, c)
        if order == 0:
            return self.func(t)
        if order > len(self.derivs):
            raise ValueError(f"derivative of order {order} not supplied")
        return self.derivs[order - 1](t)


@dataclass
class Jump:
    t: float
    left: float
    right: float

    @property
    def size(self) -> float:
        return self.right - self.left


@dataclass
class Crease:
    t: float
    dleft: float
    dright: float


@dataclass
class PiecewiseFunction:
    """SBV-type function: smooth pieces, jump list and (optionally) crease list."""

    pieces: list
    jumps: list = field(default_factory=list)
    creases: list = field(default_factory=list)

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("at least one piece is required")
        for p, q in zip(self.pieces, self.pieces[1:]):
            if abs(p.b - q.a) > 1e-14 * max(1.0, abs(q.a)):
                raise ValueError("pieces must tile the domain")
        self.jumps = sorted((j for j in self.jumps if j.size != 0), key=lambda j: j.t)
        a, b = self.domain
        ts = [j.t for j in self.jumps]
        if any(not (a < t < b) for t in ts) or any(s >= t for s, t in zip(ts, ts[1:])):
            raise ValueError("jump locations must be strictly increasing inside the domain")
        self.creases = sorted(self.creases, key=lambda c: c.t)

    @classmethod
    def from_pieces(cls, pieces, tol: float = 1e-12) -> "PiecewiseFunction":
        """Derive jumps and creases from the traces at the breakpoints."""
        jumps, creases = [], []
        for p, q in zip(pieces, pieces[1:]):
            t = q.a
            l, r = float(p(t)), float(q(t))
            if abs(r - l) > tol:
                jumps.append(Jump(t, l, r))
                continue
            try:
                dl, dr = float(p(t, 1)), float(q(t, 1))
            except ValueError:
                continue
            if abs(dr - dl) > tol:
                creases.append(Crease(t, dl, dr))
        return cls(list(pieces), jumps, creases)

    @classmethod
    def step(cls, t0: float, left: float, right: float, domain=(0.0, 1.0)) -> "PiecewiseFunction":
        a, b = domain
        return cls.from_pieces([Piece(a, t0, [left]), Piece(t0, b, [right])])

    @property
    def domain(self) -> tuple:
        return (self.pieces[0].a, self.pieces[-1].b)

    @property
    def breaks(self) -> np.ndarray:
        return np.array([p.a for p in self.pieces[1:]])

    def __call__(self, t, order: int = 0, side: str = "right"):
        """Evaluate; at a breakpoint ``side`` picks the one-sided trace."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breaks, t, side=side)
        out = np.empty_like(t)
        for i, piece in enumerate(self.pieces):
            m = idx == i
            if np.any(m):
                out[m] = piece(t[m], order)
        return out if out.ndim else float(out)

    def dirichlet(self, tol: float = 1e-10) -> float:
        """Integral of (u')^2 over the pieces (adaptive quadrature)."""
        total = 0.0
        for p in self.pieces:
            val, err = quad(lambda s: float(p(s, 1)) ** 2, p.a, p.b, epsabs=tol, epsrel=0.0, limit=200)
            if err > 10 * tol:
                raise ArithmeticError(f"quadrature did not converge on [{p.a}, {p.b}]")
            total += val
        return total

    def second_dirichlet(self, tol: float = 1e-10) -> float:
        total = 0.0
        for p in self.pieces:
            val, err = quad(lambda s: float(p(s, 2)) ** 2, p.a, p.b, epsabs=tol, epsrel=0.0, limit=200)
            if err > 10 * tol:
                raise ArithmeticError(f"quadrature did not converge on [{p.a}, {p.b}]")
            total += val
        return total

    # --- JSON: {pieces:[{a,b,kind:poly,coeffs[]}], jumps:[{t,left,right}], creases:[{t,dleft,dright}]}
    def to_dict(self) -> dict:
        if any(p.coeffs is None for p in self.pieces):
            raise ValueError("only polynomial pieces serialize")
        return {
            "pieces": [{"a": p.a, "b": p.b, "kind": "poly", "coeffs": [float(c) for c in p.coeffs]}
                       for p in self.pieces],
            "jumps": [{"t": j.t, "left": j.left, "right": j.right} for j in self.jumps],
            "creases": [{"t": c.t, "dleft": c.dleft, "dright": c.dright} for c in self.creases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseFunction":
        pieces = []
        for p in d["pieces"]:
            if p.get("kind", "poly") != "poly":
                raise ValueError(f"unsupported piece kind {p.get('kind')!r}")
            pieces.append(Piece(float(p["a"]), float(p["b"]), p["coeffs"]))
        if "jumps" not in d and "creases" not in d:
            return cls.from_pieces(pieces)
        jumps = [Jump(float(j["t"]), float(j["left"]), float(j["right"])) for j in d.get("jumps", [])]
        creases = [Crease(float(c["t"]), float(c["dleft"]), float(c["dright"])) for c in d.get("creases", [])]
        return cls(pieces, jumps, creases)

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseFunction":
        return cls.from_dict(json.loads(text))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def limit_energy(u: PiecewiseFunction, a: float, jump_constant: float, k: int) -> float:
    """a * integral of (u')^2 + jump_constant * sum |z|^(1/k) over the jumps."""
    if not (a > 0 and jump_constant > 0):
        raise ValueError("a and the jump constant must be positive")
    return a * u.dirichlet() + jump_constant * sum(abs(j.size) ** (1.0 / k) for j in u.jumps)


def blake_zisserman_energy(u: PiecewiseFunction, tol: float = 1e-12) -> float:
    """integral of (u'')^2 + 2 #jumps + #creases away from the jumps."""
    jump_t = np.array([j.t for j in u.jumps])
    lone = [c for c in u.creases if jump_t.size == 0 or np.min(np.abs(jump_t - c.t)) > tol]
    return u.second_dirichlet() + 2 * len(u.jumps) + len(lone)
