"""Finite sums of decaying exponentials: sum_k c_k * exp(-r_k * t).

Every first- and second-order moment of the signal process in this package
is such a sum, and so are their pairwise products and running integrals.
Doing the bookkeeping once here keeps the closed forms in `ou` and `ctmc`
short and makes the time integrals exact (no quadrature).

Rates are merged by exact float equality. That is safe here because all
rates are built from the same handful of parameter floats (0, kappa,
lambda, kappa+lambda, 2*kappa, ...), combined identically everywhere.
"""

from __future__ import annotations

import numpy as np


class ExpSum:
    """Immutable sum_k c_k * exp(-r_k * t); supports +, -, *, scaling, eval, integral."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        merged: dict[float, float] = {}
        for coef, rate in terms:
            merged[rate] = merged.get(rate, 0.0) + coef
        self.terms = tuple(sorted(merged.items(), key=lambda kv: kv[0]))
        # stored as (rate, coef) pairs sorted by rate; rate 0.0 is the constant term

    @classmethod
    def constant(cls, c: float) -> "ExpSum":
        return cls([(c, 0.0)])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for rate, coef in self.terms:
            if rate == 0.0:
                out = out + coef
            else:
                out = out + coef * np.exp(-rate * t)
        return out if out.ndim else float(out)

    def integral(self, T):
        """Integral over [0, T]; exact term-by-term antiderivative."""
        T = np.asarray(T, dtype=float)
        out = np.zeros_like(T)
        for rate, coef in self.terms:
            if rate == 0.0:
                out = out + coef * T
            else:
                out = out + coef * (1.0 - np.exp(-rate * T)) / rate
        return out if out.ndim else float(out)

    def __add__(self, other: "ExpSum") -> "ExpSum":
        return ExpSum([(c, r) for r, c in self.terms] + [(c, r) for r, c in other.terms])

    def __sub__(self, other: "ExpSum") -> "ExpSum":
        return ExpSum([(c, r) for r, c in self.terms] + [(-c, r) for r, c in other.terms])

    def __mul__(self, other: "ExpSum") -> "ExpSum":
        terms = []
        for r1, c1 in self.terms:
            for r2, c2 in other.terms:
                terms.append((c1 * c2, r1 + r2))
        return ExpSum(terms)

    def scaled(self, s: float) -> "ExpSum":
        return ExpSum([(s * c, r) for r, c in self.terms])

    def value_at_zero(self) -> float:
        return sum(c for _, c in self.terms)

    def limit(self) -> float:
        """Value as t -> infinity (the constant term); requires all rates >= 0."""
        for rate, coef in self.terms:
            if rate == 0.0:
                return coef
        return 0.0

    def __repr__(self) -> str:
        body = " + ".join(f"{c:.6g}*exp(-{r:.6g} t)" for r, c in self.terms)
        return f"ExpSum({body})"
