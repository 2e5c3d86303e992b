"""Monomial dictionaries M(x) and their factorizations M(x) = Upsilon(x) x.

A dictionary is the candidate monomial list assumed rich enough to contain
every term of the true dynamics.  It never contains the constant monomial,
so M(0) = 0 holds by construction.  The factorization writes each dictionary
entry m_k as (m_k / x_j) * x_j where j is the smallest variable index with a
positive exponent; any valid choice works, this one is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .poly import Monomial, Polynomial, PolyMatrix, monomial_basis


@dataclass(frozen=True)
class Dictionary:
    num_vars: int
    monomials: tuple[Monomial, ...]

    def __post_init__(self):
        seen = set()
        for m in self.monomials:
            if m.num_vars != self.num_vars:
                raise ValueError("monomial variable count mismatch")
            if m.degree < 1:
                raise ValueError("dictionary monomials must have degree >= 1")
            if m in seen:
                raise ValueError(f"duplicate dictionary monomial {m}")
            seen.add(m)

    @property
    def size(self) -> int:
        return len(self.monomials)

    @property
    def max_degree(self) -> int:
        return max(m.degree for m in self.monomials)

    def exponent_array(self) -> np.ndarray:
        return np.array([m.exps for m in self.monomials], dtype=float)

    def eval(self, x) -> np.ndarray:
        """Evaluate the dictionary vector at points of shape (..., n)."""
        x = np.asarray(x, dtype=float)
        return np.prod(x[..., None, :] ** self.exponent_array(), axis=-1)

    def index_of(self, m: Monomial) -> int:
        return self.monomials.index(m)

    def to_json(self) -> list[list[int]]:
        return [list(m.exps) for m in self.monomials]

    @staticmethod
    def from_json(data: list[list[int]]) -> "Dictionary":
        monos = tuple(Monomial(tuple(e)) for e in data)
        return Dictionary(monos[0].num_vars if monos else 0, monos)


@dataclass(frozen=True)
class Transformation:
    """State-dependent matrix Upsilon with Upsilon(x) x = M(x) exactly."""

    upsilon: PolyMatrix
    pivot_cols: tuple[int, ...]  # chosen divisor variable per dictionary row

    @property
    def shape(self):
        return self.upsilon.shape

    def eval(self, x) -> np.ndarray:
        return self.upsilon.eval(x)


def build_dictionary(num_vars: int, max_degree: int) -> Dictionary:
    """All monomials of total degree in [1, max_degree], graded-lex order."""
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1 so that M(0) = 0 holds")
    monos = tuple(m for m in monomial_basis(num_vars, max_degree) if m.degree >= 1)
    return Dictionary(num_vars, monos)


def factorize(d: Dictionary) -> Transformation:
    """Factor M(x) = Upsilon(x) x, one nonzero entry per row.

    Row k gets m_k / x_j in column j where j is the smallest variable index
    with positive exponent in m_k.  The identity Upsilon(x) x = M(x) is
    verified symbolically before returning.
    """
    n = d.num_vars
    rows = []
    pivots = []
    for m in d.monomials:
        j = next(i for i, e in enumerate(m.exps) if e > 0)
        reduced = list(m.exps)
        reduced[j] -= 1
        row = [Polynomial.zero(n) for _ in range(n)]
        row[j] = Polynomial.from_monomial(Monomial(tuple(reduced)))
        rows.append(row)
        pivots.append(j)
    ups = PolyMatrix(rows)
    prod = ups @ PolyMatrix.state_vector(n)
    for k, m in enumerate(d.monomials):
        if not prod[k, 0].allclose(Polynomial.from_monomial(m), tol=0.0):
            raise AssertionError(f"factorization identity failed at row {k}")
    return Transformation(ups, tuple(pivots))


def contains(d: Dictionary, true_monomials: list[Monomial]) -> bool:
    """True iff every true-model monomial appears in the dictionary."""
    have = set(d.monomials)
    return all(m in have for m in true_monomials)
