"""Sparse multivariate polynomials and dense polynomial matrices.

Coefficients are plain floats; after every arithmetic operation terms with
|coefficient| <= DROP_TOL are removed so the representation stays canonical.
Monomial ordering is graded lexicographic (total degree first, then lex with
x1 > x2 > ...), which keeps coefficient matching deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Mapping

import numpy as np

DROP_TOL = 1e-14


@dataclass(frozen=True)
class Monomial:
    """A power product x1^e1 * ... * xn^en, stored as the exponent tuple."""

    exps: tuple[int, ...]

    def __post_init__(self):
        if any(e < 0 for e in self.exps):
            raise ValueError(f"negative exponent in {self.exps}")

    @property
    def num_vars(self) -> int:
        return len(self.exps)

    @property
    def degree(self) -> int:
        return sum(self.exps)

    def mul(self, other: "Monomial") -> "Monomial":
        return Monomial(tuple(a + b for a, b in zip(self.exps, other.exps)))

    def eval(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.prod(x ** np.array(self.exps), axis=-1)

    def grlex_key(self):
        return (self.degree, tuple(-e for e in self.exps))

    def __str__(self):
        if self.degree == 0:
            return "1"
        parts = []
        for j, e in enumerate(self.exps):
            if e == 1:
                parts.append(f"x{j + 1}")
            elif e > 1:
                parts.append(f"x{j + 1}^{e}")
        return "*".join(parts)


def monomial_basis(num_vars: int, max_degree: int) -> list[Monomial]:
    """All monomials of total degree <= max_degree, graded-lex ordered.

    The count equals C(num_vars + max_degree, max_degree).
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    out: list[Monomial] = []

    def rec(prefix: list[int], remaining: int, budget: int):
        if remaining == 0:
            out.append(Monomial(tuple(prefix)))
            return
        for e in range(budget, -1, -1):
            rec(prefix + [e], remaining - 1, budget - e)

    for deg in range(max_degree + 1):
        block: list[Monomial] = []

        def rec_deg(prefix: list[int], remaining: int, left: int):
            if remaining == 1:
                block.append(Monomial(tuple(prefix + [left])))
                return
            for e in range(left, -1, -1):
                rec_deg(prefix + [e], remaining - 1, left - e)

        if num_vars == 0:
            if deg == 0:
                block.append(Monomial(()))
        else:
            rec_deg([], num_vars, deg)
        block.sort(key=Monomial.grlex_key)
        out.extend(block)
    assert len(out) == comb(num_vars + max_degree, max_degree)
    return out


class Polynomial:
    """Sparse polynomial: map from Monomial to real coefficient.

    Zero coefficients are never stored; all monomials share num_vars.
    """

    __slots__ = ("num_vars", "terms")

    def __init__(self, num_vars: int, terms: Mapping[Monomial, float] | None = None):
        self.num_vars = num_vars
        self.terms: dict[Monomial, float] = {}
        if terms:
            for m, c in terms.items():
                if m.num_vars != num_vars:
                    raise ValueError(
                        f"monomial has {m.num_vars} vars, polynomial has {num_vars}"
                    )
                if abs(c) > DROP_TOL:
                    self.terms[m] = self.terms.get(m, 0.0) + float(c)
        self._clean()

    def _clean(self):
        dead = [m for m, c in self.terms.items() if abs(c) <= DROP_TOL]
        for m in dead:
            del self.terms[m]

    # -- constructors -------------------------------------------------
    @staticmethod
    def zero(num_vars: int) -> "Polynomial":
        return Polynomial(num_vars)

    @staticmethod
    def constant(num_vars: int, c: float) -> "Polynomial":
        return Polynomial(num_vars, {Monomial((0,) * num_vars): c})

    @staticmethod
    def variable(num_vars: int, j: int) -> "Polynomial":
        e = [0] * num_vars
        e[j] = 1
        return Polynomial(num_vars, {Monomial(tuple(e)): 1.0})

    @staticmethod
    def from_monomial(m: Monomial, c: float = 1.0) -> "Polynomial":
        return Polynomial(m.num_vars, {m: c})

    # -- arithmetic ---------------------------------------------------
    def _check(self, other: "Polynomial"):
        if self.num_vars != other.num_vars:
            raise ValueError(
                f"variable-count mismatch: {self.num_vars} vs {other.num_vars}"
            )

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.num_vars, other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(self.num_vars, out)

    def __neg__(self):
        return Polynomial(self.num_vars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.num_vars, other)
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        self._check(other)
        out: dict[Monomial, float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = m1.mul(m2)
                out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial(self.num_vars, out)

    __rmul__ = __mul__
    __radd__ = __add__

    def scale(self, s: float) -> "Polynomial":
        return Polynomial(self.num_vars, {m: s * c for m, c in self.terms.items()})

    @property
    def degree(self) -> int:
        return max((m.degree for m in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def coeff(self, m: Monomial) -> float:
        return self.terms.get(m, 0.0)

    def diff(self, j: int) -> "Polynomial":
        """Partial derivative with respect to variable j."""
        out: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            e = m.exps[j]
            if e > 0:
                exps = list(m.exps)
                exps[j] = e - 1
                out[Monomial(tuple(exps))] = c * e
        return Polynomial(self.num_vars, out)

    def coeff_map(self) -> dict[Monomial, float]:
        """Canonical term map (a copy); inverse of construction."""
        return dict(self.terms)

    # -- evaluation ---------------------------------------------------
    def eval(self, x) -> float | np.ndarray:
        """Evaluate at a point (n,) or a batch (..., n) of points."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.num_vars and self.num_vars > 0:
            raise ValueError(f"point has dim {x.shape[-1]}, expected {self.num_vars}")
        if not self.terms:
            return 0.0 if x.ndim == 1 else np.zeros(x.shape[:-1])
        exps = np.array([m.exps for m in self.terms], dtype=float)  # (K, n)
        coefs = np.array(list(self.terms.values()))  # (K,)
        vals = np.prod(x[..., None, :] ** exps, axis=-1)  # (..., K)
        res = vals @ coefs
        return float(res) if x.ndim == 1 else res

    def __call__(self, x):
        return self.eval(x)

    # -- ordering / io ------------------------------------------------
    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        return sorted(self.terms.items(), key=lambda mc: mc[0].grlex_key())

    def to_json(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "terms": [
                {"exp": list(m.exps), "coef": c} for m, c in self.sorted_terms()
            ],
        }

    @staticmethod
    def from_json(d: dict) -> "Polynomial":
        terms = {Monomial(tuple(t["exp"])): t["coef"] for t in d["terms"]}
        return Polynomial(d["num_vars"], terms)

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and self.num_vars == other.num_vars
            and self.terms == other.terms
        )

    def allclose(self, other: "Polynomial", tol: float = 1e-10) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.coeff(m) - other.coeff(m)) <= tol for m in keys)

    def max_coeff_diff(self, other: "Polynomial") -> float:
        keys = set(self.terms) | set(other.terms)
        if not keys:
            return 0.0
        return max(abs(self.coeff(m) - other.coeff(m)) for m in keys)

    def __str__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"{c:g}*{m}" for m, c in self.sorted_terms())

    __repr__ = __str__


class PolyMatrix:
    """Dense matrix of polynomials sharing one variable count."""

    __slots__ = ("rows", "cols", "num_vars", "entries")

    def __init__(self, entries: list[list[Polynomial]]):
        self.rows = len(entries)
        self.cols = len(entries[0]) if self.rows else 0
        if any(len(r) != self.cols for r in entries):
            raise ValueError("ragged PolyMatrix")
        nv = {p.num_vars for row in entries for p in row}
        if len(nv) > 1:
            raise ValueError("mixed variable counts in PolyMatrix")
        self.num_vars = nv.pop() if nv else 0
        self.entries = entries

    @staticmethod
    def zeros(rows: int, cols: int, num_vars: int) -> "PolyMatrix":
        return PolyMatrix(
            [[Polynomial.zero(num_vars) for _ in range(cols)] for _ in range(rows)]
        )

    @staticmethod
    def from_const(a: np.ndarray, num_vars: int) -> "PolyMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return PolyMatrix(
            [
                [Polynomial.constant(num_vars, a[i, j]) for j in range(a.shape[1])]
                for i in range(a.shape[0])
            ]
        )

    @staticmethod
    def state_vector(num_vars: int) -> "PolyMatrix":
        """Column vector [x1; ...; xn]."""
        return PolyMatrix(
            [[Polynomial.variable(num_vars, j)] for j in range(num_vars)]
        )

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def matmul(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        out = []
        for i in range(self.rows):
            row = []
            for j in range(other.cols):
                acc = Polynomial.zero(self.num_vars or other.num_vars)
                for k in range(self.cols):
                    acc = acc + self.entries[i][k] * other.entries[k][j]
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    def __matmul__(self, other):
        return self.matmul(other)

    def left_const_mul(self, a: np.ndarray) -> "PolyMatrix":
        """a @ self with a a constant real matrix."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape[1] != self.rows:
            raise ValueError("shape mismatch in constant multiply")
        out = []
        for i in range(a.shape[0]):
            row = []
            for j in range(self.cols):
                acc = Polynomial.zero(self.num_vars)
                for k in range(self.rows):
                    if a[i, k] != 0.0:
                        acc = acc + self.entries[k][j].scale(a[i, k])
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    def right_const_mul(self, a: np.ndarray) -> "PolyMatrix":
        """self @ a with a a constant real matrix."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if self.cols != a.shape[0]:
            raise ValueError("shape mismatch in constant multiply")
        out = []
        for i in range(self.rows):
            row = []
            for j in range(a.shape[1]):
                acc = Polynomial.zero(self.num_vars)
                for k in range(self.cols):
                    if a[k, j] != 0.0:
                        acc = acc + self.entries[i][k].scale(a[k, j])
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.shape != other.shape:
            raise ValueError("shape mismatch in add")
        return PolyMatrix(
            [
                [self.entries[i][j] + other.entries[i][j] for j in range(self.cols)]
                for i in range(self.rows)
            ]
        )

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        return self + other.scale(-1.0)

    def scale(self, s: float) -> "PolyMatrix":
        return PolyMatrix(
            [[p.scale(s) for p in row] for row in self.entries]
        )

    def transpose(self) -> "PolyMatrix":
        return PolyMatrix(
            [[self.entries[i][j] for i in range(self.rows)] for j in range(self.cols)]
        )

    @property
    def T(self) -> "PolyMatrix":
        return self.transpose()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (self.rows, self.cols))
        for i in range(self.rows):
            for j in range(self.cols):
                out[..., i, j] = self.entries[i][j].eval(x)
        return out

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(
            all(abs(c) <= tol for c in p.terms.values()) if tol else p.is_zero()
            for row in self.entries
            for p in row
        )

    def max_abs_coeff(self) -> float:
        vals = [abs(c) for row in self.entries for p in row for c in p.terms.values()]
        return max(vals, default=0.0)

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "entries": [[p.to_json() for p in row] for row in self.entries],
        }

    @staticmethod
    def from_json(d: dict) -> "PolyMatrix":
        return PolyMatrix(
            [[Polynomial.from_json(p) for p in row] for row in d["entries"]]
        )


def poly_arith(a: Polynomial, b: Polynomial, op: str) -> Polynomial:
    """Dispatch form of polynomial arithmetic: add | sub | mul | scale."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "scale":
        if b.degree != 0:
            raise ValueError("scale expects a constant second operand")
        return a.scale(b.coeff(Monomial((0,) * b.num_vars)))
    raise ValueError(f"unknown op {op!r}")
