"""Compiles scalar and matrix sum-of-squares constraints into LMI problems.

An expression affine in named decision variables is certified nonnegative
over a union-of-boxes domain by the S-procedure: each box contributes
per-dimension polynomials g_j(x) = (x_j - l_j)(u_j - x_j) >= 0, weighted by
SOS multipliers, and the localized expression is matched against a Gram form
z(x)' Q z(x) with Q >= 0.  Coefficient matching is emitted as linear
equalities, so the compiled problem layout is deterministic for identical
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np
import scipy.sparse as sp

from .poly import Monomial, Polynomial, monomial_basis
from .sdp import LmiBlock, LmiProblem

# ---------------------------------------------------------------------------
# affine expressions in decision variables


class AffExpr:
    """const + sum coef_v * y_v over decision-variable ids."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def of(var: int, coef: float = 1.0) -> "AffExpr":
        return AffExpr({var: coef})

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return AffExpr(self.terms, self.const + other)
        out = dict(self.terms)
        for v, c in other.terms.items():
            out[v] = out.get(v, 0.0) + c
        return AffExpr(out, self.const + other.const)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return AffExpr(self.terms, self.const - other)
        return self + other.scale(-1.0)

    def scale(self, s: float) -> "AffExpr":
        return AffExpr({v: s * c for v, c in self.terms.items()}, s * self.const)

    def value(self, y: np.ndarray) -> float:
        return self.const + sum(c * y[v] for v, c in self.terms.items())

    def is_const(self) -> bool:
        return not self.terms


class ParamPoly:
    """Polynomial whose coefficients are AffExpr in decision variables."""

    __slots__ = ("num_vars", "coeffs")

    def __init__(self, num_vars: int, coeffs: dict[Monomial, AffExpr] | None = None):
        self.num_vars = num_vars
        self.coeffs: dict[Monomial, AffExpr] = dict(coeffs) if coeffs else {}

    @staticmethod
    def from_poly(p: Polynomial) -> "ParamPoly":
        return ParamPoly(
            p.num_vars, {m: AffExpr(const=c) for m, c in p.terms.items()}
        )

    @staticmethod
    def from_var(num_vars: int, var: int, mono: Monomial | None = None) -> "ParamPoly":
        m = mono if mono is not None else Monomial((0,) * num_vars)
        return ParamPoly(num_vars, {m: AffExpr.of(var)})

    def add_term(self, mono: Monomial, expr: AffExpr):
        if mono in self.coeffs:
            self.coeffs[mono] = self.coeffs[mono] + expr
        else:
            self.coeffs[mono] = expr

    def __add__(self, other: "ParamPoly") -> "ParamPoly":
        out = ParamPoly(self.num_vars, self.coeffs)
        out.coeffs = dict(self.coeffs)
        for m, e in other.coeffs.items():
            out.add_term(m, e)
        return out

    def __sub__(self, other: "ParamPoly") -> "ParamPoly":
        return self + other.scale(-1.0)

    def scale(self, s: float) -> "ParamPoly":
        return ParamPoly(
            self.num_vars, {m: e.scale(s) for m, e in self.coeffs.items()}
        )

    def mul_poly(self, p: Polynomial) -> "ParamPoly":
        out = ParamPoly(self.num_vars)
        for m1, e in self.coeffs.items():
            for m2, c in p.terms.items():
                out.add_term(m1.mul(m2), e.scale(c))
        return out

    @property
    def degree(self) -> int:
        return max((m.degree for m in self.coeffs), default=0)

    def substitute(self, y: np.ndarray) -> Polynomial:
        return Polynomial(
            self.num_vars, {m: e.value(y) for m, e in self.coeffs.items()}
        )


# ---------------------------------------------------------------------------
# semialgebraic box sets


@dataclass
class SetSpec:
    """Axis-aligned box union: kind in {state, initial, unsafe}."""

    kind: str
    boxes: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        if self.kind not in ("state", "initial", "unsafe"):
            raise ValueError(f"unknown set kind {self.kind!r}")
        if not self.boxes:
            raise ValueError("empty box list")
        norm = []
        for lo, hi in self.boxes:
            lo = np.asarray(lo, dtype=float)
            hi = np.asarray(hi, dtype=float)
            if lo.shape != hi.shape or np.any(lo >= hi):
                raise ValueError("box must satisfy low < high per dimension")
            norm.append((lo, hi))
        self.boxes = norm

    @property
    def dim(self) -> int:
        return len(self.boxes[0][0])

    @staticmethod
    def box(kind: str, lo, hi) -> "SetSpec":
        return SetSpec(kind, [(np.asarray(lo, float), np.asarray(hi, float))])

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership test for points of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape[:-1], dtype=bool)
        for lo, hi in self.boxes:
            inside |= np.all((x >= lo) & (x <= hi), axis=-1)
        return inside

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform samples; for unions, boxes weighted by volume."""
        vols = np.array([np.prod(hi - lo) for lo, hi in self.boxes])
        picks = rng.choice(len(self.boxes), size=size, p=vols / vols.sum())
        out = np.empty((size, self.dim))
        for b, (lo, hi) in enumerate(self.boxes):
            mask = picks == b
            out[mask] = rng.uniform(lo, hi, size=(int(mask.sum()), self.dim))
        return out

    def intersects(self, other: "SetSpec") -> bool:
        for lo1, hi1 in self.boxes:
            for lo2, hi2 in other.boxes:
                if np.all(lo1 <= hi2) and np.all(lo2 <= hi1):
                    return True
        return False

    def corner_max_sqnorm(self) -> float:
        """max ||x||^2 over the union (attained at a box corner)."""
        best = 0.0
        for lo, hi in self.boxes:
            best = max(best, float(np.sum(np.maximum(lo**2, hi**2))))
        return best

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "boxes": [[lo.tolist(), hi.tolist()] for lo, hi in self.boxes],
        }

    @staticmethod
    def from_json(d: dict) -> "SetSpec":
        return SetSpec(d["kind"], [(np.array(lo), np.array(hi)) for lo, hi in d["boxes"]])


def box_to_polys(s: SetSpec) -> list[list[Polynomial]]:
    """Per box: g_j(x) = (x_j - l_j)(u_j - x_j), one polynomial per dimension."""
    n = s.dim
    out = []
    for lo, hi in s.boxes:
        polys = []
        for j in range(n):
            xj = Polynomial.variable(n, j)
            polys.append((xj - lo[j]) * (Polynomial.constant(n, hi[j]) - xj))
        out.append(polys)
    return out


def default_multiplier_degree(expr_degree: int) -> int:
    """max(0, deg - 2) rounded up to even."""
    d = max(0, expr_degree - 2)
    return d + (d % 2)


# ---------------------------------------------------------------------------
# LMI assembly


class ProblemBuilder:
    """Accumulates decision variables, PSD blocks and equalities."""

    def __init__(self):
        self.names: list[str] = []
        self._blocks: list[tuple[int, np.ndarray, list]] = []  # (dim, f0, coo)
        self._eq_rows: list[AffExpr] = []
        self._obj: dict[int, float] = {}

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def new_var(
        self, name: str, lb: float | None = None, ub: float | None = None
    ) -> int:
        v = len(self.names)
        self.names.append(name)
        if lb is not None:
            self.add_affine_psd_block([[AffExpr.of(v) - lb]], f"{name}>=lb")
        if ub is not None:
            self.add_affine_psd_block([[AffExpr.of(v).scale(-1.0) + ub]], f"{name}<=ub")
        return v

    def new_sym_matrix(self, name: str, dim: int, psd_shift: float | None = None):
        """Symmetric matrix variable; returns (dim, dim) array of var ids.

        With psd_shift=s, adds the constraint M - s*I >= 0.
        """
        ids = np.empty((dim, dim), dtype=int)
        for i in range(dim):
            for j in range(i, dim):
                v = self.new_var(f"{name}[{i},{j}]")
                ids[i, j] = ids[j, i] = v
        if psd_shift is not None:
            f0 = -psd_shift * np.eye(dim)
            coo = []
            for i in range(dim):
                for j in range(i, dim):
                    coo.append((ids[i, j], i, j, 1.0))
                    if i != j:
                        coo.append((ids[i, j], j, i, 1.0))
            self._blocks.append((dim, f0, coo))
        return ids

    def add_affine_psd_block(self, mat, tag: str = "") -> int:
        """Constraint mat(y) >= 0 for a symmetric matrix of AffExpr/float."""
        k = len(mat)
        f0 = np.zeros((k, k))
        coo = []
        for i in range(k):
            for j in range(k):
                e = mat[i][j]
                if isinstance(e, (int, float)):
                    f0[i, j] = e
                else:
                    f0[i, j] = e.const
                    for v, c in e.terms.items():
                        if c != 0.0:
                            coo.append((v, i, j, c))
        self._blocks.append((k, f0, coo))
        return len(self._blocks) - 1

    def add_equality(self, expr: AffExpr):
        """expr == 0."""
        self._eq_rows.append(expr)

    def maximize(self, obj: dict[int, float]):
        self._obj = dict(obj)

    def build(self) -> LmiProblem:
        nv = self.num_vars
        blocks = []
        for dim, f0, coo in self._blocks:
            if coo:
                vs, iis, jjs, cs = zip(*coo)
                flat = np.array(iis) * dim + np.array(jjs)
                coefs = sp.csr_matrix(
                    (np.array(cs, dtype=float), (flat, np.array(vs))),
                    shape=(dim * dim, nv),
                )
            else:
                coefs = sp.csr_matrix((dim * dim, nv))
            blocks.append(LmiBlock(dim, f0, coefs))
        if self._eq_rows:
            rows, cols, vals, rhs = [], [], [], []
            for r, e in enumerate(self._eq_rows):
                rhs.append(-e.const)
                for v, c in e.terms.items():
                    rows.append(r)
                    cols.append(v)
                    vals.append(c)
            eq_A = sp.csr_matrix(
                (vals, (rows, cols)), shape=(len(self._eq_rows), nv)
            )
            eq_b = np.array(rhs)
        else:
            eq_A, eq_b = None, None
        c = np.zeros(nv)
        for v, coef in self._obj.items():
            c[v] = coef
        return LmiProblem(nv, c, blocks, eq_A, eq_b, var_names=self.names)


# ---------------------------------------------------------------------------
# SOS fragments


@dataclass
class GramWitness:
    basis: list[Monomial]
    Q: np.ndarray
    residual: float
    lambda_min: float

    @property
    def sound(self) -> bool:
        return self.residual <= 1e-6 and self.lambda_min >= -1e-8

    def to_json(self) -> dict:
        return {
            "basis": [list(m.exps) for m in self.basis],
            "Q": self.Q.tolist(),
            "residual": self.residual,
            "lambda_min": self.lambda_min,
        }


@dataclass
class Multiplier:
    g: Polynomial                      # box polynomial it weights
    var_ids: np.ndarray | int          # Gram ids (deg>0) or single var id
    basis: list[Monomial] | None       # None for degree-0 multipliers

    def as_parampoly(self, num_vars: int) -> ParamPoly:
        if self.basis is None:
            return ParamPoly.from_var(num_vars, int(self.var_ids))
        pp = ParamPoly(num_vars)
        K = len(self.basis)
        for i in range(K):
            for j in range(K):
                pp.add_term(
                    self.basis[i].mul(self.basis[j]),
                    AffExpr.of(int(self.var_ids[i, j])),
                )
        return pp

    def value(self, y: np.ndarray, num_vars: int) -> Polynomial:
        return self.as_parampoly(num_vars).substitute(y)


@dataclass
class SosFragment:
    """Bookkeeping to rebuild and recheck one SOS constraint."""

    tag: str
    mat_dim: int                       # 1 for the scalar case
    num_x: int
    expr: list[list[ParamPoly]]        # upper triangle used
    basis: list[Monomial]              # Gram basis z(x)
    gram_ids: np.ndarray               # (K*m, K*m) var ids of the big Gram
    multipliers: list[Multiplier]

    def localized_expr(self, y: np.ndarray) -> list[list[Polynomial]]:
        """expr(y) - (sum_j lambda_j g_j) I, fully numeric."""
        n = self.num_x
        lam = Polynomial.zero(n)
        for mult in self.multipliers:
            lam = lam + mult.value(y, n) * mult.g
        out = []
        for a in range(self.mat_dim):
            row = []
            for b in range(self.mat_dim):
                e = self.expr[min(a, b)][max(a, b)].substitute(y)
                if a == b:
                    e = e - lam
                row.append(e)
            out.append(row)
        return out

    def gram_matrix(self, y: np.ndarray) -> np.ndarray:
        K = self.gram_ids.shape[0]
        Q = np.empty((K, K))
        for i in range(K):
            for j in range(K):
                Q[i, j] = y[self.gram_ids[i, j]]
        return 0.5 * (Q + Q.T)


def _gram_product_pairs(basis: list[Monomial]):
    """monomial -> list of ordered index pairs (i, j) with z_i z_j = monomial."""
    pairs: dict[Monomial, list[tuple[int, int]]] = {}
    K = len(basis)
    for i in range(K):
        for j in range(K):
            pairs.setdefault(basis[i].mul(basis[j]), []).append((i, j))
    return pairs


def _make_multipliers(
    builder: ProblemBuilder, g_polys: list[Polynomial], mult_deg: int, tag: str, num_x: int
) -> list[Multiplier]:
    if mult_deg % 2:
        raise ValueError("multiplier degree must be even")
    mults = []
    for jg, g in enumerate(g_polys):
        if mult_deg == 0:
            v = builder.new_var(f"{tag}.lam{jg}", lb=0.0)
            mults.append(Multiplier(g, v, None))
        else:
            zb = monomial_basis(num_x, mult_deg // 2)
            ids = builder.new_sym_matrix(f"{tag}.lam{jg}", len(zb), psd_shift=0.0)
            mults.append(Multiplier(g, ids, zb))
    return mults


def matrix_sos(
    builder: ProblemBuilder,
    expr: list[list[ParamPoly]],
    g_polys: list[Polynomial],
    mult_deg: int | None = None,
    tag: str = "sos",
) -> SosFragment:
    """Constrain the symmetric polynomial matrix expr(y)(x) >= 0 on the box
    described by g_polys, via expr - (lambda' g) I = Z' Q Z with Q >= 0.

    expr is given by its upper triangle (entry [a][b] read for a <= b).
    Returns the fragment; constraints are appended to the builder.
    """
    mdim = len(expr)
    num_x = None
    for a in range(mdim):
        for b in range(a, mdim):
            if expr[a][b] is not None and expr[a][b].coeffs:
                num_x = expr[a][b].num_vars
                break
        if num_x is not None:
            break
    if num_x is None:
        raise ValueError("empty expression")

    expr_deg = max(
        expr[a][b].degree for a in range(mdim) for b in range(a, mdim)
    )
    g_deg = max((g.degree for g in g_polys), default=0)
    if mult_deg is None:
        mult_deg = default_multiplier_degree(expr_deg)
    mults = _make_multipliers(builder, g_polys, mult_deg, tag, num_x)

    target_deg = max(expr_deg, mult_deg + g_deg) if g_polys else expr_deg
    half = ceil(target_deg / 2)
    basis = monomial_basis(num_x, half)
    K = len(basis)
    all_monos = monomial_basis(num_x, 2 * half)
    pairs = _gram_product_pairs(basis)

    gram_ids = builder.new_sym_matrix(f"{tag}.Q", mdim * K, psd_shift=0.0)

    lam_pp = ParamPoly(num_x)
    for mult in mults:
        lam_pp = lam_pp + mult.as_parampoly(num_x).mul_poly(mult.g)

    for a in range(mdim):
        for b in range(a, mdim):
            e = ParamPoly(num_x, expr[a][b].coeffs)
            if a == b:
                e = e - lam_pp
            for alpha in all_monos:
                lhs = AffExpr()
                for (i, j) in pairs.get(alpha, ()):
                    lhs = lhs + AffExpr.of(int(gram_ids[a * K + i, b * K + j]))
                rhs = e.coeffs.get(alpha, AffExpr())
                builder.add_equality(lhs - rhs)

    return SosFragment(
        tag=tag,
        mat_dim=mdim,
        num_x=num_x,
        expr=expr,
        basis=basis,
        gram_ids=gram_ids,
        multipliers=mults,
    )


def scalar_sos(
    builder: ProblemBuilder,
    expr: ParamPoly,
    g_polys: list[Polynomial],
    mult_deg: int | None = None,
    tag: str = "sos",
) -> SosFragment:
    """Scalar case of matrix_sos."""
    return matrix_sos(builder, [[expr]], g_polys, mult_deg, tag)


def recover_witness(y: np.ndarray, fragment: SosFragment) -> GramWitness:
    """Rebuild the Gram witness and recompute the coefficient-match residual
    independently of the solver.
    """
    Q = fragment.gram_matrix(y)
    K = len(fragment.basis)
    local = fragment.localized_expr(y)
    resid = 0.0
    for a in range(fragment.mat_dim):
        for b in range(a, fragment.mat_dim):
            qblock = Q[a * K : (a + 1) * K, b * K : (b + 1) * K]
            rebuilt: dict[Monomial, float] = {}
            for i in range(K):
                for j in range(K):
                    m = fragment.basis[i].mul(fragment.basis[j])
                    rebuilt[m] = rebuilt.get(m, 0.0) + qblock[i, j]
            target = local[a][b]
            keys = set(rebuilt) | set(target.terms)
            for m in keys:
                resid = max(
                    resid, abs(rebuilt.get(m, 0.0) - target.coeff(m))
                )
    lmin = float(np.linalg.eigvalsh(Q)[0]) if Q.size else 0.0
    return GramWitness(fragment.basis, Q, resid, lmin)
