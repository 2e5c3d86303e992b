"""Dense primal-dual interior-point solver for LMI problems.

Problem form ("dual" SDP form):

    maximize    c' y
    subject to  F0_b + sum_j y_j Fj_b  >= 0   (PSD, one constraint per block)
                A y = b                        (linear equalities)

Equalities are removed before the conic loop: rows owning a variable that
appears in no other row are eliminated by direct substitution (this disposes
of the bulk Gram coefficient-matching rows emitted by the SOS compiler), and
the small residual system is handled by an SVD nullspace.  The reduced
problem is solved by an infeasible-start Mehrotra predictor-corrector method
with Nesterov-Todd scaling.

Infeasibility is reported heuristically (an approximate improving ray of the
primal side, or residual stagnation); callers must treat it as "tighten and
retry", never as a proof.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

# ---------------------------------------------------------------------------
# problem containers


class LmiBlock:
    """One affine PSD constraint F0 + sum_j y_j Fj >= 0.

    coefs holds vec(Fj) columnwise: shape (dim*dim, num_vars), sparse.
    """

    def __init__(self, dim: int, f0: np.ndarray, coefs: sp.spmatrix):
        self.dim = dim
        self.f0 = np.asarray(f0, dtype=float)
        if self.f0.shape != (dim, dim):
            raise ValueError("f0 shape mismatch")
        if not np.allclose(self.f0, self.f0.T, atol=1e-12 * (1 + np.abs(self.f0).max())):
            raise ValueError("f0 not symmetric")
        self.coefs = coefs.tocsr()
        if self.coefs.shape[0] != dim * dim:
            raise ValueError("coefs row count mismatch")

    def eval(self, y: np.ndarray) -> np.ndarray:
        m = self.f0 + (self.coefs @ y).reshape(self.dim, self.dim)
        return 0.5 * (m + m.T)


@dataclass
class LmiProblem:
    num_vars: int
    objective: np.ndarray  # maximize objective' y
    blocks: list[LmiBlock]
    eq_A: sp.spmatrix | None = None  # (n_eq, num_vars)
    eq_b: np.ndarray | None = None
    var_names: list[str] | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.num_vars,):
            raise ValueError("objective length mismatch")
        for blk in self.blocks:
            if blk.coefs.shape[1] != self.num_vars:
                raise ValueError("block variable count mismatch")
        if self.eq_A is not None:
            self.eq_A = self.eq_A.tocsr()
            self.eq_b = np.asarray(self.eq_b, dtype=float)
            if self.eq_A.shape != (len(self.eq_b), self.num_vars):
                raise ValueError("equality system shape mismatch")

    def total_psd_dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    def to_debug_json(self, path: str, y: np.ndarray | None = None):
        """Self-describing dump of the compiled LMI (matrices row-major)."""
        doc = {
            "num_vars": self.num_vars,
            "objective": self.objective.tolist(),
            "block_dims": [b.dim for b in self.blocks],
            "blocks": [
                {
                    "dim": b.dim,
                    "f0": b.f0.reshape(-1).tolist(),
                    "coefs": {
                        "shape": list(b.coefs.shape),
                        "entries": [
                            [int(i), int(j), float(v)]
                            for i, j, v in zip(*sp.find(b.coefs))
                        ],
                    },
                }
                for b in self.blocks
            ],
            "num_equalities": 0 if self.eq_A is None else self.eq_A.shape[0],
        }
        if y is not None:
            doc["y"] = np.asarray(y).tolist()
        with open(path, "w") as fh:
            json.dump(doc, fh)


@dataclass
class SolveOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-6
    max_iter: int = 200
    step_frac: float = 0.98
    schur_reg: float = 1e-10
    verbose: bool = False


@dataclass
class LmiSolution:
    status: str  # optimal | feasible | infeasible | numerical_failure
    y: np.ndarray
    objective_value: float
    block_witnesses: list[np.ndarray]
    residuals: dict
    message: str = ""
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


def psd_check(m: np.ndarray, tol: float = 1e-8) -> tuple[bool, float]:
    """Eigenvalue-based PSD test; returns (is_psd, lambda_min).

    Raises if the input is asymmetric beyond 1e-10 (relative to its scale).
    """
    m = np.asarray(m, dtype=float)
    scale = max(1.0, np.abs(m).max() if m.size else 0.0)
    if np.abs(m - m.T).max() > 1e-10 * scale:
        raise ValueError("matrix asymmetric beyond tolerance")
    lmin = float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
    return lmin >= -tol, lmin


# ---------------------------------------------------------------------------
# equality elimination


def _eliminate_equalities(problem: LmiProblem):
    """Reduce A y = b to y = y_p + N z with z free.

    Returns (y_p, N sparse, message or None if inconsistent).
    """
    nvar = problem.num_vars
    if problem.eq_A is None or problem.eq_A.shape[0] == 0:
        return np.zeros(nvar), sp.identity(nvar, format="csr"), None

    A = problem.eq_A.tocsr().copy()
    b = problem.eq_b.copy()

    # normalize rows
    row_max = np.maximum.reduceat(
        np.abs(A.data), A.indptr[:-1], dtype=float
    ) if A.nnz else np.zeros(A.shape[0])
    row_max = np.where(np.diff(A.indptr) > 0, row_max, 0.0)
    empty = row_max == 0.0
    if np.any(np.abs(b[empty]) > 1e-9):
        return None, None, "inconsistent equality (empty row, nonzero rhs)"
    keep = ~empty
    A = A[keep]
    b = b[keep]
    scale = np.maximum.reduceat(np.abs(A.data), A.indptr[:-1]) if A.nnz else np.array([])
    A = sp.diags(1.0 / scale) @ A
    b = b / scale
    A = A.tocsr()

    n_rows = A.shape[0]
    elim_var = np.full(nvar, -1)  # var -> row it is solved from
    row_used = np.zeros(n_rows, dtype=bool)

    # singleton pass: pivot only on variables whose single nonzero occurrence
    # in the whole system is this row, so one substitution level suffices
    Ac = A.tocsc()
    occ = np.zeros(nvar, dtype=int)
    only_row = np.full(nvar, -1)
    for j in range(nvar):
        lo, hi = Ac.indptr[j], Ac.indptr[j + 1]
        live = Ac.data[lo:hi] != 0.0
        occ[j] = int(live.sum())
        if occ[j] == 1:
            only_row[j] = Ac.indices[lo:hi][live][0]
    for r in range(n_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        best, best_a = -1, 0.0
        for j, a in zip(A.indices[lo:hi], A.data[lo:hi]):
            if occ[j] == 1 and only_row[j] == r and abs(a) > abs(best_a):
                best, best_a = j, a
        if best >= 0 and abs(best_a) >= 1e-8:
            elim_var[best] = r
            row_used[r] = True

    eliminated = np.where(elim_var >= 0)[0]
    free_mask = elim_var < 0
    free_idx = np.where(free_mask)[0]
    rest_rows = np.where(~row_used)[0]

    # residual dense system on the non-eliminated variables
    if len(rest_rows):
        Ar = A[rest_rows][:, free_idx].toarray()
        br = b[rest_rows]
        u, s, vt = np.linalg.svd(Ar, full_matrices=True)
        tol = max(Ar.shape) * np.finfo(float).eps * (s[0] if len(s) else 1.0)
        rank = int(np.sum(s > tol))
        # particular solution + consistency
        yp_r = vt[:rank].T @ ((u[:, :rank].T @ br) / s[:rank])
        resid = Ar @ yp_r - br
        if np.abs(resid).max() > 1e-7 * (1 + np.abs(br).max()):
            return None, None, "inconsistent equality system"
        kernel = vt[rank:].T  # (n_free, n_free - rank)
    else:
        yp_r = np.zeros(len(free_idx))
        kernel = np.eye(len(free_idx))

    m_red = kernel.shape[1]
    y_p = np.zeros(nvar)
    y_p[free_idx] = yp_r
    N = sp.lil_matrix((nvar, m_red))
    N[free_idx] = kernel

    # back-substitute eliminated variables (their rows touch only free vars)
    N = N.tocsr()
    for v in eliminated:
        r = elim_var[v]
        lo, hi = A.indptr[r], A.indptr[r + 1]
        cols = A.indices[lo:hi]
        vals = A.data[lo:hi]
        a_v = vals[cols == v][0]
        others = cols != v
        oc, ov = cols[others], vals[others]
        y_p[v] = (b[r] - ov @ y_p[oc]) / a_v
    # vectorized N rows for eliminated vars
    rows_i, cols_j, vals_v = [], [], []
    for v in eliminated:
        r = elim_var[v]
        lo, hi = A.indptr[r], A.indptr[r + 1]
        cols = A.indices[lo:hi]
        vals = A.data[lo:hi]
        a_v = vals[cols == v][0]
        for c, a in zip(cols, vals):
            if c == v:
                continue
            rows_i.append(v)
            cols_j.append(c)
            vals_v.append(-a / a_v)
    if rows_i:
        S = sp.csr_matrix(
            (vals_v, (rows_i, cols_j)), shape=(nvar, nvar)
        )
        N = N + S @ N
    return y_p, N.tocsr(), None


# ---------------------------------------------------------------------------
# NT interior point on the reduced problem


class _Reduced:
    """max c'z  s.t.  F0_b + sum z_j Fj_b >= 0, dense per-block tensors."""

    def __init__(self, c, f0s, fmats, dims):
        self.c = c
        self.f0s = f0s          # list of (k,k)
        self.fmats = fmats      # list of (m,k,k)
        self.dims = dims
        self.m = len(c)


def _steplen(L: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha with P + alpha D psd, P = L L'."""
    M = sla.solve_triangular(L, D, lower=True)
    M = sla.solve_triangular(L, M.T, lower=True)
    lmin = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    if lmin >= 0:
        return np.inf
    return -1.0 / lmin


def _ipm(red: _Reduced, opts: SolveOptions):
    m = red.m
    nb = len(red.dims)
    K = sum(red.dims)
    c = red.c

    # standard-form data: A_j = -Fj, Cmat = F0, b = c
    A = [-f for f in red.fmats]
    Cm = [f0.copy() for f0 in red.f0s]

    X = [np.eye(k) * 10.0 for k in red.dims]
    S = [np.eye(k) * 10.0 for k in red.dims]
    y = np.zeros(m)

    Aflat = [a.reshape(m, k * k) for a, k in zip(A, red.dims)]
    bnorm = 1.0 + np.linalg.norm(c)
    cnorm = 1.0 + np.sqrt(sum(np.sum(f0 * f0) for f0 in red.f0s))

    gap_hist = []
    best = None  # (merit, y, relgap, rp_rel, rd_rel, feig)
    stat = "numerical_failure"
    msg = "iteration cap reached"

    def fast_rp():
        rp = c.copy()
        for b_ in range(nb):
            rp -= Aflat[b_] @ X[b_].reshape(-1)
        return rp

    for it in range(opts.max_iter):
        rp = fast_rp()
        Rd = [Cm[b_] - S[b_] - np.tensordot(y, A[b_], axes=1) for b_ in range(nb)]
        gap = sum(np.sum(X[b_] * S[b_]) for b_ in range(nb))
        mu = gap / K
        pobj = sum(np.sum(Cm[b_] * X[b_]) for b_ in range(nb))
        dobj = c @ y
        relgap = gap / (1 + abs(pobj) + abs(dobj))
        rp_rel = np.linalg.norm(rp) / bnorm
        rd_rel = np.sqrt(sum(np.sum(r * r) for r in Rd)) / cnorm
        # minimum eigenvalue of the evaluated constraint F(y) = S + Rd,
        # relative to block scale; the solution contract needs >= -1e-8
        feig = min(
            float(np.linalg.eigvalsh(S[b_] + Rd[b_])[0])
            / max(1.0, np.abs(S[b_] + Rd[b_]).max())
            for b_ in range(nb)
        )
        gap_hist.append((gap, rp_rel, rd_rel))

        merit = max(rp_rel, rd_rel, relgap, -feig * 10.0)
        if best is None or merit < best[0]:
            best = (merit, y.copy(), relgap, rp_rel, rd_rel, feig)

        if opts.verbose:
            print(
                f"  it {it:3d} gap {relgap:9.2e} rp {rp_rel:9.2e} "
                f"rd {rd_rel:9.2e} feig {feig:9.2e} dobj {dobj:+.6e}"
            )

        if (
            rp_rel <= max(opts.feas_tol * 10, 1e-6)
            and rd_rel <= max(opts.feas_tol * 10, 1e-6)
            and relgap <= opts.gap_tol
            and feig >= -1e-9
        ):
            stat, msg = "optimal", "converged"
            break

        if relgap < 1e-13 and it > 5:
            # complementarity at machine precision; further steps only churn
            stat, msg = "numerical_failure", "gap at machine precision"
            break

        # dual-infeasibility certificate: X an approximate improving ray
        xnorm = np.sqrt(sum(np.sum(x * x) for x in X))
        if xnorm > 1e4:
            pray = pobj / xnorm
            aray = np.linalg.norm(
                np.array([sum(np.sum(A[b_][j] * X[b_]) for b_ in range(nb)) for j in range(m)])
            ) / xnorm
            if pray < -1e-8 and aray < 1e-8:
                stat, msg = "infeasible", "primal improving ray found"
                break

        # unbounded objective: dual iterate diverges while staying dual-feasible
        if np.linalg.norm(y) > 1e9 and rd_rel <= 1e-6:
            stat, msg = "numerical_failure", "objective appears unbounded"
            break

        # stagnation heuristic
        if it > 60 and len(gap_hist) > 30:
            prog = gap_hist[-1][0] / (gap_hist[-30][0] + 1e-300)
            if prog > 0.9 and max(rp_rel, rd_rel) > 1e3 * opts.feas_tol:
                stat, msg = "infeasible", "residual stagnation"
                break

        # NT scaling per block
        try:
            Wh, lam, Lx, Ls = [], [], [], []
            for b_ in range(nb):
                k = red.dims[b_]
                jit = 1e-14 * (np.trace(X[b_]) / k + np.trace(S[b_]) / k)
                try:
                    lx = np.linalg.cholesky(X[b_])
                    ls = np.linalg.cholesky(S[b_])
                except np.linalg.LinAlgError:
                    lx = np.linalg.cholesky(X[b_] + jit * np.eye(k))
                    ls = np.linalg.cholesky(S[b_] + jit * np.eye(k))
                u, sig, vt = np.linalg.svd(lx.T @ ls)
                wh = lx @ u / np.sqrt(sig)
                Wh.append(wh)
                lam.append(sig)
                Lx.append(lx)
                Ls.append(ls)
        except np.linalg.LinAlgError:
            stat, msg = "numerical_failure", "iterate lost positive definiteness"
            break

        # Schur matrix M_ij = sum_b <G_i, G_j>, G_i = Wh' A_i Wh
        Mschur = np.zeros((m, m))
        Gflats = []
        Rdhats = []
        for b_ in range(nb):
            k = red.dims[b_]
            wh = Wh[b_]
            B1 = A[b_] @ wh                      # (m,k,k)
            G = np.swapaxes(np.swapaxes(B1, 1, 2) @ wh, 1, 2)  # Wh' A Wh
            Gf = G.reshape(m, k * k)
            Gflats.append(Gf)
            Mschur += Gf @ Gf.T
            Rdhats.append(wh.T @ Rd[b_] @ wh)
        dscale = np.abs(np.diag(Mschur)).max() + 1.0
        Mreg = Mschur + np.eye(m) * max(opts.schur_reg, 1e-14) * dscale

        try:
            cho = sla.cho_factor(Mreg, lower=True)
        except np.linalg.LinAlgError:
            try:
                cho = sla.cho_factor(Mschur + np.eye(m) * 1e-8 * dscale, lower=True)
            except np.linalg.LinAlgError:
                stat, msg = "numerical_failure", "Schur system indefinite"
                break

        def direction(Dcs):
            h = rp.copy()
            for b_ in range(nb):
                h += Gflats[b_] @ (Rdhats[b_] - Dcs[b_]).reshape(-1)
            dy = sla.cho_solve(cho, h)
            for _ in range(2):  # iterative refinement on the Schur system
                r = h - Mschur @ dy
                if np.linalg.norm(r) <= 1e-13 * (1 + np.linalg.norm(h)):
                    break
                dy = dy + sla.cho_solve(cho, r)
            dS, dX, dXh, dSh = [], [], [], []
            for b_ in range(nb):
                ds = Rd[b_] - np.tensordot(dy, A[b_], axes=1)
                dsh = Wh[b_].T @ ds @ Wh[b_]
                dxh = Dcs[b_] - dsh
                dx = Wh[b_] @ dxh @ Wh[b_].T
                dS.append(0.5 * (ds + ds.T))
                dX.append(0.5 * (dx + dx.T))
                dXh.append(dxh)
                dSh.append(dsh)
            return dy, dX, dS, dXh, dSh

        # predictor
        Dc_aff = [-np.diag(l) for l in lam]
        dy_a, dX_a, dS_a, dXh_a, dSh_a = direction(Dc_aff)
        ap = min((_steplen(Lx[b_], dX_a[b_]) for b_ in range(nb)), default=np.inf)
        ad = min((_steplen(Ls[b_], dS_a[b_]) for b_ in range(nb)), default=np.inf)
        ap, ad = min(1.0, opts.step_frac * ap), min(1.0, opts.step_frac * ad)
        gap_aff = sum(
            np.sum((X[b_] + ap * dX_a[b_]) * (S[b_] + ad * dS_a[b_]))
            for b_ in range(nb)
        )
        sigma = min(1.0, max(1e-10, (max(gap_aff, 0.0) / gap) ** 3))

        # corrector with Mehrotra second-order term
        Dcs = []
        for b_ in range(nb):
            l = lam[b_]
            Hw = 2.0 / np.add.outer(l, l)
            so = 0.5 * (dXh_a[b_] @ dSh_a[b_] + dSh_a[b_] @ dXh_a[b_])
            T = np.diag(sigma * mu - l * l) - so
            Dcs.append(Hw * T)
        dy, dX, dS, _, _ = direction(Dcs)
        ap = min((_steplen(Lx[b_], dX[b_]) for b_ in range(nb)), default=np.inf)
        ad = min((_steplen(Ls[b_], dS[b_]) for b_ in range(nb)), default=np.inf)
        ap, ad = min(1.0, opts.step_frac * ap), min(1.0, opts.step_frac * ad)

        # once near-feasible, keep the (now meaningful) duality gap monotone
        if rp_rel <= 1e-6 and rd_rel <= 1e-6:
            for _ in range(6):
                gap_new = sum(
                    np.sum((X[b_] + ap * dX[b_]) * (S[b_] + ad * dS[b_]))
                    for b_ in range(nb)
                )
                if gap_new <= gap * (1 + 1e-9) or max(ap, ad) < 1e-8:
                    break
                ap *= 0.5
                ad *= 0.5

        if max(ap, ad) < 1e-12:
            stat, msg = "numerical_failure", "step size collapsed"
            break

        for b_ in range(nb):
            X[b_] = X[b_] + ap * dX[b_]
            S[b_] = S[b_] + ad * dS[b_]
        y = y + ad * dy

    else:
        it = opts.max_iter

    # on a failed or capped run, fall back to the best certified iterate
    if stat == "numerical_failure" and best is not None:
        _, y_b, relgap_b, rp_b, rd_b, feig_b = best
        if feig_b >= -1e-9 and relgap_b <= 1e-4 and rd_b <= 1e-6:
            stat = "feasible"
            msg = f"sub-optimal interior iterate accepted ({msg})"
            y = y_b
        elif feig_b >= -1e-9:
            msg += "; best iterate feasible but gap not closed"

    out = {
        "y": y,
        "status": stat,
        "message": msg,
        "iterations": len(gap_hist),
        "gap": best[2] if best is not None else np.inf,
        "primal_res": best[3] if best is not None else np.inf,
        "dual_res": best[4] if best is not None else np.inf,
        "gap_history": gap_hist,
    }
    return out


# ---------------------------------------------------------------------------
# public solve


def solve(problem: LmiProblem, opts: SolveOptions | None = None) -> LmiSolution:
    """Solve an LmiProblem; never raises on infeasibility (reports status)."""
    opts = opts or SolveOptions()

    def finish(status, y, message, extra=None):
        wits = [blk.eval(y) for blk in problem.blocks]
        lmins = [
            float(np.linalg.eigvalsh(w)[0]) if w.size else 0.0 for w in wits
        ]
        scales = [max(1.0, np.abs(w).max() if w.size else 0.0) for w in wits]
        min_eig_rel = min(
            (lm / sc for lm, sc in zip(lmins, scales)), default=0.0
        )
        if problem.eq_A is not None and problem.eq_A.shape[0]:
            r = problem.eq_A @ y - problem.eq_b
            rown = np.abs(problem.eq_b) + 1.0
            eq_res = float(np.abs(r / rown).max())
        else:
            eq_res = 0.0
        res = {
            "min_eig": min(lmins, default=0.0),
            "min_eig_rel": min_eig_rel,
            "eq_residual": eq_res,
        }
        if extra:
            res.update(
                {k: extra[k] for k in ("gap", "primal_res", "dual_res") if k in extra}
            )
        info = {"gap_history": extra.get("gap_history", [])} if extra else {}
        # self-consistency: a claimed-good solution must verify
        if status in ("optimal", "feasible"):
            if min_eig_rel < -1e-8 or eq_res > 1e-7:
                status, message = "numerical_failure", (
                    f"self-check failed (min_eig_rel={min_eig_rel:.2e}, "
                    f"eq_res={eq_res:.2e})"
                )
        return LmiSolution(
            status=status,
            y=y,
            objective_value=float(problem.objective @ y),
            block_witnesses=wits,
            residuals=res,
            message=message,
            info=info,
        )

    if problem.total_psd_dim() > 2000:
        raise ValueError("total PSD dimension too large for the dense solver")

    y_p, N, err = _eliminate_equalities(problem)
    if err is not None:
        return LmiSolution(
            status="infeasible",
            y=np.zeros(problem.num_vars),
            objective_value=np.nan,
            block_witnesses=[],
            residuals={},
            message=err,
        )

    m_red = N.shape[1]
    c_red = np.asarray(N.T @ problem.objective).ravel()

    f0s, fmats, dims = [], [], []
    for blk in problem.blocks:
        k = blk.dim
        f0 = blk.f0 + (blk.coefs @ y_p).reshape(k, k)
        f0 = 0.5 * (f0 + f0.T)
        red = np.asarray((blk.coefs @ N).todense()) if sp.issparse(
            blk.coefs @ N
        ) else np.asarray(blk.coefs @ N)
        fm = red.T.reshape(m_red, k, k)
        fm = 0.5 * (fm + np.swapaxes(fm, 1, 2))
        f0s.append(f0)
        fmats.append(fm)
        dims.append(k)

    # drop variables that no longer touch any block
    col_norms = np.zeros(m_red)
    for fm in fmats:
        col_norms += np.abs(fm).reshape(m_red, -1).max(axis=1) if m_red else 0.0
    live = col_norms > 1e-14
    dead = ~live
    if np.any(dead) and np.any(np.abs(c_red[dead]) > 1e-12):
        return finish(
            "numerical_failure",
            y_p,
            "objective unbounded along an unconstrained direction",
        )
    if np.any(dead):
        keep = np.where(live)[0]
        c_red = c_red[keep]
        fmats = [fm[keep] for fm in fmats]
        N = N[:, keep]
        m_red = len(keep)

    if m_red == 0:
        ok = all(psd_check(f0, 1e-8)[0] for f0 in f0s)
        return finish(
            "feasible" if ok else "infeasible",
            y_p,
            "fully determined by equalities",
        )

    # block and variable scaling to O(1)
    bscale = [max(1.0, np.abs(f0).max(), np.abs(fm).max()) for f0, fm in zip(f0s, fmats)]
    f0s = [f0 / d for f0, d in zip(f0s, bscale)]
    fmats = [fm / d for fm, d in zip(fmats, bscale)]
    vscale = np.ones(m_red)
    for fm in fmats:
        vscale = np.maximum(vscale, np.abs(fm).reshape(m_red, -1).max(axis=1))
    fmats = [fm / vscale[:, None, None] for fm in fmats]
    c_scaled = c_red * 1.0 / vscale
    cn = np.abs(c_scaled).max()
    if cn > 0:
        c_scaled = c_scaled / cn

    red = _Reduced(c_scaled, f0s, fmats, dims)
    out = _ipm(red, opts)

    z = out["y"] / vscale
    y = y_p + np.asarray(N @ z).ravel()

    status = out["status"]
    if status == "optimal" and np.all(problem.objective == 0.0):
        status = "feasible"
    return finish(status, y, out["message"], out)
