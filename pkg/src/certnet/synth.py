"""Per-subsystem synthesis of quadratic sub-barrier certificates from data.

Phase 1 searches, for a fixed decay rate taken from a descending grid, for
C = P^-1 > 0, a polynomial matrix H(x) with N0 H(x) = Upsilon(x) C, scalars
pi, mu > 0 and SOS multipliers such that

    [[ G(x), H(x)' ],
     [ H(x), mu I  ]]  -  (lambda(x)' b(x)) I   is matrix-SOS on the state box,

    G(x) = -eps C - (X1 - D W0) H(x) - H(x)' (X1 - D W0)' - mu Xi Xi' - pi I.

pi is maximized (it divides ||D||^2 in the interaction gain) under a trace
cap on C that fixes the otherwise-free cone scale.  Phase 2 computes the
norm lower bound phi from the eigenvalues of C, the initial-set level gamma
and per-unsafe-box levels beta by small scalar SOS programs.  The feasible
set is invariant under joint positive scaling of (C, H, pi, mu, lambda), so
accepted certificates are renormalized to a fixed initial-level convention;
the extracted controller  nu(x) = U0 H(x) P x  is unchanged by that scaling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .dictionary import Dictionary, Transformation, factorize
from .data import TrajectoryData
from .poly import Monomial, Polynomial, PolyMatrix, monomial_basis
from .sdp import SolveOptions, solve
from .sos import (
    AffExpr,
    GramWitness,
    ParamPoly,
    ProblemBuilder,
    SetSpec,
    box_to_polys,
    matrix_sos,
    recover_witness,
    scalar_sos,
)


class CertificateError(RuntimeError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass
class SynthConfig:
    eps_grid: tuple[float, ...] = (0.99, 0.9, 0.5, 0.1, 0.05, 0.01)
    deg_H: int | None = None          # default: dictionary degree - 1
    mult_deg: int | None = None       # default: compiler rule
    delta_C: float = 1e-3             # C >= delta I
    shape_floor: float = 0.2          # lambda_min(C) >= floor * tr(C)/n
    shape_grid: tuple[float, ...] | None = None  # floors to try on level-set failure
    scalar_min: float = 1e-6          # lower bound on pi, mu
    scalar_max: float = 1e8           # containment cap on mu
    pi_cap: float = 1.0               # cap on the maximized pi (stage A)
    pi_backoff: float = 0.5           # stage B fixes pi at backoff * pi_A
    trace_cap: float | None = None    # default: n (fixes the cone scale)
    level_scale: float = 8.0          # gamma normalization: gamma = 8 max|x|^2 on X0
    max_cond_C: float = 1e8
    max_ctrl_gain: float | None = 2500.0  # cap on sup ||d nu/dx||_2 over {B<=gamma}
    solver: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        eps = tuple(self.eps_grid)
        if not eps or any(e <= 0 for e in eps) or list(eps) != sorted(eps, reverse=True):
            raise ValueError("eps grid must be positive and descending")
        self.eps_grid = eps


@dataclass
class Phase1Result:
    eps: float
    C: np.ndarray
    H: PolyMatrix
    pi: float
    mu: float
    multipliers: list[Polynomial]
    witness: GramWitness
    eq16_residual: float
    solver_status: str


@dataclass
class CsbcCertificate:
    """Everything needed to use and independently recheck one certificate."""

    C: np.ndarray
    P: np.ndarray
    H: PolyMatrix
    phi: float
    gamma: float
    beta: float
    eps: float
    pi: float
    mu: float
    rho: float
    controller: list[Polynomial]
    dissipation_witness: GramWitness
    dissipation_multipliers: list[Polynomial]
    level_witnesses: dict[str, GramWitness]
    level_multipliers: dict[str, list[Polynomial]]
    level_bounds: dict[str, float]
    # data snapshot (synthesis inputs; lets verification rebuild constraints)
    N0: np.ndarray
    E: np.ndarray            # X1 - D W0
    U0: np.ndarray
    Xi2: np.ndarray          # Xi Xi'
    D: np.ndarray            # (n, sigma)
    dictionary: Dictionary
    state_set: SetSpec
    initial_set: SetSpec
    unsafe_set: SetSpec
    eq16_residual: float
    template_key: str = ""

    @property
    def n(self) -> int:
        return self.C.shape[0]

    def barrier(self, x) -> np.ndarray:
        """B(x) = x' P x for points (..., n)."""
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.P, x)

    def control(self, x) -> np.ndarray:
        """nu(x), batched over leading axes."""
        x = np.asarray(x, dtype=float)
        out = np.stack([p.eval(x) for p in self.controller], axis=-1)
        return out

    def validate(self, delta_C: float = 1e-3):
        lmin = np.linalg.eigvalsh(self.C)[0]
        if lmin < delta_C * (1 - 1e-6):
            raise CertificateError("C below its positive-definiteness floor")
        if not self.beta > self.gamma:
            raise CertificateError(
                "level_set", f"beta={self.beta:.6g} <= gamma={self.gamma:.6g}"
            )
        dn = float(np.linalg.norm(self.D, 2)) if self.D.size else 0.0
        if abs(self.rho * self.pi - dn**2) > 1e-9 * (1 + dn**2):
            raise CertificateError("interaction gain inconsistent with ||D||^2/pi")
        if self.eq16_residual > 1e-8:
            raise CertificateError(
                "data equality residual too large", f"{self.eq16_residual:.2e}"
            )

    def to_json(self) -> dict:
        return {
            "C": self.C.tolist(),
            "P": self.P.tolist(),
            "H": self.H.to_json(),
            "phi": self.phi, "gamma": self.gamma, "beta": self.beta,
            "eps": self.eps, "pi": self.pi, "mu": self.mu, "rho": self.rho,
            "controller": [p.to_json() for p in self.controller],
            "dissipation_witness": self.dissipation_witness.to_json(),
            "dissipation_multipliers": [
                p.to_json() for p in self.dissipation_multipliers
            ],
            "level_witnesses": {
                k: w.to_json() for k, w in self.level_witnesses.items()
            },
            "level_multipliers": {
                k: [p.to_json() for p in v]
                for k, v in self.level_multipliers.items()
            },
            "level_bounds": self.level_bounds,
            "N0": self.N0.tolist(), "E": self.E.tolist(),
            "U0": self.U0.tolist(), "Xi2": self.Xi2.tolist(),
            "D": self.D.tolist(),
            "dictionary": self.dictionary.to_json(),
            "state_set": self.state_set.to_json(),
            "initial_set": self.initial_set.to_json(),
            "unsafe_set": self.unsafe_set.to_json(),
            "eq16_residual": self.eq16_residual,
            "template_key": self.template_key,
        }

    @staticmethod
    def from_json(d: dict) -> "CsbcCertificate":
        def wit(w):
            return GramWitness(
                [Monomial(tuple(e)) for e in w["basis"]],
                np.array(w["Q"]), w["residual"], w["lambda_min"],
            )

        return CsbcCertificate(
            C=np.array(d["C"]), P=np.array(d["P"]),
            H=PolyMatrix.from_json(d["H"]),
            phi=d["phi"], gamma=d["gamma"], beta=d["beta"], eps=d["eps"],
            pi=d["pi"], mu=d["mu"], rho=d["rho"],
            controller=[Polynomial.from_json(p) for p in d["controller"]],
            dissipation_witness=wit(d["dissipation_witness"]),
            dissipation_multipliers=[
                Polynomial.from_json(p) for p in d["dissipation_multipliers"]
            ],
            level_witnesses={k: wit(w) for k, w in d["level_witnesses"].items()},
            level_multipliers={
                k: [Polynomial.from_json(p) for p in v]
                for k, v in d["level_multipliers"].items()
            },
            level_bounds=d["level_bounds"],
            N0=np.array(d["N0"]), E=np.array(d["E"]), U0=np.array(d["U0"]),
            Xi2=np.array(d["Xi2"]), D=np.array(d["D"]).reshape(
                len(d["C"]), -1
            ),
            dictionary=Dictionary.from_json(d["dictionary"]),
            state_set=SetSpec.from_json(d["state_set"]),
            initial_set=SetSpec.from_json(d["initial_set"]),
            unsafe_set=SetSpec.from_json(d["unsafe_set"]),
            eq16_residual=d["eq16_residual"],
            template_key=d.get("template_key", ""),
        )

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path: str) -> "CsbcCertificate":
        with open(path) as fh:
            return CsbcCertificate.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# phase 1


def _quadratic_from_matrix(P: np.ndarray) -> Polynomial:
    n = P.shape[0]
    terms: dict[Monomial, float] = {}
    for i in range(n):
        for j in range(n):
            e = [0] * n
            e[i] += 1
            e[j] += 1
            m = Monomial(tuple(e))
            terms[m] = terms.get(m, 0.0) + P[i, j]
    return Polynomial(n, terms)


def dissipation_matrix_polys(
    C: np.ndarray,
    H: PolyMatrix,
    E: np.ndarray,
    Xi2: np.ndarray,
    pi: float,
    mu: float,
    eps: float,
) -> list[list[Polynomial]]:
    """Numeric (n+T) x (n+T) polynomial matrix [[G, H'], [H, mu I]]."""
    n = C.shape[0]
    T = H.rows
    EH = H.left_const_mul(E)  # (n, n)
    rows = []
    for a in range(n + T):
        row = []
        for b in range(n + T):
            if a < n and b < n:
                p = (
                    EH[a, b].scale(-1.0)
                    + EH[b, a].scale(-1.0)
                    + Polynomial.constant(n, -eps * C[a, b] - mu * Xi2[a, b])
                )
                if a == b:
                    p = p - pi
                row.append(p)
            elif a < n <= b:
                row.append(H[b - n, a])
            elif b < n <= a:
                row.append(H[a - n, b])
            else:
                row.append(
                    Polynomial.constant(n, mu if a == b else 0.0)
                )
        rows.append(row)
    return rows


def _compile_dissipation(
    td: TrajectoryData,
    upsilon: Transformation,
    E: np.ndarray,
    Xi2: np.ndarray,
    g_polys: list[Polynomial],
    eps: float,
    cfg: SynthConfig,
    pi_fixed: float | None,
    gain_var: bool = False,
):
    """Build the phase-1 LMI for one decay rate.

    With pi_fixed=None, pi is a decision variable (stage A, maximize pi);
    otherwise it enters as a constant (stage B, minimize tr Q).  With
    gain_var, an extra variable bounds every coefficient of U0 H(x), the
    state-feedback factor of the extracted controller, so stage B can keep
    the closed loop temperate.
    """
    n = upsilon.upsilon.cols
    N, T = td.N0.shape
    deg_H = cfg.deg_H if cfg.deg_H is not None else td.dictionary.max_degree - 1
    hmonos = monomial_basis(n, deg_H)

    builder = ProblemBuilder()
    # pin the free cone scale: tr(C) = n exactly (otherwise stage B would
    # shrink C onto its floor), and keep C's conditioning bounded so that
    # P = C^-1 cannot blow up the extracted controller
    trace_val = cfg.trace_cap if cfg.trace_cap is not None else float(n)
    floor = max(cfg.delta_C, cfg.shape_floor * trace_val / n)
    C_ids = builder.new_sym_matrix("C", n, psd_shift=floor)
    cap = AffExpr(const=-trace_val)
    for i in range(n):
        cap = cap + AffExpr.of(int(C_ids[i, i]))
    builder.add_equality(cap)
    h_ids = np.empty((T, n, len(hmonos)), dtype=int)
    for t in range(T):
        for l in range(n):
            for a_i in range(len(hmonos)):
                h_ids[t, l, a_i] = builder.new_var(f"H[{t},{l}]:{a_i}")
    pi_v = (
        builder.new_var("pi", lb=cfg.scalar_min, ub=cfg.pi_cap)
        if pi_fixed is None
        else None
    )
    mu_v = builder.new_var("mu", lb=cfg.scalar_min, ub=cfg.scalar_max)

    # N0 H(x) = Upsilon(x) C, coefficient by coefficient
    for k in range(N):
        piv = upsilon.pivot_cols[k]
        ((ups_mono, ups_coef),) = upsilon.upsilon[k, piv].terms.items()
        for l in range(n):
            for a_i, mono in enumerate(hmonos):
                lhs = AffExpr(
                    {
                        int(h_ids[t, l, a_i]): td.N0[k, t]
                        for t in range(T)
                        if td.N0[k, t] != 0.0
                    }
                )
                if mono == ups_mono:
                    lhs = lhs - AffExpr.of(int(C_ids[piv, l]), ups_coef)
                builder.add_equality(lhs)

    const_mono = Monomial((0,) * n)
    M: list[list[ParamPoly | None]] = [[None] * (n + T) for _ in range(n + T)]
    for a in range(n):
        for b in range(a, n):
            pp = ParamPoly(n)
            for a_i, mono in enumerate(hmonos):
                e = AffExpr()
                for t in range(T):
                    if E[a, t] != 0.0:
                        e = e + AffExpr.of(int(h_ids[t, b, a_i]), -E[a, t])
                    if E[b, t] != 0.0:
                        e = e + AffExpr.of(int(h_ids[t, a, a_i]), -E[b, t])
                pp.add_term(mono, e)
            diag = AffExpr.of(int(C_ids[a, b]), -eps)
            diag = diag + AffExpr.of(mu_v, -Xi2[a, b])
            if a == b:
                if pi_fixed is None:
                    diag = diag + AffExpr.of(pi_v, -1.0)
                else:
                    diag = diag - pi_fixed
            pp.add_term(const_mono, diag)
            M[a][b] = pp
    for a in range(n):
        for t in range(T):
            M[a][n + t] = ParamPoly(
                n,
                {
                    mono: AffExpr.of(int(h_ids[t, a, a_i]))
                    for a_i, mono in enumerate(hmonos)
                },
            )
    for t in range(T):
        for s in range(t, T):
            pp = ParamPoly(n)
            if s == t:
                pp.add_term(const_mono, AffExpr.of(mu_v))
            M[n + t][n + s] = pp

    gain_v = None
    if gain_var:
        gain_v = builder.new_var("gain_cap", lb=0.0)
        m_in = td.U0.shape[0]
        for l in range(m_in):
            for j in range(n):
                for a_i in range(len(hmonos)):
                    row = AffExpr(
                        {
                            int(h_ids[t, j, a_i]): td.U0[l, t]
                            for t in range(T)
                            if td.U0[l, t] != 0.0
                        }
                    )
                    builder.add_affine_psd_block(
                        [[AffExpr.of(gain_v) - row]], "gain+"
                    )
                    builder.add_affine_psd_block(
                        [[AffExpr.of(gain_v) + row]], "gain-"
                    )

    frag = matrix_sos(builder, M, g_polys, cfg.mult_deg, tag="dissipation")
    return builder, frag, C_ids, h_ids, hmonos, pi_v, mu_v, gain_v


def phase1(
    td: TrajectoryData,
    upsilon: Transformation,
    D: np.ndarray,
    state_set: SetSpec,
    cfg: SynthConfig,
) -> Phase1Result:
    """Grid search over the decay rate; returns the largest feasible value.

    Each grid point solves twice: stage A maximizes pi (capped), stage B
    fixes pi at a backed-off value and minimizes tr(Q) of the dissipation
    Gram, which keeps H, and with it the extracted controller, small.
    Raises CertificateError("infeasible") with per-eps diagnostics when the
    whole grid fails.
    """
    if not td.rank_ok:
        raise CertificateError(
            "rank condition violated",
            "the monomial-data matrix must have full row rank",
        )
    n = upsilon.upsilon.cols
    T = td.N0.shape[1]
    E = td.X1 - (D @ td.W0 if D.size else 0.0)
    Xi2 = td.Xi @ td.Xi.T
    if len(state_set.boxes) != 1:
        raise CertificateError("state set must be a single box")
    g_polys = box_to_polys(state_set)[0]

    diagnostics = {}
    for eps in cfg.eps_grid:
        builder, frag, C_ids, h_ids, hmonos, pi_v, mu_v, _ = _compile_dissipation(
            td, upsilon, E, Xi2, g_polys, eps, cfg, pi_fixed=None
        )
        builder.maximize({pi_v: 1.0})
        sol_a = solve(builder.build(), cfg.solver)
        if not sol_a.ok:
            diagnostics[eps] = f"stage A {sol_a.status}: {sol_a.message}"
            continue
        pi_val = max(cfg.scalar_min * 10, cfg.pi_backoff * float(sol_a.y[pi_v]))

        builder, frag_b, C_ids, h_ids, hmonos, _, mu_v, gain_v = _compile_dissipation(
            td, upsilon, E, Xi2, g_polys, eps, cfg, pi_fixed=pi_val, gain_var=True
        )
        K = frag_b.gram_ids.shape[0]
        obj = {int(frag_b.gram_ids[i, i]): -1.0 / K for i in range(K)}
        obj[gain_v] = -1.0
        builder.maximize(obj)
        sol = solve(builder.build(), cfg.solver)
        if not sol.ok:
            sol, frag_b, pi_val = sol_a, frag, float(sol_a.y[pi_v])

        C = np.array(
            [[sol.y[C_ids[i, j]] for j in range(n)] for i in range(n)]
        )
        H = PolyMatrix(
            [
                [
                    Polynomial(
                        n,
                        {
                            mono: sol.y[h_ids[t, l, a_i]]
                            for a_i, mono in enumerate(hmonos)
                        },
                    )
                    for l in range(n)
                ]
                for t in range(T)
            ]
        )
        eq16 = eq16_residual(td.N0, H, upsilon, C)
        wit = recover_witness(sol.y, frag_b)
        mults = [m.value(sol.y, n) for m in frag_b.multipliers]
        return Phase1Result(
            eps=eps,
            C=C,
            H=H,
            pi=pi_val,
            mu=float(sol.y[mu_v]),
            multipliers=mults,
            witness=wit,
            eq16_residual=eq16,
            solver_status=sol.status,
        )
    raise CertificateError(
        "infeasible",
        "; ".join(f"eps={e}: {r}" for e, r in diagnostics.items()),
    )


def eq16_residual(
    N0: np.ndarray, H: PolyMatrix, upsilon: Transformation, C: np.ndarray
) -> float:
    """Max coefficient error of N0 H(x) - Upsilon(x) C."""
    lhs = H.left_const_mul(N0)
    rhs = upsilon.upsilon.right_const_mul(C)
    diff = lhs - rhs
    return diff.max_abs_coeff()


# ---------------------------------------------------------------------------
# phase 2


@dataclass
class Phase2Result:
    phi: float
    gamma: float
    beta: float
    witnesses: dict[str, GramWitness]
    multipliers: dict[str, list[Polynomial]]
    bounds: dict[str, float]  # per-witness level (gamma or per-box beta)


def phase2(
    C: np.ndarray,
    initial_set: SetSpec,
    unsafe_set: SetSpec,
    cfg: SynthConfig,
) -> Phase2Result:
    """Levels for a fixed shape: phi from eigenvalues, gamma and beta by
    small scalar SOS programs with constant multipliers."""
    evals = np.linalg.eigvalsh(C)
    if evals[0] <= 0 or evals[-1] / evals[0] > cfg.max_cond_C:
        raise CertificateError("C ill-conditioned", f"cond={evals[-1]/evals[0]:.2e}")
    phi = (1.0 - 1e-9) / evals[-1]
    P = np.linalg.inv(C)
    P = 0.5 * (P + P.T)
    n = C.shape[0]
    xpx = _quadratic_from_matrix(P)
    witnesses: dict[str, GramWitness] = {}
    multipliers: dict[str, list[Polynomial]] = {}

    # gamma: least upper bound of x'Px over the initial set
    builder = ProblemBuilder()
    gamma_v = builder.new_var("gamma", lb=0.0)
    frags = []
    for b_i, g in enumerate(box_to_polys(initial_set)):
        expr = ParamPoly.from_var(n, gamma_v) - ParamPoly.from_poly(xpx)
        frags.append(
            scalar_sos(builder, expr, g, cfg.mult_deg, tag=f"init{b_i}")
        )
    builder.maximize({gamma_v: -1.0})
    sol = solve(builder.build(), cfg.solver)
    if not sol.ok:
        raise CertificateError("initial-level bound failed", sol.message)
    gamma = float(sol.y[gamma_v])
    bounds: dict[str, float] = {}
    for b_i, frag in enumerate(frags):
        witnesses[f"init{b_i}"] = recover_witness(sol.y, frag)
        multipliers[f"init{b_i}"] = [m.value(sol.y, n) for m in frag.multipliers]
        bounds[f"init{b_i}"] = gamma

    # beta: greatest lower bound of x'Px over each unsafe box; keep the min
    beta = np.inf
    for b_i, g in enumerate(box_to_polys(unsafe_set)):
        builder = ProblemBuilder()
        beta_v = builder.new_var(f"beta{b_i}", lb=0.0)
        expr = ParamPoly.from_poly(xpx) - ParamPoly.from_var(n, beta_v)
        frag = scalar_sos(builder, expr, g, cfg.mult_deg, tag=f"unsafe{b_i}")
        builder.maximize({beta_v: 1.0})
        sol = solve(builder.build(), cfg.solver)
        if not sol.ok:
            raise CertificateError(
                f"unsafe-level bound failed on box {b_i}", sol.message
            )
        witnesses[f"unsafe{b_i}"] = recover_witness(sol.y, frag)
        multipliers[f"unsafe{b_i}"] = [
            m.value(sol.y, n) for m in frag.multipliers
        ]
        bounds[f"unsafe{b_i}"] = float(sol.y[beta_v])
        beta = min(beta, float(sol.y[beta_v]))
    return Phase2Result(phi, gamma, beta, witnesses, multipliers, bounds)


# ---------------------------------------------------------------------------
# extraction and assembly


def extract_controller(
    U0: np.ndarray, H: PolyMatrix, C: np.ndarray, max_cond: float = 1e8
) -> list[Polynomial]:
    """nu(x) = U0 H(x) C^-1 x, expanded to canonical polynomials."""
    if np.linalg.cond(C) > max_cond:
        raise CertificateError("C ill-conditioned for controller extraction")
    P = np.linalg.inv(C)
    P = 0.5 * (P + P.T)
    n = C.shape[0]
    nu = H.left_const_mul(U0).right_const_mul(P) @ PolyMatrix.state_vector(n)
    return [nu[i, 0] for i in range(nu.rows)]


def interaction_gain(D: np.ndarray, pi: float) -> float:
    """rho = ||D||^2 / pi (induced 2-norm)."""
    if pi <= 0:
        raise ValueError("pi must be positive")
    if D is None or D.size == 0:
        return 0.0
    return float(np.linalg.norm(D, 2) ** 2 / pi)


def level_set_fits(P: np.ndarray, gamma: float, state_set: SetSpec) -> bool:
    """True iff the ellipsoid {x' P x <= gamma} lies inside the state box.

    Trajectories are certified only while inside X, so the invariant sublevel
    set must not poke out of it."""
    lo, hi = state_set.boxes[0]
    half = 0.5 * (hi - lo)
    evals, vecs = np.linalg.eigh(P)
    for lam, v in zip(evals, vecs.T):
        extent = np.sqrt(gamma / lam)
        if extent > np.abs(v) @ half + 1e-9:
            return False
    return True


def controller_gain(
    controller: list[Polynomial],
    P: np.ndarray,
    gamma: float,
    samples: int = 400,
    seed: int = 0,
    state_set: SetSpec | None = None,
) -> float:
    """sup of the controller Jacobian spectral norm over {x' P x <= gamma}.

    Closed-loop trajectories from the initial set stay inside this sublevel
    set, so it is the region whose stiffness matters to a fixed-step
    integrator.  Used to reject certificates whose closed loop would be too
    stiff; the caller redraws data in that case.
    """
    n = P.shape[0]
    jac = [[p.diff(j) for j in range(n)] for p in controller]
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((samples, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = rng.uniform(0.0, 1.0, (samples, 1)) ** (1.0 / n)
    L = np.linalg.cholesky(np.linalg.inv(P))
    xs = (u * r * np.sqrt(gamma)) @ L.T
    if state_set is not None:
        lo, hi = state_set.boxes[0]
        xs = np.clip(xs, lo, hi)
    J = np.stack(
        [np.stack([jac[l][j].eval(xs) for j in range(n)], axis=-1)
         for l in range(len(controller))],
        axis=-2,
    )  # (S, m, n)
    return float(np.linalg.norm(J, 2, axis=(-2, -1)).max())


def synthesize_subsystem(
    td: TrajectoryData,
    D: np.ndarray,
    state_set: SetSpec,
    initial_set: SetSpec,
    unsafe_set: SetSpec,
    cfg: SynthConfig | None = None,
    template_key: str = "",
) -> CsbcCertificate:
    """Full per-subsystem pipeline: phase 1, phase 2, normalization,
    controller extraction, interaction gain.
    """
    cfg = cfg or SynthConfig()
    upsilon = factorize(td.dictionary)
    floors = cfg.shape_grid or (cfg.shape_floor,)
    p1 = p2 = None
    last = ""
    for floor in floors:
        fcfg = replace(cfg, shape_floor=floor, shape_grid=None)
        p1 = phase1(td, upsilon, D, state_set, fcfg)
        p2 = phase2(p1.C, initial_set, unsafe_set, fcfg)
        if p2.beta > p2.gamma:
            P_try = np.linalg.inv(p1.C)
            if level_set_fits(0.5 * (P_try + P_try.T), p2.gamma, state_set):
                break
            last = f"level set exceeds the state box at shape floor {floor}"
            continue
        last = (
            f"beta={p2.beta:.6g} <= gamma={p2.gamma:.6g} at shape floor {floor}"
        )
    else:
        raise CertificateError(
            "level_set",
            last + ": level sets do not separate; retry with more data",
        )

    # fix the free cone scale: gamma := level_scale * max ||x||^2 over X0
    target = cfg.level_scale * initial_set.corner_max_sqnorm()
    s = p2.gamma / target
    lmin_C = float(np.linalg.eigvalsh(p1.C)[0])
    s_min = max(
        cfg.delta_C / lmin_C,
        cfg.scalar_min / p1.pi,
        cfg.scalar_min / p1.mu,
    )
    s = max(s, s_min)

    C = p1.C * s
    P = np.linalg.inv(C)
    P = 0.5 * (P + P.T)
    H = p1.H.scale(s)
    pi, mu = p1.pi * s, p1.mu * s
    wit = p1.witness
    diss_wit = GramWitness(wit.basis, wit.Q * s, wit.residual * s, wit.lambda_min * s)
    diss_mults = [p.scale(s) for p in p1.multipliers]
    phi = p2.phi / s
    gamma = p2.gamma / s
    beta = p2.beta / s
    level_wits = {
        k: GramWitness(w.basis, w.Q / s, w.residual / s, w.lambda_min / s)
        for k, w in p2.witnesses.items()
    }
    level_mults = {
        k: [p.scale(1.0 / s) for p in v] for k, v in p2.multipliers.items()
    }
    level_bounds = {k: v / s for k, v in p2.bounds.items()}

    controller = extract_controller(td.U0, H, C, cfg.max_cond_C)
    if cfg.max_ctrl_gain is not None:
        gain = controller_gain(controller, P, gamma, state_set=state_set)
        if gain > cfg.max_ctrl_gain:
            raise CertificateError(
                "controller_too_stiff",
                f"sup ||d nu/dx|| = {gain:.3g} exceeds {cfg.max_ctrl_gain:.3g}; "
                "redraw the trajectory",
            )
    rho = interaction_gain(D, pi)
    E = td.X1 - (D @ td.W0 if D.size else 0.0)
    cert = CsbcCertificate(
        C=C, P=P, H=H,
        phi=phi, gamma=gamma, beta=beta, eps=p1.eps, pi=pi, mu=mu, rho=rho,
        controller=controller,
        dissipation_witness=diss_wit,
        dissipation_multipliers=diss_mults,
        level_witnesses=level_wits,
        level_multipliers=level_mults,
        level_bounds=level_bounds,
        N0=td.N0, E=E, U0=td.U0, Xi2=td.Xi @ td.Xi.T, D=D,
        dictionary=td.dictionary,
        state_set=state_set, initial_set=initial_set, unsafe_set=unsafe_set,
        eq16_residual=eq16_residual(td.N0, H, upsilon, C),
        template_key=template_key,
    )
    cert.validate(cfg.delta_C)
    return cert
