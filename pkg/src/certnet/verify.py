"""A-posteriori verification of certificates against the hidden truth.

Sampling (not formal re-verification) is the point here: the Gram witnesses
already constitute the formal certificate, so these checks guard against
compilation bugs.  Margins use the sign convention ">= 0 means satisfied"
and are normalized by 1 + |lhs| + |rhs| per sample.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .plants import SubsystemModel, subsystem_deriv
from .poly import Polynomial
from .sos import SetSpec, box_to_polys
from .synth import CsbcCertificate, dissipation_matrix_polys, eq16_residual
from .dictionary import factorize


@dataclass
class VerifyReport:
    csbc_margins: dict = field(default_factory=dict)     # per condition
    sample_counts: dict = field(default_factory=dict)
    gram_summary: dict = field(default_factory=dict)
    decay_violations: list = field(default_factory=list)
    safety: dict = field(default_factory=dict)           # name -> verdicts

    def all_margins_ok(self, tol: float = 1e-6) -> bool:
        return all(m >= -tol for m in self.csbc_margins.values())

    def to_json(self, path: str):
        doc = {
            "csbc_margins": {k: float(v) for k, v in self.csbc_margins.items()},
            "sample_counts": self.sample_counts,
            "gram_summary": self.gram_summary,
            "decay_violations": self.decay_violations[:100],
            "num_decay_violations": len(self.decay_violations),
            "safety": self.safety,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    def violations_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "t_or_index", "value", "bound"])
            for t, b, env in self.decay_violations:
                w.writerow(["decay", t, b, env])
            for name, verdict in self.safety.items():
                for i, tv in enumerate(np.atleast_1d(verdict)):
                    if tv == tv and tv is not None and tv >= 0:
                        w.writerow(["unsafe_entry", f"{name}[{i}]", tv, ""])


def _norm_margin(lhs: np.ndarray, rhs: np.ndarray) -> float:
    """min over samples of (lhs - rhs) / (1 + |lhs| + |rhs|)."""
    den = 1.0 + np.abs(lhs) + np.abs(rhs)
    return float(((lhs - rhs) / den).min())


def check_csbc(
    model: SubsystemModel,
    cert: CsbcCertificate,
    samples: int = 10_000,
    seed: int = 0,
    w_bounds: tuple[np.ndarray, np.ndarray] | None = None,
) -> dict[str, float]:
    """Sampled margins of the four sub-certificate conditions, evaluated on
    the true model (test context only).

    w is drawn from the product of the neighbor state boxes; by the network
    wiring these equal the subsystem's own state box repeated, unless
    explicit bounds are passed.
    """
    rng = np.random.default_rng(seed)
    sigma = cert.D.shape[1]
    margins = {}

    xs = cert.state_set.sample(rng, samples)
    B = cert.barrier(xs)
    margins["norm_lower_bound"] = _norm_margin(
        B, cert.phi * np.sum(xs**2, axis=-1)
    )

    x0 = cert.initial_set.sample(rng, samples)
    margins["initial_level"] = _norm_margin(
        np.full(samples, cert.gamma), cert.barrier(x0)
    )

    xu = cert.unsafe_set.sample(rng, samples)
    margins["unsafe_level"] = _norm_margin(cert.barrier(xu), cert.beta)

    if sigma:
        if w_bounds is None:
            lo, hi = cert.state_set.boxes[0]
            k = sigma // len(lo)
            w_lo, w_hi = np.tile(lo, k), np.tile(hi, k)
        else:
            w_lo, w_hi = w_bounds
        w = rng.uniform(w_lo, w_hi, size=(samples, sigma))
    else:
        w = np.zeros((samples, 0))
    nu = cert.control(xs)
    f = model.dictionary.eval(xs) @ model.A.T + nu @ model.B.T
    if sigma:
        f = f + w @ cert.D.T
    lie = 2.0 * np.einsum("si,ij,sj->s", xs, cert.P, f)
    bound = -cert.eps * B + cert.rho * np.sum(w**2, axis=-1)
    margins["dissipation"] = _norm_margin(bound, lie)
    return margins


def check_decay(
    times: np.ndarray, B_values: np.ndarray, eps: float, slack: float = 0.01
) -> list[tuple[float, float, float]]:
    """Violations of B(x(t)) <= (1 + slack) exp(-eps t) B(x(0)) + 1e-6.

    B_values may be (S,) or (S, batch).
    """
    B_values = np.atleast_2d(np.asarray(B_values, dtype=float).T).T
    env = (1.0 + slack) * np.exp(-eps * times)[:, None] * B_values[0][None, :] + 1e-6
    bad = np.argwhere(B_values > env)
    return [
        (float(times[i]), float(B_values[i, j]), float(env[i, j]))
        for i, j in bad
    ]


def check_safety(
    times: np.ndarray,
    states: np.ndarray,
    unsafe_sets: list[SetSpec],
) -> list[float | None]:
    """Per-subsystem first time of unsafe-set entry (None if clean).

    states: (S, ..., R, n) for R monitored subsystems with their unsafe sets.
    """
    R = states.shape[-2]
    if len(unsafe_sets) != R:
        raise ValueError("one unsafe set per monitored subsystem")
    out: list[float | None] = []
    for r in range(R):
        inside = unsafe_sets[r].contains(states[..., r, :])
        inside = inside.reshape(len(times), -1).any(axis=1)
        hits = np.nonzero(inside)[0]
        out.append(float(times[hits[0]]) if len(hits) else None)
    return out


def recheck_witnesses(cert: CsbcCertificate) -> dict:
    """Recompute every Gram residual and lambda_min independently of the
    solver; thresholds 1e-6 (coefficient match) and -1e-8 (eigenvalue)."""
    n = cert.n
    upsilon = factorize(cert.dictionary)
    out = {"eq16_residual": eq16_residual(cert.N0, cert.H, upsilon, cert.C)}

    # dissipation witness: rebuild the matrix, subtract multipliers, compare
    M = dissipation_matrix_polys(
        cert.C, cert.H, cert.E, cert.Xi2, cert.pi, cert.mu, cert.eps
    )
    g_polys = box_to_polys(cert.state_set)[0]
    lam = Polynomial.zero(n)
    for mult, g in zip(cert.dissipation_multipliers, g_polys):
        lam = lam + mult * g
    wit = cert.dissipation_witness
    K = len(wit.basis)
    dim = len(M)
    resid = 0.0
    for a in range(dim):
        for b in range(a, dim):
            target = M[a][b] - lam if a == b else M[a][b]
            qblock = wit.Q[a * K : (a + 1) * K, b * K : (b + 1) * K]
            rebuilt: dict = {}
            for i in range(K):
                for j in range(K):
                    mny = wit.basis[i].mul(wit.basis[j])
                    rebuilt[mny] = rebuilt.get(mny, 0.0) + qblock[i, j]
            keys = set(rebuilt) | set(target.terms)
            for mny in keys:
                resid = max(resid, abs(rebuilt.get(mny, 0.0) - target.coeff(mny)))
    lmin = float(np.linalg.eigvalsh(wit.Q)[0])
    out["dissipation"] = {"residual": resid, "lambda_min": lmin}

    # level witnesses: gamma - x'Px (initial boxes), x'Px - beta (unsafe)
    quad = _quad_poly(cert.P)
    init_polys = box_to_polys(cert.initial_set)
    unsafe_polys = box_to_polys(cert.unsafe_set)
    levels = {}
    for key, wit_l in cert.level_witnesses.items():
        bound = cert.level_bounds[key]
        if key.startswith("init"):
            g = init_polys[int(key[4:])]
            expr = Polynomial.constant(n, bound) - quad
        else:
            g = unsafe_polys[int(key[6:])]
            expr = quad - bound
        lam = Polynomial.zero(n)
        for mult, gp in zip(cert.level_multipliers[key], g):
            lam = lam + mult * gp
        target = expr - lam
        Kl = len(wit_l.basis)
        rebuilt: dict = {}
        for i in range(Kl):
            for j in range(Kl):
                mny = wit_l.basis[i].mul(wit_l.basis[j])
                rebuilt[mny] = rebuilt.get(mny, 0.0) + wit_l.Q[i, j]
        r = 0.0
        for mny in set(rebuilt) | set(target.terms):
            r = max(r, abs(rebuilt.get(mny, 0.0) - target.coeff(mny)))
        levels[key] = {
            "residual": r,
            "lambda_min": float(np.linalg.eigvalsh(wit_l.Q)[0]),
        }
    out["levels"] = levels

    worst_res = max(
        [out["dissipation"]["residual"]]
        + [v["residual"] for v in levels.values()]
    )
    worst_eig = min(
        [out["dissipation"]["lambda_min"]]
        + [v["lambda_min"] for v in levels.values()]
    )
    scale = max(1.0, np.abs(wit.Q).max())
    out["pass"] = bool(
        out["eq16_residual"] <= 1e-8
        and worst_res <= 1e-6 * scale
        and worst_eig >= -1e-8 * scale
    )
    out["worst_residual"] = worst_res
    out["worst_lambda_min"] = worst_eig
    return out


def _quad_poly(P: np.ndarray) -> Polynomial:
    from .synth import _quadratic_from_matrix

    return _quadratic_from_matrix(P)
