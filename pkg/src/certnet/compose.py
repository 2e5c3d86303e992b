"""Small-gain composition of per-subsystem certificates into a network CBC.

With per-subsystem decay rates eps_i and interaction gains rho_i, the gain
matrix has delta_ij = rho_i / phi_j on edges j -> i (zero elsewhere; the
chain of inequalities only sums over actual internal inputs).  The network
certificate B(x) = sum_i x_i' P_i x_i exists when every component of
w' = 1'(-eps_hat + Delta) is negative and sum beta_i > sum gamma_i; the
network decay rate is -w* for any max_j w_j < w* < 0, fixed here as
w* = 0.99 max_j w_j.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .plants import NetworkSpec, neighbors
from .synth import CsbcCertificate

VARPI_MARGIN = 0.99


@dataclass
class ComposeReport:
    Q: int
    varpi: np.ndarray         # (Q,)
    gamma: float
    beta: float
    eps: float
    passed: bool
    failure_reason: str | None = None

    def summary(self) -> dict:
        doc = {
            "Q": self.Q,
            "gamma": self.gamma,
            "beta": self.beta,
            "eps": self.eps,
            "pass": self.passed,
            "failure_reason": self.failure_reason,
            "varpi_max": float(self.varpi.max()),
            "varpi_min": float(self.varpi.min()),
        }
        if self.Q <= 64:
            doc["varpi"] = self.varpi.tolist()
        return doc

    def to_json(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=1)


def expand_certificates(
    spec: NetworkSpec, by_template: dict[int, CsbcCertificate]
) -> list[CsbcCertificate]:
    """Per-subsystem certificate list from per-template results (shared refs)."""
    return [by_template[t] for t in spec.assignment]


def build_gain_matrix(
    certs: list[CsbcCertificate], spec: NetworkSpec
) -> tuple[np.ndarray, sp.csr_matrix]:
    """(eps_hat diagonal as a vector, Delta sparse) with delta_ij = rho_i/phi_j
    only where the edge j -> i exists."""
    Q = spec.Q
    if len(certs) != Q:
        raise ValueError("need one certificate per subsystem")
    phi = np.array([c.phi for c in certs])
    if np.any(phi <= 0):
        raise ValueError("phi must be positive")
    rho = np.array([c.rho for c in certs])
    eps_hat = np.array([c.eps for c in certs])
    rows, cols, vals = [], [], []
    for i in range(1, Q + 1):
        for j in neighbors(spec, i):
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(rho[i - 1] / phi[j - 1])
    delta = sp.csr_matrix((vals, (rows, cols)), shape=(Q, Q))
    return eps_hat, delta


def check_compose(
    eps_hat: np.ndarray, delta: sp.spmatrix, certs: list[CsbcCertificate]
) -> ComposeReport:
    """Evaluate the compositionality conditions; failures are reports."""
    Q = len(eps_hat)
    col_sums = np.asarray(delta.sum(axis=0)).ravel()
    varpi = -eps_hat + col_sums
    gammas = sum(c.gamma for c in certs)
    betas = sum(c.beta for c in certs)
    small_gain = bool(varpi.max() < 0)
    levels = bool(betas > gammas)
    passed = small_gain and levels
    if passed:
        eps = VARPI_MARGIN * abs(float(varpi.max()))
    else:
        eps = 0.0
    reason = None
    if not levels:
        reason = "level_sets"
    elif not small_gain:
        reason = "small_gain"
    return ComposeReport(
        Q=Q, varpi=varpi, gamma=float(gammas), beta=float(betas),
        eps=eps, passed=passed, failure_reason=reason,
    )


class NetworkCbc:
    """Block-diagonal network certificate and its stacked controller.

    Evaluation cost is linear in Q: subsystems sharing a certificate are
    batched together.
    """

    def __init__(
        self,
        certs: list[CsbcCertificate],
        report: ComposeReport,
        spec: NetworkSpec | None = None,
    ):
        if not report.passed:
            raise ValueError("composition did not pass; no network CBC")
        self.certs = certs
        self.report = report
        self.spec = spec
        groups: dict[int, list[int]] = {}
        reps: dict[int, CsbcCertificate] = {}
        for idx, c in enumerate(certs):
            groups.setdefault(id(c), []).append(idx)
            reps[id(c)] = c
        self._groups = [(reps[k], np.array(v)) for k, v in groups.items()]

    @property
    def eps(self) -> float:
        return self.report.eps

    def value(self, states: np.ndarray) -> np.ndarray:
        """B(x) = sum_i x_i' P_i x_i for states (..., Q, n)."""
        out = 0.0
        for cert, idx in self._groups:
            xs = states[..., idx, :]
            out = out + np.einsum("...qi,ij,...qj->...", xs, cert.P, xs)
        return out

    def control(self, states: np.ndarray) -> np.ndarray:
        """Stacked decentralized controller, shape (..., Q, m)."""
        m = len(self._groups[0][0].controller)
        out = np.zeros(states.shape[:-1] + (m,))
        for cert, idx in self._groups:
            out[..., idx, :] = cert.control(states[..., idx, :])
        return out

    def subsystem_values(self, states: np.ndarray) -> np.ndarray:
        """Per-subsystem B_i(x_i), shape (..., Q)."""
        out = np.zeros(states.shape[:-1])
        for cert, idx in self._groups:
            xs = states[..., idx, :]
            out[..., idx] = np.einsum("...qi,ij,...qj->...q", xs, cert.P, xs)
        return out


def network_cbc(
    certs: list[CsbcCertificate],
    report: ComposeReport,
    spec: NetworkSpec | None = None,
) -> NetworkCbc:
    return NetworkCbc(certs, report, spec)
