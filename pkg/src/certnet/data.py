"""Single-trajectory data collection and the sampled data matrices.

One noisy input-state trajectory is recorded per subsystem: input samples
U0, internal-input samples W0, state samples X0 and derivative measurements
X1 = X1_true + Gamma, where the per-sample noise satisfies ||k(t)||^2 <=
noise_bound so that Gamma Gamma' <= Xi Xi' with Xi Xi' = noise_bound * T * I.
The monomial-data matrix N0 (dictionary evaluated columnwise on X0) must
have full row rank, which needs at least T >= N + 1 samples.

The hidden truth Gamma is stored for test oracles only; synthesis never
reads it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary
from .plants import NetworkSpec, SubsystemModel, full_D, neighbors, subsystem_deriv
from .poly import PolyMatrix


@dataclass
class DataConfig:
    samples: int                 # T
    sample_interval: float       # seconds between samples
    noise_bound: float = 0.0     # per-sample squared-norm bound on the noise
    excitation_amp: float = 1.0  # dither drawn iid uniform on [-amp, amp]^m
    seed: int = 0
    substeps: int = 20           # RK4 steps per sampling interval
    max_retries: int = 10
    init_frac: float = 0.5       # collection starts anywhere in init_frac * X
    probe: np.ndarray | None = None  # (m, n) safety feedback nu += -probe @ x

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("need at least one sample")
        if self.sample_interval <= 0:
            raise ValueError("sample interval must be positive")
        if self.noise_bound < 0:
            raise ValueError("noise bound must be nonnegative")
        if not 0 < self.init_frac <= 1:
            raise ValueError("init_frac must lie in (0, 1]")
        if self.probe is not None:
            self.probe = np.asarray(self.probe, dtype=float)

    def input_at(self, dither: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Recorded input: held dither plus the safety probe feedback."""
        if self.probe is None:
            return dither
        return dither - x @ self.probe.T


@dataclass
class TrajectoryData:
    U0: np.ndarray        # (m, T)
    W0: np.ndarray        # (sigma, T)
    X0: np.ndarray        # (n, T)
    X1: np.ndarray        # (n, T) noisy derivative measurements
    Gamma: np.ndarray     # (n, T) hidden truth, test oracles only
    Xi: np.ndarray        # (n, T) noise-bound matrix, Xi Xi' = kappa T I
    N0: np.ndarray        # (N, T) dictionary evaluated on X0
    rank_ok: bool
    singular_values: np.ndarray
    dictionary: Dictionary
    noise_bound: float
    sample_interval: float

    @property
    def T(self) -> int:
        return self.X0.shape[1]

    def noise_energy_ok(self) -> bool:
        """Gamma Gamma' <= Xi Xi' via eigenvalue check."""
        lhs = self.Gamma @ self.Gamma.T
        rhs = self.Xi @ self.Xi.T
        return bool(np.linalg.eigvalsh(rhs - lhs)[0] >= -1e-9)

    def to_json(self) -> dict:
        def mat(a):
            return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}

        return {
            "U0": mat(self.U0), "W0": mat(self.W0), "X0": mat(self.X0),
            "X1": mat(self.X1), "Gamma": mat(self.Gamma), "Xi": mat(self.Xi),
            "N0": mat(self.N0),
            "rank_ok": self.rank_ok,
            "singular_values": self.singular_values.tolist(),
            "dictionary": self.dictionary.to_json(),
            "noise_bound": self.noise_bound,
            "sample_interval": self.sample_interval,
        }

    @staticmethod
    def from_json(d: dict) -> "TrajectoryData":
        def mat(entry):
            return np.array(entry["data"], dtype=float).reshape(entry["shape"])

        return TrajectoryData(
            U0=mat(d["U0"]), W0=mat(d["W0"]), X0=mat(d["X0"]), X1=mat(d["X1"]),
            Gamma=mat(d["Gamma"]), Xi=mat(d["Xi"]), N0=mat(d["N0"]),
            rank_ok=d["rank_ok"],
            singular_values=np.array(d["singular_values"]),
            dictionary=Dictionary.from_json(d["dictionary"]),
            noise_bound=d["noise_bound"],
            sample_interval=d["sample_interval"],
        )

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path: str) -> "TrajectoryData":
        with open(path) as fh:
            return TrajectoryData.from_json(json.load(fh))


def min_samples(model: SubsystemModel) -> int:
    return model.dictionary.size + 1


def build_N0(X0: np.ndarray, dictionary: Dictionary):
    """Monomial-data matrix: entry (k, t) = m_k evaluated at sample t.

    Returns (N0, rank_ok, singular_values); rank failure is a report, not
    an exception.
    """
    N0 = dictionary.eval(X0.T).T  # (N, T)
    sv = np.linalg.svd(N0, compute_uv=False)
    tol = sv[0] * X0.shape[1] * 1e-12 if len(sv) else 0.0
    rank = int(np.sum(sv > tol))
    return N0, rank == dictionary.size, sv


def _ball_noise(rng: np.random.Generator, n: int, T: int, bound: float) -> np.ndarray:
    """Columns iid uniform on the ball ||k||^2 <= bound."""
    if bound == 0.0:
        return np.zeros((n, T))
    direc = rng.standard_normal((n, T))
    direc /= np.linalg.norm(direc, axis=0, keepdims=True)
    radii = np.sqrt(bound) * rng.uniform(0, 1, T) ** (1.0 / n)
    return direc * radii


def _xi_matrix(n: int, T: int, bound: float) -> np.ndarray:
    """Xi with Xi Xi' = bound * T * I (square root embedded in n x T)."""
    xi = np.zeros((n, T))
    xi[:, :n] = np.sqrt(bound * T) * np.eye(n)
    return xi


def collect(
    model: SubsystemModel, cfg: DataConfig, neighbor_states=None
) -> TrajectoryData:
    """Collect one noisy input-state trajectory from a subsystem.

    neighbor_states: None (no internal input), or a callable t -> w(t) with
    w stacked over in-neighbors.  The excitation is iid uniform input held
    constant over each sampling interval; collection is retried with fresh
    seeds if the trajectory leaves the state set or N0 loses row rank.
    """
    T = cfg.samples
    n, m = model.n, model.m
    need = min_samples(model)
    if T < need:
        raise ValueError(
            f"T={T} too small: full row rank of the {model.dictionary.size}-row "
            f"monomial-data matrix needs at least T >= {need}"
        )
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.max_retries)
    last_reason = ""
    lo, hi = model.state_set.boxes[0]
    for attempt in range(cfg.max_retries):
        rng = np.random.default_rng(seeds[attempt])
        x = rng.uniform(cfg.init_frac * lo, cfg.init_frac * hi)
        dither = rng.uniform(-cfg.excitation_amp, cfg.excitation_amp, size=(m, T))
        U0 = np.zeros((m, T))
        X0 = np.zeros((n, T))
        W0_cols = []
        tau = cfg.sample_interval
        h = tau / cfg.substeps
        t = 0.0
        ok = True
        for k in range(T):
            w = (
                np.zeros(0)
                if neighbor_states is None
                else np.asarray(neighbor_states(t), dtype=float)
            )
            X0[:, k] = x
            U0[:, k] = cfg.input_at(dither[:, k], x)
            W0_cols.append(w)
            if not model.state_set.contains(x):
                ok = False
                last_reason = "trajectory left the state set"
                break
            if k == T - 1:
                break
            for s in range(cfg.substeps):
                ts = t + s * h

                def f(xs, wq=None):
                    ws = (
                        np.zeros(0)
                        if neighbor_states is None
                        else np.asarray(neighbor_states(wq), dtype=float)
                    )
                    return subsystem_deriv(
                        model, xs, cfg.input_at(dither[:, k], xs), ws
                    )

                k1 = f(x, ts)
                k2 = f(x + 0.5 * h * k1, ts + 0.5 * h)
                k3 = f(x + 0.5 * h * k2, ts + 0.5 * h)
                k4 = f(x + h * k3, ts + h)
                x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += tau
        if not ok:
            continue
        W0 = (
            np.zeros((0, T))
            if neighbor_states is None
            else np.column_stack(W0_cols)
        )
        td = _assemble(model, cfg, rng, U0, W0, X0)
        if not td.rank_ok:
            last_reason = "monomial-data matrix rank deficient"
            continue
        return td
    raise RuntimeError(
        f"data collection failed after {cfg.max_retries} retries: {last_reason}"
    )


def _assemble(model, cfg, rng, U0, W0, X0) -> TrajectoryData:
    T = X0.shape[1]
    n = model.n
    Xdot = subsystem_deriv(model, X0.T, U0.T, W0.T if W0.shape[0] else None).T
    Gamma = _ball_noise(rng, n, T, cfg.noise_bound)
    N0, rank_ok, sv = build_N0(X0, model.dictionary)
    return TrajectoryData(
        U0=U0, W0=W0, X0=X0, X1=Xdot + Gamma, Gamma=Gamma,
        Xi=_xi_matrix(n, T, cfg.noise_bound),
        N0=N0, rank_ok=rank_ok, singular_values=sv,
        dictionary=model.dictionary,
        noise_bound=cfg.noise_bound,
        sample_interval=cfg.sample_interval,
    )


def collect_network(
    spec: NetworkSpec, cfg: DataConfig, reps: list[int] | None = None
) -> dict[int, TrajectoryData]:
    """Collect data for representative subsystems of a network.

    The whole network runs open loop under independent excitation; the
    internal-input samples W0 are the measured neighbor states.  reps are
    1-based subsystem indices (default: one per template).  Retries draw a
    fresh network excitation.
    """
    if reps is None:
        reps = [spec.representative(t) for t in sorted(spec.template_groups())]
    T = cfg.samples
    for i in reps:
        need = min_samples(spec.model_of(i))
        if T < need:
            raise ValueError(
                f"T={T} too small for subsystem {i}: needs T >= {need}"
            )
    from .plants import NetworkEvaluator

    ev = NetworkEvaluator(spec)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.max_retries)
    last_reason = ""
    for attempt in range(cfg.max_retries):
        rng = np.random.default_rng(seeds[attempt])
        lohi = [spec.model_of(i + 1).state_set.boxes[0] for i in range(spec.Q)]
        X = np.stack(
            [
                rng.uniform(cfg.init_frac * lo, cfg.init_frac * hi)
                for lo, hi in lohi
            ]
        )
        dither = rng.uniform(
            -cfg.excitation_amp, cfg.excitation_amp, size=(T, spec.Q, spec.m)
        )
        samples = np.zeros((T, spec.Q, spec.n))
        inputs = np.zeros((T, spec.Q, spec.m))
        h = cfg.sample_interval / cfg.substeps
        ok = True
        for k in range(T):
            samples[k] = X
            inputs[k] = cfg.input_at(dither[k], X)
            if not all(
                spec.model_of(i).state_set.contains(samples[k, i - 1]) for i in reps
            ):
                ok = False
                last_reason = "a representative left its state set"
                break
            if k == T - 1:
                break
            for _ in range(cfg.substeps):
                k1 = ev.deriv(X, cfg.input_at(dither[k], X))
                x2 = X + 0.5 * h * k1
                k2 = ev.deriv(x2, cfg.input_at(dither[k], x2))
                x3 = X + 0.5 * h * k2
                k3 = ev.deriv(x3, cfg.input_at(dither[k], x3))
                x4 = X + h * k3
                k4 = ev.deriv(x4, cfg.input_at(dither[k], x4))
                X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(X)):
                ok = False
                last_reason = "network state diverged during collection"
                break
        if not ok:
            continue
        out = {}
        for i in reps:
            model = spec.model_of(i)
            nbrs = neighbors(spec, i)
            U0 = inputs[:, i - 1, :].T
            X0 = samples[:, i - 1, :].T
            W0 = (
                np.concatenate([samples[:, j - 1, :] for j in nbrs], axis=1).T
                if nbrs
                else np.zeros((0, T))
            )
            td = _assemble(model, cfg, rng, U0, W0, X0)
            if not td.rank_ok:
                ok = False
                last_reason = f"rank deficiency at subsystem {i}"
                break
            out[i] = td
        if ok:
            return out
    raise RuntimeError(
        f"network data collection failed after {cfg.max_retries} retries: "
        f"{last_reason}"
    )


def lemma1_S(td: TrajectoryData, upsilon) -> PolyMatrix:
    """A polynomial matrix S(x) with N0 S(x) = Upsilon(x): the pseudoinverse
    solution N0^+ Upsilon(x)."""
    pinv = np.linalg.pinv(td.N0)
    return upsilon.upsilon.left_const_mul(pinv)


def verify_lemma1(
    model: SubsystemModel,
    td: TrajectoryData,
    S: PolyMatrix,
    num_points: int = 25,
    seed: int = 0,
    use_hidden_noise: bool = True,
) -> float:
    """Max residual of the data-driven representation (test oracle only).

    Evaluates A Upsilon(x) + B F(x) - (X1 - D W0 - Gamma) S(x) at random
    states, with F(x) = U0 S(x); uses the hidden truth A, B, Gamma.
    """
    ups = model.upsilon.upsilon
    prod = td.N0 @ np.zeros((td.T, 1))  # shape probe
    check = S.left_const_mul(td.N0)
    diff = check - ups
    if diff.max_abs_coeff() > 1e-8 * max(1.0, ups.max_abs_coeff()):
        raise ValueError("S does not satisfy N0 S(x) = Upsilon(x)")
    D = (
        np.zeros((model.n, td.W0.shape[0]))
        if model.D_block is None
        else np.tile(model.D_block, (1, td.W0.shape[0] // model.n))
    )
    E = td.X1 - D @ td.W0
    if use_hidden_noise:
        E = E - td.Gamma

    rng = np.random.default_rng(seed)
    pts = model.state_set.sample(rng, num_points)
    worst = 0.0
    for x in pts:
        Sx = S.eval(x)
        lhs = model.A @ ups.eval(x) + model.B @ (td.U0 @ Sx)
        rhs = E @ Sx
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst
