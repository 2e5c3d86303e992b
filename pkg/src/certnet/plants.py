"""Ground-truth subsystem dynamics, interconnection topologies and RK4.

Subsystem form:  xdot_i = A_i M_i(x_i) + B_i nu_i + D_i w_i,  with M_i the
monomial dictionary vector and w_i the stacked states of the in-neighbors.
The network evaluator realizes xdot = A(x) x + B nu with block-diagonal
A_i Upsilon_i(x_i) and off-diagonal coupling blocks.

Everything here is only for simulation and oracle verification; the
synthesizer never sees A_i or B_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dictionary import Dictionary, Transformation, build_dictionary, factorize
from .poly import Monomial
from .sos import SetSpec


@dataclass
class SubsystemModel:
    """Hidden truth for one subsystem template."""

    name: str
    A: np.ndarray                 # (n, N) coefficients over the dictionary
    B: np.ndarray                 # (n, m)
    dictionary: Dictionary
    state_set: SetSpec
    initial_set: SetSpec
    unsafe_set: SetSpec
    D_block: np.ndarray | None    # (n, n) block applied to every in-neighbor
    upsilon: Transformation = field(init=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        n, N = self.A.shape
        if N != self.dictionary.size or self.dictionary.num_vars != n:
            raise ValueError("A shape inconsistent with the dictionary")
        if self.B.shape[0] != n:
            raise ValueError("B row count mismatch")
        if self.D_block is not None:
            self.D_block = np.asarray(self.D_block, dtype=float)
            if self.D_block.shape != (n, n):
                raise ValueError("D block must be (n, n)")
        if self.initial_set.intersects(self.unsafe_set):
            raise ValueError("initial and unsafe sets must be disjoint")
        self.upsilon = factorize(self.dictionary)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def true_monomials(self) -> list[Monomial]:
        """Dictionary entries with a nonzero column in A."""
        used = np.any(self.A != 0.0, axis=0)
        return [m for m, u in zip(self.dictionary.monomials, used) if u]


def subsystem_deriv(model: SubsystemModel, x, nu=None, w=None) -> np.ndarray:
    """A M(x) + B nu + D w for points x of shape (..., n)."""
    x = np.asarray(x, dtype=float)
    out = model.dictionary.eval(x) @ model.A.T
    if nu is not None:
        out = out + np.asarray(nu, dtype=float) @ model.B.T
    if w is not None and model.D_block is not None:
        w = np.asarray(w, dtype=float)
        n = model.n
        k = w.shape[-1] // n
        D = np.tile(model.D_block, (1, k))
        out = out + w @ D.T
    return out


@dataclass
class NetworkSpec:
    """Interconnection of Q subsystems drawn from a small template list."""

    name: str
    Q: int
    topology: str  # fully | ring | line | star | binary | custom
    templates: list[SubsystemModel]
    assignment: np.ndarray  # (Q,) template index per subsystem, 0-based
    custom_edges: list[tuple[int, int]] | None = None  # (src, dst), 1-based

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=int)
        if self.assignment.shape != (self.Q,):
            raise ValueError("assignment length mismatch")
        if self.topology not in ("fully", "ring", "line", "star", "binary", "custom"):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.topology == "custom" and self.custom_edges is None:
            raise ValueError("custom topology needs edges")
        dims = {t.n for t in self.templates}
        if len(dims) != 1:
            raise ValueError("subsystem state dimensions must agree")

    @property
    def n(self) -> int:
        return self.templates[0].n

    @property
    def m(self) -> int:
        return self.templates[0].m

    def model_of(self, i: int) -> SubsystemModel:
        """Template of subsystem i (1-based)."""
        return self.templates[self.assignment[i - 1]]

    def template_groups(self) -> dict[int, np.ndarray]:
        """template index -> 0-based subsystem indices using it."""
        return {
            t: np.where(self.assignment == t)[0]
            for t in np.unique(self.assignment)
        }

    def representative(self, t: int) -> int:
        """1-based index of the first subsystem using template t."""
        return int(np.where(self.assignment == t)[0][0]) + 1


def neighbors(spec: NetworkSpec, i: int) -> list[int]:
    """Sources j feeding w_i, ascending, 1-based (matches the D_i blocks)."""
    if not 1 <= i <= spec.Q:
        raise IndexError(f"subsystem index {i} out of range 1..{spec.Q}")
    Q = spec.Q
    if spec.topology == "fully":
        return [j for j in range(1, Q + 1) if j != i]
    if spec.topology == "ring":
        return [Q if i == 1 else i - 1]
    if spec.topology == "line":
        return [] if i == 1 else [i - 1]
    if spec.topology == "star":
        return [] if i == 1 else [1]
    if spec.topology == "binary":
        return [] if i == 1 else [i // 2]
    return sorted(s for s, d in spec.custom_edges if d == i)


def full_D(spec: NetworkSpec, i: int) -> np.ndarray:
    """Horizontal stack of D blocks over the in-neighbors of i (n, sigma_i)."""
    model = spec.model_of(i)
    nbrs = neighbors(spec, i)
    if not nbrs or model.D_block is None:
        return np.zeros((spec.n, 0))
    return np.tile(model.D_block, (1, len(nbrs)))


def stack_internal_input(spec: NetworkSpec, i: int, states: np.ndarray) -> np.ndarray:
    """w_i = [x_j ; ...] for the network state array (..., Q, n)."""
    nbrs = neighbors(spec, i)
    if not nbrs:
        return states[..., :0]
    parts = [states[..., j - 1, :] for j in nbrs]
    return np.concatenate(parts, axis=-1)


class NetworkEvaluator:
    """Vectorized xdot = A(x) x + B nu over template groups."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.groups = spec.template_groups()

    def coupling(self, states: np.ndarray) -> np.ndarray:
        """sum_j D_ij x_j per subsystem, shape (..., Q, n)."""
        spec = self.spec
        out = np.zeros_like(states)
        if spec.topology == "fully":
            total = states.sum(axis=-2, keepdims=True)
            src = total - states
        elif spec.topology == "ring":
            src = np.roll(states, 1, axis=-2)
        elif spec.topology == "line":
            src = np.roll(states, 1, axis=-2)
            src[..., 0, :] = 0.0
        elif spec.topology == "star":
            src = np.broadcast_to(
                states[..., 0:1, :], states.shape
            ).copy()
            src[..., 0, :] = 0.0
        elif spec.topology == "binary":
            parents = np.array([0] + [i // 2 for i in range(2, spec.Q + 1)]) - 1
            src = states[..., np.maximum(parents, 0), :]
            src[..., 0, :] = 0.0
        else:
            src = np.zeros_like(states)
            for s, d in spec.custom_edges:
                src[..., d - 1, :] += states[..., s - 1, :]
            # note: src accumulates sums; per-edge D identical within receiver
        for t, idx in self.groups.items():
            Db = spec.templates[t].D_block
            if Db is not None:
                out[..., idx, :] = src[..., idx, :] @ Db.T
        return out

    def deriv(self, states: np.ndarray, inputs: np.ndarray | None = None) -> np.ndarray:
        """states (..., Q, n), inputs (..., Q, m) -> (..., Q, n)."""
        spec = self.spec
        out = self.coupling(states)
        for t, idx in self.groups.items():
            tpl = spec.templates[t]
            feats = tpl.dictionary.eval(states[..., idx, :])
            out[..., idx, :] += feats @ tpl.A.T
            if inputs is not None:
                out[..., idx, :] += inputs[..., idx, :] @ tpl.B.T
        return out

    def block(self, i: int, j: int, x_i: np.ndarray) -> np.ndarray:
        """Block (i, j) of A(x) (1-based): A_i Upsilon_i(x_i) or D_ij."""
        spec = self.spec
        if i == j:
            tpl = spec.model_of(i)
            return tpl.A @ tpl.upsilon.eval(x_i)
        if j in neighbors(spec, i):
            return spec.model_of(i).D_block
        return np.zeros((spec.n, spec.n))


def assemble_network(spec: NetworkSpec) -> NetworkEvaluator:
    return NetworkEvaluator(spec)


def network_A_matrix(spec: NetworkSpec, states: np.ndarray) -> np.ndarray:
    """Dense A(x) at a given network state; for small networks only."""
    n, Q = spec.n, spec.Q
    if Q * n > 400:
        raise ValueError("dense A(x) is only materialized for small networks")
    ev = NetworkEvaluator(spec)
    A = np.zeros((Q * n, Q * n))
    for i in range(1, Q + 1):
        for j in range(1, Q + 1):
            A[(i - 1) * n : i * n, (j - 1) * n : j * n] = ev.block(
                i, j, states[i - 1]
            )
    return A


# ---------------------------------------------------------------------------
# integration


@dataclass
class Trajectory:
    times: np.ndarray   # (S+1,)
    states: np.ndarray  # (S+1, dim)
    inputs: np.ndarray  # (S+1, m_total)
    blew_up: bool = False

    def to_csv(self, path: str, labels: list[str] | None = None):
        dim = self.states.shape[1]
        labels = labels or [f"x{k + 1}" for k in range(dim)]
        header = "t," + ",".join(labels)
        data = np.column_stack([self.times, self.states])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def integrate(deriv, x0, controller, t_end: float, dt: float) -> Trajectory:
    """Classical fixed-step RK4 for xdot = deriv(x, nu).

    controller may be None (zero input), a callable x -> nu evaluated at
    every stage, or an (S+1, m) array applied zero-order-hold per step.
    On a non-finite state the trajectory is truncated and flagged.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    steps = int(round(t_end / dt))
    times = np.arange(steps + 1) * dt

    def input_at(k, xk):
        if controller is None:
            return None
        if callable(controller):
            return controller(xk)
        return np.asarray(controller)[min(k, len(controller) - 1)]

    def f(xk, k, hold):
        nu = hold if hold is not None else (
            controller(xk) if callable(controller) else None
        )
        return deriv(xk, nu)

    m_probe = input_at(0, x)
    m_total = 0 if m_probe is None else np.asarray(m_probe).shape[-1]
    states = np.zeros((steps + 1, x.size))
    inputs = np.zeros((steps + 1, m_total))
    states[0] = x
    if m_probe is not None:
        inputs[0] = m_probe
    blew_up = False
    for k in range(steps):
        hold = None
        if controller is not None and not callable(controller):
            hold = np.asarray(controller)[min(k, len(controller) - 1)]
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = f(x, k, hold)
            k2 = f(x + 0.5 * dt * k1, k, hold)
            k3 = f(x + 0.5 * dt * k2, k, hold)
            k4 = f(x + dt * k3, k, hold)
            x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            blew_up = True
            states = states[: k + 1]
            inputs = inputs[: k + 1]
            times = times[: k + 1]
            break
        states[k + 1] = x
        nu_rec = input_at(k + 1, x)
        if nu_rec is not None:
            inputs[k + 1] = nu_rec
    return Trajectory(times, states, inputs, blew_up)


@dataclass
class SimResult:
    times: np.ndarray
    recorded: np.ndarray | None  # (S+1, ..., n_rec, n)
    observed: list
    blew_up: bool


def simulate_network(
    spec: NetworkSpec,
    x0: np.ndarray,
    controller=None,
    t_end: float = 5.0,
    dt: float = 1e-3,
    record_idx: np.ndarray | None = None,
    observer=None,
) -> SimResult:
    """RK4 closed-loop simulation of the full network.

    x0: (Q, n) or batched (..., Q, n).  controller: None or callable
    states -> inputs of shape (..., Q, m).  record_idx: 0-based subsystem
    indices whose trajectories are stored.  observer(step, t, states) is
    called once per step; its returns are collected.
    """
    ev = NetworkEvaluator(spec)
    x = np.asarray(x0, dtype=float).copy()
    steps = int(round(t_end / dt))
    times = np.arange(steps + 1) * dt

    def f(xk):
        nu = controller(xk) if controller is not None else None
        return ev.deriv(xk, nu)

    recorded = None
    if record_idx is not None:
        record_idx = np.asarray(record_idx, dtype=int)
        recorded = np.zeros((steps + 1,) + x.shape[:-2] + (len(record_idx), x.shape[-1]))
        recorded[0] = x[..., record_idx, :]
    observed = []
    if observer is not None:
        observed.append(observer(0, 0.0, x))
    blew_up = False
    for k in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            blew_up = True
            times = times[: k + 2]
            if recorded is not None:
                recorded = recorded[: k + 2]
            break
        if recorded is not None:
            recorded[k + 1] = x[..., record_idx, :]
        if observer is not None:
            observed.append(observer(k + 1, times[k + 1], x))
    return SimResult(times, recorded, observed, blew_up)


# ---------------------------------------------------------------------------
# benchmark library


@dataclass
class Benchmark:
    network: NetworkSpec
    samples: int          # T
    sample_interval: float
    noise_bound: float    # kappa-bar
    excitation_amp: float
    probe: np.ndarray | None = None  # weak safety feedback during collection
    init_frac: float = 0.5
    synth: dict = field(default_factory=dict)  # per-benchmark SynthConfig overrides
    notes: str = ""


def _lorenz_A(dictionary: Dictionary) -> np.ndarray:
    A = np.zeros((3, 9))
    idx = {m.exps: k for k, m in enumerate(dictionary.monomials)}
    A[:, idx[(1, 0, 0)]] = [-10.0, 28.0, 0.0]
    A[:, idx[(0, 1, 0)]] = [10.0, -1.0, 0.0]
    A[:, idx[(0, 0, 1)]] = [0.0, 0.0, -8.0 / 3.0]
    A[:, idx[(1, 0, 1)]] = [0.0, -1.0, 0.0]
    A[:, idx[(1, 1, 0)]] = [0.0, 0.0, 1.0]
    return A


def _homogeneous(name, Q, topology, template, headless_first=False):
    """Network of identical subsystems; with headless_first the first
    subsystem gets the same dynamics but no incoming coupling."""
    templates = [template]
    assignment = np.zeros(Q, dtype=int)
    if headless_first:
        head = replace_d_block(template, None, template.name + "_head")
        templates = [head, template]
        assignment = np.ones(Q, dtype=int)
        assignment[0] = 0
    return NetworkSpec(name, Q, topology, templates, assignment)


def replace_d_block(tpl: SubsystemModel, D_block, name=None) -> SubsystemModel:
    return SubsystemModel(
        name or tpl.name,
        tpl.A.copy(),
        tpl.B.copy(),
        tpl.dictionary,
        tpl.state_set,
        tpl.initial_set,
        tpl.unsafe_set,
        D_block,
    )


def builtin_benchmarks() -> dict[str, Benchmark]:
    """The seven benchmark networks with their published configurations."""
    out: dict[str, Benchmark] = {}
    d32 = build_dictionary(3, 2)

    lorenz_sets_fully = dict(
        state_set=SetSpec.box("state", [-20] * 3, [20] * 3),
        initial_set=SetSpec.box("initial", [-3] * 3, [3] * 3),
        unsafe_set=SetSpec(
            "unsafe",
            [
                (np.array([-20.0, -20.0, 4.0]), np.array([-4.0, -15.0, 20.0])),
                (np.array([8.0, 11.0, 4.0]), np.array([20.0, 20.0, 20.0])),
                (np.array([8.0, 11.0, -20.0]), np.array([20.0, 20.0, -5.0])),
            ],
        ),
    )
    tpl = SubsystemModel(
        "lorenz", _lorenz_A(d32), np.eye(3), d32,
        D_block=-2e-5 * np.eye(3), **lorenz_sets_fully,
    )
    out["lorenz_fully"] = Benchmark(
        _homogeneous("lorenz_fully", 1000, "fully", tpl),
        samples=15, sample_interval=0.01, noise_bound=0.03, excitation_amp=2.0,
        init_frac=0.5,
    )

    lorenz_sets_ring = dict(
        state_set=SetSpec.box("state", [-20] * 3, [20] * 3),
        initial_set=SetSpec.box("initial", [-3] * 3, [3] * 3),
        unsafe_set=SetSpec(
            "unsafe",
            [
                (np.array([-20.0, -20.0, 5.0]), np.array([-10.0, -5.0, 20.0])),
                (np.array([3.5, 15.0, 5.0]), np.array([20.0, 20.0, 20.0])),
                (np.array([3.5, 15.0, -20.0]), np.array([20.0, 20.0, -5.0])),
            ],
        ),
    )
    tpl = SubsystemModel(
        "lorenz", _lorenz_A(d32), np.eye(3), d32,
        D_block=-0.01 * np.eye(3), **lorenz_sets_ring,
    )
    out["lorenz_ring"] = Benchmark(
        _homogeneous("lorenz_ring", 2000, "ring", tpl),
        samples=13, sample_interval=0.02, noise_bound=0.12, excitation_amp=2.0,
        init_frac=0.4,
    )

    # spacecraft: principal inertias are not published; with sluggish
    # actuation (large J) no certificate exists at the published decay rate,
    # so the default is a small rigid body, overridable by building the
    # template directly
    J = np.array([2.0, 1.5, 1.0])
    A = np.zeros((3, 9))
    idx = {m.exps: k for k, m in enumerate(d32.monomials)}
    A[0, idx[(0, 1, 1)]] = (J[1] - J[2]) / J[0]
    A[1, idx[(1, 0, 1)]] = (J[2] - J[0]) / J[1]
    A[2, idx[(1, 1, 0)]] = (J[0] - J[1]) / J[2]
    tpl = SubsystemModel(
        "spacecraft", A, np.diag(1.0 / J), d32,
        state_set=SetSpec.box("state", [-5] * 3, [5] * 3),
        initial_set=SetSpec.box("initial", [-2] * 3, [2] * 3),
        unsafe_set=SetSpec(
            "unsafe",
            [
                (np.array([2.5, -5.0, -5.0]), np.array([5.0, -3.0, -4.0])),
                (np.array([2.5, 4.0, 2.5]), np.array([5.0, 5.0, 5.0])),
                (np.array([-5.0, 4.0, 2.5]), np.array([-4.0, 5.0, 5.0])),
            ],
        ),
        D_block=np.diag(4.0 / J),
    )
    out["spacecraft_line"] = Benchmark(
        _homogeneous("spacecraft_line", 2000, "line", tpl, headless_first=True),
        samples=14, sample_interval=0.15, noise_bound=0.75, excitation_amp=3.0,
        init_frac=0.5, synth={"pi_cap": 50.0, "shape_grid": [0.3, 0.5, 0.7]},
        notes="inertia J=(2,1.5,1) is a default, not a published value",
    )

    A = np.zeros((3, 9))
    A[:, idx[(1, 0, 0)]] = [-36.0, 0.0, 0.0]
    A[:, idx[(0, 1, 0)]] = [36.0, 28.0, 0.0]
    A[:, idx[(0, 0, 1)]] = [0.0, 0.0, -20.0]
    A[:, idx[(1, 0, 1)]] = [0.0, -1.0, 0.0]
    A[:, idx[(1, 1, 0)]] = [0.0, 0.0, 1.0]
    tpl = SubsystemModel(
        "lu", A, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), d32,
        state_set=SetSpec.box("state", [-20] * 3, [20] * 3),
        initial_set=SetSpec.box("initial", [-5] * 3, [5] * 3),
        unsafe_set=SetSpec(
            "unsafe",
            [
                (np.array([-20.0, -20.0, 6.5]), np.array([-10.0, -15.0, 20.0])),
                (np.array([10.0, 5.5, 6.5]), np.array([20.0, 20.0, 20.0])),
            ],
        ),
        D_block=-1e-3 * np.eye(3),
    )
    out["lu_star"] = Benchmark(
        _homogeneous("lu_star", 2000, "star", tpl, headless_first=True),
        samples=11, sample_interval=0.005, noise_bound=0.04, excitation_amp=100.0,
        init_frac=0.5, synth={"deg_H": 2, "shape_grid": [0.3, 0.5]},
    )

    d23 = build_dictionary(2, 3)
    idx2 = {m.exps: k for k, m in enumerate(d23.monomials)}
    A = np.zeros((2, 9))
    A[:, idx2[(1, 0)]] = [0.0, 2.0]
    A[:, idx2[(0, 1)]] = [1.0, -0.5]
    A[:, idx2[(3, 0)]] = [0.0, -0.01]
    duffing_sets = dict(
        state_set=SetSpec.box("state", [-10] * 2, [10] * 2),
        initial_set=SetSpec.box("initial", [-4] * 2, [4] * 2),
        unsafe_set=SetSpec(
            "unsafe",
            [
                (np.array([-10.0, -10.0]), np.array([-6.0, -5.0])),
                (np.array([6.0, 5.0]), np.array([10.0, 10.0])),
            ],
        ),
    )
    tpl = SubsystemModel(
        "duffing", A, np.eye(2), d23,
        D_block=np.array([[0.0, 0.0], [0.1, 0.0]]), **duffing_sets,
    )
    out["duffing_ring"] = Benchmark(
        _homogeneous("duffing_ring", 2000, "ring", tpl),
        samples=20, sample_interval=0.15, noise_bound=0.18, excitation_amp=2.0,
        init_frac=0.4,
    )
    tpl = SubsystemModel(
        "duffing", A, np.eye(2), d23,
        D_block=np.array([[0.0, 0.0], [0.05, 0.0]]), **duffing_sets,
    )
    out["duffing_binary"] = Benchmark(
        _homogeneous("duffing_binary", 1023, "binary", tpl, headless_first=True),
        samples=20, sample_interval=0.15, noise_bound=0.08, excitation_amp=2.0,
        init_frac=0.4,
    )

    A = np.zeros((3, 9))
    A[:, idx[(1, 0, 0)]] = [-35.0, -7.0, 0.0]
    A[:, idx[(0, 1, 0)]] = [35.0, 28.0, 0.0]
    A[:, idx[(0, 0, 1)]] = [0.0, 0.0, -3.0]
    A[:, idx[(1, 0, 1)]] = [0.0, -1.0, 0.0]
    A[:, idx[(1, 1, 0)]] = [0.0, 0.0, 1.0]
    tpl = SubsystemModel(
        "chen", A, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), d32,
        state_set=SetSpec.box("state", [-20] * 3, [20] * 3),
        initial_set=SetSpec.box("initial", [-2.5] * 3, [2.5] * 3),
        unsafe_set=SetSpec(
            "unsafe",
            [
                (np.array([-20.0, -20.0, -20.0]), np.array([-4.0, -5.0, -4.0])),
                (np.array([3.5, 5.0, 4.0]), np.array([20.0, 20.0, 20.0])),
            ],
        ),
        D_block=-5e-5 * np.eye(3),
    )
    chen_probe = 30.0 * np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    out["chen_fully"] = Benchmark(
        _homogeneous("chen_fully", 1000, "fully", tpl),
        samples=14, sample_interval=0.05, noise_bound=0.27, excitation_amp=150.0,
        probe=chen_probe, init_frac=0.5, synth={"deg_H": 2},
    )

    # heterogeneous line: three 300-blocks with gains 1.0 / 1.2 / 1.4 and
    # distinct junction couplings
    d22 = build_dictionary(2, 2)
    idx3 = {m.exps: k for k, m in enumerate(d22.monomials)}

    def het_template(gain, coupling, name):
        A = np.zeros((2, 5))
        A[0, idx3[(0, 1)]] = gain       # xdot1 = gain * x2
        A[1, idx3[(2, 0)]] = gain       # xdot2 = gain * x1^2
        return SubsystemModel(
            name, A, np.eye(2), d22,
            D_block=None if coupling is None else coupling * np.eye(2),
            **duffing_sets,
        )

    templates = [
        het_template(1.0, None, "het_head"),
        het_template(1.0, -1e-3, "het_a"),
        het_template(1.2, -3e-2, "het_ab"),
        het_template(1.2, -2e-3, "het_b"),
        het_template(1.4, -4e-2, "het_bc"),
        het_template(1.4, -5e-3, "het_c"),
    ]
    assignment = np.empty(900, dtype=int)
    assignment[0] = 0
    assignment[1:300] = 1
    assignment[300] = 2
    assignment[301:600] = 3
    assignment[600] = 4
    assignment[601:900] = 5
    het_probe = 3.0 * np.eye(2)
    out["heterogeneous_line"] = Benchmark(
        NetworkSpec("heterogeneous_line", 900, "line", templates, assignment),
        samples=20, sample_interval=0.1, noise_bound=0.18, excitation_amp=8.0,
        probe=het_probe, init_frac=0.3,
        synth={"shape_grid": [0.45, 0.6, 0.8]},
        notes="second state drives on x1^2 as in the displayed dynamics",
    )
    return out


def with_q(bench: Benchmark, Q: int) -> Benchmark:
    """Resize a homogeneous benchmark network (topology preserved)."""
    net = bench.network
    if len(net.templates) > 2 or net.topology == "custom":
        raise ValueError("only homogeneous networks can be resized")
    headless = len(net.templates) == 2
    assignment = np.full(Q, 1 if headless else 0, dtype=int)
    if headless:
        assignment[0] = 0
    resized = NetworkSpec(net.name, Q, net.topology, net.templates, assignment)
    return Benchmark(
        resized, bench.samples, bench.sample_interval,
        bench.noise_bound, bench.excitation_amp, bench.probe,
        bench.init_frac, bench.synth, bench.notes,
    )
