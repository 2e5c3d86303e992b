"""Acceptance suite: one test per criterion, strictest stated tolerances.

The heavyweight fixtures (Duffing ring at Q=100, Lorenz ring at the full
Q=2000) are shared across criteria 4-8 and 10.
"""

import time

import numpy as np
import pytest

from certnet.compose import (
    build_gain_matrix,
    check_compose,
    expand_certificates,
    network_cbc,
)
from certnet.data import DataConfig, _assemble, collect_network, lemma1_S, verify_lemma1
from certnet.dictionary import build_dictionary, factorize
from certnet.plants import (
    SubsystemModel,
    builtin_benchmarks,
    full_D,
    simulate_network,
    with_q,
)
from certnet.poly import Polynomial, PolyMatrix
from certnet.sdp import solve
from certnet.sos import ParamPoly, ProblemBuilder, SetSpec, scalar_sos
from certnet.synth import SynthConfig, interaction_gain, synthesize_subsystem
from certnet.verify import check_csbc, check_decay, check_safety, recheck_witnesses


def _random_subsystem(rng, n, deg):
    d = build_dictionary(n, deg)
    m = int(rng.integers(1, n + 1))
    coupled = rng.random() < 0.5
    return SubsystemModel(
        "rand",
        rng.uniform(-2, 2, size=(n, d.size)),
        rng.uniform(-1, 1, size=(n, m)),
        d,
        state_set=SetSpec.box("state", [-5] * n, [5] * n),
        initial_set=SetSpec.box("initial", [-1] * n, [1] * n),
        unsafe_set=SetSpec.box("unsafe", [4] * n, [5] * n),
        D_block=rng.uniform(-0.5, 0.5, size=(n, n)) if coupled else None,
    )


def _synthetic_data(rng, model, T, noise):
    X0 = model.state_set.sample(rng, T).T
    U0 = rng.uniform(-1, 1, size=(model.m, T))
    sigma = 0 if model.D_block is None else model.n
    W0 = rng.uniform(-1, 1, size=(sigma, T))
    cfg = DataConfig(samples=T, sample_interval=0.1, noise_bound=noise, seed=0)
    return _assemble(model, cfg, rng, U0, W0, X0)


@pytest.fixture(scope="module")
def duffing100():
    """Criterion 4 configuration: Duffing ring, Q=100, T=20, noise 0.18."""
    bench = with_q(builtin_benchmarks()["duffing_ring"], 100)
    net = bench.network
    dcfg = DataConfig(
        samples=20, sample_interval=bench.sample_interval,
        noise_bound=0.18, excitation_amp=bench.excitation_amp,
        init_frac=bench.init_frac, seed=7,
    )
    data = collect_network(net, dcfg)
    model = net.model_of(1)
    t0 = time.perf_counter()
    cert = synthesize_subsystem(
        td=data[1], D=full_D(net, 1),
        state_set=model.state_set, initial_set=model.initial_set,
        unsafe_set=model.unsafe_set, cfg=SynthConfig(),
    )
    solve_s = time.perf_counter() - t0
    certs = expand_certificates(net, {0: cert})
    eps_hat, delta = build_gain_matrix(certs, net)
    report = check_compose(eps_hat, delta, certs)
    return {
        "net": net, "cert": cert, "certs": certs,
        "report": report, "solve_s": solve_s,
    }


@pytest.fixture(scope="module")
def lorenz2000():
    """Criterion 5 configuration: Lorenz ring, Q=2000, T=13, noise 0.12."""
    bench = builtin_benchmarks()["lorenz_ring"]
    net = bench.network
    assert net.Q == 2000 and bench.samples == 13 and bench.noise_bound == 0.12
    t_start = time.perf_counter()
    dcfg = DataConfig(
        samples=13, sample_interval=bench.sample_interval,
        noise_bound=0.12, excitation_amp=bench.excitation_amp,
        init_frac=bench.init_frac, seed=11,
    )
    data = collect_network(net, dcfg)
    model = net.model_of(1)
    cert = synthesize_subsystem(
        td=data[1], D=full_D(net, 1),
        state_set=model.state_set, initial_set=model.initial_set,
        unsafe_set=model.unsafe_set, cfg=SynthConfig(),
    )
    certs = expand_certificates(net, {0: cert})
    eps_hat, delta = build_gain_matrix(certs, net)
    report = check_compose(eps_hat, delta, certs)
    assert report.passed, report.failure_reason
    cbc = network_cbc(certs, report, net)

    # closed-loop run recording 120 representative subsystems
    rng = np.random.default_rng(3)
    x0 = np.stack(
        [model.initial_set.sample(rng, 1)[0] for _ in range(net.Q)]
    )
    mon = np.unique(np.linspace(0, net.Q - 1, 120).astype(int))
    res = simulate_network(
        net, x0, cbc.control, t_end=5.0, dt=1e-3, record_idx=mon,
        observer=lambda k, t, X: cbc.value(X) if k % 20 == 0 else None,
    )
    wall = time.perf_counter() - t_start
    return {
        "net": net, "cert": cert, "certs": certs, "report": report,
        "cbc": cbc, "sim": res, "monitored": mon, "wall_s": wall,
    }


def test_criterion_1_lemma1_oracle():
    rng = np.random.default_rng(42)
    t0 = time.perf_counter()
    worst_clean, worst_noisy = 0.0, 0.0
    for k in range(50):
        n = int(rng.integers(1, 4))
        deg = int(rng.integers(1, 3)) if n == 3 else int(rng.integers(1, 4))
        model = _random_subsystem(rng, n, deg)
        while model.dictionary.size > 9:
            model = _random_subsystem(rng, n, 2)
        T = model.dictionary.size + 1
        td = _synthetic_data(rng, model, T, noise=0.0)
        if not td.rank_ok:
            continue
        S = lemma1_S(td, model.upsilon)
        worst_clean = max(worst_clean, verify_lemma1(model, td, S))
        td_n = _synthetic_data(rng, model, T, noise=0.2)
        if td_n.rank_ok:
            S = lemma1_S(td_n, model.upsilon)
            worst_noisy = max(
                worst_noisy, verify_lemma1(model, td_n, S, use_hidden_noise=True)
            )
    runtime = time.perf_counter() - t0
    assert worst_clean <= 1e-8
    assert worst_noisy <= 1e-7
    assert runtime <= 10.0


def test_criterion_2_factorization_identity():
    for n in range(1, 5):
        for deg in range(1, 5):
            d = build_dictionary(n, deg)
            tr = factorize(d)
            prod = tr.upsilon @ PolyMatrix.state_vector(n)
            for k, m in enumerate(d.monomials):
                assert (prod[k, 0] - Polynomial.from_monomial(m)).is_zero()


def test_criterion_3_sdp_planted_and_sos_fixtures():
    import sys, os

    sys.path.insert(0, os.path.dirname(__file__))
    from test_sdp import make_planted

    rng = np.random.default_rng(42)
    for _ in range(20):
        m = int(rng.integers(4, 12))
        dims = tuple(int(rng.integers(2, 8)) for _ in range(int(rng.integers(1, 3))))
        prob, _, opt = make_planted(rng, m=m, dims=dims)
        sol = solve(prob)
        assert sol.status == "optimal"
        assert abs(sol.objective_value - opt) / (1 + abs(opt)) <= 1e-5

    x = Polynomial.variable(1, 0)
    for expr, feasible in [
        (x * x, True),
        (x * x * x * x - 2.0 * (x * x) + 2.0, True),
        (-(x * x), False),
    ]:
        builder = ProblemBuilder()
        scalar_sos(builder, ParamPoly.from_poly(expr), [])
        sol = solve(builder.build())
        assert sol.ok == feasible


def test_criterion_4_duffing_desk_scale(duffing100):
    cert = duffing100["cert"]
    report = duffing100["report"]
    assert cert.eps == 0.99
    assert cert.beta > cert.gamma
    assert report.passed
    assert report.eps > 0
    assert duffing100["solve_s"] <= 60.0


def test_criterion_5_lorenz_paper_scale(lorenz2000):
    cert = lorenz2000["cert"]
    report = lorenz2000["report"]
    assert lorenz2000["wall_s"] <= 15 * 60
    assert 501.44 / 3 <= cert.gamma <= 501.44 * 3
    assert 514.51 / 3 <= cert.beta <= 514.51 * 3
    assert cert.beta > cert.gamma
    assert 0.5 <= report.eps <= 0.99
    assert not lorenz2000["sim"].blew_up


def _decay_and_safety(net, certs, report, seed, n_init=50, monitored=120):
    cbc = network_cbc(certs, report, net)
    rng = np.random.default_rng(seed)
    x0 = np.stack(
        [net.model_of(i + 1).initial_set.sample(rng, n_init)
         for i in range(net.Q)], axis=1,
    )  # (n_init, Q, n)
    mon = np.unique(np.linspace(0, net.Q - 1, min(monitored, net.Q)).astype(int))
    hits = {"count": 0}
    unsafe_sets = [net.model_of(int(i) + 1).unsafe_set for i in mon]

    def observer(k, t, X):
        xm = X[..., mon, :]
        for r, us in enumerate(unsafe_sets):
            hits["count"] += int(us.contains(xm[..., r, :]).sum())
        return cbc.value(X)

    res = simulate_network(
        net, x0, cbc.control, t_end=5.0, dt=1e-3, observer=observer
    )
    Bt = np.array(res.observed)  # (S+1, n_init)
    violations = check_decay(res.times, Bt, report.eps)
    return res, hits["count"], violations


def test_criterion_6_safety_and_decay(duffing100, lorenz2000):
    # every benchmark that composed in this run: Duffing ring and Lorenz ring
    net, certs, report = (
        duffing100["net"], duffing100["certs"], duffing100["report"],
    )
    res, unsafe_hits, violations = _decay_and_safety(net, certs, report, seed=5)
    assert not res.blew_up
    assert unsafe_hits == 0
    assert violations == []

    net, certs, report = (
        lorenz2000["net"], lorenz2000["certs"], lorenz2000["report"],
    )
    res, unsafe_hits, violations = _decay_and_safety(
        net, certs, report, seed=6, n_init=50
    )
    assert not res.blew_up
    assert unsafe_hits == 0
    assert violations == []


def test_criterion_7_open_loop_violation():
    bench = with_q(builtin_benchmarks()["lorenz_ring"], 50)
    net = bench.network
    rng = np.random.default_rng(1)
    x0 = np.stack(
        [net.model_of(i + 1).initial_set.sample(rng, 1)[0] for i in range(net.Q)]
    )
    res = simulate_network(
        net, x0, None, t_end=5.0, dt=1e-3, record_idx=np.arange(net.Q)
    )
    unsafe_sets = [net.model_of(i + 1).unsafe_set for i in range(net.Q)]
    verdicts = check_safety(res.times, res.recorded, unsafe_sets)
    assert any(v is not None for v in verdicts), (
        "open-loop Lorenz should violate safety within 5 s"
    )


def test_criterion_8_soundness_sampling(duffing100, lorenz2000):
    for ctx in (duffing100, lorenz2000):
        net, cert = ctx["net"], ctx["cert"]
        model = net.model_of(1)
        margins = check_csbc(model, cert, samples=10_000, seed=0)
        for name, m in margins.items():
            assert m >= -1e-6, f"{net.name}: margin {name} = {m}"
        gram = recheck_witnesses(cert)
        assert gram["pass"], gram
        scale = max(1.0, np.abs(cert.dissipation_witness.Q).max())
        assert gram["worst_lambda_min"] >= -1e-8 * scale
        assert gram["worst_residual"] <= 1e-6 * scale


def test_criterion_9_interaction_gain_formula():
    rng = np.random.default_rng(9)
    for _ in range(20):
        D = rng.standard_normal((3, int(rng.integers(1, 30))))
        pi = float(rng.uniform(0.1, 5.0))
        want = np.linalg.svd(D, compute_uv=False)[0] ** 2 / pi
        assert abs(interaction_gain(D, pi) - want) <= 1e-12 * max(1.0, want)
    # published Lorenz-ring value
    got = interaction_gain(-0.01 * np.eye(3), 0.8)
    assert got == pytest.approx(1.25e-4, rel=1e-12)


def test_criterion_10_linear_scaling(duffing100):
    cert = duffing100["cert"]
    base = builtin_benchmarks()["duffing_ring"]
    qs = [250, 500, 1000, 2000]
    times = []
    for q in qs:
        net = with_q(base, q).network
        rng = np.random.default_rng(0)
        t0 = time.perf_counter()
        certs = expand_certificates(net, {0: cert})
        eps_hat, delta = build_gain_matrix(certs, net)
        report = check_compose(eps_hat, delta, certs)
        assert report.passed
        cbc = network_cbc(certs, report, net)
        x0 = np.stack(
            [net.model_of(i + 1).initial_set.sample(rng, 1)[0]
             for i in range(q)]
        )
        simulate_network(net, x0, cbc.control, t_end=1.0, dt=1e-3)
        times.append(time.perf_counter() - t0)
    qs_a = np.array(qs, dtype=float)
    ts = np.array(times)
    coef = np.polyfit(qs_a, ts, 1)
    pred = np.polyval(coef, qs_a)
    r2 = 1.0 - np.sum((ts - pred) ** 2) / np.sum((ts - ts.mean()) ** 2)
    assert r2 >= 0.95, f"wall times {ts} fit R^2 = {r2:.3f}"
