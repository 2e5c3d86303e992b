import numpy as np
import pytest

from certnet.data import (
    DataConfig,
    TrajectoryData,
    build_N0,
    collect,
    collect_network,
    lemma1_S,
    min_samples,
    verify_lemma1,
)
from certnet.dictionary import Dictionary, build_dictionary, factorize
from certnet.plants import NetworkSpec, SubsystemModel, builtin_benchmarks, with_q
from certnet.poly import Monomial
from certnet.sos import SetSpec


def scalar_stable_model():
    return SubsystemModel(
        "tiny",
        np.array([[-1.0]]),
        np.array([[1.0]]),
        build_dictionary(1, 1),
        state_set=SetSpec.box("state", [-10], [10]),
        initial_set=SetSpec.box("initial", [-1], [1]),
        unsafe_set=SetSpec.box("unsafe", [8], [10]),
        D_block=None,
    )


def lorenz_model(coupling=-2e-5):
    return builtin_benchmarks()["lorenz_fully"].network.templates[0]


def random_subsystem(rng, n, deg):
    d = build_dictionary(n, deg)
    A = rng.uniform(-2, 2, size=(n, d.size))
    m = int(rng.integers(1, n + 1))
    B = rng.uniform(-1, 1, size=(n, m))
    has_coupling = rng.random() < 0.5
    return SubsystemModel(
        "rand",
        A, B, d,
        state_set=SetSpec.box("state", [-5] * n, [5] * n),
        initial_set=SetSpec.box("initial", [-1] * n, [1] * n),
        unsafe_set=SetSpec.box("unsafe", [4] * n, [5] * n),
        D_block=rng.uniform(-0.5, 0.5, size=(n, n)) if has_coupling else None,
    )


def synthetic_data(rng, model, T, noise_bound=0.0):
    """Data matrices built from random in-set samples (no ODE run)."""
    from certnet.data import _assemble

    n = model.n
    X0 = model.state_set.sample(rng, T).T
    U0 = rng.uniform(-1, 1, size=(model.m, T))
    sigma = 0 if model.D_block is None else n
    W0 = rng.uniform(-1, 1, size=(sigma, T))
    cfg = DataConfig(samples=T, sample_interval=0.1, noise_bound=noise_bound,
                     seed=int(rng.integers(1 << 31)))
    return _assemble(model, cfg, rng, U0, W0, X0)


def test_noise_free_data_satisfies_exact_identity():
    rng = np.random.default_rng(0)
    model = lorenz_model()
    td = synthetic_data(rng, model, T=15, noise_bound=0.0)
    D = np.tile(model.D_block, (1, td.W0.shape[0] // model.n))
    resid = td.X1 - (model.A @ td.N0 + model.B @ td.U0 + D @ td.W0)
    assert np.abs(resid).max() <= 1e-9


def test_xi_matrix_matches_energy_bound():
    rng = np.random.default_rng(1)
    model = lorenz_model()
    td = synthetic_data(rng, model, T=15, noise_bound=0.03)
    assert np.allclose(td.Xi @ td.Xi.T, 0.45 * np.eye(3))
    assert td.noise_energy_ok()


def test_sample_count_precondition():
    model = lorenz_model()
    cfg = DataConfig(samples=9, sample_interval=0.01)
    with pytest.raises(ValueError, match="T >= 10"):
        collect(model, cfg)
    assert min_samples(model) == 10


def test_build_N0_trivial():
    d = build_dictionary(1, 1)
    N0, ok, sv = build_N0(np.array([[1.0, 2.0, 3.0]]), d)
    assert np.allclose(N0, [[1.0, 2.0, 3.0]])
    assert ok


def test_build_N0_rank_deficient_duplicates():
    d = build_dictionary(2, 2)
    col = np.array([1.0, 2.0])
    X0 = np.tile(col[:, None], (1, 8))
    N0, ok, sv = build_N0(X0, d)
    assert not ok


def test_N0_columns_match_upsilon_identity():
    rng = np.random.default_rng(3)
    model = lorenz_model()
    td = synthetic_data(rng, model, T=12)
    ups = factorize(model.dictionary)
    for t in range(td.T):
        x = td.X0[:, t]
        assert np.allclose(td.N0[:, t], ups.eval(x) @ x, atol=1e-10)


def test_collect_deterministic_under_seed():
    model = scalar_stable_model()
    cfg = DataConfig(samples=4, sample_interval=0.05, noise_bound=0.01, seed=7)
    td1 = collect(model, cfg)
    td2 = collect(model, cfg)
    assert np.array_equal(td1.X0, td2.X0)
    assert np.array_equal(td1.Gamma, td2.Gamma)


def test_collect_trajectory_consistency():
    # collected states should follow the true flow: finite-difference check
    model = scalar_stable_model()
    cfg = DataConfig(samples=6, sample_interval=0.01, seed=3, substeps=50)
    td = collect(model, cfg)
    fd = (td.X0[:, 1:] - td.X0[:, :-1]) / cfg.sample_interval
    assert np.abs(fd - td.X1[:, :-1]).max() <= 2e-2


def test_noise_energy_bound_holds_across_seeds():
    rng = np.random.default_rng(5)
    model = lorenz_model()
    for seed in range(20):
        td = synthetic_data(rng, model, T=15, noise_bound=0.2)
        assert td.noise_energy_ok()
        assert np.all(np.sum(td.Gamma**2, axis=0) <= 0.2 + 1e-12)


def test_verify_lemma1_noise_free():
    rng = np.random.default_rng(8)
    for _ in range(5):
        model = random_subsystem(rng, int(rng.integers(1, 4)), 2)
        td = synthetic_data(rng, model, T=model.dictionary.size + 1)
        assert td.rank_ok
        S = lemma1_S(td, model.upsilon)
        resid = verify_lemma1(model, td, S)
        assert resid <= 1e-8 * max(1.0, np.abs(td.X1).max())


def test_verify_lemma1_with_noise_using_hidden_gamma():
    rng = np.random.default_rng(9)
    model = random_subsystem(rng, 2, 2)
    td = synthetic_data(rng, model, T=model.dictionary.size + 2, noise_bound=0.1)
    S = lemma1_S(td, model.upsilon)
    resid = verify_lemma1(model, td, S, use_hidden_noise=True)
    assert resid <= 1e-7 * max(1.0, np.abs(td.X1).max())


def test_verify_lemma1_omitting_gamma_leaves_residual():
    rng = np.random.default_rng(10)
    model = random_subsystem(rng, 2, 2)
    td = synthetic_data(rng, model, T=model.dictionary.size + 2, noise_bound=0.5)
    S = lemma1_S(td, model.upsilon)
    clean = verify_lemma1(model, td, S, use_hidden_noise=True)
    dirty = verify_lemma1(model, td, S, use_hidden_noise=False)
    assert dirty > max(10 * clean, 1e-6)


def test_verify_lemma1_rejects_bad_S():
    rng = np.random.default_rng(11)
    model = random_subsystem(rng, 2, 2)
    td = synthetic_data(rng, model, T=model.dictionary.size + 1)
    S = lemma1_S(td, model.upsilon)
    bad = S.scale(1.5)
    with pytest.raises(ValueError):
        verify_lemma1(model, td, bad)


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(12)
    model = lorenz_model()
    td = synthetic_data(rng, model, T=15, noise_bound=0.03)
    path = tmp_path / "data.json"
    td.save(str(path))
    back = TrajectoryData.load(str(path))
    for name in ("U0", "W0", "X0", "X1", "Gamma", "Xi", "N0"):
        assert np.array_equal(getattr(td, name), getattr(back, name))
    assert back.dictionary.monomials == td.dictionary.monomials


def test_collect_network_duffing_small():
    bench = with_q(builtin_benchmarks()["duffing_ring"], 8)
    cfg = DataConfig(
        samples=bench.samples,
        sample_interval=bench.sample_interval,
        noise_bound=bench.noise_bound,
        excitation_amp=bench.excitation_amp,
        seed=42,
    )
    data = collect_network(bench.network, cfg)
    assert list(data) == [1]
    td = data[1]
    assert td.rank_ok
    assert td.U0.shape == (2, 20) and td.W0.shape == (2, 20)
    model = bench.network.templates[0]
    # measured derivatives match the true field plus bounded noise
    D = model.D_block
    resid = td.X1 - td.Gamma - (
        model.A @ td.N0 + model.B @ td.U0 + D @ td.W0
    )
    assert np.abs(resid).max() <= 1e-9
