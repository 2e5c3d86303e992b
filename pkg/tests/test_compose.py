import numpy as np
import pytest

from certnet.compose import (
    ComposeReport,
    build_gain_matrix,
    check_compose,
    expand_certificates,
    network_cbc,
)
from certnet.plants import NetworkSpec, SubsystemModel, builtin_benchmarks, neighbors
from certnet.dictionary import build_dictionary
from certnet.sos import SetSpec
from certnet.synth import CsbcCertificate
from certnet.poly import Polynomial, PolyMatrix
from certnet.sos import GramWitness


def fake_cert(n=1, phi=1.0, rho=0.01, eps=0.99, gamma=1.0, beta=2.0, P=None):
    """Minimal certificate stub for composition-level tests."""
    P = np.eye(n) if P is None else P
    C = np.linalg.inv(P)
    zero_wit = GramWitness([], np.zeros((0, 0)), 0.0, 0.0)
    return CsbcCertificate(
        C=C, P=P, H=PolyMatrix.zeros(1, n, n),
        phi=phi, gamma=gamma, beta=beta, eps=eps, pi=1.0, mu=1.0, rho=rho,
        controller=[Polynomial.zero(n)],
        dissipation_witness=zero_wit,
        dissipation_multipliers=[],
        level_witnesses={}, level_multipliers={}, level_bounds={},
        N0=np.zeros((1, 1)), E=np.zeros((n, 1)), U0=np.zeros((1, 1)),
        Xi2=np.zeros((n, n)), D=np.zeros((n, 0)),
        dictionary=build_dictionary(n, 1),
        state_set=SetSpec.box("state", [-10] * n, [10] * n),
        initial_set=SetSpec.box("initial", [-1] * n, [1] * n),
        unsafe_set=SetSpec.box("unsafe", [8] * n, [10] * n),
        eq16_residual=0.0,
    )


def ring_spec(Q, n=1):
    tpl = SubsystemModel(
        "s", np.array([[-1.0] * 1]) if n == 1 else np.zeros((n, n)),
        np.eye(n), build_dictionary(n, 1),
        state_set=SetSpec.box("state", [-10] * n, [10] * n),
        initial_set=SetSpec.box("initial", [-1] * n, [1] * n),
        unsafe_set=SetSpec.box("unsafe", [8] * n, [10] * n),
        D_block=0.1 * np.eye(n),
    )
    return NetworkSpec("ring", Q, "ring", [tpl], np.zeros(Q, dtype=int))


def custom_spec(Q, edges, n=1):
    tpl = SubsystemModel(
        "s", np.zeros((n, n)), np.eye(n), build_dictionary(n, 1),
        state_set=SetSpec.box("state", [-10] * n, [10] * n),
        initial_set=SetSpec.box("initial", [-1] * n, [1] * n),
        unsafe_set=SetSpec.box("unsafe", [8] * n, [10] * n),
        D_block=0.1 * np.eye(n),
    )
    return NetworkSpec("c", Q, "custom", [tpl], np.zeros(Q, dtype=int),
                       custom_edges=edges)


def test_two_subsystem_bidirectional_gain_matrix():
    spec = custom_spec(2, [(1, 2), (2, 1)])
    certs = [fake_cert(rho=0.01, phi=1.0) for _ in range(2)]
    eps_hat, delta = build_gain_matrix(certs, spec)
    assert np.allclose(delta.toarray(), [[0.0, 0.01], [0.01, 0.0]])
    assert np.allclose(eps_hat, [0.99, 0.99])


def test_ring_gain_matrix_one_nonzero_per_row():
    spec = ring_spec(6)
    certs = [fake_cert() for _ in range(6)]
    _, delta = build_gain_matrix(certs, spec)
    dense = delta.toarray()
    assert np.all((dense > 0).sum(axis=1) == 1)
    for i in range(1, 7):
        (j,) = neighbors(spec, i)
        assert dense[i - 1, j - 1] > 0


def test_star_gain_matrix_structure():
    tpl_spec = builtin_benchmarks()["lu_star"].network
    spec = NetworkSpec("star5", 5, "star", tpl_spec.templates,
                       np.array([0, 1, 1, 1, 1]))
    certs = [fake_cert(n=3) for _ in range(5)]
    _, delta = build_gain_matrix(certs, spec)
    dense = delta.toarray()
    # hub column feeds every leaf; leaf columns are empty
    assert np.all(dense[1:, 0] > 0)
    assert np.all(dense[:, 1:] == 0)
    assert np.all(dense[0, :] == 0)


def test_check_compose_uncoupled_pass():
    certs = [fake_cert(rho=0.0) for _ in range(2)]
    eps_hat = np.array([0.99, 0.99])
    import scipy.sparse as sp

    rep = check_compose(eps_hat, sp.csr_matrix((2, 2)), certs)
    assert rep.passed
    assert np.allclose(rep.varpi, [-0.99, -0.99])
    assert rep.eps == pytest.approx(0.9801)
    assert rep.gamma == pytest.approx(2.0)
    assert rep.beta == pytest.approx(4.0)


def test_check_compose_level_set_failure():
    certs = [fake_cert(gamma=1.0, beta=0.5) for _ in range(3)]
    spec = ring_spec(3)
    eps_hat, delta = build_gain_matrix(certs, spec)
    rep = check_compose(eps_hat, delta, certs)
    assert not rep.passed
    assert rep.failure_reason == "level_sets"


def test_check_compose_small_gain_failure():
    # enormous interaction gain swamps the decay rate
    certs = [fake_cert(rho=10.0, phi=0.1) for _ in range(4)]
    spec = ring_spec(4)
    eps_hat, delta = build_gain_matrix(certs, spec)
    rep = check_compose(eps_hat, delta, certs)
    assert not rep.passed
    assert rep.failure_reason == "small_gain"


def test_varpi_strictly_brackets_network_eps():
    certs = [fake_cert(rho=0.05, phi=1.0) for _ in range(5)]
    spec = ring_spec(5)
    eps_hat, delta = build_gain_matrix(certs, spec)
    rep = check_compose(eps_hat, delta, certs)
    assert rep.passed
    assert rep.varpi.max() < -rep.eps < 0


def test_network_cbc_identity_blocks():
    certs = [fake_cert(n=2, P=np.eye(2)) for _ in range(2)]
    import scipy.sparse as sp

    rep = check_compose(np.array([0.99, 0.99]), sp.csr_matrix((2, 2)), certs)
    cbc = network_cbc(certs, rep)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((7, 2, 2))
    assert np.allclose(cbc.value(x), np.sum(x**2, axis=(-1, -2)))


def test_network_cbc_matches_block_oracle():
    rng = np.random.default_rng(1)
    P1 = np.array([[2.0, 0.2], [0.2, 1.0]])
    P2 = np.array([[1.5, -0.1], [-0.1, 3.0]])
    certs = [fake_cert(n=2, P=P1), fake_cert(n=2, P=P2), fake_cert(n=2, P=P1)]
    import scipy.sparse as sp

    rep = check_compose(np.full(3, 0.99), sp.csr_matrix((3, 3)), certs)
    cbc = network_cbc(certs, rep)
    x = rng.standard_normal((10, 3, 2))
    oracle = (
        np.einsum("si,ij,sj->s", x[:, 0], P1, x[:, 0])
        + np.einsum("si,ij,sj->s", x[:, 1], P2, x[:, 1])
        + np.einsum("si,ij,sj->s", x[:, 2], P1, x[:, 2])
    )
    assert np.abs(cbc.value(x) - oracle).max() <= 1e-10 * (1 + np.abs(oracle).max())


def test_network_controller_is_decentralized():
    c1 = fake_cert(n=1)
    c1.controller = [Polynomial(1, {list(build_dictionary(1, 1).monomials)[0]: -3.0})]
    c2 = fake_cert(n=1)
    c2.controller = [Polynomial(1, {list(build_dictionary(1, 1).monomials)[0]: 5.0})]
    import scipy.sparse as sp

    rep = check_compose(np.full(2, 0.99), sp.csr_matrix((2, 2)), [c1, c2])
    cbc = network_cbc([c1, c2], rep)
    x = np.array([[2.0], [1.0]])
    nu = cbc.control(x)
    assert nu[0, 0] == pytest.approx(-6.0)
    assert nu[1, 0] == pytest.approx(5.0)


def test_network_cbc_requires_pass():
    certs = [fake_cert(gamma=2.0, beta=1.0)]
    import scipy.sparse as sp

    rep = check_compose(np.array([0.99]), sp.csr_matrix((1, 1)), certs)
    with pytest.raises(ValueError):
        network_cbc(certs, rep)


def test_expand_certificates_shares_references():
    spec = ring_spec(5)
    cert = fake_cert()
    certs = expand_certificates(spec, {0: cert})
    assert len(certs) == 5
    assert all(c is cert for c in certs)


def test_chain_inequality_sampled():
    # sum_i [-eps_i B_i + rho_i sum_j |x_j|^2] <= -eps B(x) over random states
    rng = np.random.default_rng(4)
    Q = 8
    spec = ring_spec(Q)
    certs = [fake_cert(rho=0.02, phi=1.0) for _ in range(Q)]
    eps_hat, delta = build_gain_matrix(certs, spec)
    rep = check_compose(eps_hat, delta, certs)
    assert rep.passed
    cbc = network_cbc(certs, rep, spec)
    for _ in range(1000 // 50):
        x = rng.uniform(-10, 10, size=(50, Q, 1))
        Bsub = cbc.subsystem_values(x)
        lhs = 0.0
        for i in range(1, Q + 1):
            nbrs = neighbors(spec, i)
            wsq = sum(np.sum(x[:, j - 1] ** 2, axis=-1) for j in nbrs)
            lhs = lhs + (-certs[i - 1].eps * Bsub[:, i - 1]
                         + certs[i - 1].rho * wsq)
        rhs = -rep.eps * cbc.value(x)
        tol = 1e-6 * (1 + np.abs(cbc.value(x)))
        assert np.all(lhs <= rhs + tol)


def test_compose_report_json(tmp_path):
    certs = [fake_cert() for _ in range(3)]
    import scipy.sparse as sp

    rep = check_compose(np.full(3, 0.99), sp.csr_matrix((3, 3)), certs)
    path = tmp_path / "compose.json"
    rep.to_json(str(path))
    import json

    doc = json.loads(path.read_text())
    assert doc["pass"] is True
    assert doc["Q"] == 3
    assert "varpi" in doc  # small networks include the full vector
