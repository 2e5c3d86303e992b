import numpy as np
import pytest

from certnet.data import DataConfig, collect
from certnet.dictionary import build_dictionary
from certnet.plants import SubsystemModel, integrate, subsystem_deriv
from certnet.sos import SetSpec
from certnet.synth import SynthConfig, synthesize_subsystem
from certnet.verify import (
    VerifyReport,
    check_csbc,
    check_decay,
    check_safety,
    recheck_witnesses,
)


@pytest.fixture(scope="module")
def tiny():
    model = SubsystemModel(
        "tiny",
        np.array([[-1.0]]),
        np.array([[1.0]]),
        build_dictionary(1, 1),
        state_set=SetSpec.box("state", [-10], [10]),
        initial_set=SetSpec.box("initial", [-1], [1]),
        unsafe_set=SetSpec.box("unsafe", [8], [10]),
        D_block=None,
    )
    td = collect(model, DataConfig(samples=3, sample_interval=0.1,
                                   noise_bound=0.02, seed=5))
    cert = synthesize_subsystem(
        td, np.zeros((1, 0)), model.state_set, model.initial_set,
        model.unsafe_set, SynthConfig(),
    )
    return model, cert


def test_check_csbc_margins_nonnegative(tiny):
    model, cert = tiny
    margins = check_csbc(model, cert, samples=10_000, seed=0)
    assert set(margins) == {
        "norm_lower_bound", "initial_level", "unsafe_level", "dissipation",
    }
    for name, m in margins.items():
        assert m >= -1e-6, f"{name} margin {m}"


def test_check_csbc_detects_bad_unsafe_level(tiny):
    model, cert = tiny
    from dataclasses import replace

    # an unsafe box touching the origin cannot sit above the beta level
    bad = replace(
        cert,
        unsafe_set=SetSpec.box("unsafe", [-0.1], [0.1]),
    )
    margins = check_csbc(model, bad, samples=2000, seed=1)
    assert margins["unsafe_level"] < -1e-3


def test_check_csbc_zero_internal_input(tiny):
    model, cert = tiny
    # sigma = 0: the dissipation condition reduces to LB <= -eps B
    margins = check_csbc(model, cert, samples=5000, seed=2)
    assert margins["dissipation"] >= -1e-6


def test_check_decay_constant_envelope():
    times = np.linspace(0, 5, 100)
    B = np.full(100, 2.0)
    assert check_decay(times, B, eps=0.0) == []
    # any nonincreasing B passes a zero-rate envelope
    B2 = 2.0 * np.exp(-0.3 * times)
    assert check_decay(times, B2, eps=0.0) == []


def test_check_decay_flags_violations():
    times = np.linspace(0, 5, 100)
    B = np.exp(-0.1 * times)  # decays slower than required
    v = check_decay(times, B, eps=1.0)
    assert v and v[0][0] > 0


def test_check_decay_batched():
    times = np.linspace(0, 2, 50)
    good = np.exp(-2.0 * times)
    bad = np.exp(+0.1 * times)
    B = np.stack([good, bad], axis=1)
    v = check_decay(times, B, eps=1.0)
    assert v and all(b > e for _, b, e in v)


def test_check_safety_flags_duffing_point():
    unsafe = SetSpec(
        "unsafe",
        [
            (np.array([-10.0, -10.0]), np.array([-6.0, -5.0])),
            (np.array([6.0, 5.0]), np.array([10.0, 10.0])),
        ],
    )
    times = np.array([0.0, 1.0, 2.0])
    states = np.zeros((3, 1, 2))
    states[2, 0] = [7.0, 6.0]  # inside the upper unsafe box
    (first,) = check_safety(times, states, [unsafe])
    assert first == pytest.approx(2.0)


def test_check_safety_clean_for_zero_trajectory():
    unsafe = SetSpec.box("unsafe", [6, 5], [10, 10])
    times = np.linspace(0, 1, 11)
    states = np.zeros((11, 4, 2))
    verdicts = check_safety(times, states, [unsafe] * 4)
    assert verdicts == [None] * 4


def test_check_safety_consistent_with_geometry(tiny):
    model, cert = tiny
    rng = np.random.default_rng(3)
    times = np.linspace(0, 1, 40)
    states = rng.uniform(-10, 10, size=(40, 3, 1))
    verdicts = check_safety(times, states, [cert.unsafe_set] * 3)
    for r, first in enumerate(verdicts):
        if first is not None:
            k = np.argmin(np.abs(times - first))
            assert cert.unsafe_set.contains(states[k, r])


def test_recheck_witnesses_pass(tiny):
    _, cert = tiny
    out = recheck_witnesses(cert)
    assert out["pass"]
    assert out["eq16_residual"] <= 1e-8
    assert out["dissipation"]["residual"] <= 1e-6
    assert out["dissipation"]["lambda_min"] >= -1e-8


def test_recheck_flags_zeroed_gram(tiny):
    _, cert = tiny
    from dataclasses import replace
    from certnet.sos import GramWitness

    wit = cert.dissipation_witness
    bad = replace(
        cert,
        dissipation_witness=GramWitness(
            wit.basis, np.zeros_like(wit.Q), wit.residual, wit.lambda_min
        ),
    )
    out = recheck_witnesses(bad)
    assert not out["pass"]
    assert out["dissipation"]["residual"] > 1e-6


def test_recheck_flags_perturbed_C(tiny):
    _, cert = tiny
    from dataclasses import replace

    bad = replace(cert, C=cert.C * 1.01)
    out = recheck_witnesses(bad)
    assert not out["pass"]
    assert out["eq16_residual"] > 1e-8


def test_open_loop_unstable_violates_decay(tiny):
    # negative control: without the controller the system xdot = -x still
    # decays, so craft an unstable plant instead
    model = SubsystemModel(
        "unstable",
        np.array([[0.5]]),
        np.array([[1.0]]),
        build_dictionary(1, 1),
        state_set=SetSpec.box("state", [-10], [10]),
        initial_set=SetSpec.box("initial", [-1], [1]),
        unsafe_set=SetSpec.box("unsafe", [8], [10]),
        D_block=None,
    )
    _, cert = tiny
    traj = integrate(
        lambda x, nu: subsystem_deriv(model, x), np.array([0.5]), None, 5.0, 1e-3
    )
    B = cert.barrier(traj.states)
    v = check_decay(traj.times, B, eps=cert.eps)
    assert v


def test_verify_report_json(tmp_path, tiny):
    model, cert = tiny
    rep = VerifyReport(
        csbc_margins=check_csbc(model, cert, samples=500, seed=0),
        sample_counts={"csbc": 500},
        gram_summary=recheck_witnesses(cert),
        decay_violations=[(0.5, 2.0, 1.0)],
        safety={"1": 0.25},
    )
    path = tmp_path / "verify.json"
    rep.to_json(str(path))
    import json

    doc = json.loads(path.read_text())
    assert doc["num_decay_violations"] == 1
    csv_path = tmp_path / "violations.csv"
    rep.violations_csv(str(csv_path))
    assert "decay" in csv_path.read_text()
