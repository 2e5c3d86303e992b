"""Data-driven certificate synthesis for one unknown subsystem.

A stable scalar plant xdot = -x + u is treated as a black box: two noisy
samples of one input-state trajectory are enough (the dictionary has one
entry, so T >= 2 satisfies the rank condition).  The synthesizer never
sees the plant matrices; it returns a quadratic sub-barrier certificate, a
polynomial state feedback, and machine-checkable Gram witnesses.
"""

import numpy as np

from certnet.data import DataConfig, collect
from certnet.dictionary import build_dictionary
from certnet.plants import SubsystemModel, integrate, subsystem_deriv
from certnet.sos import SetSpec
from certnet.synth import SynthConfig, synthesize_subsystem
from certnet.verify import check_csbc, recheck_witnesses

plant = SubsystemModel(
    "scalar",
    A=np.array([[-1.0]]),          # hidden from the synthesizer
    B=np.array([[1.0]]),
    dictionary=build_dictionary(1, 1),
    state_set=SetSpec.box("state", [-10], [10]),
    initial_set=SetSpec.box("initial", [-1], [1]),
    unsafe_set=SetSpec.box("unsafe", [8], [10]),
    D_block=None,
)

data = collect(
    plant,
    DataConfig(samples=3, sample_interval=0.1, noise_bound=0.05, seed=1),
)
print("samples X0:", np.round(data.X0, 4))
print("noisy derivative measurements X1:", np.round(data.X1, 4))
print("rank condition satisfied:", data.rank_ok)

cert = synthesize_subsystem(
    data, np.zeros((1, 0)), plant.state_set, plant.initial_set,
    plant.unsafe_set, SynthConfig(),
)
print(f"\ndecay rate eps = {cert.eps}, levels gamma = {cert.gamma:.4g}, "
      f"beta = {cert.beta:.4g}, phi = {cert.phi:.4g}")
print("controller nu(x) =", cert.controller[0])

# a-posteriori verification against the hidden truth
margins = check_csbc(plant, cert, samples=5000, seed=0)
print("\nsampled condition margins (>= 0 means satisfied):")
for name, m in margins.items():
    print(f"  {name:18s} {m:+.2e}")
print("independent Gram recheck:", recheck_witnesses(cert)["pass"])

# closed loop: the barrier decays below the certified envelope
traj = integrate(
    lambda x, nu: subsystem_deriv(plant, x, cert.control(x)),
    np.array([0.9]), None, 5.0, 1e-3,
)
B = cert.barrier(traj.states)
env = 1.01 * np.exp(-cert.eps * traj.times) * B[0] + 1e-6
print("\nB(x(t)) below the exp(-eps t) envelope throughout:",
      bool(np.all(B <= env)))
