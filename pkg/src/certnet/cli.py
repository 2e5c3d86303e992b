"""Batch pipeline driver: collect, synthesize, compose, simulate, verify.

Config is TOML (or JSON with the same schema):

    [benchmark]
    name = "duffing_ring"
    q = 100                # optional resize of a homogeneous network

    [data]
    samples = 20           # T; tau, noise_bound, excitation_amp, init_frac
    seed = 42

    [synth]
    eps_grid = [0.99, 0.9, 0.5, 0.1, 0.05, 0.01]

    [sim]
    t_end = 5.0
    dt = 0.001
    monitored = 120

    [out]
    dir = "runs/duffing"

Exit codes: 0 pass, 1 operational error, 2 synthesis/composition infeasible.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .compose import (
    build_gain_matrix,
    check_compose,
    expand_certificates,
    network_cbc,
)
from .data import DataConfig, collect_network
from .plants import Benchmark, builtin_benchmarks, full_D, simulate_network, with_q
from .synth import CertificateError, CsbcCertificate, SynthConfig, synthesize_subsystem
from .verify import check_csbc, check_decay, check_safety, recheck_witnesses


def atomic_write(path: str, payload: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        if path.endswith(".json"):
            return json.load(fh)
        return tomllib.load(fh)


def resolve_benchmark(cfg: dict) -> Benchmark:
    name = cfg.get("benchmark", {}).get("name", "duffing_ring")
    benches = builtin_benchmarks()
    if name not in benches:
        raise KeyError(
            f"unknown benchmark {name!r}; available: {sorted(benches)}"
        )
    bench = benches[name]
    q = cfg.get("benchmark", {}).get("q")
    if q:
        bench = with_q(bench, int(q))
    return bench


def data_config(bench: Benchmark, cfg: dict, seed: int) -> DataConfig:
    d = cfg.get("data", {})
    return DataConfig(
        samples=int(d.get("samples", bench.samples)),
        sample_interval=float(d.get("tau", bench.sample_interval)),
        noise_bound=float(d.get("noise_bound", bench.noise_bound)),
        excitation_amp=float(d.get("excitation_amp", bench.excitation_amp)),
        init_frac=float(d.get("init_frac", bench.init_frac)),
        seed=int(d.get("seed", seed)),
        probe=bench.probe,
    )


def synth_config(cfg: dict, bench: Benchmark | None = None) -> SynthConfig:
    s = dict(bench.synth) if bench is not None else {}
    s.update(cfg.get("synth", {}))
    kwargs = {}
    if "eps_grid" in s:
        kwargs["eps_grid"] = tuple(s["eps_grid"])
    for key in ("deg_H", "mult_deg", "level_scale", "shape_floor", "pi_cap",
                "shape_grid", "max_ctrl_gain"):
        if key in s:
            kwargs[key] = tuple(s[key]) if key == "shape_grid" else s[key]
    return SynthConfig(**kwargs)


def write_manifest(outdir: str, cfg: dict, seed: int, extra: dict | None = None):
    import scipy

    doc = {
        "config": cfg,
        "seed": seed,
        "versions": {
            "certnet": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    if extra:
        doc.update(extra)
    atomic_write(os.path.join(outdir, "run_manifest.json"), json.dumps(doc, indent=1))


def run_pipeline(bench: Benchmark, dcfg: DataConfig, scfg: SynthConfig,
                 seed_retries: int = 3, expand_retries: int = 2, log=print):
    """Algorithm main loop: collect, per-template synthesis, composition.

    Failures (infeasibility, bad level sets, too-stiff controllers) first
    retry with a fresh trajectory at the same length, then with the sample
    count expanded by half again.
    """
    from dataclasses import replace

    net = bench.network
    schedule = [
        (dcfg.samples, dcfg.seed + k) for k in range(seed_retries + 1)
    ]
    T = dcfg.samples
    for k in range(expand_retries):
        T = math.ceil(T * 1.5)
        schedule.append((T, dcfg.seed + seed_retries + 1 + k))
    last_err = None
    for attempt, (T, seed) in enumerate(schedule):
        attempt_cfg = replace(dcfg, samples=T, seed=seed)
        try:
            t0 = time.perf_counter()
            data = collect_network(net, attempt_cfg)
            log(f"collected {len(data)} template trajectories "
                f"(T={T}) in {time.perf_counter()-t0:.1f}s")
            certs_t = {}
            for rep, td in sorted(data.items()):
                model = net.model_of(rep)
                t0 = time.perf_counter()
                cert = synthesize_subsystem(
                    td, full_D(net, rep), model.state_set, model.initial_set,
                    model.unsafe_set, scfg,
                    template_key=str(net.assignment[rep - 1]),
                )
                log(f"subsystem {rep}: eps={cert.eps} gamma={cert.gamma:.4g} "
                    f"beta={cert.beta:.4g} rho={cert.rho:.3g} "
                    f"({time.perf_counter()-t0:.1f}s)")
                certs_t[net.assignment[rep - 1]] = cert
            certs = expand_certificates(net, certs_t)
            eps_hat, delta = build_gain_matrix(certs, net)
            report = check_compose(eps_hat, delta, certs)
            if report.passed:
                log(f"composition passed: gamma={report.gamma:.4g} "
                    f"beta={report.beta:.4g} eps={report.eps:.4g}")
                return certs_t, certs, report, attempt_cfg
            last_err = f"composition failed: {report.failure_reason}"
        except (CertificateError, RuntimeError) as exc:
            last_err = str(exc)
        if attempt + 1 < len(schedule):
            log(f"attempt {attempt + 1} failed ({last_err}); retrying "
                f"with T={schedule[attempt + 1][0]}, "
                f"seed={schedule[attempt + 1][1]}")
    raise CertificateError("infeasible", last_err or "unknown")


def monitored_indices(Q: int, count: int) -> np.ndarray:
    count = min(count, Q)
    return np.unique(np.linspace(0, Q - 1, count).astype(int))


def cmd_synthesize(args) -> int:
    cfg = load_config(args.config)
    if args.benchmark:
        cfg.setdefault("benchmark", {})["name"] = args.benchmark
    if args.q:
        cfg.setdefault("benchmark", {})["q"] = args.q
    if args.samples:
        cfg.setdefault("data", {})["samples"] = args.samples
    seed = args.seed if args.seed is not None else cfg.get("data", {}).get("seed", 0)
    cfg.setdefault("data", {})["seed"] = seed
    bench = resolve_benchmark(cfg)
    dcfg = data_config(bench, cfg, seed)
    scfg = synth_config(cfg, bench)
    outdir = args.out or cfg.get("out", {}).get("dir", "certnet_run")
    os.makedirs(os.path.join(outdir, "certificates"), exist_ok=True)

    try:
        certs_t, certs, report, used_cfg = run_pipeline(bench, dcfg, scfg)
    except CertificateError as exc:
        print(f"synthesis infeasible: {exc}", file=sys.stderr)
        write_manifest(outdir, cfg, seed, {"status": "infeasible", "error": str(exc)})
        return 2

    net = bench.network
    files = {}
    for t, cert in certs_t.items():
        rep = net.representative(t)
        fname = os.path.join("certificates", f"{rep}.json")
        atomic_write(os.path.join(outdir, fname), json.dumps(cert.to_json()))
        files[str(t)] = fname
    atomic_write(
        os.path.join(outdir, "templates.json"),
        json.dumps(
            {
                "benchmark": net.name,
                "Q": net.Q,
                "files": files,
                "assignment": net.assignment.tolist(),
                "samples_used": used_cfg.samples,
            }
        ),
    )
    report.to_json(os.path.join(outdir, "compose_report.json"))
    write_manifest(outdir, cfg, seed, {"status": "pass"})
    print(f"synthesized {len(certs_t)} template certificate(s) -> {outdir}")
    return 0


def load_run(outdir: str):
    with open(os.path.join(outdir, "templates.json")) as fh:
        idx = json.load(fh)
    certs_t = {
        int(t): CsbcCertificate.load(os.path.join(outdir, fname))
        for t, fname in idx["files"].items()
    }
    return idx, certs_t


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.benchmark:
        cfg.setdefault("benchmark", {})["name"] = args.benchmark
    outdir = args.out or cfg.get("out", {}).get("dir", "certnet_run")
    idx, certs_t = load_run(outdir)
    cfg.setdefault("benchmark", {}).setdefault("name", idx["benchmark"])
    cfg["benchmark"].setdefault("q", idx["Q"])
    bench = resolve_benchmark(cfg)
    net = bench.network
    sim = cfg.get("sim", {})
    t_end = float(sim.get("t_end", 5.0))
    dt = float(sim.get("dt", 1e-3))
    n_monitored = int(sim.get("monitored", 120))
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    open_loop = bool(args.open_loop or sim.get("open_loop", False))

    certs = expand_certificates(net, certs_t)
    eps_hat, delta = build_gain_matrix(certs, net)
    report = check_compose(eps_hat, delta, certs)

    rng = np.random.default_rng(seed)
    x0 = np.stack(
        [net.model_of(i + 1).initial_set.sample(rng, 1)[0] for i in range(net.Q)]
    )
    controller = None
    B_series = []
    cbc = None
    if not open_loop:
        if not report.passed:
            print("composition does not pass; cannot simulate closed loop",
                  file=sys.stderr)
            return 2
        cbc = network_cbc(certs, report, net)
        controller = cbc.control
    mon = monitored_indices(net.Q, n_monitored)

    def observer(k, t, X):
        return cbc.value(X) if cbc is not None else None

    t0 = time.perf_counter()
    res = simulate_network(
        net, x0, controller, t_end=t_end, dt=dt, record_idx=mon,
        observer=observer if cbc is not None else None,
    )
    wall = time.perf_counter() - t0

    unsafe_sets = [net.model_of(int(i) + 1).unsafe_set for i in mon]
    verdicts = check_safety(res.times, res.recorded, unsafe_sets)
    decay_violations = []
    if cbc is not None and not res.blew_up:
        Bt = np.array(res.observed)
        decay_violations = check_decay(res.times, Bt, report.eps)

    for pos, i in enumerate(mon):
        labels = [f"x{k + 1}" for k in range(net.n)]
        header = "t," + ",".join(labels)
        data = np.column_stack([res.times, res.recorded[:, pos, :]])
        np.savetxt(
            os.path.join(outdir, f"traj_{int(i) + 1}.csv"),
            data, delimiter=",", header=header, comments="",
        )
    doc = {
        "open_loop": open_loop,
        "t_end": t_end,
        "dt": dt,
        "wall_time_s": wall,
        "blew_up": res.blew_up,
        "monitored": [int(i) + 1 for i in mon],
        "unsafe_entries": {
            str(int(i) + 1): v for i, v in zip(mon, verdicts) if v is not None
        },
        "clean": all(v is None for v in verdicts) and not res.blew_up,
        "num_decay_violations": len(decay_violations),
    }
    atomic_write(os.path.join(outdir, "sim_report.json"), json.dumps(doc, indent=1))
    print(
        f"simulated {'open' if open_loop else 'closed'} loop for {t_end}s: "
        f"{'clean' if doc['clean'] else 'violations recorded'}"
    )
    return 0


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    if args.benchmark:
        cfg.setdefault("benchmark", {})["name"] = args.benchmark
    outdir = args.out or cfg.get("out", {}).get("dir", "certnet_run")
    try:
        idx, certs_t = load_run(outdir)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot load certificates: {exc}", file=sys.stderr)
        return 1
    cfg.setdefault("benchmark", {}).setdefault("name", idx["benchmark"])
    cfg["benchmark"].setdefault("q", idx["Q"])
    bench = resolve_benchmark(cfg)
    net = bench.network
    seed = args.seed if args.seed is not None else 0
    samples = int(cfg.get("verify", {}).get("samples", 10_000))

    all_ok = True
    doc = {"templates": {}}
    for t, cert in sorted(certs_t.items()):
        rep = net.representative(t)
        model = net.model_of(rep)
        gram = recheck_witnesses(cert)
        margins = check_csbc(model, cert, samples=samples, seed=seed)
        ok = gram["pass"] and all(m >= -1e-6 for m in margins.values())
        all_ok &= ok
        doc["templates"][str(t)] = {
            "subsystem": rep,
            "margins": {k: float(v) for k, v in margins.items()},
            "gram": {
                "pass": gram["pass"],
                "eq16_residual": gram["eq16_residual"],
                "worst_residual": gram["worst_residual"],
                "worst_lambda_min": gram["worst_lambda_min"],
            },
            "pass": ok,
        }
    certs = expand_certificates(net, certs_t)
    eps_hat, delta = build_gain_matrix(certs, net)
    report = check_compose(eps_hat, delta, certs)
    doc["compose"] = report.summary()
    doc["pass"] = bool(all_ok and report.passed)
    atomic_write(os.path.join(outdir, "verify_report.json"), json.dumps(doc, indent=1))
    print(f"verification {'passed' if doc['pass'] else 'FAILED'}")
    return 0 if doc["pass"] else 2


def cmd_bench(args) -> int:
    """Composition + simulation wall time across network sizes."""
    cfg = load_config(args.config)
    if args.benchmark:
        cfg.setdefault("benchmark", {})["name"] = args.benchmark
    outdir = args.out or cfg.get("out", {}).get("dir", "certnet_run")
    os.makedirs(outdir, exist_ok=True)
    q_list = [int(q) for q in (args.q_list or "250,500,1000,2000").split(",")]
    seed = args.seed if args.seed is not None else 0
    sim = cfg.get("sim", {})
    t_end = float(sim.get("t_end", 1.0))
    dt = float(sim.get("dt", 1e-3))

    cfg.setdefault("benchmark", {}).setdefault("name", "duffing_ring")
    base_cfg = dict(cfg)
    base_cfg["benchmark"] = dict(cfg["benchmark"])
    base_cfg["benchmark"]["q"] = q_list[0]
    bench0 = resolve_benchmark(base_cfg)
    dcfg = data_config(bench0, cfg, seed)
    scfg = synth_config(cfg, bench0)
    certs_t, _, _, _ = run_pipeline(bench0, dcfg, scfg)

    rows = []
    for q in q_list:
        b = resolve_benchmark(
            {**cfg, "benchmark": {**cfg["benchmark"], "q": q}}
        )
        net = b.network
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        certs = expand_certificates(net, certs_t)
        eps_hat, delta = build_gain_matrix(certs, net)
        report = check_compose(eps_hat, delta, certs)
        cbc = network_cbc(certs, report, net)
        x0 = np.stack(
            [net.model_of(i + 1).initial_set.sample(rng, 1)[0] for i in range(q)]
        )
        simulate_network(net, x0, cbc.control, t_end=t_end, dt=dt)
        rows.append({"Q": q, "wall_s": time.perf_counter() - t0,
                     "pass": report.passed})
        print(f"Q={q}: {rows[-1]['wall_s']:.2f}s")
    qs = np.array([r["Q"] for r in rows], dtype=float)
    ts = np.array([r["wall_s"] for r in rows])
    coef = np.polyfit(qs, ts, 1)
    pred = np.polyval(coef, qs)
    ss_res = float(np.sum((ts - pred) ** 2))
    ss_tot = float(np.sum((ts - ts.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    doc = {"rows": rows, "linear_fit": {"slope": coef[0], "intercept": coef[1],
                                        "r_squared": r2}, "t_end": t_end, "dt": dt}
    atomic_write(os.path.join(outdir, "bench_report.json"), json.dumps(doc, indent=1))
    print(f"linear fit R^2 = {r2:.4f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="certnet",
        description="data-driven compositional safety certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("synthesize", cmd_synthesize),
        ("simulate", cmd_simulate),
        ("verify", cmd_verify),
        ("bench", cmd_bench),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--benchmark", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--open-loop", action="store_true")
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--q", type=int, default=None)
        if name == "bench":
            p.add_argument("--q-list", default=None)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
