import numpy as np
import pytest
import scipy.sparse as sp

from certnet.sdp import LmiBlock, LmiProblem, SolveOptions, psd_check, solve


def block_from_mats(f0, fmats, num_vars, var_ids=None):
    """Assemble an LmiBlock from dense per-variable matrices."""
    k = f0.shape[0]
    var_ids = var_ids if var_ids is not None else range(len(fmats))
    coefs = sp.lil_matrix((k * k, num_vars))
    for v, fm in zip(var_ids, fmats):
        coefs[:, v] = np.asarray(fm, dtype=float).reshape(-1, 1)
    return LmiBlock(k, f0, coefs.tocsr())


def make_planted(rng, m=8, dims=(6, 3)):
    """Strictly feasible LMI with a known unique optimum.

    Plant y*, a rank-split slack S* and dual multiplier Y* per block with
    S* Y* = 0, then set c_j = -sum_b <Fj_b, Y*_b> (KKT stationarity) so y*
    is optimal for  max c'y  s.t.  F0 + sum y_j Fj >= 0.
    """
    y_star = rng.standard_normal(m)
    blocks = []
    c = np.zeros(m)
    for k in dims:
        fmats = [np.zeros((k, k)) for _ in range(m)]
        for j in range(m):
            a = rng.standard_normal((k, k))
            fmats[j] = 0.5 * (a + a.T)
        q, _ = np.linalg.qr(rng.standard_normal((k, k)))
        r = max(1, k // 2)
        s_star = q[:, :r] @ np.diag(rng.uniform(0.5, 2.0, r)) @ q[:, :r].T
        y_dual = q[:, r:] @ np.diag(rng.uniform(0.5, 2.0, k - r)) @ q[:, r:].T
        f0 = s_star - sum(y_star[j] * fmats[j] for j in range(m))
        c -= np.array([np.sum(fmats[j] * y_dual) for j in range(m)])
        blocks.append((f0, fmats))
    lmi_blocks = [block_from_mats(f0, fmats, m) for f0, fmats in blocks]
    prob = LmiProblem(m, c, lmi_blocks)
    return prob, y_star, float(c @ y_star)


def test_psd_check_identity():
    ok, lmin = psd_check(np.eye(3))
    assert ok and abs(lmin - 1.0) < 1e-12


def test_psd_check_rejects_small_negative():
    ok, lmin = psd_check(np.diag([1.0, -1e-3]), tol=1e-8)
    assert not ok and lmin == pytest.approx(-1e-3)


def test_psd_check_gram_construction():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 5))
    ok, lmin = psd_check(a.T @ a, tol=1e-10)
    assert ok and lmin >= -1e-10


def test_psd_check_asymmetry_error():
    with pytest.raises(ValueError):
        psd_check(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_maximize_simple_bound():
    # maximize y s.t. diag(1-y, 1-y) >= 0  ->  y* = 1
    f0 = np.eye(2)
    f1 = -np.eye(2)
    prob = LmiProblem(1, np.array([1.0]), [block_from_mats(f0, [f1], 1)])
    sol = solve(prob)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0, abs=1e-5)


def test_feasible_interval_matches_grid_oracle():
    # [[1, y], [y, 1]] >= 0 feasible iff |y| <= 1; compare against a grid scan
    f0 = np.eye(2)
    f1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    lo = hi = None
    for target in (-1.0, 1.0):
        prob = LmiProblem(
            1, np.array([target]), [block_from_mats(f0, [f1], 1)]
        )
        sol = solve(prob)
        assert sol.status == "optimal"
        if target > 0:
            hi = sol.objective_value
        else:
            lo = -sol.objective_value
    grid = np.arange(-2.0, 2.0, 1e-3)
    feas = [y for y in grid if np.linalg.eigvalsh(f0 + y * f1)[0] >= 0]
    assert abs(hi - max(feas)) <= 1e-3 + 1e-6
    assert abs(lo - min(feas)) <= 1e-3 + 1e-6


def test_constant_negative_block_infeasible():
    prob = LmiProblem(
        1,
        np.zeros(1),
        [block_from_mats(np.array([[-1.0]]), [np.zeros((1, 1))], 1)],
    )
    sol = solve(prob)
    assert sol.status == "infeasible"


def test_infeasible_via_conflicting_bounds():
    # y >= 1 and y <= 0 simultaneously
    b1 = block_from_mats(np.array([[-1.0]]), [np.array([[1.0]])], 1)
    b2 = block_from_mats(np.array([[0.0]]), [np.array([[-1.0]])], 1)
    sol = solve(LmiProblem(1, np.zeros(1), [b1, b2]))
    assert sol.status == "infeasible"


def test_planted_optimum_batch():
    rng = np.random.default_rng(42)
    errs = []
    for trial in range(20):
        m = int(rng.integers(4, 12))
        dims = tuple(int(rng.integers(2, 8)) for _ in range(int(rng.integers(1, 3))))
        prob, y_star, opt = make_planted(rng, m=m, dims=dims)
        sol = solve(prob)
        assert sol.status == "optimal", sol.message
        errs.append(abs(sol.objective_value - opt) / (1 + abs(opt)))
    assert max(errs) <= 1e-5


def test_solution_self_consistency():
    rng = np.random.default_rng(1)
    prob, _, _ = make_planted(rng)
    sol = solve(prob)
    assert sol.ok
    for w in sol.block_witnesses:
        scale = max(1.0, np.abs(w).max())
        assert np.linalg.eigvalsh(w)[0] >= -1e-8 * scale
    assert sol.residuals["eq_residual"] <= 1e-7
    assert sol.residuals["gap"] <= 1e-6


def test_monotone_gap_decrease():
    # once both residuals are small the duality gap is meaningful and must
    # not increase over accepted iterations
    rng = np.random.default_rng(9)
    prob, _, _ = make_planted(rng, m=10, dims=(7,))
    sol = solve(prob)
    hist = sol.info["gap_history"]
    feas = [g for g, rp, rd in hist if rp <= 1e-6 and rd <= 1e-6]
    assert len(feas) >= 3
    assert all(b <= a * (1 + 1e-9) for a, b in zip(feas, feas[1:]))


def test_equalities_eliminated_exactly():
    # maximize y1 + y2 s.t. y1 = y2, diag(1 - y1, 1 - y2) >= 0
    f0 = np.eye(2)
    f1 = np.diag([-1.0, 0.0])
    f2 = np.diag([0.0, -1.0])
    eq = sp.csr_matrix(np.array([[1.0, -1.0]]))
    prob = LmiProblem(
        2,
        np.array([1.0, 1.0]),
        [block_from_mats(f0, [f1, f2], 2)],
        eq_A=eq,
        eq_b=np.zeros(1),
    )
    sol = solve(prob)
    assert sol.status == "optimal"
    assert sol.y == pytest.approx([1.0, 1.0], abs=1e-4)
    assert sol.residuals["eq_residual"] <= 1e-10


def test_inconsistent_equalities_reported():
    f0 = np.eye(1)
    prob = LmiProblem(
        2,
        np.zeros(2),
        [block_from_mats(f0, [np.zeros((1, 1)), np.zeros((1, 1))], 2)],
        eq_A=sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])),
        eq_b=np.array([0.0, 1.0]),
    )
    sol = solve(prob)
    assert sol.status == "infeasible"


def test_singleton_elimination_path():
    # q pinned by an equality that only mentions q: q = 2, maximize y
    # s.t. [[q - y]] >= 0  ->  y* = 2
    f0 = np.zeros((1, 1))
    b = block_from_mats(f0, [np.array([[-1.0]]), np.array([[1.0]])], 2)
    eq = sp.csr_matrix(np.array([[0.0, 1.0]]))
    prob = LmiProblem(2, np.array([1.0, 0.0]), [b], eq_A=eq, eq_b=np.array([2.0]))
    sol = solve(prob)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(2.0, abs=1e-5)


def test_marginally_feasible_boundary_solution():
    # only feasible point has a singular slack: y >= 0 and -y >= 0
    b1 = block_from_mats(np.zeros((1, 1)), [np.array([[1.0]])], 1)
    b2 = block_from_mats(np.zeros((1, 1)), [np.array([[-1.0]])], 1)
    sol = solve(LmiProblem(1, np.zeros(1), [b1, b2]))
    assert sol.ok
    assert abs(sol.y[0]) <= 1e-6


def test_debug_json_dump(tmp_path):
    rng = np.random.default_rng(3)
    prob, _, _ = make_planted(rng, m=4, dims=(3,))
    path = tmp_path / "lmi.json"
    prob.to_debug_json(str(path))
    import json

    doc = json.loads(path.read_text())
    assert doc["num_vars"] == 4
    assert doc["block_dims"] == [3]
    assert len(doc["blocks"][0]["f0"]) == 9
