import csv
import io
import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from lrpr.altmin import (
    CSV_HEADER,
    NormalOperator,
    RunConfig,
    compute_noise_floor,
    estimate_phases,
    orthonormalize_B,
    orthonormalize_U,
    run,
    solve_columns,
    solve_U,
    update_B,
    update_U,
)
from lrpr.errors import (
    ConvergenceWarning,
    DegenerateWarning,
    NoRankDetectedError,
    ParameterError,
    RankCollapseError,
    UnderdeterminedError,
)
from lrpr.harness.acceptance import check_update_U_exactness, dense_U_oracle
from lrpr.linalg import phase
from lrpr.metrics import dist, se2
from lrpr.model import GroundTruth, assemble_X, generate_ground_truth
from lrpr.sensing import NoiseSpec, SamplePlan, measure
from lrpr.spectral import KnownRank, Threshold


def _setup(n=12, q=15, r=2, m0=60, m1=40, T=3, field="real", seed=0, eps=0.0):
    gt = generate_ground_truth(n, q, r, 2.0, field, seed)
    ms = measure(gt, SamplePlan(m0, m1, T), NoiseSpec.bounded(eps), master_seed=seed)
    return gt, ms


@pytest.fixture(scope="module")
def desk_run():
    gt, ms = _setup(60, 120, 2, 150, 60, 25, seed=0)
    cfg = RunConfig(T=25, rank_mode=KnownRank(2), kappa=gt.kappa, mu=gt.mu)
    return gt, ms, cfg, run(gt, ms, cfg)


@pytest.mark.parametrize("field", ["real", "complex"])
def test_update_B_with_true_basis(field):
    gt, ms = _setup(r=2, m1=60, field=field, seed=1)
    B_hat, X_hat = update_B(gt.U_star, ms, 1, iters=60)
    G = gt.B_tilde
    for k in range(gt.q):
        assert dist(G[:, k], B_hat[:, k]) <= 1e-6 * np.linalg.norm(G[:, k])
    np.testing.assert_allclose(X_hat, gt.U_star @ B_hat, atol=1e-14)


@pytest.mark.parametrize("field", ["real", "complex"])
def test_update_B_zero_column(field):
    gt, _ = _setup(field=field, seed=2)
    X = assemble_X(gt)
    X[:, 4] = 0
    ms = measure(X, SamplePlan(60, 40, 3), master_seed=2, field=field)
    B_hat, _ = update_B(gt.U_star, ms, 1, iters=20)
    assert np.all(B_hat[:, 4] == 0)


def test_update_B_column_permutation():
    gt, ms = _setup(seed=3)
    y, A = ms.y_partition(1), ms.sensing(1)
    perm = np.random.default_rng(0).permutation(gt.q)
    B1, _ = solve_columns(gt.U_star, y, A, 15, field=ms.field)
    B2, _ = solve_columns(gt.U_star, y[perm], A[perm], 15, field=ms.field)
    np.testing.assert_allclose(B2, B1[:, perm], rtol=1e-12, atol=1e-14)


def test_update_B_underdetermined():
    gt, ms = _setup(r=3, m1=2, seed=4)
    with pytest.raises(UnderdeterminedError):
        update_B(gt.U_star, ms, 1, iters=5)


def test_orthonormalize_B_examples():
    rng = np.random.default_rng(5)
    Q, _ = np.linalg.qr(rng.standard_normal((8, 3)))
    B0 = Q.T
    R, B = orthonormalize_B(B0)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(B, B0, atol=1e-14)
    R2, B2 = orthonormalize_B(2 * B0)
    np.testing.assert_allclose(R2, 2 * np.eye(3), atol=1e-14)
    M = rng.standard_normal((3, 8))
    R3, B3 = orthonormalize_B(M)
    assert np.linalg.norm(M - R3 @ B3) <= 1e-12 * np.linalg.norm(M)
    assert np.linalg.norm(B3 @ B3.T - np.eye(3)) <= 1e-12
    assert np.all(np.diag(R3) > 0)


def test_orthonormalize_U_examples():
    rng = np.random.default_rng(6)
    Z = rng.standard_normal((10, 3)) + 1j * rng.standard_normal((10, 3))
    U0, _ = orthonormalize_U(Z)
    U, R = orthonormalize_U(U0)
    np.testing.assert_allclose(U, U0, atol=1e-14)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-14)
    U2, R2 = orthonormalize_U(5 * U0)
    np.testing.assert_allclose(R2, 5 * np.eye(3), atol=1e-13)
    U3, R3 = orthonormalize_U(Z)
    assert np.linalg.norm(Z - U3 @ R3) <= 1e-12 * np.linalg.norm(Z)
    assert np.allclose(np.diag(R3).imag, 0) and np.all(np.diag(R3).real > 0)


def test_orthonormalize_rank_collapse():
    with pytest.raises(RankCollapseError):
        orthonormalize_B(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]))
    with pytest.raises(RankCollapseError):
        orthonormalize_U(np.zeros((4, 2)))


def test_estimate_phases_real_signs():
    gt, ms = _setup(seed=7)
    C = estimate_phases(assemble_X(gt), ms, 1)
    assert C.shape == (ms.plan.m1, gt.q)
    assert set(np.unique(C).tolist()) <= {-1.0, 1.0}


@pytest.mark.parametrize("field", ["real", "complex"])
def test_estimate_phases_exact_for_truth(field):
    gt, ms = _setup(field=field, seed=8)
    X = assemble_X(gt)
    t = 2
    C = estimate_phases(X, ms, t)
    A = ms.sensing(ms.plan.T + t)
    y = ms.y_partition(ms.plan.T + t)
    proj = np.einsum("knm,nk->mk", np.conj(A), X)
    np.testing.assert_allclose(C * y.T, proj, rtol=0, atol=1e-12)


def test_phase_convention():
    assert phase(1 + 1j) == pytest.approx((1 + 1j) / math.sqrt(2), abs=1e-15)
    assert phase(0j) == 1


@pytest.mark.parametrize("seed", [0, 1])
def test_update_U_exactness(seed):
    err_cg, err_dense, gap = check_update_U_exactness(seed)
    assert err_cg <= 1e-8 and err_dense <= 1e-8 and gap <= 1e-8


def test_update_U_matches_dense_oracle():
    gt, ms = _setup(n=6, q=10, r=2, m1=8, seed=9)
    rng = np.random.default_rng(1)
    B = np.linalg.qr(rng.standard_normal((10, 2)))[0].T
    C = phase(rng.standard_normal((8, 10)))
    U_cg = update_U(ms, 1, C, B, ls_tol=1e-13, ls_max_iters=500)
    U_ref = dense_U_oracle(ms, ms.plan.T + 1, C, B)
    np.testing.assert_allclose(U_cg, U_ref, rtol=0, atol=1e-9 * np.linalg.norm(U_ref))


def test_update_U_single_row_B():
    gt, ms = _setup(n=6, q=10, r=2, m1=8, seed=10)
    B = np.zeros((2, 10))
    B[0] = np.ones(10) / math.sqrt(10)
    C = estimate_phases(assemble_X(gt), ms, 1)
    U_hat = update_U(ms, 1, C, B)
    assert np.linalg.norm(U_hat[:, 0]) > 0
    assert np.all(U_hat[:, 1] == 0)


@pytest.mark.parametrize("field", ["real", "complex"])
def test_normal_operator_self_adjoint(field):
    gt, ms = _setup(field=field, seed=11)
    rng = np.random.default_rng(2)
    B = rng.standard_normal((2, gt.q)) + (1j * rng.standard_normal((2, gt.q)) if field == "complex" else 0)
    op = NormalOperator(ms.sensing(4), B)
    shape = (gt.n, 2)
    W1 = rng.standard_normal(shape) + (1j * rng.standard_normal(shape) if field == "complex" else 0)
    W2 = rng.standard_normal(shape) + (1j * rng.standard_normal(shape) if field == "complex" else 0)
    lhs, rhs = np.vdot(W1, op(W2)), np.vdot(op(W1), W2)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
    assert np.vdot(W1, op(W1)).real >= 0


def test_solve_U_warns_when_capped():
    gt, ms = _setup(seed=12)
    B = gt.V_star.T
    C = estimate_phases(assemble_X(gt), ms, 1)
    tau = ms.plan.T + 1
    with pytest.warns(ConvergenceWarning) as rec:
        _, resid = solve_U(ms.y_partition(tau), ms.sensing(tau), C, B, ls_tol=1e-12, ls_max_iters=1)
    assert rec[0].message.residual == resid > 1e-12


def test_run_T0_gives_init_row():
    gt, ms = _setup(T=2, seed=13)
    rep = run(gt, ms, RunConfig(T=0, rank_mode=KnownRank(2)))
    assert [r["iter"] for r in rep.rows] == [0]


def test_run_trajectory_length_and_partial_T():
    gt, ms = _setup(T=4, seed=14)
    rep = run(gt, ms, RunConfig(T=3, rank_mode=KnownRank(2)))
    assert len(rep.rows) == 4
    with pytest.raises(ParameterError):
        run(gt, ms, RunConfig(T=5, rank_mode=KnownRank(2)))


def test_run_desk_instance(desk_run):
    gt, ms, cfg, rep = desk_run
    assert rep.final["matdist_rel"] <= 1e-8
    assert rep.final["converged"] and rep.final["r_hat"] == 2
    est = rep.estimate
    assert np.linalg.norm(est.U.T @ est.U - np.eye(2)) <= 1e-10
    assert np.linalg.norm(est.B @ est.B.T - np.eye(2)) <= 1e-8
    assert np.linalg.norm(est.X_hat - est.U @ est.B_hat) <= 1e-12 * np.linalg.norm(est.X_hat)


def test_matdist_sef_coupling(desk_run):
    gt, _, _, rep = desk_run
    norm_X = np.linalg.norm(gt.sigma)
    for row in rep.rows:
        assert row["matdist_rel"] * norm_X <= 3 * row["sef"] * gt.sigma_max


def test_run_is_bit_deterministic():
    gt, ms = _setup(T=4, seed=15)
    cfg = RunConfig(T=4, rank_mode=KnownRank(2))
    a, b = run(gt, ms, cfg), run(gt, ms, cfg)
    assert np.array_equal(a.sef_trajectory(), b.sef_trajectory())
    assert np.array_equal(a.estimate.X_hat, b.estimate.X_hat)


@pytest.mark.parametrize("field,z", [("real", -1.0), ("complex", 1j), ("complex", np.exp(0.4j))])
def test_global_phase_invariance(field, z):
    gt, ms = _setup(T=4, field=field, seed=16)
    gz = GroundTruth(gt.n, gt.q, gt.r, field, z * gt.U_star, gt.sigma, gt.V_star)
    msz = measure(gz, ms.plan, master_seed=ms.master_seed)
    if z in (-1.0, 1j):
        # multiplication by -1 or j is exact, so y must not move at all
        X = assemble_X(gt)
        raw = measure(X, ms.plan, master_seed=ms.master_seed, field=field)
        flipped = measure(z * X, ms.plan, master_seed=ms.master_seed, field=field)
        assert all(np.array_equal(a, b) for a, b in zip(raw.y, flipped.y))
    cfg = RunConfig(T=4, rank_mode=KnownRank(2))
    a, b = run(gt, ms, cfg), run(gz, msz, cfg)
    np.testing.assert_allclose(a.sef_trajectory(), b.sef_trajectory(), rtol=0, atol=1e-8)


def test_noisy_plateau():
    gt, ms = _setup(60, 120, 2, 150, 60, 25, seed=0, eps=1e-3)
    rep = run(gt, ms, RunConfig(T=25, rank_mode=KnownRank(2), kappa=gt.kappa, mu=gt.mu))
    tail = rep.sef_trajectory()[-5:]
    assert tail.max() <= 2 * tail.min()
    assert tail.max() <= 10 * compute_noise_floor(ms, gt)


def test_noise_floor_noiseless_and_uniform():
    gt, ms = _setup(seed=17)
    assert compute_noise_floor(ms, gt) == 0.0
    _, noisy = _setup(seed=17, eps=1e-2)
    # a huge eps_v switches off the first ratio
    val = compute_noise_floor(noisy, gt, eps_v=1e12)
    assert val == pytest.approx(1e-2 / math.sqrt(40), rel=1e-12)


def test_noise_floor_three_column_toy():
    U = np.eye(3)[:, :1]
    V = np.ones((3, 1)) / math.sqrt(3)
    gt = GroundTruth(3, 3, 1, "real", U, np.array([2.0]), V)
    ms = measure(gt, SamplePlan(10, 4, 1), master_seed=0)
    norms = np.zeros((3, 3))
    norms[1] = [0.1, 0.0, 0.3]
    norms[2] = [0.2, 0.05, 0.0]
    ms = replace(ms, noise_norms=norms)
    col = 2.0 / math.sqrt(3)
    eps_v = 0.5
    cands = []
    for s in (1, 2):
        cands.append(math.sqrt(sum(v * v for v in norms[s])) / (eps_v * math.sqrt(4) * 2.0))
        cands.append(max(norms[s]) / (math.sqrt(4) * col))
    assert compute_noise_floor(ms, gt, eps_v=eps_v) == pytest.approx(max(cands), rel=1e-14)


def test_noise_floor_zero_column_warns():
    # V_star = leading identity columns leaves columns r.. of X* at zero
    gt = GroundTruth(5, 4, 2, "real", np.eye(5)[:, :2], np.array([1.0, 0.5]), np.eye(4)[:, :2])
    ms = measure(gt, SamplePlan(10, 5, 1), NoiseSpec.bounded(1e-3), master_seed=1)
    with pytest.warns(DegenerateWarning, match="zero-norm"):
        val = compute_noise_floor(ms, gt, eps_v=1e12)
    assert val == pytest.approx(1e-3 / math.sqrt(5), rel=1e-12)


def test_errors_carry_partial_report():
    gt, ms = _setup(seed=19)
    with pytest.raises(NoRankDetectedError) as info:
        run(gt, ms, RunConfig(T=2, rank_mode=Threshold(1e9)))
    part = info.value.partial_report
    assert part.rows == [] and "error" in part.final


def test_run_without_ground_truth():
    gt, ms = _setup(T=2, seed=20)
    rep = run(None, ms, RunConfig(T=2, rank_mode=KnownRank(2)))
    assert len(rep.rows) == 3 and all(math.isnan(r["sef"]) for r in rep.rows)
    assert rep.final["converged"] is None
    assert rep.to_dict()["rows"][0]["sef"] is None


def test_reuse_mode_runs():
    gt = generate_ground_truth(12, 15, 2, 2.0, "real", 21)
    ms = measure(gt, SamplePlan(80, 40, 6, reuse=True), master_seed=21)
    rep = run(gt, ms, RunConfig(T=6, rank_mode=KnownRank(2)))
    assert len(rep.rows) == 7 and rep.provenance["plan"]["reuse"] is True


def test_run_config_round_trip_and_schedule():
    cfg = RunConfig(T=7, rank_mode=Threshold(0.25), kappa=2.0, mu=1.5, t_pr_growth=2.0)
    back = RunConfig.from_dict(cfg.to_dict())
    assert back == cfg
    assert RunConfig.from_dict(RunConfig(rank_mode=KnownRank(3)).to_dict()).rank_mode == KnownRank(3)
    # base 10 + ceil(2 log2(r kappa)) with r=2, kappa=2 -> 14
    assert cfg.t_pr(0, 2) == 14 and cfg.t_pr(3, 2) == 20
    assert RunConfig(t_pr_base=5, t_pr_growth=0.5).t_pr(3, 2) == 7
    with pytest.raises(ParameterError):
        RunConfig.from_dict({"bogus": 1})
    for bad in ({"ls_tol": 0.0}, {"ls_tol": 1.0}, {"t_pr_base": 0}, {"T": -1}):
        with pytest.raises(ParameterError):
            RunConfig(**bad)


def test_csv_and_json(tmp_path):
    gt, ms = _setup(T=2, seed=22)
    rep = run(gt, ms, RunConfig(T=2, rank_mode=KnownRank(2)))
    buf = io.StringIO()
    rep.write_csv(buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == CSV_HEADER == ["iter", "se2", "sef", "matdist_rel", "t_pr_used", "wall_time_ms"]
    assert len(rows) == 4 and "e" in rows[1][2]
    rep.dump_json(tmp_path / "r.json")
    assert (tmp_path / "r.json").stat().st_size > 0


def test_warm_start_toggle():
    gt, ms = _setup(T=4, seed=23)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cold = run(gt, ms, RunConfig(T=4, rank_mode=KnownRank(2), warm_start=False))
    assert cold.final["sef"] < cold.rows[0]["sef"]
