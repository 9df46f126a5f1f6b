import numpy as np
import pytest
from scipy.optimize import brentq

from robustmimo import solvers
from robustmimo.amse import Direction, amse_downlink
from robustmimo.errors import AlgorithmError, ConvergenceError, InvalidParameterError
from robustmimo.model import SystemConfig, make_instance, sample_instance
from robustmimo.solvers import (algorithm_one, algorithm_two, case1_objective,
                                case1_reference, init_transceiver, naive_design,
                                perfect_design, solve)

CASE1 = SystemConfig(rho_b=0.0, sigma_e2=(0.0101, 0.0101))


def _monotone(history, slack=1e-10):
    h = np.asarray(history)
    return bool(np.all(np.diff(h) <= slack * np.abs(h[:-1])))


def test_init_transceiver(cfg):
    inst = sample_instance(cfg, 0)
    tx = init_transceiver(inst, cfg)
    assert tx.direction == Direction.UPLINK
    for q in tx.power:
        np.testing.assert_array_equal(q, [2.5, 2.5])
    for F in tx.G + tx.U:
        np.testing.assert_allclose(np.linalg.norm(F, axis=0), 1.0, rtol=1e-12)
    again = init_transceiver(inst, cfg)
    for a, b in zip(tx.U + tx.G, again.U + again.G):
        np.testing.assert_array_equal(a, b)
    for U, H in zip(tx.U, inst.Hhat):
        _, _, Vh = np.linalg.svd(H)
        np.testing.assert_allclose(np.abs(U.conj().T @ Vh.conj().T[:, :2]), np.eye(2),
                                   atol=1e-12)


def test_init_rank_deficient_channel():
    cfg = SystemConfig(N=4, K=1, M=(3,), S=(2,), tau=(1,), eta=(1,), sigma_e2=(0.0,))
    h = np.array([1, 2j, 0.5, -1])[:, None]
    H = h @ np.array([[1, 0.3, -0.2j]])  # rank one
    inst = make_instance([H], [np.eye(4)], [np.eye(3)], 0.0)
    U = init_transceiver(inst, cfg).U[0]
    np.testing.assert_allclose(U.conj().T @ U, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(H @ U[:, 1]), 0.0, atol=1e-12)


@pytest.mark.parametrize("problem", ["wsum", "minmax"])
def test_histories_monotone_and_feasible(cfg, problem):
    for seed in range(6):
        c = cfg.with_snr(5.0 * seed)
        tr = solve(sample_instance(c, seed), c, problem)
        assert tr.converged
        assert _monotone(tr.objective_history)
        assert tr.final.direction == Direction.DOWNLINK
        assert tr.final.total_power() == pytest.approx(c.P_max, rel=1e-9)
        assert tr.final_uplink.total_power() == pytest.approx(c.P_max, rel=1e-9)
        # the last recorded (uplink) objective equals the downlink report
        level = (tr.final_report.weighted_sum if problem == "wsum"
                 else tr.final_report.max_weighted)
        assert level == pytest.approx(tr.objective_history[-1], rel=1e-9)


def test_error_free_robust_equals_perfect(cfg):
    c = cfg.replace(sigma_e2=0.0).with_snr(15)
    inst = sample_instance(c, 4)
    a, b = algorithm_one(inst, c), perfect_design(inst, c)
    np.testing.assert_array_equal(a.objective_history, b.objective_history)
    n = naive_design(inst, c)
    assert n.final_report.sum == a.final_report.sum


def test_naive_evaluated_with_true_statistics(cfg):
    c = cfg.with_snr(25)
    inst = sample_instance(c, 2)
    n = naive_design(inst, c)
    ref = amse_downlink(inst, n.final, c.sigma2, c.tau, c.eta)
    assert n.final_report.sum == ref.sum
    optimistic = amse_downlink(inst.perfect(), n.final, c.sigma2)
    assert optimistic.sum < ref.sum
    assert algorithm_one(inst, c).final_report.sum <= ref.sum


def test_minmax_symmetric_users():
    rng = np.random.default_rng(5)
    H = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    cfg = SystemConfig(sigma_e2=(0.02, 0.02), rho_b=0.0).with_snr(10)
    inst = make_instance([H, H], [np.eye(4)] * 2, [np.eye(2)] * 2, 0.02)
    tr = algorithm_two(inst, cfg)
    w = tr.final_report.per_user_trace / np.asarray(cfg.eta)
    assert w[0] == pytest.approx(w[1], rel=1e-6)


def test_minmax_final_equalization(cfg):
    c = cfg.replace(eta=(0.3, 0.6)).with_snr(20)
    tr = algorithm_two(sample_instance(c, 9), c)
    w = tr.final_report.per_user_trace / np.asarray(c.eta)
    assert np.ptp(w) <= 1e-6 * w.max()


def test_errors_carry_iteration(cfg, monkeypatch):
    def boom(*args, **kwargs):
        raise ConvergenceError("stalled", residual=1.0)

    monkeypatch.setattr(solvers, "gp_power", boom)
    with pytest.raises(AlgorithmError) as info:
        algorithm_one(sample_instance(cfg, 0), cfg)
    assert info.value.iteration == 1
    with pytest.raises(ValueError):
        solve(sample_instance(cfg, 0), cfg, "maxmin")


def _waterfilling(lam, P, s2):
    def power(nu):
        return np.maximum(s2 / np.sqrt(nu * lam) - s2 / lam, 0.0)
    nu = brentq(lambda v: power(v).sum() - P, 1e-300, lam.max() / s2 ** 2 * 10, xtol=1e-300,
                rtol=1e-15, maxiter=1000)
    p = power(nu)
    return p, float(np.sum(1.0 / (1.0 + lam * p / s2)))


@pytest.mark.parametrize("snr", [0.0, 10.0, 25.0])
def test_case1_reference_waterfilling(snr):
    rng = np.random.default_rng(int(snr))
    N = 3
    cfg = SystemConfig(N=N, K=1, M=(N,), S=(N,), tau=(1,), eta=(1,), sigma_e2=(0.0,),
                       rho_b=0.0).with_snr(snr)
    H = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    inst = make_instance([H], [np.eye(N)], [np.eye(N)], 0.0)
    res = case1_reference(inst, cfg)
    lam = np.linalg.eigvalsh(H.conj().T @ H)
    p, obj = _waterfilling(lam, cfg.P_max, cfg.sigma2)
    assert res.objective == pytest.approx(obj, rel=1e-7)
    w = np.sort(np.linalg.eigvalsh(res.Ubar[0]))
    np.testing.assert_allclose(w, np.sort(p), atol=1e-4 * cfg.P_max)


def test_case1_small_budget_limit():
    cfg = CASE1.replace(P_max=1e-9, sigma2=1.0)
    inst = sample_instance(cfg, 1)
    res = case1_reference(inst, cfg)
    assert res.objective == pytest.approx(cfg.N, rel=1e-8)
    assert res.sum_amse == pytest.approx(sum(cfg.S), rel=1e-8)


def test_case1_invariants_and_recovery():
    cfg = CASE1.with_snr(20)
    inst = sample_instance(cfg, 3)
    res = case1_reference(inst, cfg)
    assert sum(np.trace(U).real for U in res.Ubar) == pytest.approx(cfg.P_max, rel=1e-8)
    for U in res.Ubar:
        w = np.linalg.eigvalsh(U)
        assert w.min() >= -1e-10 * w.sum()
    assert res.rank_ok
    assert res.gap <= 1e-7 * res.objective
    C = 0.0101 / 1.0101 * cfg.P_max * np.eye(4) + cfg.sigma2 * np.eye(4)
    assert case1_objective(inst, res.Ubar, C) == pytest.approx(res.objective, rel=1e-12)
    rec = amse_downlink(inst, res.recovered, cfg.sigma2)
    assert rec.sum == pytest.approx(res.sum_amse, rel=1e-6)
    assert res.recovered.total_power() == pytest.approx(cfg.P_max, rel=1e-9)


@pytest.mark.parametrize("snr", [0.0, 15.0, 25.0])
def test_algorithm_one_reaches_case1_reference(snr):
    cfg = CASE1.with_snr(snr)
    gaps = []
    for seed in range(5):
        inst = sample_instance(cfg, seed)
        ref = case1_reference(inst, cfg)
        tr = algorithm_one(inst, cfg)
        gaps.append((tr.final_report.sum - ref.sum_amse) / ref.sum_amse)
    assert min(gaps) >= -1e-6
    assert np.mean(gaps) <= 0.02


def test_case1_reference_rejects_general_instances(cfg):
    inst = sample_instance(cfg, 0)
    with pytest.raises(InvalidParameterError):
        case1_reference(inst, cfg)
    with pytest.raises(InvalidParameterError):
        case1_reference(sample_instance(CASE1, 0), CASE1.replace(tau=(1.0, 2.0)))
