from dataclasses import replace

import numpy as np
import pytest
from conftest import random_case, scalar_instance

from robustmimo.amse import (Direction, Transceiver, amse_downlink, amse_uplink, gamma_dl,
                             gamma_ul, instantaneous_mse_dl, instantaneous_mse_ul,
                             mamse_rx_downlink, mamse_rx_uplink)
from robustmimo.duality import random_transceiver
from robustmimo.errors import ContractError, SingularPowerError
from robustmimo.model import (draw_true_channel, exp_correlation, make_instance,
                              random_instance)


def _scalar_tx(g, u, a, p, direction):
    return Transceiver(([[g]],), ([[u]],), ([a],), ([p],), direction)


def test_gamma_scalar():
    inst = scalar_instance(0.8 - 0.3j)
    h2 = abs(0.8 - 0.3j) ** 2
    dl = _scalar_tx(1, 1, 1, 2.0, "downlink")
    ul = _scalar_tx(1, 1, 1, 2.0, "uplink")
    assert gamma_dl(0, inst, dl, 0.5)[0, 0].real == pytest.approx(h2 * 2 + 0.5)
    assert gamma_ul(inst, ul, 0.5)[0, 0].real == pytest.approx(h2 * 2 + 0.5)


def test_gamma_small_power_limit(rng):
    inst, tx = random_case(rng, direction="downlink")
    tiny = tx.with_power([p * 1e-14 for p in tx.power])
    np.testing.assert_allclose(gamma_dl(0, inst, tiny, 0.3), 0.3 * np.eye(2), atol=1e-12)
    up = tiny.with_power(tiny.power, Direction.UPLINK)
    np.testing.assert_allclose(gamma_ul(inst, up, 0.3), 0.3 * np.eye(4), atol=1e-12)


def test_gamma_hermitian_and_bounded_below(rng):
    for _ in range(20):
        inst, tx = random_case(rng, direction="downlink")
        for k in range(inst.K):
            G = gamma_dl(k, inst, tx, 0.7)
            np.testing.assert_allclose(G, G.conj().T, atol=1e-12)
            assert np.linalg.eigvalsh(G).min() >= 0.7 - 1e-12
        up = tx.with_power(tx.power, Direction.UPLINK)
        G = gamma_ul(inst, up, 0.7)
        np.testing.assert_allclose(G, G.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(G).min() >= 0.7 - 1e-12


def test_direction_contract(rng):
    inst, tx = random_case(rng, direction="uplink")
    with pytest.raises(ContractError):
        amse_downlink(inst, tx, 1.0)
    with pytest.raises(ContractError):
        gamma_dl(0, inst, tx, 1.0)
    with pytest.raises(ContractError):
        amse_uplink(inst, tx.with_power(tx.power, Direction.DOWNLINK), 1.0)


def test_zero_power_rejected(rng):
    inst, tx = random_case(rng, direction="downlink")
    bad = tx.with_power([np.r_[0.0, p[1:]] for p in tx.power])
    with pytest.raises(SingularPowerError):
        amse_downlink(inst, bad, 1.0)


@pytest.mark.parametrize("direction", ["downlink", "uplink"])
def test_zero_alpha_gives_identity(rng, direction):
    inst, tx = random_case(rng, direction=direction)
    tx0 = replace(tx, alpha=tuple(np.zeros_like(a) for a in tx.alpha))
    fn = amse_downlink if direction == "downlink" else amse_uplink
    rep = fn(inst, tx0, 0.5)
    for m, a in zip(rep.per_user_matrix, tx.alpha):
        np.testing.assert_allclose(m, np.eye(len(a)), atol=1e-15)
    np.testing.assert_allclose(rep.per_user_trace, [len(a) for a in tx.alpha])


@pytest.mark.parametrize("direction", ["downlink", "uplink"])
def test_scalar_mmse(direction):
    h, p, s2 = 1.3 + 0.4j, 2.0, 0.4
    inst = scalar_instance(h)
    h2 = abs(h) ** 2
    if direction == "uplink":
        G, a = mamse_rx_uplink(inst, [np.eye(1)], [np.array([p])], s2)
        np.testing.assert_allclose(G[0], [[h / abs(h)]], atol=1e-15)
        tx = Transceiver(G, [np.eye(1)], a, [np.array([p])], direction)
        rep = amse_uplink(inst, tx, s2)
    else:
        U, a = mamse_rx_downlink(inst, [np.eye(1)], [np.array([p])], s2)
        np.testing.assert_allclose(U[0], [[np.conj(h) / abs(h)]], atol=1e-15)
        tx = Transceiver([np.eye(1)], U, a, [np.array([p])], direction)
        rep = amse_downlink(inst, tx, s2)
    assert a[0][0] == pytest.approx(abs(h) * p / (h2 * p + s2), rel=1e-14)
    assert rep.sum == pytest.approx(s2 / (h2 * p + s2), rel=1e-13)


def test_report_aggregates(rng):
    inst, tx = random_case(rng, direction="downlink")
    rep = amse_downlink(inst, tx, 0.5, tau=[2.0, 0.5], eta=[0.3, 0.6])
    tr = [np.trace(m).real for m in rep.per_user_matrix]
    np.testing.assert_allclose(rep.per_user_trace, tr, rtol=1e-12)
    assert rep.weighted_sum == pytest.approx(2 * tr[0] + 0.5 * tr[1], rel=1e-12)
    assert rep.max_weighted == pytest.approx(max(tr[0] / 0.3, tr[1] / 0.6), rel=1e-12)
    for m in rep.per_user_matrix:
        np.testing.assert_allclose(m, m.conj().T, atol=1e-12)


@pytest.mark.parametrize("direction", ["downlink", "uplink"])
def test_instantaneous_equals_average_without_error(rng, direction):
    inst, tx = random_case(rng, direction=direction)
    inst = inst.perfect()
    draw = draw_true_channel(inst, 0)
    fn, inst_fn = ((amse_downlink, instantaneous_mse_dl) if direction == "downlink"
                   else (amse_uplink, instantaneous_mse_ul))
    rep = fn(inst, tx, 0.8)
    for k in range(inst.K):
        np.testing.assert_allclose(inst_fn(k, draw, tx, 0.8), rep.per_user_matrix[k],
                                   rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("direction", ["downlink", "uplink"])
def test_average_matches_monte_carlo(rng, direction):
    inst = random_instance(rng, 2, 4, (2, 3), sigma_e2=[0.1, 0.2])
    tx = random_transceiver(rng, inst, direction)
    draw = draw_true_channel(inst, 11, size=100_000)
    fn, inst_fn = ((amse_downlink, instantaneous_mse_dl) if direction == "downlink"
                   else (amse_uplink, instantaneous_mse_ul))
    rep = fn(inst, tx, 0.5)
    for k in range(inst.K):
        mc = np.trace(inst_fn(k, draw, tx, 0.5), axis1=-2, axis2=-1).real.mean()
        assert mc == pytest.approx(rep.per_user_trace[k], rel=0.01)


def _user_trace_with_best_alpha(inst, tx, k, sigma2):
    """Trace AMSE of user `k` with its scalings set optimally for the given
    unit-norm filters (each scaling enters as a separate scalar quadratic)."""
    if tx.direction == Direction.UPLINK:
        Gam = gamma_ul(inst, tx, sigma2)
        C = tx.G[k].conj().T @ Gam @ tx.G[k]
        cross = tx.U[k].conj().T @ inst.Hhat[k].conj().T @ tx.G[k]
    else:
        Gam = gamma_dl(k, inst, tx, sigma2)
        C = tx.U[k].conj().T @ Gam @ tx.U[k]
        cross = tx.G[k].conj().T @ inst.Hhat[k] @ tx.U[k]
    p = tx.power[k]
    c = np.diag(cross).real
    a = np.maximum(p * c / np.diag(C).real, 0.0)
    return float(len(a) + np.sum(a * a * np.diag(C).real / p - 2 * a * c))


@pytest.mark.parametrize("direction", ["uplink", "downlink"])
def test_mamse_receiver_first_order_optimal(rng, direction):
    for trial in range(5):
        inst, tx = random_case(rng, direction=direction)
        s2 = 0.6
        if direction == "uplink":
            G, a = mamse_rx_uplink(inst, tx.U, tx.power, s2)
            tx = replace(tx, G=G, alpha=a)
            field = "G"
        else:
            U, a = mamse_rx_downlink(inst, tx.G, tx.power, s2)
            tx = replace(tx, U=U, alpha=a)
            field = "U"
        for k in range(inst.K):
            base = _user_trace_with_best_alpha(inst, tx, k, s2)
            F = getattr(tx, field)[k]
            for j in range(F.shape[1]):
                f = F[:, j]
                t = rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape)
                t = t - f * np.real(np.vdot(f, t))
                t /= np.linalg.norm(t)

                def moved(eps):
                    col = f + eps * t
                    Fn = F.copy()
                    Fn[:, j] = col / np.linalg.norm(col)
                    filt = list(getattr(tx, field))
                    filt[k] = Fn
                    return _user_trace_with_best_alpha(
                        inst, replace(tx, **{field: tuple(filt)}), k, s2)

                eps = 1e-4
                plus, minus = moved(eps), moved(-eps)
                assert plus >= base - 1e-8
                assert minus >= base - 1e-8
                assert abs(plus - minus) / (2 * eps) <= 1e-6


def test_mamse_receiver_never_increases_amse(rng):
    for _ in range(20):
        inst, tx = random_case(rng, direction="uplink")
        before = amse_uplink(inst, tx, 0.4).per_user_trace
        G, a = mamse_rx_uplink(inst, tx.U, tx.power, 0.4)
        after = amse_uplink(inst, replace(tx, G=G, alpha=a), 0.4).per_user_trace
        assert np.all(after <= before + 1e-12)
        dl = tx.with_power(tx.power, Direction.DOWNLINK)
        before = amse_downlink(inst, dl, 0.4).per_user_trace
        U, a = mamse_rx_downlink(inst, dl.G, dl.power, 0.4)
        after = amse_downlink(inst, replace(dl, U=U, alpha=a), 0.4).per_user_trace
        assert np.all(after <= before + 1e-12)


def test_zero_channel_receiver_convention():
    Z = np.zeros((3, 2), dtype=complex)
    H1 = np.arange(6).reshape(3, 2) + 1j
    inst = make_instance([Z, H1], [np.eye(3)] * 2, [np.eye(2)] * 2, 0.0)
    U = [np.eye(2)[:, :1], np.eye(2)[:, :1]]
    Q = [np.array([1.0]), np.array([1.0])]
    G, a = mamse_rx_uplink(inst, U, Q, 1.0)
    assert a[0][0] == 0.0
    np.testing.assert_array_equal(G[0][:, 0], [1, 0, 0])
    assert a[1][0] > 0
    U2, a2 = mamse_rx_downlink(inst, [np.eye(3)[:, :1]] * 2, Q, 1.0)
    assert a2[0][0] == 0.0
    np.testing.assert_array_equal(U2[0][:, 0], [1, 0])


def test_matrix_inversion_identity(rng):
    """With white MS correlation, a common BS correlation and error variance,
    the sum MAMSE equals ``S - N + tr{C Gamma_c^{-1}}``."""
    for _ in range(10):
        se = rng.uniform(0.0, 0.3)
        Rb = exp_correlation(rng.uniform(0, 0.9), 4)
        H = [rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2)) for _ in range(2)]
        inst = make_instance(H, [Rb, Rb], [np.eye(2)] * 2, se)
        tx = random_transceiver(rng, inst, "uplink")
        s2 = rng.uniform(0.1, 2)
        G, a = mamse_rx_uplink(inst, tx.U, tx.power, s2)
        up = Transceiver(G, tx.U, a, tx.power, "uplink")
        lhs = amse_uplink(inst, up, s2).sum
        S = sum(len(q) for q in tx.power)
        C = se / (1 + se) * tx.total_power() * Rb + s2 * np.eye(4)
        rhs = S - 4 + np.trace(C @ np.linalg.inv(gamma_ul(inst, up, s2))).real
        assert lhs == pytest.approx(rhs, rel=1e-9)
