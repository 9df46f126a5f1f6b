"""
AMSE uplink-downlink duality by power transfer.

Filters ``G, U`` and scalings ``alpha`` are kept; only the power diagonals
are recomputed so that the opposite direction reaches the same AMSE:

* sum transfer: one scalar ``beta`` with ``P = beta alpha^2 Q^{-1}``,
* user-wise transfer: ``P_k = beta_k alpha_k^2 Q_k^{-1}`` with the
  ``beta_k`` solving a ``K x K`` linear system,

and the mirrored transfers from downlink to uplink. Every transfer keeps
the total transmit power.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .amse import Direction, Transceiver
from .errors import (DegenerateTransferError, InvariantViolationError,
                     SingularPowerError, TransferError)

__all__ = [
    "TransferResult",
    "ul_to_dl_sum",
    "dl_to_ul_sum",
    "ul_to_dl_user",
    "dl_to_ul_user",
    "uplink_coupling",
    "downlink_coupling",
    "transfer",
    "OpCounter",
    "random_transceiver",
    "duality_check",
]


@dataclass(frozen=True)
class TransferResult:
    betas: np.ndarray
    new_power: tuple
    conserved_power: float


class OpCounter:
    """Tally of scalar arithmetic operations (for complexity measurements)."""

    def __init__(self):
        self.ops = 0

    def add(self, n):
        self.ops += int(n)


def _sum_transfer(src, alpha, counter=None):
    src = [np.asarray(s, dtype=float) for s in src]
    alpha = [np.asarray(a, dtype=float) for a in alpha]
    if any(np.any(s <= 0) for s in src):
        raise SingularPowerError("source power diagonals must be strictly positive")
    a2_over = [a * a / s for a, s in zip(alpha, src)]
    total = float(sum(s.sum() for s in src))
    denom = float(sum(x.sum() for x in a2_over))
    if not denom > 0:
        raise DegenerateTransferError("alpha is identically zero; beta is undefined")
    beta = total / denom
    new = tuple(beta * x for x in a2_over)
    if counter is not None:
        n = sum(s.size for s in src)
        # a*a, /s, two running sums, beta*x, plus the final division
        counter.add(5 * n + 1)
    return TransferResult(np.array([beta]), new, total)


def ul_to_dl_sum(Q, alpha, counter=None):
    """Sum-AMSE transfer from uplink powers `Q` to downlink powers.

    ``beta = tr{Q} / tr{Q^{-1} alpha^2}`` and ``P = beta alpha^2 Q^{-1}``.
    The scaling does not involve the channel or the error statistics.
    """
    return _sum_transfer(Q, alpha, counter)


def dl_to_ul_sum(P, alpha, counter=None):
    """Sum-AMSE transfer from downlink powers `P` to uplink powers."""
    return _sum_transfer(P, alpha, counter)


def uplink_coupling(inst, G, U, alpha, Q):
    """Matrix ``A`` with ``A[k, i]`` = power of uplink user `i` leaking into
    receiver `k` (channel plus averaged-error part), scaled by
    ``alpha_k^2 / q_k`` on the receive side.

    The uplink trace AMSE of user `k` is then
    ``S_k - 2 Re tr{alpha_k G_k^H Hhat_k U_k} + sum_i A[k, i] + sigma2 * theta_k``
    with ``theta_k = tr{Q_k^{-1} alpha_k^2}``.
    """
    K = len(G)
    A = np.empty((K, K))
    w = [alpha[k] / np.sqrt(Q[k]) for k in range(K)]
    tx_err = [inst.sigma_e2[i] * np.einsum("mj,mn,nj,j->", U[i].conj(), inst.R_m[i],
                                           U[i], Q[i]).real for i in range(K)]
    for k in range(K):
        for i in range(K):
            M = G[k].conj().T @ inst.Hhat[i] @ U[i]
            val = np.sum(np.abs(w[k][:, None] * M * np.sqrt(Q[i])[None, :]) ** 2)
            if tx_err[i]:
                rx = np.einsum("nj,nm,mj,j->", G[k].conj(), inst.R_b[i], G[k],
                               w[k] ** 2).real
                val += tx_err[i] * rx
            A[k, i] = val
    return A


def downlink_coupling(inst, G, U, alpha, P):
    """Matrix ``B`` with ``B[k, i]`` = power of downlink stream group `i`
    reaching user `k`, scaled by ``alpha_k^2 / p_k`` on the receive side."""
    K = len(G)
    B = np.empty((K, K))
    w = [alpha[k] / np.sqrt(P[k]) for k in range(K)]
    for k in range(K):
        rx_err = inst.sigma_e2[k] * np.einsum("mj,mn,nj,j->", U[k].conj(), inst.R_m[k],
                                              U[k], w[k] ** 2).real
        for i in range(K):
            M = U[k].conj().T @ inst.Hhat[k].conj().T @ G[i]
            val = np.sum(np.abs(w[k][:, None] * M * np.sqrt(P[i])[None, :]) ** 2)
            if rx_err:
                tx = np.einsum("nj,nm,mj,j->", G[i].conj(), inst.R_b[k], G[i], P[i]).real
                val += rx_err * tx
            B[k, i] = val
    return B


def _user_transfer(C, theta, src_tot, sigma2):
    """Solve ``X beta = sigma2 * src_tot`` where
    ``X = diag(sigma2 theta + offdiag rowsum(C)) - offdiag(C)^T``."""
    off = C - np.diag(np.diag(C))
    X = np.diag(sigma2 * theta + off.sum(axis=1)) - off.T
    try:
        lu, piv = sla.lu_factor(X, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise TransferError(f"transfer system could not be factorized: {exc}") from exc
    d = np.abs(np.diag(lu))
    if d.min() == 0.0 or 1.0 / np.linalg.cond(X, 1) < 1e-14:
        raise TransferError("transfer system is numerically singular")
    beta = sla.lu_solve((lu, piv), sigma2 * src_tot, check_finite=False)
    if np.any(beta <= 0):
        raise InvariantViolationError(f"non-positive transfer factor: {beta}")
    return beta, X


def ul_to_dl_user(inst, G, U, alpha, Q, sigma2):
    """User-wise AMSE transfer from uplink to downlink.

    Every user's downlink AMSE equals its uplink AMSE under the returned
    powers ``P_k = beta_k alpha_k^2 Q_k^{-1}``.
    """
    Q = [np.asarray(q, dtype=float) for q in Q]
    if any(np.any(q <= 0) for q in Q):
        raise SingularPowerError("uplink power diagonals must be strictly positive")
    theta = np.array([np.sum(a * a / q) for a, q in zip(alpha, Q)])
    if np.any(theta <= 0):
        raise DegenerateTransferError("a user has alpha identically zero")
    A = uplink_coupling(inst, G, U, alpha, Q)
    tot = np.array([q.sum() for q in Q])
    beta, _ = _user_transfer(A, theta, tot, sigma2)
    new = tuple(b * a * a / q for b, a, q in zip(beta, alpha, Q))
    return TransferResult(beta, new, float(tot.sum()))


def dl_to_ul_user(inst, G, U, alpha, P, sigma2):
    """User-wise AMSE transfer from downlink to uplink (mirror of
    `ul_to_dl_user`)."""
    P = [np.asarray(p, dtype=float) for p in P]
    if any(np.any(p <= 0) for p in P):
        raise SingularPowerError("downlink power diagonals must be strictly positive")
    theta = np.array([np.sum(a * a / p) for a, p in zip(alpha, P)])
    if np.any(theta <= 0):
        raise DegenerateTransferError("a user has alpha identically zero")
    B = downlink_coupling(inst, G, U, alpha, P)
    tot = np.array([p.sum() for p in P])
    beta, _ = _user_transfer(B, theta, tot, sigma2)
    new = tuple(b * a * a / p for b, a, p in zip(beta, alpha, P))
    return TransferResult(beta, new, float(tot.sum()))


def transfer(inst, tx, sigma2, mode="user"):
    """Flip the direction of a `Transceiver`, keeping filters and scalings.

    Parameters
    ----------
    mode : {"user", "sum"}
        Which AMSE quantity is preserved.

    Returns
    -------
    tx_new : Transceiver
    result : TransferResult
    """
    if mode not in ("user", "sum"):
        raise ValueError(f"unknown transfer mode {mode!r}")
    if tx.direction == Direction.UPLINK:
        target = Direction.DOWNLINK
        if mode == "sum":
            res = ul_to_dl_sum(tx.power, tx.alpha)
        else:
            res = ul_to_dl_user(inst, tx.G, tx.U, tx.alpha, tx.power, sigma2)
    else:
        target = Direction.UPLINK
        if mode == "sum":
            res = dl_to_ul_sum(tx.power, tx.alpha)
        else:
            res = dl_to_ul_user(inst, tx.G, tx.U, tx.alpha, tx.power, sigma2)
    return tx.with_power(res.new_power, target), res


def random_transceiver(rng, inst, direction=Direction.UPLINK):
    """Random unit-norm filters, positive scalings and positive powers."""
    from .model import crandn
    rng = np.random.default_rng(rng)
    K = inst.K
    G, U, alpha, power = [], [], [], []
    for k in range(K):
        N, Mk = inst.Hhat[k].shape
        S = int(rng.integers(1, min(Mk, N) + 1))
        g = crandn(rng, (N, S))
        u = crandn(rng, (Mk, S))
        G.append(g / np.linalg.norm(g, axis=0))
        U.append(u / np.linalg.norm(u, axis=0))
        alpha.append(rng.uniform(0.1, 1.0, S))
        power.append(rng.uniform(0.1, 5.0, S))
    return Transceiver(tuple(G), tuple(U), tuple(alpha), tuple(power), direction)


def duality_check(trials=1000, seed=0, max_users=3, max_antennas=6):
    """Run all four transfers on random instances and report worst errors.

    Returns
    -------
    dict
        ``amse_rel_err`` (largest relative AMSE mismatch of the preserved
        quantities), ``power_rel_err`` (largest relative change of the total
        power) and ``min_beta`` (smallest transfer factor seen).
    """
    from .amse import amse_downlink, amse_uplink
    from .model import random_instance
    root = np.random.SeedSequence(int(seed))
    worst = {"amse_rel_err": 0.0, "power_rel_err": 0.0, "min_beta": np.inf}
    for child in root.spawn(int(trials)):
        rng = np.random.default_rng(child)
        K = int(rng.integers(1, max_users + 1))
        N = int(rng.integers(K, max_antennas + 1))
        M = rng.integers(1, 4, K)
        inst = random_instance(rng, K, N, M)
        sigma2 = float(10.0 ** rng.uniform(-2, 1))
        for start in (Direction.UPLINK, Direction.DOWNLINK):
            tx = random_transceiver(rng, inst, start)
            evaluate = amse_uplink if start == Direction.UPLINK else amse_downlink
            other = amse_downlink if start == Direction.UPLINK else amse_uplink
            before = evaluate(inst, tx, sigma2).per_user_trace
            for mode in ("sum", "user"):
                new, res = transfer(inst, tx, sigma2, mode)
                after = other(inst, new, sigma2).per_user_trace
                if mode == "sum":
                    err = abs(after.sum() - before.sum()) / before.sum()
                else:
                    err = float(np.max(np.abs(after - before) / before))
                perr = abs(new.total_power() - tx.total_power()) / tx.total_power()
                worst["amse_rel_err"] = max(worst["amse_rel_err"], err)
                worst["power_rel_err"] = max(worst["power_rel_err"], perr)
                worst["min_beta"] = min(worst["min_beta"], float(res.betas.min()))
    return worst
