"""
Average MSE (AMSE) evaluation and MAMSE receiver updates.

A `Transceiver` stores the decomposed filters of the system: unit-norm BS
filters ``G_k`` (``N x S_k``), unit-norm MS filters ``U_k`` (``M_k x S_k``),
nonnegative scaling diagonals ``alpha_k`` and positive power diagonals.
Diagonals are kept as 1-D arrays. The `direction` tag says whether the
powers are downlink powers ``P_k`` or (virtual) uplink powers ``Q_k``; the
filters and scalings are shared by both directions.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import List

import numpy as np

from ._linalg import herm, hsolve, split_columns
from .errors import ContractError, SingularPowerError

__all__ = [
    "Direction",
    "Transceiver",
    "AmseReport",
    "gamma_dl",
    "gamma_ul",
    "amse_downlink",
    "amse_uplink",
    "instantaneous_mse_dl",
    "instantaneous_mse_ul",
    "mamse_rx_uplink",
    "mamse_rx_downlink",
]


class Direction(str, Enum):
    DOWNLINK = "downlink"
    UPLINK = "uplink"


@dataclass(frozen=True)
class Transceiver:
    G: tuple
    U: tuple
    alpha: tuple
    power: tuple
    direction: Direction

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        for name in ("G", "U"):
            object.__setattr__(self, name, tuple(np.asarray(x, dtype=complex)
                                                 for x in getattr(self, name)))
        for name in ("alpha", "power"):
            object.__setattr__(self, name, tuple(np.asarray(x, dtype=float).ravel()
                                                 for x in getattr(self, name)))

    @property
    def K(self):
        return len(self.G)

    def total_power(self):
        return float(sum(p.sum() for p in self.power))

    def with_power(self, power, direction=None):
        return replace(self, power=tuple(power),
                       direction=self.direction if direction is None else direction)

    def require(self, direction):
        if self.direction != Direction(direction):
            raise ContractError(
                f"expected a {Direction(direction).value} transceiver, got {self.direction.value}")


@dataclass(frozen=True)
class AmseReport:
    """Per-user AMSE matrices and their aggregates."""

    per_user_matrix: List[np.ndarray]
    per_user_trace: np.ndarray
    weighted_sum: float
    max_weighted: float

    @property
    def sum(self):
        return float(self.per_user_trace.sum())


def _check_power(power):
    for p in power:
        if np.any(p <= 0):
            raise SingularPowerError("power diagonals must be strictly positive")


def _report(mats, tau, eta):
    traces = np.array([np.trace(m).real for m in mats])
    K = len(mats)
    tau = np.ones(K) if tau is None else np.asarray(tau, dtype=float)
    eta = np.ones(K) if eta is None else np.asarray(eta, dtype=float)
    return AmseReport(list(mats), traces, float(tau @ traces), float(np.max(traces / eta)))


def _tx_covariance(tx):
    """``G P G^H`` for the downlink transmit side."""
    return sum((G * p) @ G.conj().T for G, p in zip(tx.G, tx.power))


def gamma_dl(k, inst, tx, sigma2):
    """Downlink receive covariance of user `k` averaged over the CSI error.

    ``Hhat_k^H G P G^H Hhat_k + sigma_e2 tr{R_b,k G P G^H} R_m,k + sigma2 I``
    """
    tx.require(Direction.DOWNLINK)
    return _gamma_dl(k, inst, _tx_covariance(tx), sigma2)


def _gamma_dl(k, inst, GPG, sigma2):
    H = inst.Hhat[k]
    Mk = H.shape[1]
    out = H.conj().T @ GPG @ H + sigma2 * np.eye(Mk)
    if inst.sigma_e2[k]:
        out = out + inst.sigma_e2[k] * np.trace(inst.R_b[k] @ GPG).real * inst.R_m[k]
    return herm(out)


def gamma_ul(inst, tx, sigma2):
    """Uplink receive covariance at the BS averaged over the CSI error."""
    tx.require(Direction.UPLINK)
    return _gamma_ul(inst, tx.U, tx.power, sigma2)


def _gamma_ul(inst, U, Q, sigma2):
    out = sigma2 * np.eye(inst.N, dtype=complex)
    for k in range(inst.K):
        UQU = (U[k] * Q[k]) @ U[k].conj().T
        H = inst.Hhat[k]
        out = out + H @ UQU @ H.conj().T
        if inst.sigma_e2[k]:
            out = out + inst.sigma_e2[k] * np.trace(inst.R_m[k] @ UQU).real * inst.R_b[k]
    return herm(out)


def _mse_matrix(C, cross, a, p):
    """``I + D C D - sqrt(p) cross D - (.)^H`` with ``D = diag(a / sqrt(p))``.

    `C` is the (filter-projected) receive covariance and `cross` the
    ``S_k x S_k`` cross-correlation between filters through the channel.
    """
    d = a / np.sqrt(p)
    sp = np.sqrt(p)
    T = (sp[:, None] * cross) * d[None, :]
    return herm(np.eye(len(a)) + (d[:, None] * C) * d[None, :] - T - T.conj().T)


def amse_downlink(inst, tx, sigma2, tau=None, eta=None):
    """Downlink AMSE matrices of every user.

    Parameters
    ----------
    inst : ChannelInstance
    tx : Transceiver
        Downlink transceiver with strictly positive powers.
    sigma2 : float
        Noise variance.
    tau, eta : array_like, optional
        Sum and min-max weights for the aggregates (default all ones).
    """
    tx.require(Direction.DOWNLINK)
    _check_power(tx.power)
    GPG = _tx_covariance(tx)
    mats = []
    for k in range(inst.K):
        Gam = _gamma_dl(k, inst, GPG, sigma2)
        U, G = tx.U[k], tx.G[k]
        C = U.conj().T @ Gam @ U
        cross = G.conj().T @ inst.Hhat[k] @ U
        mats.append(_mse_matrix(C, cross, tx.alpha[k], tx.power[k]))
    return _report(mats, tau, eta)


def amse_uplink(inst, tx, sigma2, tau=None, eta=None):
    """Uplink AMSE matrices of every user (mirror of `amse_downlink`)."""
    tx.require(Direction.UPLINK)
    _check_power(tx.power)
    Gam = _gamma_ul(inst, tx.U, tx.power, sigma2)
    mats = []
    for k in range(inst.K):
        U, G = tx.U[k], tx.G[k]
        C = G.conj().T @ Gam @ G
        # uplink cross term is Q^{1/2} U^H Hhat^H G alpha Q^{-1/2}
        cross = U.conj().T @ inst.Hhat[k].conj().T @ G
        mats.append(_mse_matrix(C, cross, tx.alpha[k], tx.power[k]))
    return _report(mats, tau, eta)


def instantaneous_mse_dl(k, draw, tx, sigma2):
    """Downlink MSE matrix of user `k` for the true channel in `draw`.

    Batched draws (leading axes on ``draw.H[k]``) give batched outputs.
    """
    tx.require(Direction.DOWNLINK)
    _check_power(tx.power)
    H = draw.H[k]
    Hh = np.swapaxes(H.conj(), -1, -2)
    GPG = _tx_covariance(tx)
    U, G = tx.U[k], tx.G[k]
    Mk = U.shape[0]
    C = U.conj().T @ (Hh @ GPG @ H + sigma2 * np.eye(Mk)) @ U
    cross = G.conj().T @ H @ U
    return _batched_mse(C, cross, tx.alpha[k], tx.power[k])


def instantaneous_mse_ul(k, draw, tx, sigma2):
    """Uplink MSE matrix of user `k` for the true channels in `draw`."""
    tx.require(Direction.UPLINK)
    _check_power(tx.power)
    N = tx.G[k].shape[0]
    cov = sigma2 * np.eye(N)
    for i, H in enumerate(draw.H):
        HU = H @ tx.U[i]
        cov = cov + (HU * tx.power[i]) @ np.swapaxes(HU.conj(), -1, -2)
    G, U = tx.G[k], tx.U[k]
    C = G.conj().T @ cov @ G
    cross = U.conj().T @ np.swapaxes(draw.H[k].conj(), -1, -2) @ G
    return _batched_mse(C, cross, tx.alpha[k], tx.power[k])


def _batched_mse(C, cross, a, p):
    d = a / np.sqrt(p)
    sp = np.sqrt(p)
    T = sp[:, None] * cross * d[None, :]
    out = np.eye(len(a)) + d[:, None] * C * d[None, :] - T - np.swapaxes(T.conj(), -1, -2)
    return 0.5 * (out + np.swapaxes(out.conj(), -1, -2))


def mamse_rx_uplink(inst, U, Q, sigma2):
    """Uplink MAMSE receiver ``G_k alpha_k = Gamma_c^{-1} Hhat_k U_k Q_k``.

    Returns
    -------
    G : tuple of ndarray
        Unit-norm BS filters.
    alpha : tuple of ndarray
        Nonnegative scaling diagonals (column norms).
    """
    _check_power(Q)
    Gam = _gamma_ul(inst, U, Q, sigma2)
    rhs = np.hstack([inst.Hhat[k] @ (U[k] * Q[k]) for k in range(inst.K)])
    V = hsolve(Gam, rhs)
    G, alpha = [], []
    start = 0
    for k in range(inst.K):
        Sk = U[k].shape[1]
        Gk, ak = split_columns(V[:, start:start + Sk])
        G.append(Gk)
        alpha.append(ak)
        start += Sk
    return tuple(G), tuple(alpha)


def mamse_rx_downlink(inst, G, P, sigma2):
    """Downlink MAMSE receiver ``U_k alpha_k = (Gamma_k^DL)^{-1} Hhat_k^H G_k P_k``."""
    _check_power(P)
    GPG = sum((Gk * p) @ Gk.conj().T for Gk, p in zip(G, P))
    U, alpha = [], []
    for k in range(inst.K):
        Gam = _gamma_dl(k, inst, GPG, sigma2)
        V = hsolve(Gam, inst.Hhat[k].conj().T @ (G[k] * P[k]))
        Uk, ak = split_columns(V)
        U.append(Uk)
        alpha.append(ak)
    return tuple(U), tuple(alpha)
