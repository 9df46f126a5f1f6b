"""
System dimensions, antenna correlation and the imperfect-CSI channel model.

The BS has ``N`` antennas and serves ``K`` users; user ``k`` has ``M[k]``
antennas and receives ``S[k]`` streams. Channels are stored as ``N x M[k]``
matrices ``H_k`` so that the downlink channel of user ``k`` is ``H_k^H``.

The true channel is the estimate plus an independent Kronecker-structured
error::

    H_k^H = Hhat_k^H + R_m,k^{1/2} E_w,k^H R_b,k^{1/2}

with ``E_w,k`` i.i.d. CN(0, sigma_e2[k]) and the effective receive
correlation ``R_m,k = (I + sigma_e2[k] * Rtilde_m,k^{-1})^{-1}``.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from ._linalg import herm, hsqrt
from .errors import InvalidParameterError, SingularMatrixError

__all__ = [
    "SystemConfig",
    "ChannelInstance",
    "TrueChannelDraw",
    "exp_correlation",
    "effective_rx_correlation",
    "make_instance",
    "sample_instance",
    "random_instance",
    "draw_true_channel",
    "stream",
    "crandn",
]

DEFAULT_SIGMA_E2 = (0.0101, 0.0204)

# purpose tags for the per-trial RNG streams
_PURPOSES = {"channel": 0, "error": 1, "aser": 2, "init": 3, "misc": 4}


def stream(master_seed, trial, purpose, *extra):
    """Independent generator for one ``(trial, purpose)`` pair.

    Streams are derived with `numpy.random.SeedSequence` spawn keys, so the
    output never depends on the order in which trials are evaluated.
    """
    key = (int(trial), _PURPOSES[purpose]) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=key))


def crandn(rng, shape, var=1.0):
    """Circularly symmetric complex Gaussian samples with variance `var`."""
    s = np.sqrt(var / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _as_tuple(x, K, name, cast=float):
    if np.isscalar(x):
        return tuple(cast(x) for _ in range(K))
    out = tuple(cast(v) for v in x)
    if len(out) != K:
        raise InvalidParameterError(f"{name} must have K={K} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions, budget, weights and channel-statistics parameters.

    Defaults reproduce the two-user desk-scale setup (N=4, M=S=2 per user,
    P_max=10, exponential BS correlation 0.25, error variances 0.0101 and
    0.0204).
    """

    N: int = 4
    K: int = 2
    M: Sequence[int] = (2, 2)
    S: Sequence[int] = (2, 2)
    P_max: float = 10.0
    sigma2: float = 1.0
    tau: Sequence[float] = (1.0, 1.0)
    eta: Sequence[float] = (0.3, 0.3)
    rho_b: float = 0.25
    rho_m: float = 0.0
    sigma_e2: Sequence[float] = DEFAULT_SIGMA_E2

    def __post_init__(self):
        K = int(self.K)
        if K < 1 or int(self.N) < 1:
            raise InvalidParameterError("N and K must be positive integers")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "K", K)
        for name, cast in (("M", int), ("S", int), ("tau", float), ("eta", float),
                           ("sigma_e2", float)):
            object.__setattr__(self, name, _as_tuple(getattr(self, name), K, name, cast))
        if any(m < 1 for m in self.M) or any(s < 1 for s in self.S):
            raise InvalidParameterError("M and S entries must be positive")
        if any(s > min(m, self.N) for s, m in zip(self.S, self.M)):
            raise InvalidParameterError("each S_k must satisfy S_k <= min(M_k, N)")
        if sum(self.S) > self.N:
            raise InvalidParameterError(f"total streams {sum(self.S)} exceed N={self.N}")
        if not self.P_max > 0 or not self.sigma2 > 0:
            raise InvalidParameterError("P_max and sigma2 must be positive")
        if any(t <= 0 for t in self.tau) or any(e <= 0 for e in self.eta):
            raise InvalidParameterError("weights tau and eta must be strictly positive")
        if any(s < 0 for s in self.sigma_e2):
            raise InvalidParameterError("sigma_e2 entries must be nonnegative")
        for name in ("rho_b", "rho_m"):
            r = getattr(self, name)
            if not 0.0 <= r < 1.0:
                raise InvalidParameterError(f"{name}={r} outside [0, 1)")
        object.__setattr__(self, "P_max", float(self.P_max))
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def total_streams(self):
        return sum(self.S)

    @property
    def snr_db(self):
        return 10.0 * np.log10(self.P_max / self.sigma2)

    def with_snr(self, snr_db):
        """Copy with ``sigma2 = P_max / 10**(snr_db / 10)``."""
        return replace(self, sigma2=self.P_max / 10.0 ** (snr_db / 10.0))

    def replace(self, **changes):
        return replace(self, **changes)


def exp_correlation(rho, n):
    """Exponential correlation matrix with entries ``rho**|i - j|``.

    Parameters
    ----------
    rho : float
        Correlation coefficient in ``[0, 1)``.
    n : int
        Matrix size.
    """
    if not 0.0 <= rho < 1.0:
        raise InvalidParameterError(f"rho={rho} outside [0, 1)")
    idx = np.arange(n)
    # 0**0 == 1 keeps the unit diagonal when rho == 0
    return np.power(float(rho), np.abs(idx[:, None] - idx[None, :])).astype(float)


def effective_rx_correlation(R_m_tilde, sigma_e2):
    """Return ``(I + sigma_e2 * R_m_tilde^{-1})^{-1}``.

    Computed as ``R_m_tilde (R_m_tilde + sigma_e2 I)^{-1}``, which avoids
    inverting `R_m_tilde` twice. A singular `R_m_tilde` raises
    `SingularMatrixError`.
    """
    R = herm(np.asarray(R_m_tilde, dtype=complex))
    n = R.shape[0]
    w = np.linalg.eigvalsh(R)
    if w.min() <= 1e-14 * max(w.max(), 1.0):
        raise SingularMatrixError("receive correlation matrix is singular")
    if sigma_e2 == 0:
        return np.eye(n, dtype=complex)
    out = np.linalg.solve((R + sigma_e2 * np.eye(n)).T, R.T).T
    return herm(out)


@dataclass(frozen=True)
class ChannelInstance:
    """Estimated channels plus the statistics of their estimation errors."""

    Hhat: tuple
    R_b: tuple
    R_m_tilde: tuple
    R_m: tuple
    sigma_e2: tuple

    @property
    def K(self):
        return len(self.Hhat)

    @property
    def N(self):
        return self.Hhat[0].shape[0]

    @cached_property
    def R_b_sqrt(self):
        return tuple(hsqrt(R) for R in self.R_b)

    @cached_property
    def R_m_sqrt(self):
        return tuple(hsqrt(R) for R in self.R_m)

    def with_sigma_e2(self, sigma_e2):
        """Same estimates and correlations, different error variances."""
        se = _as_tuple(sigma_e2, self.K, "sigma_e2")
        R_m = tuple(effective_rx_correlation(Rt, s) for Rt, s in zip(self.R_m_tilde, se))
        return ChannelInstance(self.Hhat, self.R_b, self.R_m_tilde, R_m, se)

    def perfect(self):
        """The instance with the estimate treated as exact."""
        return self.with_sigma_e2(0.0)


@dataclass(frozen=True)
class TrueChannelDraw:
    """True channels ``H_k = Hhat_k + E_k``, each ``(..., N, M_k)``."""

    H: tuple
    E: tuple = field(repr=False, default=())


def make_instance(Hhat, R_b, R_m_tilde, sigma_e2):
    """Build a `ChannelInstance` from explicit matrices."""
    Hhat = tuple(np.asarray(H, dtype=complex) for H in Hhat)
    K = len(Hhat)
    R_b = tuple(np.asarray(R, dtype=complex) for R in R_b)
    R_m_tilde = tuple(np.asarray(R, dtype=complex) for R in R_m_tilde)
    se = _as_tuple(sigma_e2, K, "sigma_e2")
    R_m = tuple(effective_rx_correlation(Rt, s) for Rt, s in zip(R_m_tilde, se))
    return ChannelInstance(Hhat, R_b, R_m_tilde, R_m, se)


def sample_instance(cfg, seed):
    """Draw estimated channels from the Kronecker model.

    ``Hhat_k = R_b^{1/2} W_k Rtilde_m^{1/2}`` with ``W_k`` having i.i.d.
    unit-variance CN entries. `seed` may be an int, a `SeedSequence` or a
    `Generator`.
    """
    rng = np.random.default_rng(seed)
    Rb = exp_correlation(cfg.rho_b, cfg.N)
    Rb_s = hsqrt(Rb)
    Hhat, Rbs, Rmt = [], [], []
    for k in range(cfg.K):
        Rm = exp_correlation(cfg.rho_m, cfg.M[k])
        W = crandn(rng, (cfg.N, cfg.M[k]))
        Hhat.append(Rb_s @ W @ hsqrt(Rm))
        Rbs.append(Rb)
        Rmt.append(Rm)
    return make_instance(Hhat, Rbs, Rmt, cfg.sigma_e2)


def _random_correlation(rng, n):
    # normalized Wishart sample: random, well conditioned, unit mean diagonal
    A = crandn(rng, (n, 2 * n))
    R = A @ A.conj().T
    return herm(R * n / np.trace(R).real)


def random_instance(rng, K, N, M, sigma_e2=None):
    """Random instance with Wishart-distributed correlations.

    Intended for property checks rather than experiments: `R_b` differs per
    user and `R_m_tilde` is a general Hermitian positive definite matrix.
    Error variances are drawn from ``[0, 0.2]`` unless given.
    """
    rng = np.random.default_rng(rng)
    M = _as_tuple(M, K, "M", int)
    se = rng.uniform(0.0, 0.2, K) if sigma_e2 is None else sigma_e2
    Hhat, Rb, Rmt = [], [], []
    for k in range(K):
        Rb.append(_random_correlation(rng, N))
        Rmt.append(_random_correlation(rng, M[k]))
        Hhat.append(hsqrt(Rb[-1]) @ crandn(rng, (N, M[k])) @ hsqrt(Rmt[-1]))
    return make_instance(Hhat, Rb, Rmt, se)


def draw_true_channel(inst, seed, size=None):
    """Draw the true channel around the estimate.

    Parameters
    ----------
    inst : ChannelInstance
    seed : int, SeedSequence or Generator
    size : int, optional
        When given, ``size`` independent draws are stacked along a leading
        axis of every ``H_k``.
    """
    rng = np.random.default_rng(seed)
    lead = () if size is None else (int(size),)
    H, E = [], []
    for k in range(inst.K):
        N, Mk = inst.Hhat[k].shape
        Ew = crandn(rng, lead + (N, Mk), inst.sigma_e2[k])
        # E_k = R_b^{1/2} E_w R_m^{1/2}; exactly zero when sigma_e2 == 0
        Ek = inst.R_b_sqrt[k] @ Ew @ inst.R_m_sqrt[k]
        E.append(Ek)
        H.append(inst.Hhat[k] + Ek)
    return TrueChannelDraw(tuple(H), tuple(E))
