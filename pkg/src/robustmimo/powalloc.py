"""
Uplink power allocation across users for fixed filters.

With per-user power shapes ``Qtilde_k`` (``tr = 1``) and user budgets
``q_k`` (``Q_k = q_k Qtilde_k``) the uplink AMSE of user ``k`` is

    xi_k(q) = (Y q + sigma2 * theta)_k / q_k

with a nonnegative coupling matrix ``Y``. Two allocations are provided:

* `gp_power` minimizes ``sum_k tau_k xi_k`` (a posynomial, convex in
  ``log q``) under ``sum(q) <= P_max``;
* `minmax_power` minimizes ``max_k xi_k / eta_k`` through the Perron
  eigenpair of a ``(K+1) x (K+1)`` nonnegative matrix.
"""

from dataclasses import dataclass

import numpy as np

from .duality import uplink_coupling
from .errors import ConvergenceError, IrreducibleError, NumericalError

__all__ = [
    "CouplingData",
    "PowerSolution",
    "build_coupling",
    "per_user_amse",
    "wsum_objective",
    "gp_power",
    "minmax_power",
    "omega_matrix",
    "kkt_residual",
]


@dataclass(frozen=True)
class CouplingData:
    """Posynomial coefficients of the uplink AMSEs.

    Attributes
    ----------
    Y : ndarray, shape (K, K)
        ``lambda_k`` on the diagonal, interference ``upsilon_ki`` off it.
    theta : ndarray, shape (K,)
        Noise coefficients ``tr{Qtilde_k^{-1} alpha_k^2}``.
    Qtilde : tuple of ndarray
        Normalized per-user power shapes.
    sigma2 : float
    """

    Y: np.ndarray
    theta: np.ndarray
    Qtilde: tuple
    sigma2: float

    @property
    def K(self):
        return len(self.theta)


@dataclass(frozen=True)
class PowerSolution:
    qtilde: np.ndarray
    objective: float
    iterations: int = 0
    residual: float = 0.0


def build_coupling(inst, G, U, alpha, Qtilde, sigma2):
    """Coefficients ``(Y, theta)`` for fixed filters, scalings and shapes."""
    Qtilde = tuple(np.asarray(q, dtype=float) for q in Qtilde)
    for q in Qtilde:
        if abs(q.sum() - 1.0) > 1e-12 or np.any(q <= 0):
            raise ValueError("power shapes must be positive with unit trace")
    A = uplink_coupling(inst, G, U, alpha, Qtilde)
    K = len(G)
    theta = np.array([np.sum(a * a / q) for a, q in zip(alpha, Qtilde)])
    Y = A.copy()
    for k in range(K):
        cross = np.einsum("nj,nm,mj,j->", G[k].conj(), inst.Hhat[k], U[k], alpha[k]).real
        Y[k, k] = U[k].shape[1] - 2.0 * cross + A[k, k]
    return CouplingData(Y, theta, Qtilde, float(sigma2))


def per_user_amse(cd, q):
    q = np.asarray(q, dtype=float)
    return (cd.Y @ q + cd.sigma2 * cd.theta) / q


def wsum_objective(cd, tau, q):
    return float(np.asarray(tau, dtype=float) @ per_user_amse(cd, q))


def _kkt(cd, tau, q):
    """Gradient of the log-variable objective and the budget multiplier."""
    tau = np.asarray(tau, dtype=float)
    off = cd.Y - np.diag(np.diag(cd.Y))
    W = tau[:, None] * off * q[None, :] / q[:, None]
    n = tau * cd.sigma2 * cd.theta / q
    grad = W.sum(axis=0) - W.sum(axis=1) - n
    # budget constraint gradient in log variables is q itself
    nu = max(0.0, -float(grad @ q) / float(q @ q))
    return grad, nu


def kkt_residual(cd, tau, q, P_max):
    """Relative KKT residual of the log-variable program at `q`.

    Combines stationarity ``||grad f + nu q||`` and complementary slackness
    ``nu (P_max - sum q)``, both scaled by the objective magnitude.
    """
    q = np.asarray(q, dtype=float)
    grad, nu = _kkt(cd, tau, q)
    scale = max(abs(wsum_objective(cd, tau, q)), 1e-300)
    stat = np.linalg.norm(grad + nu * q)
    slack = nu * abs(P_max - q.sum())
    return float(max(stat, slack) / scale)


def _newton_reduced(c, z, tol, max_iter):
    """Minimize ``sum_{k != i} c[k, i] exp(z_i - z_k)`` over ``z`` (last entry
    pinned to 0) by damped Newton with Armijo backtracking."""
    K = len(z)

    def value(z):
        return float(np.sum(c * np.exp(z[None, :] - z[:, None])))

    f = value(z)
    for it in range(max_iter):
        W = c * np.exp(z[None, :] - z[:, None])
        col, row = W.sum(axis=0), W.sum(axis=1)
        g = (col - row)[:-1]
        H = (np.diag(col + row) - W - W.T)[:-1, :-1]
        try:
            dz = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            dz = -np.linalg.lstsq(H, g, rcond=None)[0]
        dec = float(-g @ dz)
        if dec <= tol * max(f, 1e-300):
            return z, it
        step = np.zeros(K)
        step[:-1] = dz
        t = 1.0
        while True:
            zn = z + t * step
            fn = value(zn)
            if fn <= f - 0.25 * t * dec:
                break
            if t < 1e-12:
                # no representable descent left
                return z, it
            t *= 0.5
        z, f = zn, fn
    return z, max_iter


def _gp_reduced(cd, tau, P_max, q0, max_iter):
    K = cd.K
    tau = np.asarray(tau, dtype=float)
    if K == 1:
        return np.array([P_max]), 0
    off = cd.Y - np.diag(np.diag(cd.Y))
    # on the active budget sum(q) = P_max the noise term sigma2 theta_k / q_k
    # equals (sigma2 theta_k / P_max) * sum_i q_i / q_k
    c = tau[:, None] * (off + (cd.sigma2 * cd.theta / P_max)[:, None])
    np.fill_diagonal(c, 0.0)
    q0 = np.full(K, P_max / K) if q0 is None else np.asarray(q0, dtype=float)
    z0 = np.log(q0) - np.log(q0[-1])
    z, it = _newton_reduced(c, z0, 1e-24, max_iter)
    q = np.exp(z - z.max())
    return P_max * q / q.sum(), it


def _gp_barrier(cd, tau, P_max, q0, max_iter, gap=1e-9):
    """Log-barrier method on ``sum(q) <= P_max`` in ``t = log q``."""
    K = cd.K
    tau = np.asarray(tau, dtype=float)
    off = cd.Y - np.diag(np.diag(cd.Y))
    a = tau[:, None] * off
    b = tau * cd.sigma2 * cd.theta

    def parts(t):
        e = np.exp(t)
        W = a * e[None, :] / e[:, None]
        n = b / e
        f = W.sum() + n.sum()
        g = W.sum(axis=0) - W.sum(axis=1) - n
        H = np.diag(W.sum(axis=0) + W.sum(axis=1) + n) - W - W.T
        return f, g, H, e

    def phi(t, s):
        e = np.exp(t)
        r = P_max - e.sum()
        if r <= 0:
            return np.inf
        W = a * e[None, :] / e[:, None]
        return s * (W.sum() + (b / e).sum()) - np.log(r)

    q0 = np.full(K, P_max / K) if q0 is None else np.asarray(q0, dtype=float)
    t = np.log(0.5 * P_max * q0 / q0.sum())
    f0 = parts(t)[0]
    s = 1.0 / max(f0, 1e-12)
    total = 0
    while True:
        for _ in range(max_iter):
            f, g, H, e = parts(t)
            r = P_max - e.sum()
            gs = s * g + e / r
            Hs = s * H + np.diag(e / r) + np.outer(e, e) / r ** 2
            dt = -np.linalg.solve(Hs, gs)
            dec = float(-gs @ dt)
            total += 1
            cur = phi(t, s)
            # round-off in phi grows with s * f; stop at that floor
            if dec / 2 <= max(1e-12, 1e-15 * abs(cur)):
                break
            step = 1.0
            while phi(t + step * dt, s) > cur - 0.25 * step * dec and step >= 1e-14:
                step *= 0.5
            if step < 1e-14:
                # no representable descent left at this barrier weight
                break
            t = t + step * dt
        else:
            raise ConvergenceError("barrier Newton did not converge",
                                   last_iterate=np.exp(t), residual=dec)
        if 1.0 / s <= gap:
            break
        s *= 10.0
    return np.exp(t), total


def gp_power(cd, tau, P_max, q0=None, method="reduced", tol=1e-8, max_iter=500):
    """Weighted-sum optimal user budgets.

    Parameters
    ----------
    cd : CouplingData
    tau : array_like
        Positive user weights.
    P_max : float
        Total power budget.
    q0 : array_like, optional
        Warm start.
    method : {"reduced", "barrier"}
        ``"reduced"`` places the budget on its (always active) boundary and
        runs Newton on the remaining shift-invariant convex problem.
        ``"barrier"`` runs a logarithmic-barrier Newton method in ``log q``
        and rescales its final iterate onto the budget.
    tol : float
        Required relative KKT residual.

    Raises
    ------
    ConvergenceError
        If the KKT residual is above `tol` after `max_iter` Newton steps.
    """
    if method == "reduced":
        q, it = _gp_reduced(cd, tau, P_max, q0, max_iter)
    elif method == "barrier":
        q, it = _gp_barrier(cd, tau, P_max, q0, max_iter)
        # scaling all budgets up never increases any AMSE
        q = q * P_max / q.sum()
    else:
        raise ValueError(f"unknown method {method!r}")
    res = kkt_residual(cd, tau, q, P_max)
    if res > tol:
        raise ConvergenceError(f"GP power allocation stalled (KKT residual {res:.2e})",
                               last_iterate=q, residual=res)
    return PowerSolution(q, wsum_objective(cd, tau, q), it, res)


def omega_matrix(cd, eta, P_max):
    """The nonnegative ``(K+1) x (K+1)`` min-max balancing matrix."""
    eta = np.asarray(eta, dtype=float)
    top = np.hstack([cd.Y / eta[:, None], (cd.sigma2 * cd.theta / eta)[:, None]])
    bottom = top.sum(axis=0, keepdims=True) / P_max
    return np.vstack([top, bottom])


def minmax_power(cd, eta, P_max):
    """Min-max weighted AMSE budgets from the dominant eigenpair of Omega.

    The balanced level is the largest real eigenvalue; the budgets are the
    first `K` entries of its eigenvector scaled so the last entry equals 1.
    """
    Om = omega_matrix(cd, eta, P_max)
    if np.any(Om < 0):
        raise IrreducibleError("Omega has negative entries", omega=Om)
    w, V = np.linalg.eig(Om)
    i = int(np.argmax(w.real))
    mu = w[i]
    if abs(mu.imag) > 1e-10 * max(abs(mu.real), 1.0):
        raise NumericalError(f"dominant eigenvalue is complex: {mu}")
    v = V[:, i]
    if abs(v[-1]) < 1e-300:
        raise IrreducibleError("Perron vector has zero budget entry", omega=Om)
    v = (v / v[-1]).real
    q = v[:-1]
    if np.any(q <= 0):
        raise IrreducibleError(f"non-positive power in Perron vector: {q}", omega=Om)
    return PowerSolution(q, float(mu.real))
