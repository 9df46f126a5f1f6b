"""
Alternating uplink/downlink transceiver optimization.

Both algorithms start in the virtual uplink with equal stream powers and MS
filters from the SVD of the estimated channels, then repeat:

1. normalize the per-user power shapes and reallocate user budgets
   (GP for the weighted sum, Perron eigenvector for min-max),
2. uplink MAMSE receivers, user-wise transfer to the downlink,
3. downlink MAMSE receivers, user-wise transfer back to the uplink,
4. uplink MAMSE receivers.

Every step either minimizes the objective exactly over one block of
variables or keeps each user's AMSE fixed, so the recorded objective
never increases.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._linalg import herm, hinv
from .amse import (AmseReport, Direction, Transceiver, amse_downlink,
                   amse_uplink, mamse_rx_downlink, mamse_rx_uplink)
from .duality import dl_to_ul_user, ul_to_dl_sum, ul_to_dl_user
from .errors import (AlgorithmError, ConvergenceError, InvalidParameterError,
                     RobustMimoError)
from .powalloc import build_coupling, gp_power, minmax_power, per_user_amse

__all__ = [
    "SolveTrace",
    "Case1Result",
    "init_transceiver",
    "algorithm_one",
    "algorithm_two",
    "case1_reference",
    "case1_objective",
    "naive_design",
    "perfect_design",
    "solve",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500


@dataclass
class SolveTrace:
    """Outcome of an alternating solve.

    `final` is the downlink transceiver; `final_uplink` the virtual uplink
    state it was transferred from (same filters, uplink powers).
    """

    objective_history: List[float]
    iterations: int
    converged: bool
    final: Transceiver
    final_report: AmseReport
    final_uplink: Optional[Transceiver] = field(default=None, repr=False)


@dataclass
class Case1Result:
    Ubar: list
    objective: float
    rank_ok: bool
    recovered: Transceiver
    gap: float = 0.0
    iterations: int = 0

    @property
    def sum_amse(self):
        """Sum MAMSE of the relaxed optimum, ``S - N + objective``."""
        S = sum(U.shape[1] for U in self.recovered.U)
        N = self.recovered.G[0].shape[0]
        return S - N + self.objective


def _canonical_columns(V):
    """Fix the phase of each column: its largest-magnitude entry (first one
    on ties) becomes real and positive."""
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        mag = np.round(np.abs(col), 12)
        i = int(np.argmax(mag))
        if abs(col[i]) > 0:
            V[:, j] = col * (abs(col[i]) / col[i])
    return V


def init_transceiver(inst, cfg):
    """Equal stream powers ``P_max / S`` and MS filters from the leading
    right singular vectors of ``Hhat_k``; BS side from the uplink MAMSE
    receiver."""
    S = cfg.total_streams
    U, Q = [], []
    for k in range(inst.K):
        # full V spans the null space too, which completes rank-deficient cases
        _, _, Vh = np.linalg.svd(inst.Hhat[k], full_matrices=True)
        U.append(_canonical_columns(Vh.conj().T[:, :cfg.S[k]]))
        Q.append(np.full(cfg.S[k], cfg.P_max / S))
    G, alpha = mamse_rx_uplink(inst, U, Q, cfg.sigma2)
    return Transceiver(G, U, alpha, Q, Direction.UPLINK)


def _weighted_sum(report, cfg):
    return float(np.dot(cfg.tau, report.per_user_trace))


def _max_weighted(report, cfg):
    return float(np.max(report.per_user_trace / np.asarray(cfg.eta)))


def _alternate(inst, cfg, problem, tol, max_iter):
    sigma2 = cfg.sigma2
    if problem == "wsum":
        objective = _weighted_sum
    elif problem == "minmax":
        objective = _max_weighted
    else:
        raise ValueError(f"unknown problem {problem!r}")

    tx = init_transceiver(inst, cfg)
    G, U, alpha, Q = list(tx.G), list(tx.U), list(tx.alpha), list(tx.power)
    ul = amse_uplink(inst, tx, sigma2)
    history = [objective(ul, cfg)]
    q_prev = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        start = history[-1]
        try:
            qsum = np.array([q.sum() for q in Q])
            Qt = [q / s for q, s in zip(Q, qsum)]
            cd = build_coupling(inst, G, U, alpha, Qt, sigma2)
            if problem == "wsum":
                sol = gp_power(cd, cfg.tau, cfg.P_max, q0=qsum if q_prev is None else q_prev)
                history.append(float(np.dot(cfg.tau, per_user_amse(cd, sol.qtilde))))
            else:
                sol = minmax_power(cd, cfg.eta, cfg.P_max)
                history.append(float(np.max(per_user_amse(cd, sol.qtilde) / np.asarray(cfg.eta))))
            q_prev = sol.qtilde
            Q = [q * t for q, t in zip(sol.qtilde, Qt)]

            G, alpha = mamse_rx_uplink(inst, U, Q, sigma2)
            history.append(objective(amse_uplink(
                inst, Transceiver(G, U, alpha, Q, Direction.UPLINK), sigma2), cfg))

            P = ul_to_dl_user(inst, G, U, alpha, Q, sigma2).new_power
            U, alpha = mamse_rx_downlink(inst, G, P, sigma2)
            history.append(objective(amse_downlink(
                inst, Transceiver(G, U, alpha, P, Direction.DOWNLINK), sigma2), cfg))

            Q = list(dl_to_ul_user(inst, G, U, alpha, P, sigma2).new_power)
            G, alpha = mamse_rx_uplink(inst, U, Q, sigma2)
            history.append(objective(amse_uplink(
                inst, Transceiver(G, U, alpha, Q, Direction.UPLINK), sigma2), cfg))
        except RobustMimoError as exc:
            raise AlgorithmError(f"iteration {it}: {exc}", it) from exc
        if abs(start - history[-1]) <= tol * abs(start):
            converged = True
            break

    uplink = Transceiver(G, U, alpha, Q, Direction.UPLINK)
    P = ul_to_dl_user(inst, G, U, alpha, Q, sigma2).new_power
    final = Transceiver(G, U, alpha, P, Direction.DOWNLINK)
    report = amse_downlink(inst, final, sigma2, cfg.tau, cfg.eta)
    return SolveTrace(history, it, converged, final, report, uplink)


def algorithm_one(inst, cfg, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Robust weighted sum-AMSE minimization (GP power step)."""
    return _alternate(inst, cfg, "wsum", tol, max_iter)


def algorithm_two(inst, cfg, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Robust min-max weighted AMSE (Perron power step)."""
    return _alternate(inst, cfg, "minmax", tol, max_iter)


def solve(inst, cfg, problem="wsum", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    return _alternate(inst, cfg, problem, tol, max_iter)


def naive_design(inst, cfg, problem="wsum", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Design as if the estimate were exact, then evaluate under the true
    error statistics of `inst`."""
    trace = _alternate(inst.perfect(), cfg.replace(sigma_e2=0.0), problem, tol, max_iter)
    trace.final_report = amse_downlink(inst, trace.final, cfg.sigma2, cfg.tau, cfg.eta)
    return trace


def perfect_design(inst, cfg, problem="wsum", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Perfect-CSI benchmark: the estimate is the true channel, both in the
    optimizer and in the evaluation."""
    return _alternate(inst.perfect(), cfg.replace(sigma_e2=0.0), problem, tol, max_iter)


# --------------------------------------------------------------------------
# rank-relaxed reference for equal weights, white MS side, common BS side
# --------------------------------------------------------------------------

def _case1_params(inst, cfg):
    R_b = inst.R_b[0]
    se = inst.sigma_e2[0]
    for k in range(inst.K):
        if not np.allclose(inst.R_b[k], R_b) or inst.sigma_e2[k] != se:
            raise InvalidParameterError("reference needs a common R_b and sigma_e2")
        if not np.allclose(inst.R_m_tilde[k], np.eye(inst.R_m_tilde[k].shape[0])):
            raise InvalidParameterError("reference needs identity MS correlation")
    if not np.allclose(cfg.tau, 1.0):
        raise InvalidParameterError("reference needs unit weights")
    se_t = se / (se + 1.0)
    C = herm(se_t * cfg.P_max * R_b + cfg.sigma2 * np.eye(inst.N))
    return C


def case1_objective(inst, Ubar, C):
    """``tr{C (sum_k Hhat_k Ubar_k Hhat_k^H + C)^{-1}}``."""
    X = C + sum(H @ Ub @ H.conj().T for H, Ub in zip(inst.Hhat, Ubar))
    return float(np.trace(C @ hinv(herm(X))).real)


def _simplex_projection(v, total):
    """Euclidean projection of `v` onto ``{x >= 0, sum(x) = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ind = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _project_blocks(blocks, total):
    ws, Vs = zip(*(np.linalg.eigh(herm(B)) for B in blocks))
    sizes = [len(w) for w in ws]
    lam = _simplex_projection(np.concatenate(ws), total)
    out, start = [], 0
    for V, n in zip(Vs, sizes):
        out.append((V * lam[start:start + n]) @ V.conj().T)
        start += n
    return out


def case1_reference(inst, cfg, tol=1e-7, max_iter=20000):
    """Global optimum of the rank-relaxed uplink problem.

    Minimizes ``tr{C Gamma(Ubar)}`` with ``C = se_t P_max R_b + sigma2 I``
    over ``Ubar_k >= 0``, ``sum_k tr Ubar_k = P_max``, where
    ``se_t = sigma_e2 / (1 + sigma_e2)``.

    Accelerated projected-gradient steps on the product spectrahedron find
    the active face; a Newton iteration restricted to that face then
    finishes. Termination requires the Frank-Wolfe gap (the suboptimality
    bound given by the linear minimization oracle, a single extremal
    eigenpair of the gradient blocks) to be at most ``tol * objective``.
    """
    C = _case1_params(inst, cfg)
    prob = _RelaxedProblem(inst.Hhat, C, cfg.P_max)
    sizes = [H.shape[1] for H in inst.Hhat]
    X = [np.eye(m, dtype=complex) * cfg.P_max / sum(sizes) for m in sizes]
    used = 0
    gap = np.inf
    budget = 400
    while used < max_iter:
        X, n, gap = prob.accelerated(X, tol, min(budget, max_iter - used))
        used += n
        if gap <= tol * prob.value(X):
            break
        X, n, gap = prob.face_newton(X, tol)
        used += n
        if gap <= tol * prob.value(X):
            break
        budget *= 2
    f = prob.value(X)
    if gap > tol * f:
        raise ConvergenceError(f"relaxed reference stalled (gap {gap:.2e})",
                               last_iterate=X, residual=gap)

    rank_ok = True
    U, Q = [], []
    for k in range(inst.K):
        w, V = np.linalg.eigh(herm(X[k]))
        w, V = w[::-1], V[:, ::-1]
        tr = max(w.sum(), 1e-300)
        Sk = cfg.S[k]
        if np.sum(w > 1e-8 * tr) != min(sizes[k], Sk):
            rank_ok = False
        U.append(_canonical_columns(V[:, :Sk]))
        # keep strictly positive powers so the recovered design stays valid
        Q.append(np.maximum(w[:Sk], 1e-12 * tr))
    G, alpha = mamse_rx_uplink(inst, U, Q, cfg.sigma2)
    P = ul_to_dl_sum(Q, alpha).new_power
    rec = Transceiver(G, U, alpha, P, Direction.DOWNLINK)
    return Case1Result(list(X), f, rank_ok, rec, float(gap), used)


class _RelaxedProblem:
    """``f(Ubar) = tr{C (C + sum_k H_k Ubar_k H_k^H)^{-1}}`` on the product
    spectrahedron ``{Ubar_k >= 0, sum_k tr Ubar_k = P}``."""

    def __init__(self, Hs, C, P):
        self.Hs, self.C, self.P = Hs, C, P

    def _X(self, Ubar):
        return herm(self.C + sum(H @ Ub @ H.conj().T for H, Ub in zip(self.Hs, Ubar)))

    def value(self, Ubar):
        return float(np.trace(self.C @ hinv(self._X(Ubar))).real)

    def value_grad(self, Ubar):
        Xi = hinv(self._X(Ubar))
        Z = Xi @ self.C @ Xi
        grads = [-herm(H.conj().T @ Z @ H) for H in self.Hs]
        return float(np.trace(self.C @ Xi).real), grads

    def gap(self, Ubar, grads):
        lin = sum(np.vdot(g, Ub).real for g, Ub in zip(grads, Ubar))
        low = min(np.linalg.eigvalsh(g)[0] for g in grads)
        return lin - self.P * low

    def accelerated(self, X, tol, iters):
        """FISTA with backtracking and function-value restart."""
        f, g = self.value_grad(X)
        Y, fy, gy = X, f, g
        L, t_acc = 1.0, 1.0
        gap = self.gap(X, g)
        for it in range(1, iters + 1):
            if gap <= tol * f:
                return X, it - 1, gap
            while True:
                Xn = _project_blocks([y - gk / L for y, gk in zip(Y, gy)], self.P)
                fn, gn = self.value_grad(Xn)
                D = [a - b for a, b in zip(Xn, Y)]
                lin = sum(np.vdot(gk, d).real for gk, d in zip(gy, D))
                quad = sum(np.vdot(d, d).real for d in D)
                if fn <= fy + lin + 0.5 * L * quad + 1e-15 * abs(fy):
                    break
                L *= 2.0
            if fn > f:
                t_acc = 1.0
                Y, fy, gy = X, f, g
                continue
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
            mom = (t_acc - 1.0) / t_new
            Yn = _project_blocks([xn + mom * (xn - x) for xn, x in zip(Xn, X)], self.P)
            X, f, g = Xn, fn, gn
            Y = Yn
            fy, gy = self.value_grad(Y)
            t_acc = t_new
            L *= 0.9
            gap = self.gap(X, g)
        return X, iters, gap

    def face_newton(self, X, tol, iters=60):
        """Newton steps on ``Ubar_k = V_k Z_k V_k^H`` with ``V_k`` spanning the
        numerically nonzero eigenvectors of the current iterate."""
        faces = []
        for x in X:
            w, V = np.linalg.eigh(herm(x))
            keep = w > 1e-6 * self.P
            faces.append(V[:, keep])
        basis = []   # (block, direction in Ubar coordinates)
        for k, V in enumerate(faces):
            r = V.shape[1]
            for i in range(r):
                for j in range(i, r):
                    E = np.zeros((r, r), dtype=complex)
                    if i == j:
                        E[i, i] = 1.0
                        basis.append((k, V @ E @ V.conj().T))
                    else:
                        E[i, j] = E[j, i] = 1.0
                        basis.append((k, V @ E @ V.conj().T))
                        E[i, j], E[j, i] = 1j, -1j
                        basis.append((k, V @ E @ V.conj().T))
        n = len(basis)
        Z = [V.conj().T @ x @ V for V, x in zip(faces, X)]
        X = [V @ z @ V.conj().T for V, z in zip(faces, Z)]
        # the restriction must keep the budget exactly
        X = [x * self.P / sum(np.trace(y).real for y in X) for x in X]
        dX = [self.Hs[k] @ B @ self.Hs[k].conj().T for k, B in basis]
        a = np.array([np.trace(B).real for _, B in basis])
        f = self.value(X)
        it = 0
        for it in range(1, iters + 1):
            Xi = hinv(self._X(X))
            Zm = Xi @ self.C @ Xi
            g = np.array([-np.vdot(Zm, d).real for d in dX])
            XdZ = [Xi @ d @ Zm for d in dX]
            Hm = np.array([[2.0 * np.vdot(dX[b].conj().T, XdZ[a_]).real
                            for b in range(n)] for a_ in range(n)])
            Hm = 0.5 * (Hm + Hm.T)
            K = np.zeros((n + 1, n + 1))
            K[:n, :n], K[:n, n], K[n, :n] = Hm, a, a
            try:
                sol = np.linalg.solve(K, np.concatenate([-g, [0.0]]))
            except np.linalg.LinAlgError:
                break
            d = sol[:n]
            dec = float(d @ Hm @ d)
            step = [np.zeros_like(x) for x in X]
            for c, (k, B) in zip(d, basis):
                step[k] += c * B
            t = 1.0
            # fraction to the PSD boundary, then Armijo on the objective
            while t > 1e-12 and any(np.linalg.eigvalsh(V.conj().T @ (x + t * s) @ V)[0] <= 0
                                    for V, x, s in zip(faces, X, step) if V.shape[1]):
                t *= 0.5
            while t > 1e-12:
                Xn = [x + t * s for x, s in zip(X, step)]
                fn = self.value(Xn)
                if fn <= f - 0.25 * t * dec:
                    break
                t *= 0.5
            else:
                break
            X, f = Xn, fn
            if dec <= 1e-24 * max(f, 1e-300):
                break
        _, g = self.value_grad(X)
        return X, it, self.gap(X, g)
