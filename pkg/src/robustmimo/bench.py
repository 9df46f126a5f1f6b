"""
Monte Carlo experiment harness: SNR sweeps over random channel instances
comparing robust, naive and perfect-CSI designs by sum AMSE and QPSK
symbol error rate.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ._linalg import hsolve
from .amse import Direction, amse_downlink
from .errors import InvalidParameterError, NoFloorError, RobustMimoError
from .model import crandn, draw_true_channel, sample_instance, stream
from .solvers import DEFAULT_MAX_ITER, DEFAULT_TOL, naive_design, perfect_design, solve

__all__ = [
    "SweepPlan",
    "TrialRecord",
    "run_sweep",
    "run_trial",
    "qpsk_aser",
    "qpsk_ser_awgn",
    "amse_floor",
    "aggregate",
    "DESIGNS",
    "PROBLEMS",
]

DESIGNS = ("robust", "naive", "perfect")
PROBLEMS = ("wsum", "minmax")
QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)


@dataclass(frozen=True)
class SweepPlan:
    snr_db: Sequence[float] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    trials: int = 100
    designs: Sequence[str] = DESIGNS
    problem: str = "wsum"
    symbols_per_trial: int = 40000
    master_seed: int = 0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "designs", tuple(self.designs))
        if int(self.trials) < 1:
            raise InvalidParameterError("trials must be >= 1")
        if len(self.snr_db) == 0 or np.any(np.diff(self.snr_db) <= 0):
            raise InvalidParameterError("snr_db must be a non-empty strictly increasing list")
        bad = [d for d in self.designs if d not in DESIGNS]
        if bad or not self.designs:
            raise InvalidParameterError(f"unknown designs {bad}; choose from {DESIGNS}")
        if self.problem not in PROBLEMS:
            raise InvalidParameterError(f"problem must be one of {PROBLEMS}")
        if int(self.symbols_per_trial) < 0:
            raise InvalidParameterError("symbols_per_trial must be >= 0")


@dataclass
class TrialRecord:
    trial_id: int
    snr_db: float
    design: str
    problem: str
    sum_amse: float
    per_user_amse: List[float]
    max_weighted_amse: float
    aser: float
    iterations: int
    converged: bool
    error: Optional[str] = field(default=None, repr=False)


def qpsk_ser_awgn(snr):
    """Closed-form QPSK symbol error rate at linear SNR ``Es / N0``."""
    from scipy.special import erfc
    q = 0.5 * erfc(np.sqrt(snr) / np.sqrt(2.0))
    return 2.0 * q - q * q


def _decide(x):
    """Nearest QPSK point; zero coordinates resolve to the positive side."""
    return (np.where(x.real >= 0, 1.0, -1.0) + 1j * np.where(x.imag >= 0, 1.0, -1.0)) / np.sqrt(2.0)


def qpsk_aser(inst, tx, sigma2, n_symbols, seed, blocks=10):
    """Average QPSK symbol error rate of a downlink design.

    The true channel is redrawn around the estimate once per block of
    ``n_symbols / blocks`` symbol vectors, so the rate averages over both the
    CSI error and the noise. Each symbol vector carries one unit-energy QPSK
    symbol on every stream of every user.

    Returns
    -------
    float
        Fraction of wrong decisions over all users, streams and symbols.
    """
    tx.require(Direction.DOWNLINK)
    rng = np.random.default_rng(seed)
    n_symbols = int(n_symbols)
    if n_symbols < 1:
        raise InvalidParameterError("n_symbols must be >= 1")
    blocks = max(1, min(int(blocks), n_symbols))
    sizes = np.full(blocks, n_symbols // blocks)
    sizes[: n_symbols % blocks] += 1
    B = np.hstack([G * np.sqrt(p) for G, p in zip(tx.G, tx.power)])  # G P^{1/2}
    S = B.shape[1]
    offsets = np.cumsum([0] + [len(p) for p in tx.power])
    errors = 0
    total = 0
    for nb in sizes:
        draw = draw_true_channel(inst, rng)
        idx = rng.integers(0, 4, size=(S, nb))
        d = QPSK[idx]
        x = B @ d
        for k in range(inst.K):
            H = draw.H[k]
            y = H.conj().T @ x + crandn(rng, (H.shape[1], nb), sigma2)
            scale = tx.alpha[k] / np.sqrt(tx.power[k])
            dhat = scale[:, None] * (tx.U[k].conj().T @ y)
            dk = d[offsets[k]:offsets[k + 1]]
            errors += int(np.count_nonzero(_decide(dhat) != dk))
            total += dk.size
    return errors / total


def amse_floor(inst, U, Q):
    """High-SNR limit of the uplink sum MAMSE for fixed ``(U, Q)``.

    ``tr{(I + Q^{1/2} U^H Hhat^H D^{-1} Hhat U Q^{1/2})^{-1}}`` with
    ``D = sum_i sigma_e2[i] tr{R_m,i U_i Q_i U_i^H} R_b,i``.
    """
    if not any(inst.sigma_e2):
        raise NoFloorError("no estimation error: the sum AMSE has no floor")
    D = sum(se * np.trace(Rm @ (Uk * q) @ Uk.conj().T).real * Rb
            for se, Rm, Rb, Uk, q in zip(inst.sigma_e2, inst.R_m, inst.R_b, U, Q))
    F = np.hstack([H @ (Uk * np.sqrt(q)) for H, Uk, q in zip(inst.Hhat, U, Q)])
    A = np.eye(F.shape[1]) + F.conj().T @ hsolve(D, F)
    return float(np.trace(np.linalg.inv(A)).real)


def _design(inst, cfg, design, problem, tol, max_iter):
    if design == "robust":
        return solve(inst, cfg, problem, tol, max_iter), inst
    if design == "naive":
        return naive_design(inst, cfg, problem, tol, max_iter), inst
    return perfect_design(inst, cfg, problem, tol, max_iter), inst.perfect()


def run_trial(cfg, plan, trial):
    """All ``(snr, design)`` records of one channel realization."""
    inst = sample_instance(cfg, stream(plan.master_seed, trial, "channel"))
    out = []
    for si, snr in enumerate(plan.snr_db):
        c = cfg.with_snr(snr)
        for design in plan.designs:
            try:
                trace, world = _design(inst, c, design, plan.problem, plan.tol, plan.max_iter)
                rep = amse_downlink(world, trace.final, c.sigma2, c.tau, c.eta)
                if plan.symbols_per_trial:
                    # common random numbers across designs at a given (trial, snr)
                    aser = qpsk_aser(world, trace.final, c.sigma2, plan.symbols_per_trial,
                                     stream(plan.master_seed, trial, "aser", si))
                else:
                    aser = float("nan")
                out.append(TrialRecord(trial, snr, design, plan.problem, rep.sum,
                                       [float(v) for v in rep.per_user_trace],
                                       rep.max_weighted, aser, trace.iterations,
                                       trace.converged))
            except RobustMimoError as exc:
                nan = float("nan")
                out.append(TrialRecord(trial, snr, design, plan.problem, nan, [nan] * cfg.K,
                                       nan, nan, getattr(exc, "iteration", 0), False,
                                       error=str(exc)))
    return out


def _run_trial_args(args):
    return run_trial(*args)


def run_sweep(cfg, plan, jobs=1):
    """Evaluate every ``(trial, snr, design)`` combination.

    Results do not depend on `jobs`: each trial draws from its own RNG
    streams and the records are returned in ``(trial, snr, design)`` order.
    """
    work = [(cfg, plan, t) for t in range(int(plan.trials))]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=int(jobs)) as ex:
            chunks = list(ex.map(_run_trial_args, work))
    else:
        chunks = [run_trial(*w) for w in work]
    return [r for chunk in chunks for r in chunk]


def aggregate(records, metric="sum_amse"):
    """Mean and standard error of `metric` per ``(snr_db, design)``.

    Failed trials (NaN metrics) are skipped.
    """
    groups = {}
    for r in records:
        groups.setdefault((r.snr_db, r.design), []).append(getattr(r, metric))
    out = {}
    for key, vals in sorted(groups.items()):
        v = np.asarray(vals, dtype=float)
        v = v[np.isfinite(v)]
        n = v.size
        mean = float(v.mean()) if n else float("nan")
        se = float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        out[key] = {"mean": mean, "stderr": se, "n": int(n)}
    return out
