"""Small Hermitian linear-algebra helpers shared by the modules."""

import numpy as np
from scipy import linalg as sla

from .errors import SingularMatrixError

RCOND_MIN = 1e-14
CLIP_TOL = 1e-12


def herm(A):
    """Hermitian part of a square matrix."""
    return 0.5 * (A + A.conj().T)


def hsqrt(R):
    """Hermitian PSD square root via eigendecomposition.

    Eigenvalues in ``[-1e-12 * ||R||, 0)`` are clipped to zero; anything more
    negative raises `SingularMatrixError`.
    """
    R = herm(np.asarray(R))
    w, V = np.linalg.eigh(R)
    scale = max(np.abs(w).max(initial=0.0), 1.0)
    if w.size and w.min() < -CLIP_TOL * scale:
        raise SingularMatrixError(
            f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


def hsolve(A, B):
    """Solve ``A X = B`` for Hermitian positive definite `A` by Cholesky."""
    try:
        c, low = sla.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"Cholesky factorization failed: {exc}") from exc
    d = np.abs(np.diag(c))
    if d.min() == 0.0 or (d.min() / d.max()) ** 2 < RCOND_MIN:
        raise SingularMatrixError("matrix is numerically singular")
    return sla.cho_solve((c, low), B, check_finite=False)


def hinv(A):
    """Inverse of a Hermitian positive definite matrix (via `hsolve`)."""
    return herm(hsolve(A, np.eye(A.shape[0], dtype=A.dtype)))


def split_columns(V):
    """Split ``V`` into unit-norm columns and nonnegative column norms.

    Zero columns map to the first standard basis vector with norm 0.
    """
    norms = np.linalg.norm(V, axis=0)
    F = np.zeros_like(V)
    nz = norms > 0.0
    F[:, nz] = V[:, nz] / norms[nz]
    F[0, ~nz] = 1.0
    return F, norms
