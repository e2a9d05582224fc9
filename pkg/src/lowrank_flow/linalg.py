"""Dense linear-algebra kernels.

Matrices are plain 2-D ``numpy.ndarray`` of float64. Every public function
rejects non-finite input.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NonFiniteError, OrthonormalityError, SingularityError

PINV_RTOL = 1e-14
ORTHO_TOL = 1e-8


class QrPair(NamedTuple):
    q: np.ndarray
    r_factor: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite float64 2-D array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return arr


def qr_thin(a) -> QrPair:
    """Thin Householder QR with a nonnegative diagonal in R.

    Rank-deficient input is accepted; zero diagonal entries of R are left
    as they are.
    """
    a = as_matrix(a, "a")
    n, r = a.shape
    if n < r:
        raise DimensionError(f"qr_thin needs rows >= cols, got {a.shape}")
    q, rf = np.linalg.qr(a, mode="reduced")
    signs = np.where(np.diag(rf) < 0.0, -1.0, 1.0)
    q = q * signs
    rf = np.triu(rf * signs[:, None])
    return QrPair(q, rf)


def pinv(a) -> np.ndarray:
    """Moore-Penrose pseudo-inverse ``(A^T A)^{-1} A^T`` of a full column rank matrix."""
    a = as_matrix(a, "a")
    n, r = a.shape
    if n < r:
        raise DimensionError(f"pinv needs full column rank, got shape {a.shape}")
    gram = a.T @ a
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] <= PINV_RTOL * sv[0] or sv[0] == 0.0:
        raise SingularityError("A^T A is numerically singular")
    lu, piv = sla.lu_factor(gram)
    return sla.lu_solve((lu, piv), a.T)


def check_orthonormal(u, tol: float = ORTHO_TOL, name: str = "u") -> np.ndarray:
    u = as_matrix(u, name)
    r = u.shape[1]
    if u.shape[0] < r:
        raise DimensionError(f"{name} has more columns than rows")
    dev = np.linalg.norm(u.T @ u - np.eye(r))
    if dev > tol:
        raise OrthonormalityError(f"{name} is not orthonormal (deviation {dev:.3e})")
    return u


def projectors(u) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P_U, I - P_U)`` for an orthonormal basis ``u``."""
    u = check_orthonormal(u)
    p = u @ u.T
    return p, np.eye(u.shape[0]) - p


def orthonormal_complement(u) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``range(u)``.

    Taken as the trailing columns of the complete Householder QR factor,
    so the result is a deterministic function of ``u``.
    """
    u = as_matrix(u, "u")
    n, r = u.shape
    if n <= r:
        raise DimensionError(f"no complement exists for a {n}x{r} basis")
    q, _ = np.linalg.qr(u, mode="complete")
    return q[:, r:]


def truncated_svd(a, r: int):
    """Best rank-``r`` approximation of ``a`` as a ``LowRankState``."""
    from .manifold import LowRankState

    a = as_matrix(a, "a")
    if not 1 <= r <= min(a.shape):
        raise DimensionError(f"rank {r} out of range for shape {a.shape}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return LowRankState(u[:, :r].copy(), np.diag(s[:r]), vt[:r].T.copy())


def matrix_exp(a) -> np.ndarray:
    """Matrix exponential (scaling and squaring, Pade degree 13)."""
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix_exp needs a square matrix, got {a.shape}")
    return sla.expm(a)


def random_skew_symmetric(n: int, seed: int) -> np.ndarray:
    """Skew-symmetric ``(B - B^T)/2`` with ``B`` i.i.d. uniform on [-1, 1].

    ``B`` is drawn from ``numpy.random.Generator(PCG64(seed))``, whose output
    stream is fixed across platforms.
    """
    if n < 1:
        raise DimensionError("n must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    b = rng.uniform(-1.0, 1.0, size=(n, n))
    return 0.5 * (b - b.T)


def random_orthonormal(n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``n x r`` matrix with orthonormal columns (QR of a Gaussian)."""
    return qr_thin(rng.standard_normal((n, r))).q
