"""Proper orthogonal decomposition in a weighted inner product.

The default route factors ``W = L L^T`` and takes the thin SVD of
``L^T Y``; the basis returned is ``U_hat = L^{-T} U_r``, which is
W-orthonormal. The alternative route runs a weighted QR ``Y = Q_Y R_Y``
(``Q_Y^T W Q_Y = I``) and the SVD of the small ``R_Y``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BreakdownError, ConfigError, DimensionError, RankDeficiencyError
from .linalg import as_matrix, thin_svd
from .weighting import WeightOperator, as_weight

__all__ = [
    "PodBasis",
    "pod_basis",
    "pod_basis_gsvd",
    "weighted_qr",
    "pod_project",
    "rank_select",
    "numerical_rank",
    "read_matrix",
    "write_matrix",
]

#: ||U_hat^T W U_hat - I||_F above this triggers one re-orthogonalization pass
W_ORTH_TOL = 1e-8


@dataclass(frozen=True)
class PodBasis:
    """Weighted POD basis.

    Attributes
    ----------
    u_hat : (m, r) ndarray
        W-orthonormal basis, ``U_hat^T W U_hat = I``.
    u_euclid : (m, r) ndarray
        ``U_r = L^T U_hat`` with orthonormal columns.
    sigma : ndarray
        All singular values of ``L^T Y`` (retained and discarded).
    rank : int
    weight : WeightOperator
    v : (n, r) ndarray or None
        Right singular vectors, so ``Y ~ U_hat diag(sigma[:r]) v^T``.
    """

    u_hat: np.ndarray
    u_euclid: np.ndarray
    sigma: np.ndarray
    rank: int
    weight: WeightOperator
    v: np.ndarray = None

    @property
    def m(self):
        return self.u_hat.shape[0]

    def project(self, f):
        return pod_project(self, f)

    def truncate(self, r):
        """Same basis restricted to its leading ``r`` vectors."""
        if not 1 <= r <= self.rank:
            raise ConfigError(f"cannot truncate rank-{self.rank} basis to {r}")
        return PodBasis(
            self.u_hat[:, :r], self.u_euclid[:, :r], self.sigma, r, self.weight,
            None if self.v is None else self.v[:, :r],
        )


def numerical_rank(sigma, shape):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    tol = max(shape) * np.finfo(float).eps * sigma[0]
    return int(np.count_nonzero(sigma > tol))


def rank_select(sigma, tol):
    """Smallest ``r`` whose discarded energy ratio is at most ``tol``.

    The ratio is ``sqrt(sum_{j>r} sigma_j^2 / sum_j sigma_j^2)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if not 0 < tol < 1:
        raise ConfigError(f"energy tolerance must lie in (0, 1), got {tol}")
    if sigma.size == 0 or np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
        raise ConfigError("singular values must be non-negative and non-increasing")
    sq = sigma**2
    total = sq.sum()
    if total == 0:
        raise RankDeficiencyError("all singular values are zero; no rank reaches the tolerance")
    tail = np.concatenate([np.cumsum(sq[::-1])[::-1][1:], [0.0]])
    ok = np.flatnonzero(np.sqrt(tail / total) <= tol)
    return int(ok[0]) + 1


def _resolve_rank(sigma, shape, rank, tol):
    if (rank is None) == (tol is None):
        raise ConfigError("give exactly one of rank= or tol=")
    nrank = numerical_rank(sigma, shape)
    r = int(rank) if rank is not None else rank_select(sigma, tol)
    if r < 1:
        raise ConfigError(f"rank must be >= 1, got {r}")
    if r > nrank:
        shown = ", ".join(f"{s:.3e}" for s in sigma[: min(len(sigma), r + 2)])
        raise RankDeficiencyError(
            f"requested rank {r} exceeds numerical rank {nrank}; sigma = [{shown}, ...]"
        )
    return r


def _snapshots(y, w):
    y = as_matrix(y, "snapshot matrix")
    w = as_weight(w, y.shape[0])
    return y, w


def pod_basis(y, w=None, rank=None, tol=None, center=False):
    """Weighted POD basis of the snapshot columns of ``y``.

    Exactly one of ``rank`` (explicit dimension) or ``tol`` (energy
    tolerance, see :func:`rank_select`) must be given. With ``W = I`` this is
    the plain SVD-based POD. ``center`` subtracts the column mean first.
    """
    y, w = _snapshots(y, w)
    if center:
        y = y - y.mean(axis=1, keepdims=True)
    svd = thin_svd(w.lt(y))
    r = _resolve_rank(svd.sigma, y.shape, rank, tol)
    u_r = svd.u[:, :r]
    u_hat = w.lt_solve(u_r)
    if w.kind != "identity":
        gram = u_hat.T @ w.matvec(u_hat)
        if np.linalg.norm(gram - np.eye(r)) > W_ORTH_TOL:
            u_hat, _ = weighted_qr(u_hat, w)
            u_r = w.lt(u_hat)
    return PodBasis(u_hat, u_r, svd.sigma, r, w, svd.v[:, :r])


def weighted_qr(y, w=None, breakdown_tol=1e-13):
    """Gram-Schmidt in ``(., .)_W`` with adaptive reorthogonalization.

    Returns ``(Q, R)`` with ``Q^T W Q = I`` and ``Q R = Y``. Each column is
    projected twice, then again while a pass still removes more than 10%
    of its W-norm (at most five passes), which keeps ``Q`` orthonormal even for numerically dependent
    snapshots. A column whose W-norm falls to ``breakdown_tol * ||Y||_W`` or
    below raises :class:`BreakdownError`; ``breakdown_tol=0`` only rejects
    exact dependence.
    """
    y, w = _snapshots(y, w)
    m, n = y.shape
    if n > m:
        raise DimensionError(f"weighted QR needs at most m columns, got {n} > {m}")
    q = np.zeros((m, n))
    wq = np.zeros((m, n))
    r = np.zeros((n, n))
    scale = np.linalg.norm(w.lt(y))
    for j in range(n):
        v = y[:, j].copy()
        wv = w.matvec(v)
        nrm = np.sqrt(max(v @ wv, 0.0))
        for npass in range(5):
            if j == 0:
                break
            c = wq[:, :j].T @ v
            v -= q[:, :j] @ c
            r[:j, j] += c
            before, wv = nrm, w.matvec(v)
            nrm = np.sqrt(max(v @ wv, 0.0))
            if npass >= 1 and nrm > 0.9 * before:  # norm kept: no cancellation left
                break
        if nrm == 0.0 or nrm <= breakdown_tol * scale:
            raise BreakdownError(
                f"weighted Gram-Schmidt breakdown at column {j + 1}: W-norm {nrm:.3e}"
            )
        q[:, j] = v / nrm
        wq[:, j] = wv / nrm
        r[j, j] = nrm
    return q, r


def pod_basis_gsvd(y, w=None, rank=None, tol=None):
    """Weighted POD through ``Y = Q_Y R_Y`` and the SVD of ``R_Y``.

    Numerically dependent snapshot columns are tolerated; only exactly
    dependent ones raise :class:`BreakdownError`.
    """
    y, w = _snapshots(y, w)
    q, r_y = weighted_qr(y, w, breakdown_tol=0.0)
    svd = thin_svd(r_y)
    r = _resolve_rank(svd.sigma, y.shape, rank, tol)
    u_hat = q @ svd.u[:, :r]
    return PodBasis(u_hat, w.lt(u_hat), svd.sigma, r, w, svd.v[:, :r])


def pod_project(basis, f):
    """W-orthogonal projection ``U_hat U_hat^T W f``."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != basis.m:
        raise DimensionError(f"vector has length {f.shape[0]}, basis has {basis.m} rows")
    return basis.u_hat @ (basis.u_hat.T @ basis.weight.matvec(f))


# ---------------------------------------------------------------------------
# matrix text format:  "<tag> <m> <n>" then column-major values
# ---------------------------------------------------------------------------

def write_matrix(a, path, tag="Y"):
    a = as_matrix(a)
    m, n = a.shape
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{tag} {m} {n}\n")
        for j in range(n):
            fh.write("\n".join(format(float(x), ".17g") for x in a[:, j]))
            fh.write("\n")


def read_matrix(path):
    """Read a ``Y <m> <n>`` column-major text matrix."""
    with open(path) as fh:
        header = fh.readline().split()
        body = fh.read().split()
    if len(header) != 3:
        raise ConfigError(f"{path}: expected header '<tag> <m> <n>'")
    m, n = int(header[1]), int(header[2])
    vals = np.array([float(t) for t in body])
    if vals.size != m * n:
        raise ConfigError(f"{path}: expected {m * n} values, found {vals.size}")
    return vals.reshape(n, m).T.copy()
