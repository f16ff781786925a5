"""Dense factorization kernels.

Column-pivoted QR (Businger-Golub), strong rank-revealing QR for tall and
wide matrices, thin SVD with a deterministic sign convention, Cholesky,
triangular solves, small pseudoinverse solves and principal angles.

All routines are pure functions of their inputs.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    NotPositiveDefiniteError,
    NumericalError,
    RankDeficiencyError,
    SingularFactorError,
)

__all__ = [
    "PivotedQr",
    "SrrqrResult",
    "ThinSvd",
    "ORTH_TOL",
    "as_matrix",
    "qr_column_pivoted",
    "srrqr",
    "srrqr_bound",
    "thin_svd",
    "cholesky",
    "principal_angles",
    "solve_triangular",
    "pinv_apply",
    "orthonormality_defect",
    "kahan_matrix",
    "symmetrize",
]

#: ||Q^T Q - I||_F allowed for inputs declared orthonormal.
ORTH_TOL = 1e-8

#: swaps between full recomputations in the sRRQR update loop
_RECOMPUTE_EVERY = 50


@dataclass(frozen=True)
class PivotedQr:
    """``a[:, perm] = q @ r`` with ``|diag(r)|`` non-increasing."""

    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray


@dataclass(frozen=True)
class SrrqrResult:
    pivoted_qr: PivotedQr
    target_rank: int
    eta: float
    swap_count: int

    @property
    def selected(self):
        """Leading ``target_rank`` pivots (0-based column indices)."""
        return self.pivoted_qr.perm[: self.target_rank]

    def certificate(self):
        """max |R11^{-1} R12|, recomputed by an explicit triangular solve."""
        k = self.target_rank
        r = self.pivoted_qr.r
        if k == r.shape[1]:
            return 0.0
        x = solve_triangular(r[:k, :k], r[:k, k:])
        return float(np.max(np.abs(x)))


@dataclass(frozen=True)
class ThinSvd:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.sigma) @ self.v.T


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array (1-D input becomes a column)."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} has non-finite entries")
    return a


def orthonormality_defect(q):
    q = np.asarray(q, dtype=float)
    return float(np.linalg.norm(q.T @ q - np.eye(q.shape[1])))


def _check_orthonormal(q, name):
    d = orthonormality_defect(q)
    if d > ORTH_TOL:
        raise ConfigError(f"{name} does not have orthonormal columns (||Q^T Q - I||_F = {d:.3e})")


# ---------------------------------------------------------------------------
# QR with column pivoting
# ---------------------------------------------------------------------------

def qr_column_pivoted(a):
    """Businger-Golub Householder QR with column pivoting.

    Trailing column norms are recomputed at every step rather than
    downdated, so the pivot order is exact up to roundoff in the norms
    themselves. Exact ties go to the lowest original column index.

    Returns a :class:`PivotedQr` with ``q`` of shape ``(m, k)`` and ``r`` of
    shape ``(k, n)``, ``k = min(m, n)``.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    k = min(m, n)
    r = a.copy()
    perm = np.arange(n)
    vs = []
    for j in range(k):
        block = r[j:, j:]
        norms = np.einsum("ij,ij->j", block, block)
        top = norms.max()
        cand = np.flatnonzero(norms == top)
        p = j + int(cand[np.argmin(perm[j + cand])])
        if p != j:
            r[:, [j, p]] = r[:, [p, j]]
            perm[[j, p]] = perm[[p, j]]
        x = r[j:, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            vs.append(None)
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x.copy()
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            vs.append(None)
            continue
        v /= vn
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        r[j, j] = alpha
        r[j + 1:, j] = 0.0
        vs.append(v)
    q = np.eye(m, k)
    for j in range(k - 1, -1, -1):
        v = vs[j]
        if v is not None:
            q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])
    return PivotedQr(q=q, r=np.triu(r[:k, :]), perm=perm)


# ---------------------------------------------------------------------------
# Strong rank-revealing QR
# ---------------------------------------------------------------------------

def srrqr_bound(eta, k, n):
    """sqrt(1 + eta^2 k (n - k)), the factor in the sRRQR singular-value sandwich."""
    return math.sqrt(1.0 + eta * eta * k * (n - k))


def _swap_cap(n):
    return max(10, int(math.ceil(10 * n * math.log2(max(n, 2)))))


def srrqr(a, target_rank, eta=2.0, max_swaps=None):
    """Strong rank-revealing QR (Gu-Eisenstat) with tuning parameter ``eta``.

    Starts from the Businger-Golub ordering and swaps a leading column with a
    trailing one while some ``rho_ij = sqrt((R11^{-1}R12)_ij^2 +
    (gamma_j(R22) / omega_i(R11))^2)`` exceeds ``eta``. Every swap multiplies
    ``|det R11|`` by ``rho_ij > eta >= 1``, so the loop terminates in exact
    arithmetic; ``max_swaps`` (default ``10 n log2 n``) guards floating point.

    When ``target_rank == rows`` (the wide case) ``R22`` is empty and the
    criterion reduces to ``max |R11^{-1}R12| <= eta``; ``R11^{-1}R12`` equals
    ``A_sel^{-1} A_rest`` and is maintained by rank-one updates, recomputed
    from scratch every 50 swaps and at termination.

    On return ``max |R11^{-1} R12| <= eta`` and, for ``j <= k``,
    ``sigma_j(A) / sqrt(1 + eta^2 k (n-k)) <= sigma_j(R11)``.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    k = int(target_rank)
    if not 1 <= k <= min(m, n):
        raise ConfigError(f"target rank {k} outside [1, {min(m, n)}]")
    if not eta >= 1.0:
        raise ConfigError(f"eta must be >= 1, got {eta}")
    cap = _swap_cap(n) if max_swaps is None else int(max_swaps)

    base = qr_column_pivoted(a)
    d = np.abs(np.diag(base.r))
    if d[k - 1] <= max(m, n) * np.finfo(float).eps * d[0]:
        raise RankDeficiencyError(
            f"numerical rank below target rank {k}: |r_kk| = {d[k - 1]:.3e}, |r_11| = {d[0]:.3e}"
        )
    if k == n:
        return SrrqrResult(base, k, float(eta), 0)

    perm = base.perm.copy()
    if k == m:
        swaps = _srrqr_wide(a, perm, k, eta, cap)
    else:
        swaps = _srrqr_tall(a, perm, k, eta, cap)
    if swaps == 0:
        return SrrqrResult(base, k, float(eta), 0)

    sel, rest = perm[:k], perm[k:]
    if k < m:
        # order the trailing block by pivoting on its residual so R22 is
        # itself rank revealing
        q1, _ = np.linalg.qr(a[:, sel])
        resid = a[:, rest] - q1 @ (q1.T @ a[:, rest])
        rest = rest[qr_column_pivoted(resid).perm]
    else:
        rest = np.sort(rest)
    perm = np.concatenate([sel, rest])
    q, r = np.linalg.qr(a[:, perm])
    return SrrqrResult(PivotedQr(q=q, r=r, perm=perm), k, float(eta), swaps)


def _argmax_2d(x):
    flat = int(np.argmax(x))
    return divmod(flat, x.shape[1])


def _srrqr_wide(a, perm, k, eta, cap):
    # C = A_sel^{-1} A over all columns; selected columns give identity
    def fresh():
        return np.linalg.solve(a[:, perm[:k]], a[:, perm])

    c = fresh()
    swaps = since = 0
    while True:
        block = np.abs(c[:, k:])
        i, j = _argmax_2d(block)
        if block[i, j] <= eta:
            if since == 0:
                return swaps
            c = fresh()
            since = 0
            continue
        swaps += 1
        since += 1
        if swaps > cap:
            raise ConvergenceError(f"sRRQR exceeded the swap cap of {cap}")
        jj = k + j
        piv = c[i, jj]
        col = c[:, jj].copy()
        col[i] -= 1.0
        c -= np.outer(col / piv, c[i, :])
        c[:, [i, jj]] = c[:, [jj, i]]
        perm[[i, jj]] = perm[[jj, i]]
        if since >= _RECOMPUTE_EVERY:
            c = fresh()
            since = 0


def _srrqr_tall(a, perm, k, eta, cap):
    swaps = 0
    while True:
        sel, rest = perm[:k], perm[k:]
        q1, r11 = np.linalg.qr(a[:, sel])
        r12 = q1.T @ a[:, rest]
        gamma = np.linalg.norm(a[:, rest] - q1 @ r12, axis=0)
        r11inv = sla.solve_triangular(r11, np.eye(k))
        ab = r11inv @ r12
        inv_omega = np.linalg.norm(r11inv, axis=1)
        rho = np.hypot(ab, np.outer(inv_omega, gamma))
        i, j = _argmax_2d(rho)
        if rho[i, j] <= eta:
            return swaps
        swaps += 1
        if swaps > cap:
            raise ConvergenceError(f"sRRQR exceeded the swap cap of {cap}")
        perm[[i, k + j]] = perm[[k + j, i]]


# ---------------------------------------------------------------------------
# SVD, Cholesky, solves
# ---------------------------------------------------------------------------

def thin_svd(a):
    """Thin SVD; each left singular vector has its largest-magnitude entry positive."""
    a = as_matrix(a, "a")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    piv = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[piv, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return ThinSvd(u=u * signs, sigma=s, v=vt.T * signs)


def symmetrize(w, warn_tol=1e-10, error_tol=1e-6):
    """Return ``(W + W^T)/2``, warning or raising on noticeable asymmetry."""
    w = as_matrix(w, "w")
    if w.shape[0] != w.shape[1]:
        raise DimensionError(f"expected a square matrix, got {w.shape}")
    scale = np.linalg.norm(w)
    asym = np.linalg.norm(w - w.T) / scale if scale > 0 else 0.0
    if asym > error_tol:
        raise ConfigError(f"matrix is not symmetric (relative asymmetry {asym:.3e})")
    if asym > warn_tol:
        warnings.warn(f"symmetrizing matrix with relative asymmetry {asym:.3e}", stacklevel=3)
    if asym > 0:
        w = 0.5 * (w + w.T)
    return w


def cholesky(w, pivoted=False):
    """Return ``(L, perm)`` with ``W[perm][:, perm] = L L^T``.

    With ``pivoted`` the diagonal-pivoting LAPACK routine ``?pstrf`` is used;
    otherwise ``perm`` is the identity ordering.
    """
    w = symmetrize(w)
    m = w.shape[0]
    if not pivoted:
        c, info = sla.lapack.dpotrf(w, lower=1, clean=1)
        if info > 0:
            raise NotPositiveDefiniteError(int(info))
        if info < 0:
            raise NumericalError(f"dpotrf argument error {info}")
        return np.tril(c), np.arange(m)
    c, piv, rank, info = sla.lapack.dpstrf(w, lower=1, tol=-1.0)
    if rank < m or info != 0:
        raise NotPositiveDefiniteError(int(rank) + 1)
    return np.tril(c), piv - 1


def solve_triangular(t, rhs, lower=False, trans=False):
    """Solve ``op(T) X = rhs`` for triangular ``T``; ``op`` is transpose when ``trans``."""
    t = as_matrix(t, "t")
    if t.shape[0] != t.shape[1]:
        raise DimensionError(f"triangular factor must be square, got {t.shape}")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != t.shape[0]:
        raise DimensionError(f"rhs has {rhs.shape[0]} rows, factor has {t.shape[0]}")
    zero = np.flatnonzero(np.diag(t) == 0.0)
    if zero.size:
        raise SingularFactorError(int(zero[0]) + 1)
    return sla.solve_triangular(t, rhs, lower=lower, trans=1 if trans else 0, check_finite=False)


def pinv_apply(a, rhs, rcond=None):
    """Least-squares solution ``A^+ rhs`` for ``A`` with full column rank."""
    a = as_matrix(a, "a")
    m, n = a.shape
    if n > m:
        raise DimensionError(f"pinv_apply needs rows >= cols, got {a.shape}")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != m:
        raise DimensionError(f"rhs has {rhs.shape[0]} rows, expected {m}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    tol = (max(m, n) * np.finfo(float).eps if rcond is None else rcond) * s[0]
    if s[-1] <= tol:
        raise RankDeficiencyError(f"matrix is rank deficient: sigma_min = {s[-1]:.3e}")
    return vt.T @ ((u.T @ rhs) / (s[:, None] if rhs.ndim == 2 else s))


def principal_angles(basis_a, basis_b):
    """Principal angles between ``range(basis_a)`` and ``range(basis_b)``.

    Cosines are the singular values of ``A^T B`` clamped to [0, 1]; angles
    below pi/4 are taken from the sines (singular values of
    ``B - A A^T B``) which resolves small angles to full precision.
    Returned in non-decreasing order.
    """
    qa = as_matrix(basis_a, "basis_a")
    qb = as_matrix(basis_b, "basis_b")
    if qa.shape[0] != qb.shape[0]:
        raise DimensionError("bases live in spaces of different dimension")
    _check_orthonormal(qa, "basis_a")
    _check_orthonormal(qb, "basis_b")
    if qa.shape[1] < qb.shape[1]:
        qa, qb = qb, qa
    k = qb.shape[1]
    cos = np.clip(np.linalg.svd(qa.T @ qb, compute_uv=False), 0.0, 1.0)
    angles = np.arccos(cos)
    sin = np.clip(np.linalg.svd(qb - qa @ (qa.T @ qb), compute_uv=False), 0.0, 1.0)
    small = np.arcsin(sin)[::-1]
    pick = small < np.pi / 4
    angles[pick] = small[pick]
    return np.sort(angles[:k])


def kahan_matrix(n, c=0.285, pert=25.0):
    """Kahan's upper-triangular matrix ``diag(s^0..s^{n-1}) (I - c * strict_upper_ones)``.

    ``s = sqrt(1 - c^2)``; the diagonal is perturbed by ``pert * eps * (n..1)``
    so that column pivoting keeps the natural order.
    """
    s = math.sqrt(1.0 - c * c)
    k = np.eye(n) - c * np.triu(np.ones((n, n)), 1)
    k = s ** np.arange(n)[:, None] * k
    k[np.diag_indices(n)] += pert * np.finfo(float).eps * np.arange(n, 0, -1)
    return k
