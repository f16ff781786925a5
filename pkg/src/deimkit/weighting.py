"""Symmetric positive definite inner-product weights ``(u, v)_W = v^T W u``.

A :class:`WeightOperator` wraps ``W`` in one of four storage kinds and owns
a factor ``W = L L^T`` (``L = Pi L_s`` when a fill-reducing or pivoting
permutation ``Pi`` is used). Everything downstream talks to ``W`` through
products and solves with ``L``; nobody forms ``L^{-1}`` explicitly.
"""

import threading
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import ConfigError, DimensionError, NotPositiveDefiniteError
from .linalg import as_matrix, cholesky, symmetrize, thin_svd

__all__ = [
    "KINDS",
    "WeightOperator",
    "as_weight",
    "w_inner",
    "w_norm",
    "w_operator_norm",
    "factorize",
    "equilibrate",
    "condition_estimate",
    "read_weight",
    "write_weight",
]

KINDS = ("identity", "diagonal", "sparse", "dense")

#: sparse weights up to this size get an exact (dense) condition number
DENSE_COND_LIMIT = 2000


class _SparseFactor:
    """Banded Cholesky of an RCM-reordered sparse SPD matrix."""

    def __init__(self, w):
        m = w.shape[0]
        perm = np.asarray(csgraph.reverse_cuthill_mckee(w.tocsr(), symmetric_mode=True))
        wp = w.tocsr()[perm][:, perm].tocoo()
        bw = int(np.max(np.abs(wp.row - wp.col))) if wp.nnz else 0
        lower = np.zeros((bw + 1, m))
        keep = wp.row >= wp.col
        lower[wp.row[keep] - wp.col[keep], wp.col[keep]] = wp.data[keep]
        try:
            c = sla.cholesky_banded(lower, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            idx = _leading_minor(str(exc))
            raise NotPositiveDefiniteError(
                int(perm[idx - 1]) + 1 if idx else 0,
                f"sparse weight is not positive definite ({exc})",
            ) from exc
        upper = np.zeros_like(c)
        for d in range(bw + 1):
            upper[bw - d, d:] = c[d, : m - d]
        self.perm = perm
        self.bandwidth = bw
        self.lower_band = c
        self.upper_band = upper
        offs = [-d for d in range(bw + 1)]
        self.l = sp.diags([c[d, : m - d] for d in range(bw + 1)], offs, shape=(m, m), format="csr")
        self.lt = self.l.T.tocsr()

    def solve_l(self, y):
        bw = self.bandwidth
        return sla.solve_banded((bw, 0), self.lower_band, y, check_finite=False)

    def solve_lt(self, y):
        bw = self.bandwidth
        return sla.solve_banded((0, bw), self.upper_band, y, check_finite=False)


def _leading_minor(msg):
    digits = [int(tok) for tok in msg.replace(",", " ").split() if tok.isdigit()]
    return digits[0] if digits else 0


class WeightOperator:
    """SPD weight matrix with a cached factor and equilibration.

    Build with :meth:`identity`, :meth:`diagonal`, :meth:`dense` or
    :meth:`sparse` (or :func:`as_weight`). Instances are immutable; the
    factor is filled once, under a lock, on first use.
    """

    def __init__(self, kind, m, payload, pivoted=False):
        if kind not in KINDS:
            raise ConfigError(f"unknown weight kind {kind!r}")
        self.kind = kind
        self.m = int(m)
        self._payload = payload
        self._pivoted = bool(pivoted)
        self._lock = threading.Lock()
        self._factor = None
        self._equil = None
        self._cond = None

    # construction -------------------------------------------------------
    @classmethod
    def identity(cls, m):
        return cls("identity", m, None)

    @classmethod
    def diagonal(cls, d):
        d = np.asarray(d, dtype=float).ravel()
        if d.size < 1 or not np.all(np.isfinite(d)):
            raise ConfigError("diagonal weight needs finite entries")
        bad = np.flatnonzero(d <= 0)
        if bad.size:
            raise NotPositiveDefiniteError(int(bad[0]) + 1)
        return cls("diagonal", d.size, d.copy())

    @classmethod
    def dense(cls, w, pivoted=False):
        w = symmetrize(w)
        return cls("dense", w.shape[0], w, pivoted=pivoted)

    @classmethod
    def sparse(cls, w):
        w = sp.csr_matrix(w, dtype=float)
        if w.shape[0] != w.shape[1]:
            raise DimensionError(f"expected a square matrix, got {w.shape}")
        if not np.all(np.isfinite(w.data)):
            raise ConfigError("sparse weight has non-finite entries")
        scale = spla.norm(w)
        asym = spla.norm(w - w.T) / scale if scale > 0 else 0.0
        if asym > 1e-6:
            raise ConfigError(f"matrix is not symmetric (relative asymmetry {asym:.3e})")
        if asym > 1e-10:
            warnings.warn(f"symmetrizing matrix with relative asymmetry {asym:.3e}", stacklevel=2)
        if asym > 0:
            w = 0.5 * (w + w.T)
        w = sp.csr_matrix(w)
        w.sort_indices()
        return cls("sparse", w.shape[0], w)

    # basic views ---------------------------------------------------------
    def __repr__(self):
        return f"WeightOperator(kind={self.kind!r}, m={self.m})"

    @property
    def payload(self):
        return self._payload

    def diag(self):
        if self.kind == "identity":
            return np.ones(self.m)
        if self.kind == "diagonal":
            return self._payload.copy()
        return np.asarray(self._payload.diagonal(), dtype=float).copy()

    def todense(self):
        if self.kind == "identity":
            return np.eye(self.m)
        if self.kind == "diagonal":
            return np.diag(self._payload)
        if self.kind == "sparse":
            return self._payload.toarray()
        return self._payload.copy()

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.m:
            raise DimensionError(f"operand has leading dimension {x.shape[0]}, weight is {self.m}")
        return x

    def _scale_rows(self, d, x):
        return d * x if x.ndim == 1 else d[:, None] * x

    def matvec(self, x):
        """``W @ x`` for a vector or a matrix of columns."""
        x = self._check(x)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "diagonal":
            return self._scale_rows(self._payload, x)
        return np.asarray(self._payload @ x)

    # factor ---------------------------------------------------------------
    def _get_factor(self):
        if self._factor is None:
            with self._lock:
                if self._factor is None:
                    self._factor = self._compute_factor()
        return self._factor

    def _compute_factor(self):
        if self.kind == "identity":
            return ("identity", None, np.arange(self.m))
        if self.kind == "diagonal":
            return ("diagonal", np.sqrt(self._payload), np.arange(self.m))
        if self.kind == "dense":
            l, perm = cholesky(self._payload, pivoted=self._pivoted)
            return ("dense", l, perm)
        f = _SparseFactor(self._payload)
        return ("sparse", f, f.perm)

    @property
    def perm(self):
        return self._get_factor()[2]

    def factor(self):
        """``(L_s, perm)`` with ``W[perm][:, perm] = L_s L_s^T``.

        ``L_s`` is an ndarray for dense/diagonal kinds (diagonal: the square
        root, perm identity) and a sparse lower-triangular matrix for the
        sparse kind.
        """
        kind, f, perm = self._get_factor()
        if kind == "identity":
            return np.eye(self.m), perm
        if kind == "diagonal":
            return np.diag(f), perm
        if kind == "dense":
            return f, perm
        return f.l, perm

    def _permuted(self, x, inverse=False):
        perm = self.perm
        if inverse:
            out = np.empty_like(x)
            out[perm] = x
            return out
        return x[perm]

    def lt(self, x):
        """``L^T x`` where ``W = L L^T``."""
        x = self._check(x)
        kind, f, _ = self._get_factor()
        if kind == "identity":
            return x.copy()
        if kind == "diagonal":
            return self._scale_rows(f, x)
        xp = self._permuted(x)
        if kind == "dense":
            return f.T @ xp
        return np.asarray(f.lt @ xp)

    def l(self, x):
        """``L x``."""
        x = self._check(x)
        kind, f, _ = self._get_factor()
        if kind == "identity":
            return x.copy()
        if kind == "diagonal":
            return self._scale_rows(f, x)
        y = f @ x if kind == "dense" else np.asarray(f.l @ x)
        return self._permuted(y, inverse=True)

    def lt_solve(self, y):
        """``L^{-T} y``."""
        y = self._check(y)
        kind, f, _ = self._get_factor()
        if kind == "identity":
            return y.copy()
        if kind == "diagonal":
            return self._scale_rows(1.0 / f, y)
        z = sla.solve_triangular(f, y, lower=True, trans=1) if kind == "dense" else f.solve_lt(y)
        return self._permuted(z, inverse=True)

    def l_solve(self, x):
        """``L^{-1} x``."""
        x = self._check(x)
        kind, f, _ = self._get_factor()
        if kind == "identity":
            return x.copy()
        if kind == "diagonal":
            return self._scale_rows(1.0 / f, x)
        xp = self._permuted(x)
        return sla.solve_triangular(f, xp, lower=True) if kind == "dense" else f.solve_l(xp)

    def solve(self, x):
        """``W^{-1} x``."""
        return self.lt_solve(self.l_solve(x))

    # derived quantities -----------------------------------------------------
    def equilibration(self):
        """``(delta, W_s)`` with ``delta_i = sqrt(W_ii)`` and unit-diagonal ``W_s``."""
        if self._equil is None:
            with self._lock:
                if self._equil is None:
                    self._equil = _equilibrate(self)
        return self._equil

    def cond(self):
        """Spectral condition number (cached)."""
        if self._cond is None:
            self._cond = _condition(self)
        return self._cond

    def scaled(self, c):
        """The weight ``c * W`` for a scalar ``c > 0``."""
        if not c > 0:
            raise ConfigError("scale must be positive")
        if self.kind == "identity":
            return WeightOperator.diagonal(np.full(self.m, float(c)))
        if self.kind == "diagonal":
            return WeightOperator.diagonal(c * self._payload)
        if self.kind == "sparse":
            return WeightOperator.sparse(c * self._payload)
        return WeightOperator.dense(c * self._payload, pivoted=self._pivoted)


def as_weight(w, m=None):
    """Coerce ``None``, a vector, a dense or sparse matrix into a :class:`WeightOperator`."""
    if isinstance(w, WeightOperator):
        if m is not None and w.m != m:
            raise DimensionError(f"weight has dimension {w.m}, expected {m}")
        return w
    if w is None:
        if m is None:
            raise ConfigError("dimension required for the identity weight")
        return WeightOperator.identity(m)
    if sp.issparse(w):
        op = WeightOperator.sparse(w)
    else:
        arr = np.asarray(w, dtype=float)
        op = WeightOperator.diagonal(arr) if arr.ndim == 1 else WeightOperator.dense(arr)
    if m is not None and op.m != m:
        raise DimensionError(f"weight has dimension {op.m}, expected {m}")
    return op


def _vec(u, m):
    u = np.asarray(u, dtype=float).ravel()
    if u.size != m:
        raise DimensionError(f"vector has length {u.size}, weight is {m}")
    return u


def w_inner(u, v, w=None):
    """Weighted inner product ``v^T W u``."""
    u = np.asarray(u, dtype=float).ravel()
    w = as_weight(w, u.size)
    v = _vec(v, w.m)
    return float(v @ w.matvec(u))


def w_norm(u, w=None):
    """``||u||_W`` evaluated as ``||L^T u||_2``."""
    u = np.asarray(u, dtype=float).ravel()
    w = as_weight(w, u.size)
    return float(np.linalg.norm(w.lt(u)))


def w_operator_norm(mat, w=None):
    """Induced norm ``||M||_W = ||L^T M L^{-T}||_2``."""
    mat = as_matrix(mat, "M")
    if mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"M must be square, got {mat.shape}")
    w = as_weight(w, mat.shape[0])
    left = w.lt(mat)
    inner = w.l_solve(left.T).T
    return float(np.linalg.norm(inner, 2))


def factorize(w):
    """``(L, perm)`` for ``W[perm][:, perm] = L L^T``; see :meth:`WeightOperator.factor`."""
    return as_weight(w).factor()


def _equilibrate(w):
    if w.kind in ("identity", "diagonal"):
        return np.sqrt(w.diag()), WeightOperator.identity(w.m)
    delta = np.sqrt(w.diag())
    if w.kind == "dense":
        ws = w.payload / np.outer(delta, delta)
        ws[np.diag_indices(w.m)] = 1.0
        return delta, WeightOperator("dense", w.m, ws, pivoted=w._pivoted)
    inv = sp.diags(1.0 / delta)
    ws = sp.csr_matrix(inv @ w.payload @ inv)
    ws.setdiag(1.0)
    ws.sort_indices()
    return delta, WeightOperator("sparse", w.m, ws)


def equilibrate(w):
    """Diagonal equilibration ``W_s = Delta^{-1} W Delta^{-1}``, ``Delta = diag(sqrt(W_ii))``."""
    return as_weight(w).equilibration()


def _condition(w):
    if w.kind == "identity":
        return 1.0
    if w.kind == "diagonal":
        d = w.payload
        return float(d.max() / d.min())
    if w.kind == "dense":
        s = thin_svd(w.payload).sigma
        return float(s[0] / s[-1])
    if w.m <= DENSE_COND_LIMIT:
        ev = np.linalg.eigvalsh(w.payload.toarray())
        return float(ev[-1] / ev[0])
    # fixed start vector: ARPACK's default one is random, which breaks reproducibility
    v0 = np.random.default_rng(0).standard_normal(w.m)
    big = spla.eigsh(w.payload, k=1, which="LA", v0=v0, return_eigenvectors=False, tol=1e-10)[0]
    inv = spla.LinearOperator((w.m, w.m), matvec=w.solve, dtype=float)
    small_inv = spla.eigsh(inv, k=1, which="LA", v0=v0, return_eigenvectors=False, tol=1e-10)[0]
    return float(big * small_inv)


def condition_estimate(w):
    """Spectral condition number ``kappa_2(W)``."""
    return as_weight(w).cond()


# ---------------------------------------------------------------------------
# text format:  "W <kind> <m>" then the entries
# ---------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_weight(w, path):
    """Write ``w`` in the plain-text weight format (17 significant digits)."""
    w = as_weight(w)
    lines = [f"W {w.kind} {w.m}"]
    if w.kind == "diagonal":
        lines += [_fmt(x) for x in w.payload]
    elif w.kind == "dense":
        lines += [" ".join(_fmt(x) for x in row) for row in w.payload]
    elif w.kind == "sparse":
        up = sp.triu(w.payload).tocoo()
        order = np.lexsort((up.col, up.row))
        lines += [
            f"{up.row[t] + 1} {up.col[t] + 1} {_fmt(up.data[t])}" for t in order
        ]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_weight(path):
    """Read a weight file written by :func:`write_weight`."""
    with open(path) as fh:
        header = fh.readline().split()
        body = fh.read().split()
    if len(header) != 3 or header[0] != "W":
        raise ConfigError(f"{path}: expected header 'W <kind> <m>'")
    kind, m = header[1], int(header[2])
    if kind == "identity":
        return WeightOperator.identity(m)
    vals = np.array([float(t) for t in body])
    if kind == "diagonal":
        if vals.size != m:
            raise ConfigError(f"{path}: expected {m} diagonal entries, found {vals.size}")
        return WeightOperator.diagonal(vals)
    if kind == "dense":
        if vals.size != m * m:
            raise ConfigError(f"{path}: expected {m * m} entries, found {vals.size}")
        return WeightOperator.dense(vals.reshape(m, m))
    if kind == "sparse":
        if vals.size % 3:
            raise ConfigError(f"{path}: sparse entries must be 'i j value' triplets")
        trip = vals.reshape(-1, 3)
        i = trip[:, 0].astype(int) - 1
        j = trip[:, 1].astype(int) - 1
        if np.any(i > j):
            raise ConfigError(f"{path}: sparse triplets must lie in the upper triangle")
        off = i != j
        rows = np.concatenate([i, j[off]])
        cols = np.concatenate([j, i[off]])
        data = np.concatenate([trip[:, 2], trip[off, 2]])
        return WeightOperator.sparse(sp.csr_matrix((data, (rows, cols)), shape=(m, m)))
    raise ConfigError(f"{path}: unknown weight kind {kind!r}")
