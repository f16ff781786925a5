"""Interpolation index selection from an orthonormal basis.

Three strategies pick ``r`` rows of an ``m x r`` orthonormal ``U``:
residual-greedy DEIM, Q-DEIM (column-pivoted QR of ``U^T``) and strong RRQR
of ``U^T``. The last comes with the certificate
``||(S^T U)^{-1}||_2 <= sqrt(1 + eta^2 r (m - r))``. Oversampling appends
rows greedily to raise ``sigma_min(S^T U)``.

Indices are 0-based in Python; the text format is 1-based.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, RankDeficiencyError
from .linalg import ORTH_TOL, as_matrix, orthonormality_defect, qr_column_pivoted, srrqr, srrqr_bound

__all__ = [
    "STRATEGIES",
    "SelectionOperator",
    "selection_kappa",
    "select",
    "select_deim_greedy",
    "select_qdeim",
    "select_srrqr",
    "select_oversampled",
    "lemma_bound",
    "read_selection",
    "write_selection",
]

STRATEGIES = ("deim", "qdeim", "srrqr")


@dataclass(frozen=True)
class SelectionOperator:
    """Ordered row indices (0-based) defining ``S = I[:, indices]``."""

    indices: np.ndarray
    m: int
    strategy: str
    eta: float = None
    kappa: float = None

    @property
    def s(self):
        return len(self.indices)

    def matrix(self):
        """Dense ``m x s`` selection matrix (columns of the identity)."""
        out = np.zeros((self.m, self.s))
        out[self.indices, np.arange(self.s)] = 1.0
        return out

    def to_line(self):
        idx = " ".join(str(int(i) + 1) for i in self.indices)
        return f"S {self.m} {self.s} : {idx}"

    @classmethod
    def from_line(cls, line, strategy="file"):
        head, _, tail = line.partition(":")
        parts = head.split()
        if len(parts) != 3 or parts[0] != "S":
            raise ConfigError(f"bad selection line {line!r}")
        m, s = int(parts[1]), int(parts[2])
        idx = np.array([int(t) - 1 for t in tail.split()], dtype=int)
        if idx.size != s:
            raise ConfigError(f"selection line announces {s} indices, found {idx.size}")
        _check_indices(idx, m)
        return cls(idx, m, strategy)


def _check_indices(idx, m):
    if np.any(idx < 0) or np.any(idx >= m):
        raise ConfigError(f"selection indices must lie in [1, {m}]")
    if len(set(idx.tolist())) != idx.size:
        raise ConfigError("selection indices must be distinct")


def _basis(u):
    u = as_matrix(u, "basis")
    m, r = u.shape
    if r > m:
        raise ConfigError(f"basis has more columns ({r}) than rows ({m})")
    d = orthonormality_defect(u)
    if d > ORTH_TOL:
        raise ConfigError(f"basis is not orthonormal (||U^T U - I||_F = {d:.3e})")
    return u


def selection_kappa(u, indices):
    """``||(S^T U)^+||_2`` for the given rows; infinite when rank deficient."""
    sub = np.asarray(u)[np.asarray(indices)]
    s = np.linalg.svd(sub, compute_uv=False)
    k = min(sub.shape)
    if s.size < k or s[k - 1] <= max(sub.shape) * np.finfo(float).eps * max(s[0], 1.0):
        return math.inf
    return float(1.0 / s[k - 1])


def _finish(u, idx, strategy, eta=None):
    idx = np.asarray(idx, dtype=int)
    kappa = selection_kappa(u, idx)
    if not math.isfinite(kappa):
        raise RankDeficiencyError(f"{strategy} selection gives a singular S^T U")
    return SelectionOperator(idx, u.shape[0], strategy, eta, kappa)


def lemma_bound(eta, r, m):
    """The sRRQR selection ceiling ``sqrt(1 + eta^2 r (m - r))``."""
    return srrqr_bound(eta, r, m)


def select_deim_greedy(u):
    """Original residual-greedy DEIM selection."""
    u = _basis(u)
    m, r = u.shape
    idx = [int(np.argmax(np.abs(u[:, 0])))]
    for j in range(1, r):
        sub = u[idx, :j]
        try:
            c = np.linalg.solve(sub, u[idx, j])
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"DEIM step {j + 1}: singular interpolation matrix") from exc
        res = np.abs(u[:, j] - u[:, :j] @ c)
        res[idx] = -1.0
        idx.append(int(np.argmax(res)))
    return _finish(u, idx, "deim")


def select_qdeim(u):
    """Q-DEIM: first ``r`` pivots of column-pivoted QR of ``U^T``."""
    u = _basis(u)
    r = u.shape[1]
    return _finish(u, qr_column_pivoted(u.T).perm[:r], "qdeim")


def select_srrqr(u, eta=2.0):
    """Strong RRQR selection; the Lemma-2.1 ceiling on kappa is asserted."""
    u = _basis(u)
    m, r = u.shape
    res = srrqr(u.T, r, eta)
    sel = _finish(u, res.selected, "srrqr", float(eta))
    bound = lemma_bound(eta, r, m)
    if sel.kappa > bound * (1 + 1e-10):
        raise NumericalError(f"sRRQR kappa {sel.kappa:.6g} exceeds its certified bound {bound:.6g}")
    return sel


def select(u, strategy="srrqr", eta=2.0, s=None):
    """Dispatch on ``strategy``; ``s > r`` adds oversampled rows."""
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    u = as_matrix(u, "basis")
    if s is not None and s != u.shape[1]:
        return select_oversampled(u, s, strategy, eta)
    if strategy == "deim":
        return select_deim_greedy(u)
    if strategy == "qdeim":
        return select_qdeim(u)
    return select_srrqr(u, eta)


def select_oversampled(u, s, base="srrqr", eta=2.0):
    """``r`` rows from ``base`` plus ``s - r`` rows chosen one at a time to
    maximise ``sigma_min(S^T U)``.

    Each candidate row ``x`` is scored by the smallest eigenvalue of
    ``G + x x^T``, ``G = (S^T U)^T (S^T U)``, computed for all candidates in
    one batched symmetric eigensolve.
    """
    u = _basis(u)
    m, r = u.shape
    if not r <= s <= m:
        raise ConfigError(f"oversampling needs r <= s <= m, got r={r}, s={s}, m={m}")
    first = select(u, base, eta)
    if s == r:
        return first
    idx = list(first.indices)
    free = np.ones(m, dtype=bool)
    free[idx] = False
    while len(idx) < s:
        sub = u[idx]
        gram = sub.T @ sub
        cand = np.flatnonzero(free)
        rows = u[cand]
        stack = gram[None, :, :] + rows[:, :, None] * rows[:, None, :]
        score = np.linalg.eigvalsh(stack)[:, 0]
        pick = int(cand[np.argmax(score)])
        idx.append(pick)
        free[pick] = False
    return _finish(u, idx, first.strategy, first.eta)


def write_selection(sel, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(sel.to_line() + "\n")


def read_selection(path):
    with open(path) as fh:
        for line in fh:
            if line.strip():
                return SelectionOperator.from_line(line.strip())
    raise ConfigError(f"{path}: no selection line")
