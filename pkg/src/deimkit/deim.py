"""DEIM projectors: construction, application and diagnostics.

Every variant is stored in the factored form

    D f = B (C^+ (s * (T f)[idx]))

with an ``m x r`` output basis ``B``, an ``s x r`` core ``C`` (selected rows
of an orthonormal matrix), optional per-sample scales ``s`` and a sampling
transform ``T`` that is the identity (pointwise sampling) or ``L^T``
(generalized sampling through the weight factor).

=================  =============  =========  ==========  ========
variant            B              C          scales      T
=================  =============  =========  ==========  ========
unweighted         U              U[idx]     -           I
generalizedW       U_hat          U_r[idx]   -           L^T
pointwiseW         Q              Q[idx]     -           I
scaledPointwiseW   Delta^-1 Q     Q[idx]     Delta[idx]  I
oversampled        as unweighted / generalizedW with s != r
=================  =============  =========  ==========  ========
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .errors import BoundViolationError, BreakdownError, ConfigError, DimensionError, RankDeficiencyError
from .linalg import ORTH_TOL, as_matrix, orthonormality_defect, principal_angles, thin_svd
from .pod import PodBasis, pod_basis, pod_basis_gsvd
from .selection import SelectionOperator, select
from .weighting import WeightOperator, as_weight

__all__ = [
    "VARIANTS",
    "ANGLE_TOL",
    "PINV_RCOND",
    "DeimProjector",
    "CanonicalStructure",
    "ErrorDecomposition",
    "build_deim",
    "build_wdeim_generalized",
    "build_wdeim_pointwise",
    "build_wdeim_scaled",
    "build_oversampled",
    "canonical_analysis",
    "tangent_norm",
    "error_decomposition",
    "dgeim_residuals",
    "check_bound",
    "projector_diagnostics",
    "write_diagnostics",
    "write_projector",
    "read_projector",
]

VARIANTS = ("unweighted", "generalizedW", "pointwiseW", "scaledPointwiseW", "oversampled")

#: principal angles at or below this count as exact intersections
ANGLE_TOL = 1e-8
#: singular values of the core below this fraction of the largest are treated as zero
PINV_RCOND = 1e-12


@dataclass(frozen=True)
class DeimProjector:
    """Immutable DEIM projector in factored form (see module docstring)."""

    variant: str
    out_basis: np.ndarray
    core: np.ndarray
    interp: np.ndarray
    selection: SelectionOperator
    weight: WeightOperator
    transform: str = "point"
    sample_scale: np.ndarray = None
    q_hat: np.ndarray = None
    kappa: float = None
    error_constant: float = None
    basis: PodBasis = None
    properties: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.out_basis.shape[0]

    @property
    def r(self):
        return self.out_basis.shape[1]

    @property
    def s(self):
        return self.selection.s

    @property
    def indices(self):
        return self.selection.indices

    def _check(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.m:
            raise DimensionError(f"vector has length {f.shape[0]}, projector acts on {self.m}")
        return f

    def sample(self, f):
        """The ``s`` values the projector reads from ``f``."""
        f = self._check(f)
        if self.transform == "lt":
            f = self.weight.lt(f)
        return f[self.indices]

    def apply_sampled(self, values):
        """``D f`` from the sampled values alone."""
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.s:
            raise DimensionError(f"expected {self.s} sampled values, got {values.shape[0]}")
        if self.sample_scale is not None:
            values = (self.sample_scale * values.T).T
        return self.out_basis @ (self.interp @ values)

    def apply(self, f):
        return self.apply_sampled(self.sample(f))

    def coefficients(self, f):
        """Coordinates of ``D f`` in ``out_basis``."""
        values = self.sample(f)
        if self.sample_scale is not None:
            values = (self.sample_scale * values.T).T
        return self.interp @ values

    def assemble(self):
        """Dense ``m x m`` matrix of ``D``; diagnostics only."""
        return self.apply(np.eye(self.m))

    def projection_basis(self):
        """W-orthonormal basis of ``range(D)``'s ambient POD space."""
        if self.basis is not None:
            return self.basis.u_hat
        q, _ = np.linalg.qr(self.weight.lt(self.out_basis))
        return self.weight.lt_solve(q)

    def project(self, f):
        """W-orthogonal projection onto ``range(out_basis)``."""
        u = self.projection_basis()
        return u @ (u.T @ self.weight.matvec(self._check(f)))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _as_selection(sel, m):
    if isinstance(sel, SelectionOperator):
        if sel.m != m:
            raise DimensionError(f"selection lives in dimension {sel.m}, basis in {m}")
        return sel
    idx = np.asarray(sel, dtype=int).ravel()
    if np.any(idx < 0) or np.any(idx >= m) or len(set(idx.tolist())) != idx.size:
        raise ConfigError("selection indices must be distinct and lie in [0, m)")
    return SelectionOperator(idx, m, "given")


def _pinv(core):
    """Pseudoinverse of the core with a relative cutoff; also returns its 2-norm."""
    svd = thin_svd(core)
    k = min(core.shape)
    s = svd.sigma
    if s.size == 0 or s[0] == 0 or s[k - 1] <= PINV_RCOND * s[0]:
        smin = 0.0 if s.size == 0 else s[k - 1]
        raise RankDeficiencyError(
            f"selected rows have rank below {k}: sigma_min = {smin:.3e}, sigma_max = {s[0] if s.size else 0:.3e}"
        )
    inv = svd.v[:, :k] @ (svd.u[:, :k] / s[:k]).T
    return inv, float(1.0 / s[k - 1])


def _orthonormal(u, name):
    u = as_matrix(u, name)
    d = orthonormality_defect(u)
    if d > ORTH_TOL:
        raise ConfigError(f"{name} is not orthonormal (||U^T U - I||_F = {d:.3e})")
    return u


def _properties(s, r):
    return {"interpolation": s <= r, "projection": s >= r, "least_squares": s > r}


def build_deim(u, sel):
    """Classic DEIM ``U (S^T U)^{-1} S^T``; ``s != r`` gives the oversampled form."""
    u = _orthonormal(u, "basis")
    sel = _as_selection(sel, u.shape[0])
    core = u[sel.indices]
    interp, kappa = _pinv(core)
    variant = "unweighted" if sel.s == u.shape[1] else "oversampled"
    return DeimProjector(
        variant, u, core, interp, sel, WeightOperator.identity(u.shape[0]),
        kappa=kappa, error_constant=kappa, properties=_properties(sel.s, u.shape[1]),
    )


def build_wdeim_generalized(basis, sel, w=None):
    """W-DEIM with generalized interpolation ``U_hat (S^T U_r)^+ S^T L^T``.

    The W-norm of this projector equals ``||(S^T U_r)^+||_2``, which is stored
    as both ``kappa`` and ``error_constant``.
    """
    if not isinstance(basis, PodBasis):
        raise ConfigError("generalized W-DEIM needs a PodBasis")
    w = basis.weight if w is None else as_weight(w, basis.m)
    sel = _as_selection(sel, basis.m)
    core = basis.u_euclid[sel.indices]
    interp, kappa = _pinv(core)
    variant = "generalizedW" if sel.s == basis.rank else "oversampled"
    return DeimProjector(
        variant, basis.u_hat, core, interp, sel, w, transform="lt",
        kappa=kappa, error_constant=kappa, basis=basis, properties=_properties(sel.s, basis.rank),
    )


def build_oversampled(u, sel, w=None):
    """Pseudoinverse DEIM for ``s != r``.

    ``u`` is an orthonormal matrix (Euclidean setting) or a :class:`PodBasis`
    (generalized weighted setting). ``properties`` reports which of
    interpolation (``s <= r``) and projection (``s >= r``) hold.
    """
    if isinstance(u, PodBasis):
        d = build_wdeim_generalized(u, sel, w)
    else:
        d = build_deim(u, sel)
    if d.variant != "oversampled":
        d = replace(d, variant="oversampled")
    return d


def _basis_for(y, w, rank, tol, basis):
    if basis is not None:
        return basis
    try:
        return pod_basis_gsvd(y, w, rank=rank, tol=tol)
    except (BreakdownError, RankDeficiencyError):
        return pod_basis(y, w, rank=rank, tol=tol)


def _thin_q(a):
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def build_wdeim_pointwise(y, w=None, rank=None, tol=None, eta=2.0, strategy="srrqr", basis=None):
    """Pointwise W-DEIM: orthonormalize ``U_hat = Q R`` and select on ``Q``.

    ``D = Q (S^T Q)^{-1} S^T`` interpolates pointwise; the certified W-norm
    constant is ``sqrt(kappa_2(W)) ||(S^T Q)^{-1}||_2``. Pass ``basis`` to
    reuse a precomputed POD basis (``y`` is then ignored).
    """
    if basis is None:
        y = as_matrix(y, "snapshot matrix")
        w = as_weight(w, y.shape[0])
    basis = _basis_for(y, w, rank, tol, basis)
    w = basis.weight
    q = _thin_q(basis.u_hat)
    sel = select(q, strategy, eta)
    core = q[sel.indices]
    interp, kappa = _pinv(core)
    const = math.sqrt(w.cond()) * kappa
    return DeimProjector(
        "pointwiseW", q, core, interp, sel, w, q_hat=q, kappa=kappa,
        error_constant=const, basis=basis, properties=_properties(sel.s, basis.rank),
    )


def build_wdeim_scaled(y, w=None, rank=None, tol=None, eta=2.0, strategy="srrqr", basis=None):
    """Pointwise W-DEIM after diagonal equilibration of ``W``.

    With ``Delta = diag(sqrt(W_ii))`` the selection runs on ``Q`` from
    ``Delta U_hat = Q R`` and ``D = Delta^{-1} Q (S^T Q)^{-1} S^T Delta``.
    The constant is ``sqrt(kappa_2(W_s)) ||(S^T Q)^{-1}||_2``.
    """
    if basis is None:
        y = as_matrix(y, "snapshot matrix")
        w = as_weight(w, y.shape[0])
        basis = pod_basis(y, w, rank=rank, tol=tol)
    w = basis.weight
    delta, w_s = w.equilibration()
    q = _thin_q(delta[:, None] * basis.u_hat)
    sel = select(q, strategy, eta)
    core = q[sel.indices]
    interp, kappa = _pinv(core)
    const = math.sqrt(w_s.cond()) * kappa
    return DeimProjector(
        "scaledPointwiseW", q / delta[:, None], core, interp, sel, w,
        sample_scale=delta[sel.indices], q_hat=q, kappa=kappa, error_constant=const,
        basis=basis, properties=_properties(sel.s, basis.rank),
    )


# ---------------------------------------------------------------------------
# canonical structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CanonicalStructure:
    """Principal-angle description of a projector in its W-geometry.

    ``angles`` holds the ``p`` nonzero angles in increasing order;
    ``near_singular`` flags those within ``ANGLE_TOL`` of pi/2.
    """

    ell: int
    p: int
    angles: np.ndarray
    norm_d: float
    near_singular: np.ndarray
    z_basis: np.ndarray = None


def _transformed_pair(d):
    """Orthonormal bases ``X`` (range side) and ``Y`` (sampling side) with
    ``L^T D L^{-T} = X (Y^T X)^+ Y^T`` up to a change of coordinates."""
    w = d.weight
    x = _thin_q(w.lt(d.out_basis))
    if d.transform == "lt" or w.kind == "identity":
        y = d.selection.matrix()
    else:
        y = _thin_q(w.l_solve(d.selection.matrix()))
    return x, y


def canonical_analysis(d, with_z=False):
    """Angles between the transformed range and sampling subspaces.

    ``norm_d = 1 / cos(psi_max)`` is the W-norm of ``d``. ``with_z`` builds an
    orthogonal ``Z`` (``m <= 500``) in which ``L^T D L^{-T}`` is block
    diagonal with ``[[1, tan psi], [0, 0]]`` blocks.
    """
    x, y = _transformed_pair(d)
    angles = principal_angles(x, y)
    ell = int(np.count_nonzero(angles <= ANGLE_TOL))
    rest = angles[ell:]
    near = np.abs(rest - np.pi / 2) <= ANGLE_TOL
    norm_d = 1.0 if rest.size == 0 else float(1.0 / math.cos(rest[-1]))
    z = None
    if with_z:
        if d.m > 500:
            raise ConfigError("the canonical basis Z is only built for m <= 500")
        z = _canonical_basis(x, y)
    return CanonicalStructure(ell, int(rest.size), rest, norm_d, near, z)


def _canonical_basis(x, y):
    u, c, vt = np.linalg.svd(x.T @ y, full_matrices=False)
    px = x @ u
    py = y @ vt.T
    cols = []
    for i, ci in enumerate(np.clip(c, 0.0, 1.0)):
        cols.append(px[:, i])
        si = math.sqrt(max(1.0 - ci * ci, 0.0))
        if si > ANGLE_TOL:
            cols.append((py[:, i] - ci * px[:, i]) / si)
    head = np.column_stack(cols) if cols else np.zeros((x.shape[0], 0))
    rest = sla.null_space(head.T) if head.shape[1] else np.eye(x.shape[0])
    return np.column_stack([head, rest])


def tangent_norm(d):
    """``||Tan Psi||_2`` through ``(I - Y Y^T) X (Y^T X)^+``."""
    x, y = _transformed_pair(d)
    inv, _ = _pinv(y.T @ x)
    m = x @ inv
    perp = m - y @ (y.T @ m)
    return float(np.linalg.norm(perp, 2))


# ---------------------------------------------------------------------------
# error analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorDecomposition:
    orth_err: float
    oblique_excess: float
    kappa_prime: float
    total: float


def error_decomposition(d, f):
    """Split ``||f - D f||_W`` into the W-orthogonal projection error and the
    oblique excess ``||P f - D f||_W``; they add in quadrature."""
    if not d.properties.get("projection", True):
        raise ConfigError("error decomposition needs the projection property (s >= r)")
    f = d._check(f)
    w = d.weight
    g = w.lt(f)
    pf = d.project(f)
    df = d.apply(f)
    orth = float(np.linalg.norm(g - w.lt(pf)))
    if orth <= 1e-13 * np.linalg.norm(g):
        raise ConfigError("f lies in the basis range; D f = f and the decomposition is trivial")
    excess = float(np.linalg.norm(w.lt(pf - df)))
    total = float(np.linalg.norm(g - w.lt(df)))
    return ErrorDecomposition(orth, excess, math.sqrt(1.0 + (excess / orth) ** 2), total)


def dgeim_residuals(d, f):
    """Generalized interpolation residuals ``(L^T (D f - f))[idx]``."""
    if d.transform != "lt":
        raise ConfigError(f"generalized interpolation residuals need a generalizedW projector, not {d.variant}")
    f = d._check(f)
    return d.weight.lt(d.apply(f) - f)[d.indices]


def check_bound(err, constant, orth_err, rtol=1e-10, atol=0.0, what="error bound"):
    """Raise :class:`BoundViolationError` unless ``err <= constant * orth_err``."""
    limit = constant * orth_err * (1.0 + rtol) + atol
    if not err <= limit:
        raise BoundViolationError(
            f"{what} violated: error {err:.6e} > constant {constant:.6e} x projection error {orth_err:.6e}"
        )
    return True


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def projector_diagnostics(d):
    """Row of ``variant, r, s, eta, kappa, error_constant, angles``."""
    cs = canonical_analysis(d)
    return {
        "variant": d.variant,
        "r": d.r,
        "s": d.s,
        "eta": "" if d.selection.eta is None else format(d.selection.eta, ".17g"),
        "kappa": format(d.kappa, ".17g"),
        "error_constant": format(d.error_constant, ".17g"),
        "angles": ";".join(format(a, ".17g") for a in cs.angles),
    }


def write_diagnostics(rows, path):
    fields = ["variant", "r", "s", "eta", "kappa", "error_constant", "angles"]
    with open(path, "w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        out.writeheader()
        for row in rows:
            out.writerow(row)


def write_projector(d, path, basis_path):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"variant {d.variant}\n")
        fh.write(f"basis {basis_path}\n")
        fh.write(d.selection.to_line() + "\n")


def read_projector(path):
    """``(variant, basis_path, selection)`` from a projector file."""
    variant = basis_path = sel = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("variant "):
                variant = line.split(None, 1)[1]
            elif line.startswith("basis "):
                basis_path = line.split(None, 1)[1]
            elif line.startswith("S "):
                sel = SelectionOperator.from_line(line)
    if variant not in VARIANTS or basis_path is None or sel is None:
        raise ConfigError(f"{path}: incomplete projector file")
    return variant, basis_path, sel
