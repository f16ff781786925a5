"""Nonlinear RC ladder: full-order model, W-POD/W-DEIM reduced model and a
small implicit integrator shared by both.

The circuit is ``D x' = F(x) + e_1 u(t)`` with diode current
``g(v) = exp(40 v) + v - 1``, ``F_1 = -g(x_1) - g(x_1 - x_2)``,
``F_i = g(x_{i-1} - x_i) - g(x_i - x_{i+1})`` and
``F_N = g(x_{N-1} - x_N)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..deim import build_wdeim_generalized
from ..errors import ConfigError, ConvergenceError, NumericalError
from ..pod import pod_basis
from ..selection import select
from ..weighting import WeightOperator

__all__ = [
    "diode",
    "diode_slope",
    "ladder_capacitance",
    "RcLadder",
    "ReducedLadder",
    "integrate",
    "solve_rc_ladder_full",
    "NEWTON_TOL",
    "relative_errors",
    "snapshot_times",
]

NEWTON_TOL = 1e-10
NEWTON_MAXIT = 50
#: systems up to this size are integrated with dense Jacobians
DENSE_LIMIT = 200

# two-stage Radau IIA (order 3, stiffly accurate)
_RADAU_A = np.array([[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]])
_RADAU_C = np.array([1.0 / 3.0, 1.0])


def diode(v):
    return np.exp(40.0 * v) + v - 1.0


def diode_slope(v):
    return 40.0 * np.exp(40.0 * v) + 1.0


def default_input(t):
    return np.exp(-t)


def ladder_capacitance(n):
    """Diagonal of ``D``: 1 on the middle half of the nodes, 1/2 elsewhere.

    For ``n = 1000`` the unit block is nodes 251..750 (1-based); other sizes
    scale the block boundaries proportionally.
    """
    d = np.full(n, 0.5)
    lo, hi = int(np.floor(n / 4 + 0.5)), int(np.floor(3 * n / 4 + 0.5))
    d[lo:hi] = 1.0
    return d


class RcLadder:
    """Full-order ladder with ``n`` nodes."""

    def __init__(self, n, capacitance=None, source=default_input):
        if n < 2:
            raise ConfigError(f"the ladder needs at least 2 nodes, got {n}")
        self.n = n
        self.cap = ladder_capacitance(n) if capacitance is None else np.asarray(capacitance, dtype=float)
        self.source = source
        self.weight = WeightOperator.diagonal(self.cap)

    def drops(self, x):
        """Branch voltages ``(x_1, x_1 - x_2, ..., x_{N-1} - x_N)``."""
        d = np.empty_like(x)
        d[0] = x[0]
        d[1:] = x[:-1] - x[1:]
        return d

    def force(self, x):
        c = diode(self.drops(x))
        f = c.copy()
        f[:-1] -= c[1:]
        f[0] -= 2.0 * c[0]
        return f

    def jacobian(self, x):
        """Symmetric tridiagonal ``dF/dx``."""
        gp = diode_slope(self.drops(x))
        main = -gp.copy()
        main[:-1] -= gp[1:]
        return sp.diags([gp[1:], main, gp[1:]], [-1, 0, 1], format="csc")

    def rhs(self, t, x):
        f = self.force(x)
        f[0] += self.source(t)
        return f

    def system(self, t, x):
        return self.rhs(t, x), self.jacobian(x)

    def force_rows(self, x_at, rows):
        """``F[rows]`` and its Jacobian restricted to ``rows``.

        ``x_at(idx)`` returns the state at node indices ``idx``; only the
        nodes adjacent to ``rows`` are requested.
        """
        rows = np.asarray(rows)
        n = self.n
        prev = np.maximum(rows - 1, 0)
        nxt = np.minimum(rows + 1, n - 1)
        xv = x_at(np.concatenate([prev, rows, nxt]))
        xp, xc, xn = np.split(xv, 3)
        d_here = np.where(rows == 0, xc, xp - xc)
        has_next = rows < n - 1
        d_next = np.where(has_next, xc - xn, 0.0)
        c_here = diode(d_here)
        c_next = np.where(has_next, diode(d_next), 0.0)
        sign = np.where(rows == 0, -1.0, 1.0)
        f = sign * c_here - c_next
        gh = sign * diode_slope(d_here)
        gn = np.where(has_next, diode_slope(d_next), 0.0)
        # d F_i / d x at (i-1, i, i+1)
        jp = np.where(rows == 0, 0.0, gh)
        jc = np.where(rows == 0, gh, -gh) - gn
        jn = gn
        return f, (prev, jp), (rows, jc), (nxt, jn)


def integrate(system, mass, x0, times, scheme="euler", substeps=1):
    """Integrate ``mass x' = G(t, x)`` implicitly and return states at ``times``.

    ``system(t, x)`` returns ``(G, dG/dx)`` with a sparse or dense Jacobian;
    ``mass`` is a vector (diagonal mass) or ``None`` for the identity.
    ``scheme`` is ``"euler"`` (backward Euler) or ``"radau"`` (two-stage
    Radau IIA). Each Newton solve stops once the update falls below
    ``NEWTON_TOL`` relative to the state.
    """
    if scheme not in ("euler", "radau"):
        raise ConfigError(f"unknown time scheme {scheme!r}")
    times = np.asarray(times, dtype=float)
    x = np.array(x0, dtype=float)
    n = x.size
    mvec = np.ones(n) if mass is None else np.asarray(mass, dtype=float)
    out = np.empty((n, times.size))
    out[:, 0] = x
    step = _euler_step if scheme == "euler" else _radau_step
    if n <= DENSE_LIMIT:
        system = _densified(system)
    for j in range(1, times.size):
        t0, t1 = times[j - 1], times[j]
        h = (t1 - t0) / substeps
        for k in range(substeps):
            t = t0 + k * h
            try:
                x = step(system, mvec, x, t, h)
            except ConvergenceError as exc:
                raise ConvergenceError(f"step {j} (t = {t1:.6g}): {exc}") from exc
        out[:, j] = x
    return out


def _densified(system):
    def wrapped(t, x):
        g, jac = system(t, x)
        return g, jac.toarray() if sp.issparse(jac) else jac

    return wrapped


def _solve(mat, rhs):
    if sp.issparse(mat):
        return spla.spsolve(sp.csc_matrix(mat), rhs)
    return np.linalg.solve(mat, rhs)


def _newton(residual, z):
    for it in range(NEWTON_MAXIT):
        res, jac = residual(z)
        with np.errstate(all="ignore"):
            dz = _solve(jac, -res)
        if not np.all(np.isfinite(dz)):
            raise ConvergenceError(f"Newton produced non-finite iterate at iteration {it + 1}")
        z = z + dz
        if np.max(np.abs(dz)) <= NEWTON_TOL * (1.0 + np.max(np.abs(z))):
            return z
    raise ConvergenceError(f"Newton did not converge in {NEWTON_MAXIT} iterations (last update {np.max(np.abs(dz)):.3e})")


def _euler_step(system, mvec, x, t, h):
    def residual(z):
        g, jac = system(t + h, z)
        res = mvec * (z - x) - h * g
        if sp.issparse(jac):
            mat = sp.diags(mvec) - h * jac
        else:
            mat = np.diag(mvec) - h * jac
        return res, mat

    return _newton(residual, x.copy())


def _radau_step(system, mvec, x, t, h):
    n = x.size
    a = _RADAU_A

    def residual(z):
        z1, z2 = z[:n], z[n:]
        g1, j1 = system(t + _RADAU_C[0] * h, z1)
        g2, j2 = system(t + _RADAU_C[1] * h, z2)
        res = np.concatenate([
            mvec * (z1 - x) - h * (a[0, 0] * g1 + a[0, 1] * g2),
            mvec * (z2 - x) - h * (a[1, 0] * g1 + a[1, 1] * g2),
        ])
        if sp.issparse(j1):
            m = sp.diags(mvec)
            mat = sp.bmat([[m - h * a[0, 0] * j1, -h * a[0, 1] * j2],
                           [-h * a[1, 0] * j1, m - h * a[1, 1] * j2]], format="csc")
        else:
            m = np.diag(mvec)
            mat = np.block([[m - h * a[0, 0] * j1, -h * a[0, 1] * j2],
                            [-h * a[1, 0] * j1, m - h * a[1, 1] * j2]])
        return res, mat

    z = _newton(residual, np.concatenate([x, x]))
    return z[n:]


def snapshot_times(t_final, n_steps):
    return np.linspace(0.0, t_final, n_steps)


def solve_rc_ladder_full(n, t_final=7.0, n_steps=2000, scheme="euler", substeps=1, source=default_input, capacitance=None):
    """Full-order trajectory at ``n_steps`` equidistant times, starting from rest.

    Returns ``(times, states)`` with ``states`` of shape ``(n, n_steps)``.
    """
    if n_steps < 2:
        raise ConfigError("need at least two snapshot times")
    model = RcLadder(n, capacitance, source)
    times = snapshot_times(t_final, n_steps)
    states = integrate(model.system, model.cap, np.zeros(n), times, scheme, substeps)
    return times, states


@dataclass
class ReducedLadder:
    """Galerkin model in the ``D`` inner product with a W-DEIM nonlinearity.

    ``x ~ V xr`` with ``V^T D V = I``; ``D^{-1} F`` is approximated by a
    generalized W-DEIM projector so that
    ``xr' = P F[idx](V xr) + V^T e_1 u(t)`` with a ``k x s`` matrix ``P``.
    """

    model: RcLadder
    v: np.ndarray
    projector: object
    coupling: np.ndarray
    input_vec: np.ndarray

    @classmethod
    def build(cls, model, states, pod_rank, deim_rank=None, strategy="srrqr", eta=2.0):
        deim_rank = pod_rank if deim_rank is None else deim_rank
        w = model.weight
        vb = pod_basis(states, w, rank=pod_rank)
        forces = np.column_stack([model.force(states[:, j]) for j in range(states.shape[1])])
        hb = pod_basis(forces / model.cap[:, None], w, rank=deim_rank)
        sel = select(hb.u_euclid, strategy, eta)
        proj = build_wdeim_generalized(hb, sel)
        # (L^T h)[idx] = F[idx] / sqrt(d[idx]) for the diagonal weight
        inv_sqrt = 1.0 / np.sqrt(model.cap[proj.indices])
        coupling = (vb.u_hat.T @ (model.cap[:, None] * proj.out_basis)) @ proj.interp * inv_sqrt
        return cls(model, vb.u_hat, proj, coupling, vb.u_hat[0].copy())

    @property
    def k(self):
        return self.v.shape[1]

    def system(self, t, xr):
        rows = self.projector.indices
        f, (ip, jp), (ic, jc), (inx, jn) = self.model.force_rows(lambda idx: self.v[idx] @ xr, rows)
        g = self.coupling @ f + self.input_vec * self.model.source(t)
        jrows = jp[:, None] * self.v[ip] + jc[:, None] * self.v[ic] + jn[:, None] * self.v[inx]
        return g, self.coupling @ jrows

    def simulate(self, times, scheme="euler", substeps=1):
        """Reduced coordinates at ``times`` from the zero state."""
        return integrate(self.system, None, np.zeros(self.k), times, scheme, substeps)

    def lift(self, xr):
        return self.v @ xr


def relative_errors(states, approx, weight):
    """``||x - x_r||_D / ||x||_D`` per column (0 where ``x = 0``)."""
    num = np.linalg.norm(weight.lt(states - approx), axis=0)
    den = np.linalg.norm(weight.lt(states), axis=0)
    out = np.zeros_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite relative error")
    return out
