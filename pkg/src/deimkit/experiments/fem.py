"""Bilinear finite elements on the uniform tensor grid of ``[0, 1]^2``.

Nodes are numbered ``k = iy * n + ix`` (x fastest). For Q1 elements on a
tensor grid every 2-D matrix is a Kronecker product of 1-D P1 matrices, which
is how they are assembled here.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import ConfigError, NumericalError
from ..weighting import WeightOperator

__all__ = [
    "grid_nodes",
    "mass_1d",
    "stiffness_1d",
    "convection_1d",
    "mass_matrix",
    "stiffness_matrix",
    "convection_matrices",
    "build_fem_weights",
    "AdvectionDiffusion",
]


def _check(n):
    if n < 2:
        raise ConfigError(f"grid needs at least 2 nodes per side, got {n}")
    return 1.0 / (n - 1)


def grid_nodes(n):
    """``(x1, x2)`` coordinates of the ``n*n`` nodes, x1 varying fastest."""
    _check(n)
    t = np.linspace(0.0, 1.0, n)
    x2, x1 = np.meshgrid(t, t, indexing="ij")
    return x1.ravel(), x2.ravel()


def mass_1d(n):
    h = _check(n)
    main = np.full(n, 4.0)
    main[[0, -1]] = 2.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") * (h / 6.0)


def stiffness_1d(n):
    h = _check(n)
    main = np.full(n, 2.0)
    main[[0, -1]] = 1.0
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h


def convection_1d(n):
    """``C[i, j] = int phi_j' phi_i``."""
    _check(n)
    main = np.zeros(n)
    main[0], main[-1] = -0.5, 0.5
    return sp.diags([-0.5 * np.ones(n - 1), main, 0.5 * np.ones(n - 1)], [-1, 0, 1], format="csr")


def mass_matrix(n):
    m1 = mass_1d(n)
    return sp.kron(m1, m1, format="csr")


def stiffness_matrix(n):
    m1, k1 = mass_1d(n), stiffness_1d(n)
    return (sp.kron(m1, k1) + sp.kron(k1, m1)).tocsr()


def convection_matrices(n):
    """``(Cx, Cy)`` with ``(Cx)_{ij} = int d_x phi_j phi_i``."""
    m1, c1 = mass_1d(n), convection_1d(n)
    return sp.kron(m1, c1, format="csr"), sp.kron(c1, m1, format="csr")


def build_fem_weights(n):
    """``(mass, h1)`` weight operators: the L2 mass matrix and mass plus stiffness."""
    mass = mass_matrix(n)
    return WeightOperator.sparse(mass), WeightOperator.sparse((mass + stiffness_matrix(n)).tocsr())


class AdvectionDiffusion:
    """``-lap u + b . grad u = s`` with natural (zero-flux) boundary conditions.

    The pure Neumann operator annihilates constants, so the solution is pinned
    by the side condition ``int u = 0`` through a Lagrange multiplier.
    """

    def __init__(self, n):
        self.n = n
        self.m = n * n
        self.mass = mass_matrix(n)
        self.stiff = stiffness_matrix(n)
        self.cx, self.cy = convection_matrices(n)
        self.x1, self.x2 = grid_nodes(n)
        self.moment = np.asarray(self.mass.sum(axis=0)).ravel()

    def operator(self, wind):
        return (self.stiff + wind[0] * self.cx + wind[1] * self.cy).tocsr()

    def load(self, source):
        return self.mass @ source

    def solve(self, wind, source):
        """Nodal solution for a constant ``wind`` and nodal ``source`` values."""
        a = self.operator(wind)
        c = sp.csr_matrix(self.moment[:, None])
        big = sp.bmat([[a, c], [c.T, None]], format="csc")
        rhs = np.concatenate([self.load(source), [0.0]])
        try:
            sol = spla.splu(big).solve(rhs)
        except RuntimeError as exc:
            raise NumericalError(f"advection-diffusion solve failed: {exc}") from exc
        if not np.all(np.isfinite(sol)):
            raise NumericalError("advection-diffusion solve produced non-finite values")
        return sol[:-1]
