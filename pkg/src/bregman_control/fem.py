"""P1 finite elements on equidistant intervals and structured triangulations.

Everything integrates with a fixed quadrature rule per element: two Gauss
points on an interval, the three edge midpoints on a triangle.  Both rules
are exact for quadratics, so the P1 mass matrix comes out exact, and the
same points carry the active/inactive labels used for truncated masses.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import SparseSymMatrix


class Label(enum.IntEnum):
    ACTIVE_LOWER = -1
    INACTIVE = 0
    ACTIVE_UPPER = 1


class Mesh:
    """Simplicial mesh with node coordinates and cell connectivity.

    Use :meth:`interval` or :meth:`rectangle` to build one.
    """

    def __init__(self, nodes, cells, boundary, box):
        self.nodes = np.asarray(nodes, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.boundary = np.asarray(boundary, dtype=np.int64)
        self.box = tuple(box)
        self.dim = self.nodes.shape[1]
        if np.any(self.cell_measures() <= 0.0):
            raise ValueError("degenerate element in mesh")

    @classmethod
    def interval(cls, a, b, n):
        if n < 1 or not b > a:
            raise ValueError(f"invalid interval mesh ({a}, {b}) with {n} elements")
        x = np.linspace(a, b, n + 1)
        cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        return cls(x[:, None], cells, [0, n], (a, b))

    @classmethod
    def rectangle(cls, x0, x1, y0, y1, nx, ny):
        """Grid of ``nx`` by ``ny`` cells, each cut along its lower-left to upper-right diagonal."""
        if nx < 1 or ny < 1 or not (x1 > x0 and y1 > y0):
            raise ValueError("invalid rectangle mesh")
        xs = np.linspace(x0, x1, nx + 1)
        ys = np.linspace(y0, y1, ny + 1)
        X, Y = np.meshgrid(xs, ys)  # node (i, j) -> j * (nx + 1) + i
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(nx), np.arange(ny))
        i, j = i.ravel(), j.ravel()
        v00 = j * (nx + 1) + i
        v10 = v00 + 1
        v01 = v00 + nx + 1
        v11 = v01 + 1
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
        on_edge = (
            np.isclose(nodes[:, 0], x0) | np.isclose(nodes[:, 0], x1)
            | np.isclose(nodes[:, 1], y0) | np.isclose(nodes[:, 1], y1)
        )
        return cls(nodes, cells, np.flatnonzero(on_edge), (x0, x1, y0, y1))

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    def cell_measures(self):
        verts = self.nodes[self.cells]
        if self.dim == 1:
            return verts[:, 1, 0] - verts[:, 0, 0]
        e1 = verts[:, 1] - verts[:, 0]
        e2 = verts[:, 2] - verts[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def measure(self):
        return float(np.prod(np.diff(np.reshape(self.box, (-1, 2)), axis=1)))

    @property
    def h(self):
        """Largest cell diameter."""
        verts = self.nodes[self.cells]
        k = verts.shape[1]
        return max(
            np.linalg.norm(verts[:, a] - verts[:, b], axis=1).max()
            for a in range(k) for b in range(a + 1, k)
        )


def _reference_rule(dim):
    """Quadrature points as barycentric coordinates, weights summing to one."""
    if dim == 1:
        s = 0.5 / np.sqrt(3.0)
        bary = np.array([[0.5 + s, 0.5 - s], [0.5 - s, 0.5 + s]])
        return bary, np.array([0.5, 0.5])
    bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    return bary, np.full(3, 1.0 / 3.0)


class FeSpace:
    """Continuous piecewise-linear functions on a mesh, one DOF per node."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.m = mesh.num_nodes
        # basis[q, a]: value of local basis function a at quadrature point q
        self.basis, ref_weights = _reference_rule(mesh.dim)
        self.measures = mesh.cell_measures()
        self.weights = self.measures[:, None] * ref_weights[None, :]
        self.quad_points = np.einsum("qa,ead->eqd", self.basis, mesh.nodes[mesh.cells])
        self.interior = np.setdiff1d(np.arange(self.m), mesh.boundary)

    @property
    def num_quad(self):
        return self.weights.size

    @cached_property
    def gradients(self):
        """Constant basis gradients per cell, shape (cells, local dofs, dim)."""
        verts = self.mesh.nodes[self.mesh.cells]
        if self.mesh.dim == 1:
            h = verts[:, 1, 0] - verts[:, 0, 0]
            return np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None]
        # rows of inv(J) are the gradients of the second and third barycentrics
        J = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=2)
        Jinv = np.linalg.inv(J)
        g12 = np.stack([Jinv[:, 0, :], Jinv[:, 1, :]], axis=1)
        g0 = -g12.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g12], axis=1)

    @cached_property
    def mass(self) -> SparseSymMatrix:
        return assemble_mass(self)

    def _assemble(self, local):
        cells = self.mesh.cells
        k = cells.shape[1]
        rows = np.repeat(cells, k, axis=1).ravel()
        cols = np.tile(cells, (1, k)).ravel()
        A = sp.coo_array((local.ravel(), (rows, cols)), shape=(self.m, self.m))
        return SparseSymMatrix(A.tocsr(), check=False)

    def _weighted_mass(self, weights):
        local = np.einsum("eq,qa,qb->eab", weights, self.basis, self.basis)
        return self._assemble(local)

    def eval_quad(self, coeffs):
        """Values of the P1 function with these coefficients at all quadrature points."""
        coeffs = np.asarray(coeffs, dtype=float)
        return coeffs[self.mesh.cells] @ self.basis.T

    def evaluate(self, f):
        """Evaluate a pointwise function at all quadrature points."""
        pts = self.quad_points
        vals = f(*(pts[..., d] for d in range(self.mesh.dim)))
        return np.broadcast_to(np.asarray(vals, dtype=float), self.weights.shape).copy()

    def quad_inner(self, a, b):
        return float(np.sum(self.weights * a * b))

    def quad_norm(self, a):
        return np.sqrt(self.quad_inner(a, a))

    def load(self, quad_values):
        """Load vector ``(f, phi_i)`` for ``f`` given by its quadrature values."""
        local = (self.weights * quad_values) @ self.basis
        return np.bincount(self.mesh.cells.ravel(), weights=local.ravel(), minlength=self.m)

    def extend(self, interior_values):
        """Embed interior coefficients, zero on the Dirichlet boundary."""
        full = np.zeros(self.m)
        full[self.interior] = interior_values
        return full


@dataclass(frozen=True, eq=False)
class FeFunction:
    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.space.m,):
            raise ValueError(f"expected {self.space.m} coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    def at_quadrature(self):
        return self.space.eval_quad(self.coeffs)

    def __add__(self, other):
        _check_same_space(self, other)
        return FeFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_space(self, other)
        return FeFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return FeFunction(self.space, scalar * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return FeFunction(self.space, -self.coeffs)


@dataclass(frozen=True, eq=False)
class PointwiseClassification:
    """Active/inactive label for every (cell, quadrature point) pair."""

    labels: np.ndarray

    def mask(self, label):
        return self.labels == label

    def __eq__(self, other):
        return isinstance(other, PointwiseClassification) and np.array_equal(
            self.labels, other.labels
        )

    def counts(self):
        return {lab.name: int(np.count_nonzero(self.labels == lab)) for lab in Label}


def _check_same_space(u, v):
    if u.space is not v.space:
        raise ValueError("functions live in different spaces")


def assemble_stiffness(space: FeSpace, reduced=False) -> SparseSymMatrix:
    """Stiffness matrix of ``a(w, v) = (grad w, grad v)``.

    With ``reduced=True`` the boundary rows and columns are dropped, which
    is the matrix for homogeneous Dirichlet conditions on ``space.interior``.
    """
    G = space.gradients
    local = space.measures[:, None, None] * np.einsum("ead,ebd->eab", G, G)
    K = space._assemble(local)
    return K.submatrix(space.interior) if reduced else K


def assemble_mass(space: FeSpace) -> SparseSymMatrix:
    return space._weighted_mass(space.weights)


def assemble_truncated_mass(space: FeSpace, cls: PointwiseClassification, label) -> SparseSymMatrix:
    """Mass matrix integrated only over quadrature points carrying ``label``."""
    if cls.labels.shape != space.weights.shape:
        raise ValueError("classification does not cover the quadrature points")
    return space._weighted_mass(np.where(cls.labels == label, space.weights, 0.0))


def l2_inner(u: FeFunction, v: FeFunction) -> float:
    _check_same_space(u, v)
    return float(u.coeffs @ (u.space.mass @ v.coeffs))


def l2_norm(u: FeFunction) -> float:
    return np.sqrt(max(l2_inner(u, u), 0.0))


def interpolate(f, space: FeSpace) -> FeFunction:
    """Nodal interpolant of ``f``; ``f`` receives one coordinate array per dimension."""
    nodes = space.mesh.nodes
    vals = f(*(nodes[:, d] for d in range(space.mesh.dim)))
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (space.m,)).copy()
    if not np.all(np.isfinite(vals)):
        bad = np.flatnonzero(~np.isfinite(vals))[0]
        raise ValueError(f"non-finite value at node {bad} ({nodes[bad]})")
    return FeFunction(space, vals)
