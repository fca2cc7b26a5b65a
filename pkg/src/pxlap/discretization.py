"""P1 finite elements on structured simplicial meshes of a box."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exponents import Domain


@dataclass(frozen=True, eq=False)
class Grid:
    """Conforming mesh: intervals in 1D, right triangles in 2D.

    ``grad_ops[e]`` is the ``d x (d+1)`` matrix taking the nodal values on
    element ``e`` to the (constant) gradient of the linear interpolant.
    """

    domain: Domain
    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    volumes: np.ndarray
    grad_ops: np.ndarray
    resolution: tuple

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @property
    def h(self) -> float:
        return float(max((b - a) / n for a, b, n in zip(self.domain.lower, self.domain.upper,
                                                         self.resolution)))

    def gradients(self, values) -> np.ndarray:
        """Elementwise gradients, shape ``(num_elements, d)``."""
        return np.einsum("eij,ej->ei", self.grad_ops, np.asarray(values)[self.elements])

    def scatter(self, local) -> np.ndarray:
        """Sum element-local nodal contributions ``(ne, d+1)`` into a nodal vector."""
        return np.bincount(self.elements.ravel(), weights=np.asarray(local).ravel(),
                           minlength=self.num_nodes)


def build_grid(domain: Domain, resolution) -> Grid:
    """Structured mesh with ``resolution`` cells per axis (an int or one per axis)."""
    d = domain.dimension
    res = tuple(int(r) for r in np.broadcast_to(np.atleast_1d(resolution), (d,)))
    if any(r < 2 for r in res):
        raise ValueError(f"resolution must be at least 2 per axis, got {res}")
    if d == 1:
        nodes = np.linspace(domain.lower[0], domain.upper[0], res[0] + 1)[:, None]
        idx = np.arange(res[0])
        elements = np.column_stack([idx, idx + 1])
    else:
        nx, ny = res
        xs = np.linspace(domain.lower[0], domain.upper[0], nx + 1)
        ys = np.linspace(domain.lower[1], domain.upper[1], ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        n00 = (I * (ny + 1) + J).ravel()
        n10 = n00 + (ny + 1)
        n11 = n10 + 1
        n01 = n00 + 1
        # both triangles counter-clockwise, sharing the (i,j)-(i+1,j+1) diagonal
        elements = np.vstack([np.column_stack([n00, n10, n11]),
                              np.column_stack([n00, n11, n01])])
    X = nodes[elements]
    edges = X[:, 1:, :] - X[:, :1, :]            # (ne, d, d), rows are edge vectors
    det = np.linalg.det(edges)
    volumes = np.abs(det) / math.factorial(d)
    ref = np.hstack([-np.ones((d, 1)), np.eye(d)])  # differences u_i - u_0
    grad_ops = np.linalg.solve(edges, np.broadcast_to(ref, (len(elements), d, d + 1)))
    boundary = domain.on_boundary(nodes)
    return Grid(domain, nodes, elements, boundary, volumes, grad_ops, res)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Per-element points and weights, given in barycentric coordinates."""

    grid: Grid
    barycentric: np.ndarray   # (nq, d+1)
    reference_weights: np.ndarray  # (nq,), sums to 1
    degree: int
    name: str

    @cached_property
    def weights(self) -> np.ndarray:
        return self.grid.volumes[:, None] * self.reference_weights[None, :]

    @cached_property
    def points(self) -> np.ndarray:
        return np.einsum("qj,ejd->eqd", self.barycentric, self.grid.nodes[self.grid.elements])

    @property
    def shape(self):
        return self.weights.shape

    def interpolate(self, values) -> np.ndarray:
        """Values of the P1 interpolant at the quadrature points, ``(ne, nq)``."""
        return np.asarray(values)[self.grid.elements] @ self.barycentric.T

    def evaluate(self, func) -> np.ndarray:
        pts = self.points.reshape(-1, self.grid.dimension)
        return np.asarray(func(pts), dtype=float).reshape(self.shape)


def quadrature(grid: Grid, kind: str = "gauss", order: int = 2) -> QuadratureRule:
    """Build a rule.

    ``"barycenter"`` is the one-point rule (degree 1).  ``"gauss"`` is
    ``order``-point Gauss-Legendre in 1D (degree 2*order-1) and the interior
    three-point rule in 2D (degree 2).
    """
    d = grid.dimension
    if kind in ("barycenter", "midpoint"):
        bary = np.full((1, d + 1), 1.0 / (d + 1))
        return QuadratureRule(grid, bary, np.ones(1), 1, "barycenter")
    if kind != "gauss":
        raise ValueError(f"unknown quadrature {kind!r}")
    if d == 1:
        t, w = np.polynomial.legendre.leggauss(order)
        s = 0.5 * (t + 1.0)
        bary = np.column_stack([1.0 - s, s])
        return QuadratureRule(grid, bary, 0.5 * w, 2 * order - 1, f"gauss{order}")
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    return QuadratureRule(grid, bary, np.full(3, 1 / 3), 2, "gauss3")


def integrate(values, rule: QuadratureRule) -> float:
    """Quadrature sum of per-point values."""
    vals = np.asarray(values, dtype=float)
    if vals.size != rule.weights.size:
        raise ValueError(f"expected {rule.weights.size} quadrature values, got {vals.size}")
    return float(np.sum(rule.weights.ravel() * vals.ravel()))


class GridFunction:
    """Nodal values of a continuous piecewise-linear function."""

    __array_priority__ = 10

    def __init__(self, grid: Grid, values):
        vals = np.array(values, dtype=float).reshape(-1)
        if vals.shape[0] != grid.num_nodes:
            raise ValueError(f"need {grid.num_nodes} nodal values, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        self.grid = grid
        self.values = vals

    @classmethod
    def interpolate(cls, grid: Grid, func) -> "GridFunction":
        if np.isscalar(func):
            return cls(grid, np.full(grid.num_nodes, float(func)))
        return cls(grid, func(grid.nodes))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.num_nodes))

    def gradients(self) -> np.ndarray:
        return self.grid.gradients(self.values)

    def at(self, rule: QuadratureRule) -> np.ndarray:
        return rule.interpolate(self.values)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid is not self.grid:
                raise ValueError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.grid, self.values / self._other(other))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return f"GridFunction({self.grid.num_nodes} nodes, min={self.values.min():.4g}, max={self.values.max():.4g})"

    def to_csv(self, path, name="u"):
        cols = ["x", "y"][: self.grid.dimension]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + [name])
            for xy, v in zip(self.grid.nodes, self.values):
                w.writerow([repr(float(c)) for c in xy] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path, grid: Grid) -> "GridFunction":
        """Read a CSV written by :meth:`to_csv`; node coordinates must match exactly."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        d = grid.dimension
        body = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
        if body.shape != (grid.num_nodes, d + 1):
            raise ValueError(f"{path}: expected {grid.num_nodes} rows of {d + 1} columns")
        if not np.array_equal(body[:, :d], grid.nodes):
            raise ValueError(f"{path}: node coordinates do not match the grid")
        return cls(grid, body[:, d])


def element_gradient(u: GridFunction, element: int) -> np.ndarray:
    g = u.grid
    if not 0 <= element < g.num_elements:
        raise IndexError(f"element {element} out of range")
    return g.grad_ops[element] @ u.values[g.elements[element]]


def dirichlet_project(u: GridFunction) -> GridFunction:
    out = u.values.copy()
    out[u.grid.boundary] = 0.0
    return GridFunction(u.grid, out)


def assemble_matrix(grid: Grid, local: np.ndarray) -> sp.csr_matrix:
    """Global sparse matrix from element matrices of shape ``(ne, d+1, d+1)``."""
    E = grid.elements
    k = E.shape[1]
    rows = np.repeat(E, k, axis=1).ravel()
    cols = np.tile(E, (1, k)).ravel()
    return sp.csr_matrix((np.asarray(local).ravel(), (rows, cols)),
                         shape=(grid.num_nodes, grid.num_nodes))


def stiffness_matrix(grid: Grid, coefficient=None) -> sp.csr_matrix:
    B = grid.grad_ops
    c = grid.volumes if coefficient is None else grid.volumes * coefficient
    return assemble_matrix(grid, c[:, None, None] * np.einsum("eki,ekj->eij", B, B))


def mass_matrix(grid: Grid, rule: QuadratureRule | None = None) -> sp.csr_matrix:
    rule = rule or quadrature(grid, "gauss")
    L = rule.barycentric
    local = np.einsum("eq,qi,qj->eij", rule.weights, L, L)
    return assemble_matrix(grid, local)
