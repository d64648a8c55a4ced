"""One-dimensional high-order Lagrange finite elements.

Nodes inside each element are Gauss-Lobatto-Legendre points, integrals use
Gauss-Legendre rules.  The same machinery discretizes the cross-section
(-h, h) and the axial direction of the truncated half-strip.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def gll_points(p: int) -> np.ndarray:
    """GLL points of degree ``p`` on [-1, 1] (p + 1 points, endpoints included)."""
    if p == 1:
        return np.array([-1.0, 1.0])
    # interior points are the roots of P_p'
    dP = legendre.legder(np.eye(p + 1)[p])
    inner = np.sort(np.real(legendre.legroots(dP)))
    return np.concatenate(([-1.0], inner, [1.0]))


@lru_cache(maxsize=None)
def gauss_rule(npts: int) -> tuple[np.ndarray, np.ndarray]:
    return legendre.leggauss(npts)


def lagrange_basis(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the Lagrange polynomials on ``nodes`` at ``x``.

    Returns arrays of shape ``(len(x), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = len(nodes)
    V = np.ones((len(x), m))
    D = np.zeros((len(x), m))
    for j in range(m):
        others = np.delete(nodes, j)
        denom = np.prod(nodes[j] - others)
        terms = x[:, None] - others[None, :]
        V[:, j] = np.prod(terms, axis=1) / denom
        # product rule, one factor differentiated at a time
        dsum = np.zeros(len(x))
        for k in range(m - 1):
            dsum += np.prod(np.delete(terms, k, axis=1), axis=1)
        D[:, j] = dsum / denom
    return V, D


@lru_cache(maxsize=None)
def reference_matrices(p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mass, stiffness and mixed matrices of one element on [-1, 1].

    ``G[i, j] = int N_i N_j'``; the quadrature has p + 1 points, exact to
    degree 2p + 1.
    """
    xq, wq = gauss_rule(p + 1)
    V, D = lagrange_basis(gll_points(p), xq)
    M = (V * wq[:, None]).T @ V
    K = (D * wq[:, None]).T @ D
    G = (V * wq[:, None]).T @ D
    return M, K, G


@dataclass(frozen=True)
class Mesh1D:
    """Continuous Lagrange discretization of an interval.

    ``breaks`` are the element end points; ``p`` the polynomial degree.
    """

    breaks: np.ndarray
    p: int

    @property
    def n_elems(self) -> int:
        return len(self.breaks) - 1

    @property
    def n_nodes(self) -> int:
        return self.n_elems * self.p + 1

    @property
    def nodes(self) -> np.ndarray:
        ref = gll_points(self.p)
        pts = [self.breaks[0:1]]
        for a, b in zip(self.breaks[:-1], self.breaks[1:]):
            pts.append(a + (ref[1:] + 1.0) * 0.5 * (b - a))
        return np.concatenate(pts)

    def element_dofs(self, e: int) -> np.ndarray:
        return np.arange(e * self.p, e * self.p + self.p + 1)

    def matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Global (M, K, G) with G[i, j] = int N_i N_j'."""
        Mr, Kr, Gr = reference_matrices(self.p)
        n = self.n_nodes
        M = np.zeros((n, n))
        K = np.zeros((n, n))
        G = np.zeros((n, n))
        for e in range(self.n_elems):
            jac = 0.5 * (self.breaks[e + 1] - self.breaks[e])
            idx = self.element_dofs(e)
            ix = np.ix_(idx, idx)
            M[ix] += jac * Mr
            K[ix] += Kr / jac
            G[ix] += Gr
        return M, K, G

    def locate(self, x: float) -> int:
        e = int(np.searchsorted(self.breaks, x, side="right")) - 1
        return min(max(e, 0), self.n_elems - 1)

    def interpolation_matrix(self, x, derivative: bool = False) -> np.ndarray:
        """Matrix mapping nodal values to values (or derivatives) at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ref = gll_points(self.p)
        out = np.zeros((len(x), self.n_nodes))
        for k, xk in enumerate(x):
            e = self.locate(xk)
            a, b = self.breaks[e], self.breaks[e + 1]
            t = 2.0 * (xk - a) / (b - a) - 1.0
            V, D = lagrange_basis(ref, np.array([t]))
            row = D[0] * 2.0 / (b - a) if derivative else V[0]
            out[k, self.element_dofs(e)] = row
        return out

    def quadrature(self, npts: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Composite Gauss rule over the mesh (points, weights)."""
        npts = npts or self.p + 1
        xq, wq = gauss_rule(npts)
        xs, ws = [], []
        for a, b in zip(self.breaks[:-1], self.breaks[1:]):
            xs.append(a + (xq + 1.0) * 0.5 * (b - a))
            ws.append(wq * 0.5 * (b - a))
        return np.concatenate(xs), np.concatenate(ws)


def uniform_mesh(a: float, b: float, n_elems: int, p: int) -> Mesh1D:
    return Mesh1D(np.linspace(a, b, n_elems + 1), p)
