"""Cross-section discretization and the quadratic pencil.

The cross-section (-h, h) carries three displacement components
``(u1, u2, u3)``; unknown vectors are stored component-major, so the
block of component ``c`` is ``slice(c * n, (c + 1) * n)``.

Every form matrix ``X`` is laid out so that ``psi.conj() @ X @ phi`` equals
the sesquilinear form evaluated at ``(phi, psi)``.  With that convention the
pencil reads ``L(nu) = A + (-i nu) B + (-i nu)^2 C``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidDiscretization,
    InvalidFrequency,
    InvalidGeometry,
    InvalidMaterial,
    UnsupportedOrder,
)
from .fem1d import Mesh1D, uniform_mesh

DEFAULT_N_ELEMS = 6
DEFAULT_ORDER = 6


@dataclass(frozen=True)
class ProblemConfig:
    lame_lambda: float
    lame_mu: float
    density: float
    omega: float
    half_thickness: float

    def with_omega(self, omega: float) -> "ProblemConfig":
        return ProblemConfig(self.lame_lambda, self.lame_mu, self.density,
                             omega, self.half_thickness)

    @property
    def shear_speed(self) -> float:
        return float(np.sqrt(self.lame_mu / self.density))

    @property
    def pressure_speed(self) -> float:
        return float(np.sqrt((self.lame_lambda + 2 * self.lame_mu) / self.density))


def validate_config(cfg: ProblemConfig) -> ProblemConfig:
    lam, mu = cfg.lame_lambda, cfg.lame_mu
    if not np.isfinite([lam, mu, cfg.density, cfg.omega, cfg.half_thickness]).all():
        raise InvalidMaterial("non-finite parameter in problem configuration")
    if mu <= 0:
        raise InvalidMaterial(f"mu must be > 0 (got {mu})")
    if 3 * lam + 2 * mu <= 0:
        raise InvalidMaterial(f"3λ+2μ must be > 0 (got {3 * lam + 2 * mu})")
    if cfg.density <= 0:
        raise InvalidMaterial(f"density must be > 0 (got {cfg.density})")
    if cfg.half_thickness <= 0:
        raise InvalidGeometry(f"half thickness must be > 0 (got {cfg.half_thickness})")
    if cfg.omega <= 0:
        raise InvalidFrequency(f"omega must be > 0 (got {cfg.omega})")
    return cfg


@dataclass(frozen=True)
class CrossSectionGrid:
    mesh: Mesh1D
    half_thickness: float

    @property
    def element_order(self) -> int:
        return self.mesh.p

    @property
    def nodes(self) -> np.ndarray:
        return self.mesh.nodes

    @property
    def dof_per_component(self) -> int:
        return self.mesh.n_nodes

    @property
    def total_dof(self) -> int:
        return 3 * self.mesh.n_nodes

    def component(self, c: int) -> slice:
        """Slice of component ``c`` (0, 1, 2 for u1, u2, u3)."""
        n = self.dof_per_component
        return slice(c * n, (c + 1) * n)

    def pack(self, u1, u2, u3) -> np.ndarray:
        """Stack per-component nodal arrays (or callables of x1) into one vector."""
        x = self.nodes
        parts = []
        for f in (u1, u2, u3):
            v = f(x) if callable(f) else f
            parts.append(np.broadcast_to(np.asarray(v), x.shape))
        return np.concatenate(parts).astype(complex)


def build_grid(cfg: ProblemConfig, n_elems: int = DEFAULT_N_ELEMS,
               p: int = DEFAULT_ORDER) -> CrossSectionGrid:
    if n_elems < 1:
        raise InvalidDiscretization(f"n_elems must be >= 1 (got {n_elems})")
    if p < 2:
        raise InvalidDiscretization(f"element order must be >= 2 (got {p})")
    h = cfg.half_thickness
    return CrossSectionGrid(uniform_mesh(-h, h, n_elems, p), h)


@dataclass(frozen=True)
class FormMatrices:
    """Discrete forms a0, m, b, c on the cross-section.

    ``B2`` is the (real) matrix of the form
    ``b2(phi, psi) = int lam phi1' conj(psi3) + mu phi3' conj(psi1)``;
    ``B = i (B2^H - B2)``.  It also gives the weak axial traction
    ``B2 u + C du/dx3`` of a field on a section.
    """

    A0: np.ndarray
    M: np.ndarray
    B: np.ndarray
    C: np.ndarray
    B2: np.ndarray
    omega: float
    grid: CrossSectionGrid = field(repr=False)
    cfg: ProblemConfig = field(repr=False)
    mass: np.ndarray = field(repr=False)  # scalar mass matrix (n x n)

    @property
    def A(self) -> np.ndarray:
        return self.A0 - self.omega ** 2 * self.M

    @property
    def size(self) -> int:
        return self.A0.shape[0]

    @property
    def l2(self) -> np.ndarray:
        """Unweighted L2 Gram matrix of the vector space (3n x 3n)."""
        return np.kron(np.eye(3), self.mass)


def assemble_forms(cfg: ProblemConfig, grid: CrossSectionGrid) -> FormMatrices:
    validate_config(cfg)
    lam, mu, rho = cfg.lame_lambda, cfg.lame_mu, cfg.density
    Ms, Ks, Gs = grid.mesh.matrices()
    n = grid.dof_per_component
    Z = np.zeros((n, n))

    def blocks(b11, b13, b31, b33, b22):
        return np.block([[b11, Z, b13], [Z, b22, Z], [b31, Z, b33]])

    A0 = blocks((lam + 2 * mu) * Ks, Z, Z, mu * Ks, mu * Ks)
    M = blocks(rho * Ms, Z, Z, rho * Ms, rho * Ms)
    C = blocks(mu * Ms, Z, Z, (lam + 2 * mu) * Ms, mu * Ms)
    # b2: row block = test component, column block = trial component
    B2 = blocks(Z, mu * Gs, lam * Gs, Z, Z)
    B = 1j * (B2.T - B2)
    return FormMatrices(A0=A0.astype(complex), M=M.astype(complex),
                        B=B, C=C.astype(complex), B2=B2,
                        omega=cfg.omega, grid=grid, cfg=cfg, mass=Ms)


def evaluate_pencil(forms: FormMatrices, nu: complex) -> np.ndarray:
    mu_ = -1j * nu
    return forms.A + mu_ * forms.B + mu_ ** 2 * forms.C


def pencil_derivative(forms: FormMatrices, nu: complex, order: int) -> np.ndarray:
    """d^k L / d nu^k for k = 0, 1, 2."""
    if order == 0:
        return evaluate_pencil(forms, nu)
    if order == 1:
        return -1j * forms.B - 2 * nu * forms.C
    if order == 2:
        return -2 * forms.C
    raise UnsupportedOrder(f"the pencil is quadratic; derivative order {order} not supported")


def pencil_taylor(forms: FormMatrices, nu: complex) -> list[np.ndarray]:
    """Taylor coefficients L^(k)(nu) / k! for k = 0, 1, 2."""
    return [evaluate_pencil(forms, nu), pencil_derivative(forms, nu, 1), -forms.C]
