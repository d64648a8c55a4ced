"""Full-strip problem by Laplace inversion along vertical lines Re nu = -beta.

A source is a finite sum of separable terms ``profile(x1) * g^(d)(x3)`` where
``g`` is a polynomial bump ``(1 - t^2)^q`` on ``[c - w, c + w]``.  With the
two-sided transform ``F^(nu) = int e^{-nu x} F(x) dx`` the field is

    u(x) = (1 / 2 pi i) int_{Re nu = -beta} e^{nu x} L(nu)^{-1} F^(nu) dnu,

the unique solution with ``e^{beta x} u`` square integrable.  Two lines give
fields differing by the residues of the eigenvalues between them.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .cross_section import FormMatrices, evaluate_pencil
from .errors import LineNearSpectrum, QuadratureUnderresolved
from .fem1d import gauss_rule
from .modes import WaveKind, make_wave
from .pencil import AXIS_TOLERANCE, ModeSet, branch_indices, refined_eigenvalues
from .smoothstep import smoothstep

DEFAULT_DS = 0.01
SMALL_Z = 24.0


# --------------------------------------------------------------------------
# polynomial bumps and their transforms


@lru_cache(maxsize=None)
def _bump_poly(q: int) -> np.polynomial.Polynomial:
    return np.polynomial.Polynomial([1.0, 0.0, -1.0]) ** q


@dataclass(frozen=True)
class Bump:
    """``(1 - t^2)^q`` with ``t = (x - center) / half_width`` on its support."""

    center: float = 0.0
    half_width: float = 1.0
    power: int = 8

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.half_width, self.center + self.half_width

    def __call__(self, x, deriv: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = (x - self.center) / self.half_width
        P = _bump_poly(self.power).deriv(deriv) if deriv else _bump_poly(self.power)
        return np.where(np.abs(t) <= 1.0, P(t) / self.half_width ** deriv, 0.0)

    def transform(self, nu) -> np.ndarray:
        """Two-sided Laplace transform int e^{-nu x} g(x) dx (entire in nu)."""
        nu = np.atleast_1d(np.asarray(nu, dtype=complex))
        w, c = self.half_width, self.center
        return w * np.exp(-nu * c) * reference_bump_transform(self.power, nu * w)


def reference_bump_transform(q: int, z) -> np.ndarray:
    """I_q(z) = int_{-1}^{1} e^{-z t} (1 - t^2)^q dt.

    Small |z|: Gauss-Legendre quadrature of the entire integrand (exact to
    round-off).  Large |z|: repeated integration by parts, which terminates
    because the integrand is a polynomial times an exponential.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty_like(z)
    small = np.abs(z) <= SMALL_Z
    if np.any(small):
        t, wq = gauss_rule(96)
        P = _bump_poly(q)(t)
        out[small] = np.exp(-np.outer(z[small], t)) @ (wq * P)
    if np.any(~small):
        zz = z[~small]
        P = _bump_poly(q)
        acc = np.zeros_like(zz)
        # int e^{-zt} P dt = [-e^{-zt} sum_k P^(k)(t) / z^(k+1)] from -1 to 1
        for k in range(2 * q + 1):
            Pk = P.deriv(k) if k else P
            acc += (Pk(-1.0) * np.exp(zz) - Pk(1.0) * np.exp(-zz)) / zz ** (k + 1)
        out[~small] = acc
    return out


# --------------------------------------------------------------------------
# sources


@dataclass(frozen=True)
class SourceTerm:
    """``load`` (weak cross-section load, 3n) times the axial factor g^(deriv)."""

    load: np.ndarray
    bump: Bump
    deriv: int = 0

    def axial(self, x) -> np.ndarray:
        return self.bump(x, self.deriv)

    def axial_transform(self, nu) -> np.ndarray:
        nu = np.atleast_1d(np.asarray(nu, dtype=complex))
        return nu ** self.deriv * self.bump.transform(nu)


@dataclass
class SeparableSource:
    terms: list[SourceTerm]
    forms: FormMatrices = field(repr=False)

    @property
    def support(self) -> tuple[float, float]:
        lo = min(t.bump.support[0] for t in self.terms)
        hi = max(t.bump.support[1] for t in self.terms)
        return lo, hi

    @property
    def is_real(self) -> bool:
        return all(np.all(np.isreal(t.load)) for t in self.terms)

    def load(self, x) -> np.ndarray:
        """F(x) for each x (rows), shape (len(x), 3n)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return sum(np.outer(t.axial(x), t.load) for t in self.terms)

    def transform(self, nu) -> np.ndarray:
        """F^(nu), shape (len(nu), 3n)."""
        nu = np.atleast_1d(np.asarray(nu, dtype=complex))
        return sum(np.outer(t.axial_transform(nu), t.load) for t in self.terms)

    def breakpoints(self) -> list[float]:
        pts = set()
        for t in self.terms:
            pts.update(t.bump.support)
        return sorted(pts)


def nodal_source(forms: FormMatrices, profile: np.ndarray, bump: Bump,
                 deriv: int = 0) -> SourceTerm:
    """Source term whose cross-section profile is the given nodal vector."""
    return SourceTerm(forms.l2 @ np.asarray(profile, dtype=complex), bump, deriv)


def function_source(forms: FormMatrices, funcs, bump: Bump, deriv: int = 0,
                    npts: int | None = None) -> SourceTerm:
    """Source term with profile (f1, f2, f3)(x1), projected by quadrature."""
    mesh = forms.grid.mesh
    xq, wq = mesh.quadrature(npts or 2 * mesh.p + 2)
    V = mesh.interpolation_matrix(xq)
    parts = []
    for f in funcs:
        vals = f(xq) if callable(f) else np.full_like(xq, f)
        parts.append(V.T @ (wq * vals))
    return SourceTerm(np.concatenate(parts).astype(complex), bump, deriv)


def manufactured_sh_source(forms: FormMatrices, bump: Bump) -> SeparableSource:
    """Load of u*(x1, x3) = cos(pi (x1 + h) / 2h) g(x3) e2, a traction-free SH field."""
    cfg = forms.cfg
    h, mu, rho, om = cfg.half_thickness, cfg.lame_mu, cfg.density, cfg.omega
    k = math.pi / (2 * h)
    prof = (0.0, lambda x: np.cos(k * (x + h)), 0.0)
    base = function_source(forms, prof, bump)
    return SeparableSource([
        SourceTerm((mu * k ** 2 - rho * om ** 2) * base.load, bump, 0),
        SourceTerm(-mu * base.load, bump, 2),
    ], forms)


def manufactured_sh_field(forms: FormMatrices, bump: Bump, x3) -> np.ndarray:
    h = forms.cfg.half_thickness
    g = forms.grid
    x3 = np.atleast_1d(x3)
    prof = g.pack(0.0, lambda x: np.cos(math.pi * (x + h) / (2 * h)), 0.0)
    return np.outer(bump(x3), prof)


# --------------------------------------------------------------------------
# line solve


@dataclass
class StripField:
    x3: np.ndarray
    values: np.ndarray  # (len(x3), 3n) nodal values
    beta: float
    nodes_used: int = 0
    s_cut: float = 0.0

    def component(self, forms: FormMatrices, c: int) -> np.ndarray:
        return self.values[:, forms.grid.component(c)]


def line_distance(forms: FormMatrices, beta: float) -> float:
    """Distance of the line Re nu = -beta to the pencil spectrum."""
    return min(abs(r.nu.real + beta) for r in refined_eigenvalues(forms))


def _truncation(src: SeparableSource, beta: float, ds: float, s_max: float,
                tol: float) -> float:
    """Smallest S beyond which |F^(nu)| / (1 + s^2) stays below tol * peak."""
    s = np.arange(0.0, s_max + ds, max(ds, 0.05))
    nu = -beta + 1j * s
    mag = np.linalg.norm(src.transform(nu), axis=1) / (1.0 + s ** 2)
    mag = np.maximum(mag, np.linalg.norm(src.transform(np.conj(nu)), axis=1) / (1.0 + s ** 2))
    peak = mag.max()
    if peak == 0.0:
        return 0.0
    if mag[-1] > tol * peak:
        raise QuadratureUnderresolved(
            f"source transform tail {mag[-1] / peak:.2e} exceeds {tol:.1e} at S_max={s_max}")
    above = np.nonzero(mag > tol * peak)[0]
    return float(s[min(above[-1] + 1, len(s) - 1)])


def laplace_line_solve(forms: FormMatrices, src: SeparableSource, beta: float, x3_grid,
                       ds: float = DEFAULT_DS, s_max: float | None = None,
                       tol: float = 1e-13, workers: int = 1,
                       check_line: bool = True) -> StripField:
    """Field of the strip problem in the weighted class attached to ``beta``."""
    x3 = np.atleast_1d(np.asarray(x3_grid, dtype=float))
    if check_line:
        d = line_distance(forms, beta)
        if d < 10 * AXIS_TOLERANCE:
            raise LineNearSpectrum(f"line Re nu = {-beta:g} is {d:.2e} from the spectrum")
    if s_max is None:
        s_max = 200.0 * (1.0 + abs(beta))
    N = forms.size
    if not src.terms:
        return StripField(x3, np.zeros((len(x3), N), dtype=complex), beta)
    s_cut = _truncation(src, beta, ds, s_max, tol)
    real = src.is_real
    n_half = int(math.ceil(s_cut / ds))
    if real:
        # conjugate symmetry: u^(conj nu) = conj(u^(nu)) for real loads
        s = ds * np.arange(0, n_half + 1)
        w = np.full(len(s), 2.0 * ds)
        w[0] = ds
    else:
        s = ds * np.arange(-n_half, n_half + 1)
        w = np.full(len(s), ds)
    nus = -beta + 1j * s
    blocks = []
    for bi in branch_indices(forms).values():
        ix = np.ix_(bi, bi)
        blocks.append((forms.A[ix], forms.B[ix], forms.C[ix], bi))

    def chunk(idx):
        Fh = src.transform(nus[idx])
        mu_ = -1j * nus[idx][:, None, None]
        out = np.empty((len(idx), N), dtype=complex)
        # the SH and in-plane subsystems decouple
        for A, B, C, bi in blocks:
            Ls = A[None] + mu_ * B[None] + mu_ ** 2 * C[None]
            out[:, bi] = np.linalg.solve(Ls, Fh[:, bi, None])[..., 0]
        E = np.exp(np.outer(x3, nus[idx])) * w[idx]
        contrib = E @ out
        return contrib.real if real else contrib

    chunks = np.array_split(np.arange(len(s)), max(1, len(s) // 128))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(chunk, chunks))
    else:
        parts = [chunk(c) for c in chunks]
    total = np.zeros((len(x3), N), dtype=complex)
    for p in parts:  # fixed summation order
        total += p
    return StripField(x3, total / (2 * math.pi), beta, len(s), s_cut)


# --------------------------------------------------------------------------
# residue asymptotics


def partition(x, a: float = -1.0, b: float = 1.0):
    """phi_gamma rises from 0 at ``a`` to 1 at ``b``; phi_beta = 1 - phi_gamma."""
    return smoothstep((np.asarray(x, dtype=float) - a) / (b - a))


def _axial_rule(src: SeparableSource, extra: list[float], npts: int = 40,
                max_len: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = src.support
    pts = sorted({lo, hi, *[p for p in extra if lo < p < hi], *src.breakpoints()})
    xs, ws = [], []
    t, wt = gauss_rule(npts)
    for a, b in zip(pts[:-1], pts[1:]):
        nsub = max(1, int(math.ceil((b - a) / max_len)))
        edges = np.linspace(a, b, nsub + 1)
        for c, d in zip(edges[:-1], edges[1:]):
            xs.append(c + (t + 1) * 0.5 * (d - c))
            ws.append(wt * 0.5 * (d - c))
    return np.concatenate(xs), np.concatenate(ws)


def asymptotic_coefficients(src: SeparableSource, modeset: ModeSet,
                            split: tuple[float, float] | None = (-1.0, 1.0)) -> dict:
    """c_{j,s} = <f phi_beta, v_{j,len-1-s}> + <f phi_gamma, v_{j,len-1-s}> per mode.

    Keys are ``(mode index, chain index, s)``.  ``split`` gives the interval
    where the partition functions switch; ``None`` skips the split.
    """
    extra = list(split) if split is not None else []
    xq, wq = _axial_rule(src, extra)
    F = src.load(xq)
    pieces = [np.ones_like(xq)]
    if split is not None:
        pg = partition(xq, *split)
        pieces = [1.0 - pg, pg]
    out = {}
    for i, mode in enumerate(modeset.modes):
        for j, chain in enumerate(mode.chains):
            K = chain.length
            for s in range(K):
                v = make_wave(modeset, i, j, K - 1 - s, WaveKind.ADJOINT_REFLECTED)
                V = np.array([v.value(x) for x in xq])
                vals = np.einsum("kn,kn->k", V.conj(), F)
                out[(i, j, s)] = complex(sum(np.sum(wq * p * vals) for p in pieces))
    return out


def residue_field(coeffs: dict, modeset: ModeSet, x3) -> np.ndarray:
    x3 = np.atleast_1d(x3)
    out = np.zeros((len(x3), modeset.forms.size), dtype=complex)
    for (i, j, s), c in coeffs.items():
        u = make_wave(modeset, i, j, s)
        out += c * np.array([u.value(x) for x in x3])
    return out


@dataclass
class AsymptoticsReport:
    residual: float
    u_beta: StripField
    u_gamma: StripField
    coefficients: dict


def verify_strip_asymptotics(src: SeparableSource, beta: float, gamma: float,
                             modeset: ModeSet, slab=(3.0, 6.0), n_points: int = 31,
                             **solve_kw) -> AsymptoticsReport:
    """Relative max residual of u_beta - u_gamma - sum c u over the slab."""
    forms = src.forms
    x3 = np.linspace(slab[0], slab[1], n_points)
    ub = laplace_line_solve(forms, src, beta, x3, **solve_kw)
    ug = laplace_line_solve(forms, src, gamma, x3, **solve_kw)
    between = [k for k, m in enumerate(modeset.modes) if -gamma < m.nu.real < -beta]
    sub = ModeSet(modeset.forms, modeset.window, [modeset.modes[k] for k in between])
    coeffs = asymptotic_coefficients(src, sub)
    diff = ub.values - ug.values - residue_field(coeffs, sub, x3)
    scale = max(np.abs(ub.values).max(), np.abs(ug.values).max(), 1e-300)
    return AsymptoticsReport(float(np.abs(diff).max() / scale), ub, ug, coeffs)


# --------------------------------------------------------------------------
# transform identities


def parseval_pair(b1: Bump, b2: Bump, beta: float = 0.0, ds: float = 0.01,
                  s_max: float = 200.0) -> tuple[complex, complex]:
    """(int e^{2 beta x} g1 g2 dx, (1/2pi) int g1^(-beta+is) conj(g2^(-beta+is)) ds)."""
    lo = min(b1.support[0], b2.support[0])
    hi = max(b1.support[1], b2.support[1])
    pts = sorted({lo, hi, *b1.support, *b2.support})
    t, wt = gauss_rule(64)
    direct = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        x = a + (t + 1) * 0.5 * (b - a)
        direct += np.sum(wt * 0.5 * (b - a) * np.exp(2 * beta * x) * b1(x) * b2(x))
    s = np.arange(-s_max, s_max + ds / 2, ds)
    nu = -beta + 1j * s
    spectral = np.sum(b1.transform(nu) * np.conj(b2.transform(nu))) * ds / (2 * math.pi)
    return complex(direct), complex(spectral)


def line_resolvent_norms(forms: FormMatrices, beta: float, s) -> np.ndarray:
    """||L(-beta + i s)^{-1}||_2 along a line (discrete stability constant)."""
    out = []
    for sk in np.atleast_1d(s):
        out.append(1.0 / np.linalg.svd(evaluate_pencil(forms, -beta + 1j * sk),
                                       compute_uv=False)[-1])
    return np.array(out)


def contour_residue(src: SeparableSource, nu0: complex, radius: float, x3: float = 0.0,
                    n_nodes: int = 128) -> np.ndarray:
    """(1/2 pi i) oint e^{nu x3} L(nu)^-1 f^(nu) dnu over the circle |nu - nu0| = radius,
    by the trapezoid rule.  With one eigenvalue inside this is the contribution of
    that eigenvalue to u_beta - u_gamma at x3."""
    forms = src.forms
    theta = 2 * math.pi * np.arange(n_nodes) / n_nodes
    out = np.zeros(forms.size, dtype=complex)
    for z in nu0 + radius * np.exp(1j * theta):
        fz = src.transform(np.array([z]))[0]
        out += np.exp(z * x3) * (z - nu0) * np.linalg.solve(evaluate_pencil(forms, z), fz)
    return out / n_nodes
