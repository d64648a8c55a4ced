"""Half-strip Dirichlet problem with a modal radiation closure.

The truncated domain (-h, h) x (0, L) is discretized by the tensor product of
the cross-section elements with axial Lagrange elements.  Beyond x3 = L the
field is expanded in outgoing waves plus a few decaying modes; the trace at L
is constrained to that span and the traction of the expansion closes the
weak form.  Modal coefficients are read off at the section R = L - 1 with the
flux form, using the consistent (residual) traction of the discrete field.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cross_section import FormMatrices, ProblemConfig, assemble_forms, build_grid
from .errors import (
    AssumptionViolation,
    IllConditionedClosure,
    InvalidGeometry,
    SingularSystem,
)
from .fem1d import Mesh1D, reference_matrices, uniform_mesh
from .modes import (
    Classification,
    ModalBasis,
    Wave,
    canonical_basis,
    classify_wave,
    make_wave,
    nodal_traction,
)
from .pencil import ModeSet, decaying_modes, refined_eigenvalues, solve_qep
from .smoothstep import smoothstep

DEFAULT_LENGTH = 8.0
DEFAULT_AXIAL_H = 0.5
DEFAULT_N_EVANESCENT = 8
CLOSURE_COND_LIMIT = 1e8


# --------------------------------------------------------------------------
# domain and data


@dataclass(frozen=True)
class DirichletData:
    g: np.ndarray  # nodal trace values, component-major (3n)

    def __post_init__(self):
        if not np.all(np.isfinite(self.g)):
            raise ValueError("Dirichlet data must be finite")


@dataclass(frozen=True)
class TruncatedDomain:
    length: float
    axial: Mesh1D

    @property
    def R(self) -> float:
        """Extraction section."""
        return self.length - 1.0

    @property
    def n_axial(self) -> int:
        return self.axial.n_nodes

    def node_index(self, x3: float) -> int:
        idx = int(np.argmin(np.abs(self.axial.nodes - x3)))
        if abs(self.axial.nodes[idx] - x3) > 1e-12 * max(1.0, self.length):
            raise ValueError(f"x3 = {x3} is not an axial node")
        return idx


def make_domain(length: float = DEFAULT_LENGTH, axial_h: float = DEFAULT_AXIAL_H,
                p: int = 6) -> TruncatedDomain:
    if length < 4:
        raise InvalidGeometry(f"truncation length must be >= 4 (got {length})")
    n = int(math.ceil(length / axial_h - 1e-9))
    mesh = uniform_mesh(0.0, length, n, p)
    dom = TruncatedDomain(length, mesh)
    # the extraction section and the end of the lifting must be element ends
    for x in (dom.R, 1.0):
        if np.min(np.abs(mesh.breaks - x)) > 1e-12 * length:
            raise InvalidGeometry(f"x3 = {x} must be an element boundary (choose axial_h dividing 1)")
    return dom


def lifting_profile(x3) -> np.ndarray:
    """psi with psi(0) = 1 and psi = 0 for x3 >= 1."""
    return 1.0 - smoothstep(np.asarray(x3, dtype=float))


def lift_dirichlet(g: DirichletData, domain: TruncatedDomain) -> np.ndarray:
    """u0 = g(x1) psi(x3) as nodal values, shape (n_axial, 3n)."""
    psi = lifting_profile(domain.axial.nodes)
    return np.outer(psi, np.asarray(g.g, dtype=complex))


# --------------------------------------------------------------------------
# assembly


@dataclass
class TruncatedSystem:
    K: sp.csr_matrix  # real symmetric, axial-major ordering
    forms: FormMatrices = dc_field(repr=False)
    domain: TruncatedDomain = dc_field(repr=False)

    @property
    def N(self) -> int:
        return self.forms.size

    def block(self, rows: slice, cols: slice):
        return self.K[rows, cols]


def assemble_truncated(forms: FormMatrices, domain: TruncatedDomain) -> TruncatedSystem:
    """Discrete form b over the truncated strip (natural conditions on x1 = +-h)."""
    M3, K3, G3 = domain.axial.matrices()
    A = forms.A.real
    B2 = forms.B2
    B1 = B2.T
    C = forms.C.real
    M3, K3, G3 = (sp.csr_matrix(X) for X in (M3, K3, G3))
    A, B2, B1, C = (sp.csr_matrix(X) for X in (A, B2, B1, C))
    K = sp.kron(M3, A) + sp.kron(G3.T, B2) + sp.kron(G3, B1) + sp.kron(K3, C)
    K = sp.csr_matrix(K)
    K.eliminate_zeros()
    return TruncatedSystem(K, forms, domain)


def _element_matrix(forms: FormMatrices, domain: TruncatedDomain, e: int) -> np.ndarray:
    Mr, Kr, Gr = reference_matrices(domain.axial.p)
    a, b = domain.axial.breaks[e], domain.axial.breaks[e + 1]
    jac = 0.5 * (b - a)
    M3, K3, G3 = jac * Mr, Kr / jac, Gr
    A, B2, C = forms.A.real, forms.B2, forms.C.real
    return (np.kron(M3, A) + np.kron(G3.T, B2) + np.kron(G3, B2.T) + np.kron(K3, C))


def section_traction(forms: FormMatrices, domain: TruncatedDomain, U: np.ndarray,
                     x3: float) -> np.ndarray:
    """Consistent weak traction sigma_i3 (normal +e3) on an element boundary x3 > 0,
    from the residual of the elements to the left of the section."""
    mesh = domain.axial
    e = int(np.argmin(np.abs(mesh.breaks - x3))) - 1
    if e < 0 or abs(mesh.breaks[e + 1] - x3) > 1e-12 * domain.length:
        raise ValueError(f"x3 = {x3} is not an interior element boundary")
    Ke = _element_matrix(forms, domain, e)
    ue = U[mesh.element_dofs(e)].reshape(-1)
    N = forms.size
    return (Ke @ ue)[-N:]


# --------------------------------------------------------------------------
# radiation closure


@dataclass
class RadiationClosure:
    """Trace space at x3 = L spanned by ``waves``; ``n_out`` leading waves are
    the radiating ones (their closure coefficients are the modal amplitudes)."""

    waves: list[Wave]
    n_out: int
    length: float
    Phi: np.ndarray = dc_field(repr=False)   # traces at L (3n x m)
    Trac: np.ndarray = dc_field(repr=False)  # weak tractions at L (3n x m)
    condition: float = 1.0

    def traction(self, trace_coeffs: np.ndarray) -> np.ndarray:
        return self.Trac @ trace_coeffs

    def expand(self, trace: np.ndarray) -> np.ndarray:
        """Coefficients of a trace at L in the closure span (least squares)."""
        return np.linalg.lstsq(self.Phi, trace, rcond=None)[0]


def _build_closure(radiating: list[Wave], decaying: ModeSet, length: float) -> RadiationClosure:
    waves = list(radiating)
    for i, mode in enumerate(decaying.modes):
        for j, chain in enumerate(mode.chains):
            for s in range(chain.length):
                waves.append(make_wave(decaying, i, j, s).moved(length))
    Phi = np.column_stack([w.value(length) for w in waves])
    Trac = np.column_stack([w.weak_traction(length) for w in waves])
    sv = np.linalg.svd(Phi, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if cond > CLOSURE_COND_LIMIT:
        raise IllConditionedClosure(f"closure trace matrix condition {cond:.2e} > {CLOSURE_COND_LIMIT:.0e}")
    return RadiationClosure(waves, len(radiating), length, Phi, Trac, cond)


def radiation_closure(basis: ModalBasis, modeset: ModeSet | None, domain: TruncatedDomain,
                      n_evanescent: int | None = DEFAULT_N_EVANESCENT,
                      incoming: bool = False, decaying: ModeSet | None = None) -> RadiationClosure:
    """Closure at x3 = L: outgoing basis waves (incoming ones if ``incoming``) plus
    the ``n_evanescent`` slowest decaying modes (all of them for ``None``).

    ``modeset`` (the window mode set) only fixes the threshold below which modes
    count as decaying.
    """
    forms = basis.forms
    below = modeset.window.delta if modeset is not None else 0.0
    if decaying is None:
        count = None if n_evanescent is None else n_evanescent
        decaying = decaying_modes(forms, count=count, below=below) if count != 0 else \
            ModeSet(forms, None, [])
    radiating = basis.incoming if incoming else basis.outgoing
    return _build_closure(radiating, decaying, domain.length)


# --------------------------------------------------------------------------
# solves


@dataclass
class HalfStripSolution:
    coefficients: np.ndarray            # a_k, k < T (q-extraction at R)
    closure_coefficients: np.ndarray    # amplitudes of the closure waves at L
    field: np.ndarray = dc_field(repr=False)  # nodal values (n_axial, 3n)
    lifting: np.ndarray = dc_field(repr=False)
    domain: TruncatedDomain = dc_field(repr=False)
    basis: ModalBasis = dc_field(repr=False)
    incoming_coefficients: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    residual: float = 0.0
    decay: "DecayReport | None" = None

    @property
    def x3(self) -> np.ndarray:
        return self.domain.axial.nodes

    def remainder(self) -> np.ndarray:
        """Field minus the radiating part sum a_k U_k (plus incoming content)."""
        U = self.field.copy()
        T = self.basis.T
        for k in range(T):
            U -= self.coefficients[k] * np.array([self.basis.U[k].value(x) for x in self.x3])
        for k, a in enumerate(self.incoming_coefficients):
            if a != 0:
                U -= a * np.array([self.basis.U[T + k].value(x) for x in self.x3])
        return U


class HalfStripSolver:
    """Factorized truncated system with a fixed closure; many right-hand sides."""

    def __init__(self, forms: FormMatrices, domain: TruncatedDomain, closure: RadiationClosure,
                 basis: ModalBasis):
        self.forms, self.domain, self.closure, self.basis = forms, domain, closure, basis
        self.system = assemble_truncated(forms, domain)
        N = forms.size
        nA = domain.n_axial
        K = self.system.K
        self.N, self.nA = N, nA
        I = slice(N, (nA - 1) * N)
        Ls = slice((nA - 1) * N, nA * N)
        self.K_I0 = K[I, 0:N]
        self.K_IL = K[I, Ls]
        self.K_LI = K[Ls, I]
        self.K_LL = K[Ls, Ls].toarray()
        Phi, Tr = closure.Phi, closure.Trac
        PhiH = Phi.conj().T
        top = sp.hstack([K[I, I].astype(complex), sp.csr_matrix(self.K_IL @ Phi)])
        bot = sp.hstack([sp.csr_matrix(PhiH @ self.K_LI), sp.csr_matrix(PhiH @ (self.K_LL @ Phi - Tr))])
        S = sp.vstack([top, bot]).tocsc()
        try:
            self.lu = spla.splu(S)
        except RuntimeError as exc:
            raise SingularSystem(f"truncated system is singular: {exc}") from exc
        self.S = S
        self.m = Phi.shape[1]

    def _solve(self, g: np.ndarray, prescribed: list[tuple[Wave, complex]] = ()) -> tuple[np.ndarray, np.ndarray, float]:
        N, nA = self.N, self.nA
        L = self.domain.length
        uL_known = np.zeros(N, dtype=complex)
        tL_known = np.zeros(N, dtype=complex)
        for w, a in prescribed:
            uL_known += a * w.value(L)
            tL_known += a * w.weak_traction(L)
        PhiH = self.closure.Phi.conj().T
        rhs_I = -(self.K_I0 @ g) - self.K_IL @ uL_known
        rhs_L = -PhiH @ (self.K_LL @ uL_known - tL_known)
        rhs = np.concatenate([rhs_I, rhs_L])
        x = self.lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("non-finite solution of the truncated system")
        res = np.linalg.norm(self.S @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        c = x[-self.m:]
        U = np.empty((nA, N), dtype=complex)
        U[0] = g
        U[1:nA - 1] = x[:-self.m].reshape(nA - 2, N)
        U[nA - 1] = self.closure.Phi @ c + uL_known
        return U, c, float(res)

    def extract(self, U: np.ndarray, R: float | None = None) -> np.ndarray:
        """a_k = i q(u, U_k) for every outgoing k; a_{T+k} = -i q(u, U_{T+k})."""
        R = self.domain.R if R is None else R
        idx = self.domain.node_index(R)
        t = section_traction(self.forms, self.domain, U, R)
        return self.basis.coefficients_at(U[idx], t, R)

    def solve(self, g: np.ndarray, prescribed=()) -> HalfStripSolution:
        U, c, res = self._solve(np.asarray(g, dtype=complex), list(prescribed))
        coeffs = self.extract(U)
        T = self.basis.T
        inc = np.zeros(T, dtype=complex)
        for w, a in prescribed:
            if w.label and w.label[0] == "in":
                inc[w.label[1]] += a
        lift = lift_dirichlet(DirichletData(np.asarray(g, dtype=complex)), self.domain)
        return HalfStripSolution(coeffs[:T], c, U, lift, self.domain, self.basis,
                                 incoming_coefficients=inc, residual=res)


# --------------------------------------------------------------------------
# window validation and convenience drivers


def validate_assumption(modeset: ModeSet, basis: ModalBasis | None = None) -> None:
    """Reject frequencies where the half-strip theory does not apply: defective
    axis eigenvalues (cutoffs), null-flux waves, or near-defective splitting."""
    for m in modeset.modes:
        if m.propagating and m.algebraic_multiplicity != m.geometric_multiplicity:
            raise AssumptionViolation(
                f"axis eigenvalue nu={m.nu:.6g} is defective (partial multiplicities "
                f"{m.partial_multiplicities}); the frequency is a cutoff")
    if modeset.window.delta < 1e-6:
        raise AssumptionViolation(
            f"off-axis eigenvalue within {2 * modeset.window.delta:.1e} of the axis; "
            "the frequency is (numerically) a cutoff")
    if basis is not None:
        for U in basis.U:
            if classify_wave(U) is Classification.NULL_FLUX:
                raise AssumptionViolation("a propagating wave carries no flux")


@dataclass
class HalfStripProblem:
    """Everything needed for repeated half-strip solves at one frequency."""

    forms: FormMatrices
    modeset: ModeSet
    basis: ModalBasis
    domain: TruncatedDomain
    n_evanescent: int | None
    solver: HalfStripSolver
    decaying: ModeSet = dc_field(repr=False)
    _reverse: HalfStripSolver | None = dc_field(default=None, repr=False)

    @property
    def reverse_solver(self) -> HalfStripSolver:
        """Solver whose closure radiates incoming waves (for zeta-type solutions)."""
        if self._reverse is None:
            closure = radiation_closure(self.basis, self.modeset, self.domain,
                                        self.n_evanescent, incoming=True,
                                        decaying=self.decaying)
            self._reverse = HalfStripSolver(self.forms, self.domain, closure, self.basis)
        return self._reverse


def prepare_halfstrip(cfg: ProblemConfig, length: float = DEFAULT_LENGTH,
                      n_evanescent: int | None = DEFAULT_N_EVANESCENT,
                      n_elems: int | None = None, p: int | None = None,
                      axial_h: float = DEFAULT_AXIAL_H, axial_p: int | None = None,
                      forms: FormMatrices | None = None,
                      delta: float | None = None) -> HalfStripProblem:
    if forms is None:
        kw = {}
        if n_elems is not None:
            kw["n_elems"] = n_elems
        if p is not None:
            kw["p"] = p
        forms = assemble_forms(cfg, build_grid(cfg, **kw))
    from .pencil import SpectralWindow
    window = None if delta is None else SpectralWindow(delta)
    modeset = solve_qep(forms, window)
    validate_assumption(modeset)
    basis = canonical_basis(modeset)
    validate_assumption(modeset, basis)
    domain = make_domain(length, axial_h, axial_p or forms.grid.element_order)
    count = n_evanescent
    dec = decaying_modes(forms, count=count, below=modeset.window.delta) if count != 0 \
        else ModeSet(forms, modeset.window, [])
    closure = radiation_closure(basis, modeset, domain, n_evanescent, decaying=dec)
    solver = HalfStripSolver(forms, domain, closure, basis)
    return HalfStripProblem(forms, modeset, basis, domain, n_evanescent, solver, dec)


def solve_halfstrip(problem: HalfStripProblem, g: DirichletData | np.ndarray,
                    with_decay: bool = True) -> HalfStripSolution:
    """Radiating solution with trace g on x3 = 0."""
    gv = g.g if isinstance(g, DirichletData) else np.asarray(g, dtype=complex)
    sol = problem.solver.solve(gv)
    if with_decay:
        sol.decay = decay_diagnostics(sol)
    return sol


def solve_endreflection(problem: HalfStripProblem, i: int) -> tuple[HalfStripSolution, np.ndarray]:
    """eta_i: zero trace on x3 = 0, unit incoming U_{T+i}; returns (field, row s_i.)."""
    T = problem.basis.T
    if not 0 <= i < T:
        raise IndexError(f"incident index {i} outside 0..{T - 1}")
    N = problem.forms.size
    sol = problem.solver.solve(np.zeros(N, dtype=complex), [(problem.basis.U[T + i], 1.0)])
    return sol, sol.coefficients.copy()


def solve_zeta(problem: HalfStripProblem, i: int) -> HalfStripSolution:
    """zeta_i: zero trace on x3 = 0, unit outgoing U_i, reflected content incoming."""
    N = problem.forms.size
    return problem.reverse_solver.solve(np.zeros(N, dtype=complex), [(problem.basis.U[i], 1.0)])


@dataclass
class ScatteringMatrix:
    S: np.ndarray
    unitarity_residual: float
    row_energy: np.ndarray
    closure_rows: np.ndarray  # the same rows read from the closure amplitudes

    @property
    def reciprocity_residual(self) -> float:
        return float(np.abs(self.S - self.S.T).max())


def scattering_matrix(problem: HalfStripProblem, workers: int = 1) -> ScatteringMatrix:
    T = problem.basis.T

    def row(i):
        sol, s = solve_endreflection(problem, i)
        return s, sol.closure_coefficients[:T]

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(row, range(T)))
    else:
        rows = [row(i) for i in range(T)]
    S = np.array([r[0] for r in rows])
    C = np.array([r[1] for r in rows])
    res = float(np.linalg.norm(S @ S.conj().T - np.eye(T), 2))
    return ScatteringMatrix(S, res, np.sum(np.abs(S) ** 2, axis=1), C)


def sigma_traction(problem: HalfStripProblem, U: np.ndarray) -> np.ndarray:
    """Nodal sigma_i3 on x3 = 0 (normal +e3) from the residual of the first rows."""
    N = problem.forms.size
    K = problem.solver.system.K
    weak = -(K[0:N, :] @ U.reshape(-1))
    return nodal_traction(problem.forms, weak)


def dtn_operator(problem: HalfStripProblem) -> np.ndarray:
    """Matrix of g -> sigma_i3(u)|_{x3=0}, one half-strip solve per trace dof."""
    N = problem.forms.size
    D = np.zeros((N, N), dtype=complex)
    for j in range(N):
        e = np.zeros(N, dtype=complex)
        e[j] = 1.0
        U, _, _ = problem.solver._solve(e)
        D[:, j] = sigma_traction(problem, U)
    return D


def dtn_consistency(problem: HalfStripProblem, g: np.ndarray,
                    D: np.ndarray | None = None) -> tuple[float, complex, complex]:
    """Compare b(u, u0) with the boundary pairing -<DtN g, g> on the section x3 = 0."""
    g = np.asarray(g, dtype=complex)
    D = dtn_operator(problem) if D is None else D
    U, _, _ = problem.solver._solve(g)
    u0 = lift_dirichlet(DirichletData(g), problem.domain)
    lhs = bilinear_b(problem, U, u0)
    rhs = complex(-(g.conj() @ problem.forms.l2 @ (D @ g)))
    return abs(lhs - rhs) / max(abs(lhs), 1e-300), lhs, rhs


def bilinear_b(problem: HalfStripProblem, U: np.ndarray, V: np.ndarray) -> complex:
    """b(u, v) = v^H K u over the truncated domain."""
    return complex(V.reshape(-1).conj() @ (problem.solver.system.K @ U.reshape(-1)))


def coefficient_crosscheck(problem: HalfStripProblem, g: np.ndarray,
                           zetas: list[HalfStripSolution] | None = None) -> tuple[float, np.ndarray, np.ndarray]:
    """Compare q-extracted a_k with -i b(u0, zeta_k); returns (max rel dev, a_q, a_b)."""
    g = np.asarray(g, dtype=complex)
    sol = solve_halfstrip(problem, g, with_decay=False)
    T = problem.basis.T
    if zetas is None:
        zetas = [solve_zeta(problem, k) for k in range(T)]
    u0 = lift_dirichlet(DirichletData(g), problem.domain)
    a_b = np.array([-1j * bilinear_b(problem, u0, z.field) for z in zetas])
    scale = max(np.abs(sol.coefficients).max(), 1e-300)
    dev = float(np.abs(sol.coefficients - a_b).max() / scale) if np.any(g) else \
        float(np.abs(a_b).max())
    return dev, sol.coefficients, a_b


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class DecayReport:
    centers: np.ndarray
    norms: np.ndarray
    slope: float


def slab_norms(forms: FormMatrices, domain: TruncatedDomain, U: np.ndarray,
               start: float, stop: float, width: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """L2 norms of the field over slabs [x, x + width] in [start, stop]."""
    mesh = domain.axial
    xq, wq = mesh.quadrature(mesh.p + 2)
    Vq = mesh.interpolation_matrix(xq)
    vals = Vq @ U
    W = forms.l2
    dens = np.real(np.einsum("kn,nm,km->k", vals.conj(), W, vals))
    edges = np.arange(start, stop + 1e-9, width)
    centers, norms = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (xq >= a) & (xq < b)
        centers.append(0.5 * (a + b))
        norms.append(math.sqrt(max(np.sum(wq[sel] * dens[sel]), 0.0)))
    return np.array(centers), np.array(norms)


def decay_diagnostics(sol: HalfStripSolution, start: float = 2.0) -> DecayReport | None:
    """Slab norms of the remainder over [start, L - 1] and their fitted log slope."""
    stop = sol.domain.R
    if stop - start < 2:
        return None
    c, n = slab_norms(sol.basis.forms, sol.domain, sol.remainder(), start, stop)
    good = n > 0
    slope = float(np.polyfit(c[good], np.log(n[good]), 1)[0]) if good.sum() >= 2 else float("nan")
    return DecayReport(c, n, slope)


def sharp_rate(problem: HalfStripProblem) -> float:
    """Distance from the axis to the nearest off-axis eigenvalue."""
    return min(abs(r.nu.real) for r in refined_eigenvalues(problem.forms) if r.nu.real != 0.0)


@dataclass
class TruncationStudy:
    lengths: np.ndarray
    coefficients: np.ndarray  # (len(lengths), T)
    differences: np.ndarray   # |a(L) - a(L + step)| maxed over k
    slope: float


def truncation_study(cfg: ProblemConfig, g: np.ndarray, lengths=(5.0, 6.0, 7.0, 8.0),
                     n_evanescent: int | None = 0, forms: FormMatrices | None = None,
                     **kw) -> TruncationStudy:
    """a_k for increasing L; the successive differences decay like e^{-rate L}."""
    coeffs = []
    for L in lengths:
        prob = prepare_halfstrip(cfg, length=L, n_evanescent=n_evanescent, forms=forms, **kw)
        coeffs.append(solve_halfstrip(prob, g, with_decay=False).coefficients)
    coeffs = np.array(coeffs)
    diffs = np.abs(np.diff(coeffs, axis=0)).max(axis=1)
    Ls = np.asarray(lengths[:-1], dtype=float)
    slope = float(np.polyfit(Ls, np.log(diffs), 1)[0])
    return TruncationStudy(np.asarray(lengths, dtype=float), coeffs, diffs, slope)


def outgoing_trace(problem: HalfStripProblem, k: int) -> np.ndarray:
    """Trace at x3 = 0 of the outgoing basis wave U_k."""
    return problem.basis.U[k].value(0.0)


def wave_field(wave: Wave, x3) -> np.ndarray:
    return np.array([wave.value(x) for x in np.atleast_1d(x3)])
