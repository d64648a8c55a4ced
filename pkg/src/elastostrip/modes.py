"""Power-exponential waves, the symplectic flux form and the outgoing/incoming basis.

A wave is ``u(x) = e^{nu x} sum_k x^k c_k`` with cross-section profiles ``c_k``;
``x`` is the axial coordinate x3.  The flux form on a section x3 = R is

    q(u, v) = int sigma_i3(conj v) u_i - sigma_i3(u) conj(v_i) dx1,

antihermitian, and ``i q(u, u) > 0`` marks an outgoing wave.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .cross_section import FormMatrices
from .errors import DegenerateForm, IndexOutOfRange
from .pencil import ModeSet
from .smoothstep import cutoff, cutoff_derivative

NULL_FLUX_TOLERANCE = 1e-9
DEGENERACY_TOLERANCE = 1e-10


class WaveKind(str, enum.Enum):
    DIRECT = "direct"
    ADJOINT_REFLECTED = "adjoint_reflected"
    COMBINATION = "combination"


class Classification(str, enum.Enum):
    OUTGOING = "Outgoing"
    INCOMING = "Incoming"
    NULL_FLUX = "NullFlux"


@dataclass
class Wave:
    """``e^{nu y} sum_k y^k coeffs[k]`` with ``y = x - origin``, optionally
    multiplied by the cutoff (a function of x)."""

    nu: complex
    coeffs: list[np.ndarray]
    forms: FormMatrices = field(repr=False)
    kind: WaveKind = WaveKind.DIRECT
    cutoff_applied: bool = False
    label: tuple = ()
    origin: float = 0.0

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def _poly(self, x: float, deriv: bool = False) -> np.ndarray:
        out = np.zeros_like(self.coeffs[0])
        for k, c in enumerate(self.coeffs):
            if deriv:
                if k:
                    out = out + k * x ** (k - 1) * c
            else:
                out = out + x ** k * c
        return out

    def value(self, x: float) -> np.ndarray:
        y = x - self.origin
        u = np.exp(self.nu * y) * self._poly(y)
        if self.cutoff_applied:
            u = cutoff(x) * u
        return u

    def derivative(self, x: float) -> np.ndarray:
        """Axial derivative of the displacement profile at x3 = x."""
        y = x - self.origin
        e = np.exp(self.nu * y)
        du = e * (self.nu * self._poly(y) + self._poly(y, deriv=True))
        if self.cutoff_applied:
            du = cutoff(x) * du + cutoff_derivative(x) * e * self._poly(y)
        return du

    def weak_traction(self, x: float) -> np.ndarray:
        """Traction sigma_i3 tested against the cross-section basis functions."""
        return self.forms.B2 @ self.value(x) + self.forms.C @ self.derivative(x)

    def with_cutoff(self, applied: bool = True) -> "Wave":
        return Wave(self.nu, self.coeffs, self.forms, self.kind, applied, self.label,
                    self.origin)

    def scaled(self, alpha: complex) -> "Wave":
        return Wave(self.nu, [alpha * c for c in self.coeffs], self.forms, self.kind,
                    self.cutoff_applied, self.label, self.origin)

    def conjugate(self) -> "Wave":
        """The complex-conjugate field, again a solution (real equations)."""
        return Wave(np.conj(self.nu), [c.conj() for c in self.coeffs], self.forms,
                    self.kind, self.cutoff_applied, self.label, self.origin)

    def moved(self, origin: float) -> "Wave":
        """Same chain structure with its polynomial centred at ``origin``.

        Translating a power-exponential solution gives another solution; this is
        the well-scaled representative near x = origin (not the same field).
        """
        return Wave(self.nu, self.coeffs, self.forms, self.kind, self.cutoff_applied,
                    self.label, origin)


def combine_waves(waves: list[Wave], weights, label: tuple = ()) -> Wave:
    """Linear combination of waves sharing one eigenvalue."""
    nu = waves[0].nu
    if any(w.nu != nu or w.origin != waves[0].origin for w in waves):
        raise ValueError("combine_waves needs a common eigenvalue and origin")
    deg = max(w.degree for w in waves)
    coeffs = [np.zeros(waves[0].forms.size, dtype=complex) for _ in range(deg + 1)]
    for w, a in zip(waves, weights):
        for k, c in enumerate(w.coeffs):
            coeffs[k] = coeffs[k] + a * c
    return Wave(nu, coeffs, waves[0].forms, WaveKind.COMBINATION,
                waves[0].cutoff_applied, label, waves[0].origin)


def make_wave(modeset: ModeSet, i: int, j: int, s: int,
              kind: WaveKind | str = WaveKind.DIRECT, cutoff_applied: bool = False) -> Wave:
    """Direct wave u_{j,s} (from chain j of mode i) or its adjoint-reflected partner v_{j,s}."""
    kind = WaveKind(kind)
    if not 0 <= i < len(modeset.modes):
        raise IndexOutOfRange(f"mode index {i} outside 0..{len(modeset.modes) - 1}")
    mode = modeset.modes[i]
    if not 0 <= j < len(mode.chains):
        raise IndexOutOfRange(f"chain index {j} outside 0..{len(mode.chains) - 1}")
    if not 0 <= s < mode.chains[j].length:
        raise IndexOutOfRange(f"chain position {s} outside 0..{mode.chains[j].length - 1}")
    if kind is WaveKind.DIRECT:
        vecs, nu, sign = mode.chains[j].vectors, mode.nu, 1.0
    elif kind is WaveKind.ADJOINT_REFLECTED:
        if mode.adjoint is None:
            raise ValueError("adjoint chains have not been computed for this mode set")
        vecs, nu, sign = mode.adjoint[j].vectors, -np.conj(mode.nu), -1.0
    else:
        raise ValueError(f"unsupported wave kind {kind}")
    coeffs = [sign ** k * vecs[s - k] / math.factorial(k) for k in range(s + 1)]
    return Wave(complex(nu), coeffs, modeset.forms, kind, cutoff_applied, (i, j, s))


def nodal_traction(forms: FormMatrices, weak: np.ndarray) -> np.ndarray:
    """Nodal values (L2 projection onto the cross-section space) of a weak traction."""
    n = forms.grid.dof_per_component
    out = np.empty_like(weak)
    for c in range(3):
        out[c * n:(c + 1) * n] = sla.solve(forms.mass, weak[c * n:(c + 1) * n], assume_a="pos")
    return out


def traction_on_section(wave: Wave, x3: float) -> np.ndarray:
    """Nodal sigma_i3 components (u1, u2, u3 blocks) of ``wave`` on the section x3."""
    return nodal_traction(wave.forms, wave.weak_traction(x3))


def pairing_from_traces(u: np.ndarray, tu: np.ndarray, v: np.ndarray, tv: np.ndarray) -> complex:
    """q from displacement traces and weak tractions on one section."""
    return complex(np.conj(u.conj() @ tv) - v.conj() @ tu)


def symplectic_pairing(u: Wave, v: Wave, R: float = 2.0) -> complex:
    """q(u, v) evaluated on the section x3 = R."""
    return pairing_from_traces(u.value(R), u.weak_traction(R), v.value(R), v.weak_traction(R))


def section_norm2(u: Wave, R: float = 2.0) -> float:
    val = u.value(R)
    return float(np.real(val.conj() @ u.forms.l2 @ val))


def classify_wave(u: Wave, R: float = 2.0, tol: float = NULL_FLUX_TOLERANCE) -> Classification:
    """Sign of the energy flux i q(u, u)."""
    flux = (1j * symplectic_pairing(u, u, R)).real
    if abs(flux) <= tol * section_norm2(u, R):
        return Classification.NULL_FLUX
    return Classification.OUTGOING if flux > 0 else Classification.INCOMING


# --------------------------------------------------------------------------
# propagating waves and their Gram matrix


def propagating_waves(modeset: ModeSet, kind: WaveKind | str = WaveKind.DIRECT,
                      cutoff_applied: bool = False) -> list[Wave]:
    """All waves u_{j,s} (or v_{j,s}) attached to eigenvalues on the imaginary axis."""
    out = []
    for i, mode in enumerate(modeset.modes):
        if not mode.propagating:
            continue
        for j, chain in enumerate(mode.chains):
            for s in range(chain.length):
                out.append(make_wave(modeset, i, j, s, kind, cutoff_applied))
    return out


def verify_chain_biorthogonality(modeset: ModeSet, R: float = 2.0) -> float:
    """Max deviation of q(chi u_{j,s}, chi v_{j',s'}) from the pattern
    delta(mode) delta(chain) delta(s + s' = length - 1), over axis eigenvalues."""
    us = propagating_waves(modeset, WaveKind.DIRECT, cutoff_applied=True)
    vs = propagating_waves(modeset, WaveKind.ADJOINT_REFLECTED, cutoff_applied=True)
    worst = 0.0
    for u in us:
        iu, ju, su = u.label
        length = modeset.modes[iu].chains[ju].length
        for v in vs:
            iv, jv, sv = v.label
            target = 1.0 if (iu == iv and ju == jv and su + sv == length - 1) else 0.0
            worst = max(worst, abs(symplectic_pairing(u, v, R) - target))
    return worst


@dataclass
class SymplecticGram:
    Q: np.ndarray
    waves: list[Wave] = field(repr=False)
    R: float = 2.0

    @property
    def kappa(self) -> int:
        return self.Q.shape[0]

    @property
    def T(self) -> int:
        return self.kappa // 2

    def antihermitian_residual(self) -> float:
        return float(np.abs(self.Q + self.Q.conj().T).max())

    def signature(self) -> tuple[int, int]:
        ev = np.linalg.eigvalsh(0.5 * (1j * self.Q + (1j * self.Q).conj().T))
        return int(np.sum(ev > 0)), int(np.sum(ev < 0))


def symplectic_gram(modeset: ModeSet, R: float = 2.0) -> SymplecticGram:
    waves = propagating_waves(modeset)
    k = len(waves)
    Q = np.zeros((k, k), dtype=complex)
    for a, u in enumerate(waves):
        for b, v in enumerate(waves):
            Q[a, b] = symplectic_pairing(u, v, R)
    return SymplecticGram(Q, waves, R)


@dataclass
class ModalBasis:
    """U[:T] outgoing (q = -i), U[T:] incoming (q = +i); U[T + k] pairs with U[k]."""

    U: list[Wave]
    T: int
    gram: SymplecticGram = field(repr=False)
    flux_eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def outgoing(self) -> list[Wave]:
        return self.U[:self.T]

    @property
    def incoming(self) -> list[Wave]:
        return self.U[self.T:]

    @property
    def forms(self) -> FormMatrices:
        return self.U[0].forms

    def pairing_matrix(self, R: float = 2.0) -> np.ndarray:
        n = len(self.U)
        return np.array([[symplectic_pairing(self.U[a], self.U[b], R) for b in range(n)]
                         for a in range(n)])

    def coefficients_at(self, value: np.ndarray, weak_traction: np.ndarray,
                        R: float) -> np.ndarray:
        """a_k = i q(u, U_k) for outgoing k and a_{T+k} = -i q(u, U_{T+k}) for incoming,
        so that u = sum_k a_k U_k + decaying part."""
        out = []
        for k, U in enumerate(self.U):
            q = pairing_from_traces(value, weak_traction, U.value(R), U.weak_traction(R))
            out.append(1j * q if k < self.T else -1j * q)
        return np.array(out)


def _phase_fix(w: Wave) -> Wave:
    c = w.coeffs[0]
    k = int(np.argmax(np.abs(c)))
    if abs(c[k]) == 0:
        return w
    return w.scaled(abs(c[k]) / c[k])


def build_canonical_basis(gram: SymplecticGram, waves: list[Wave] | None = None) -> ModalBasis:
    """Diagonalize i Q eigenvalue by eigenvalue; positive directions become outgoing
    waves scaled to q = -i, negative ones incoming with q = +i."""
    waves = gram.waves if waves is None else waves
    Q = gram.Q
    scale = max(np.abs(Q).max(), 1e-300)
    nus = np.array([w.nu for w in waves])
    groups: list[list[int]] = []
    for a, nu in enumerate(nus):
        for g in groups:
            if nus[g[0]] == nu:
                g.append(a)
                break
        else:
            groups.append([a])
    out_list, in_list, evs = [], [], []
    for g in groups:
        H = 1j * Q[np.ix_(g, g)]
        H = 0.5 * (H + H.conj().T)
        lam, V = np.linalg.eigh(H)
        evs.extend(lam)
        for e, vec in zip(lam, V.T):
            if abs(e) < DEGENERACY_TOLERANCE * scale:
                raise DegenerateForm(
                    f"i q has a near-zero eigenvalue {e:.3e} at nu={nus[g[0]]:.6g}; "
                    "the flux form is degenerate on the propagating span")
            w = combine_waves([waves[a] for a in g], vec / math.sqrt(abs(e)))
            (out_list if e > 0 else in_list).append(_phase_fix(w))
    if len(out_list) != len(in_list):
        raise DegenerateForm(f"signature ({len(out_list)}, {len(in_list)}) is unbalanced")
    out_list.sort(key=lambda w: w.nu.imag)
    # incoming partner of U_k lives at conj(nu_k); match profiles within that group
    remaining = list(in_list)
    paired = []
    for w in out_list:
        cands = [c for c in remaining if abs(c.nu - np.conj(w.nu)) <= 1e-12 * (1 + abs(w.nu))]
        if not cands:
            cands = remaining
        best = max(cands, key=lambda c: abs(c.coeffs[0] @ w.coeffs[0]))
        remaining.remove(best)
        paired.append(best)
    T = len(out_list)
    U = [_label(w, ("out", k)) for k, w in enumerate(out_list)]
    U += [_label(w, ("in", k)) for k, w in enumerate(paired)]
    return ModalBasis(U=U, T=T, gram=gram, flux_eigenvalues=np.array(evs))


def _label(w: Wave, label: tuple) -> Wave:
    return Wave(w.nu, w.coeffs, w.forms, w.kind, w.cutoff_applied, label, w.origin)


def canonical_basis(modeset: ModeSet, R: float = 2.0) -> ModalBasis:
    return build_canonical_basis(symplectic_gram(modeset, R))


def mode_trace_matrix(waves: list[Wave], x3: float = 0.0) -> np.ndarray:
    """Columns: displacement trace stacked over nodal traction, one per wave."""
    return np.column_stack([np.concatenate([w.value(x3), traction_on_section(w, x3)])
                            for w in waves])


def mode_trace_rank(waves: list[Wave], x3: float = 0.0) -> tuple[int, float]:
    """Numerical rank and condition number of the mode-trace matrix."""
    s = np.linalg.svd(mode_trace_matrix(waves, x3), compute_uv=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    return rank, float(s[0] / s[-1])
