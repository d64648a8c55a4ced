"""Spectrum of the quadratic pencil, Jordan chains and Keldysh adjoint chains."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .cross_section import FormMatrices, evaluate_pencil, pencil_taylor
from .errors import (
    CircleTouchesSpectrum,
    EigensolverFailure,
    RankAmbiguity,
    SingularNormalization,
    WindowViolation,
)

AXIS_TOLERANCE = 1e-8
RANK_ZERO = 1e-10
RANK_AMBIGUOUS = 1e-6
CLUSTER_TOLERANCE = 1e-7


@dataclass(frozen=True)
class SpectralWindow:
    """Weight window.  ``strip_lo``/``strip_hi`` default to ``-delta``/``+delta``."""

    delta: float
    strip_lo: float | None = None
    strip_hi: float | None = None
    axis_tolerance: float = AXIS_TOLERANCE

    @property
    def lo(self) -> float:
        return -self.delta if self.strip_lo is None else self.strip_lo

    @property
    def hi(self) -> float:
        return self.delta if self.strip_hi is None else self.strip_hi

    def on_axis(self, nu: complex) -> bool:
        return abs(nu.real) <= self.axis_tolerance * max(1.0, abs(nu.imag))


@dataclass
class JordanChain:
    eigenvalue: complex
    vectors: list[np.ndarray]
    branch: str = ""

    @property
    def length(self) -> int:
        return len(self.vectors)

    def residuals(self, forms: FormMatrices, adjoint: bool = False) -> list[float]:
        """Relative residual of each chain relation (adjoint: chains of L(nu)^H)."""
        nu0 = np.conj(self.eigenvalue) if adjoint else self.eigenvalue
        Ls = pencil_taylor(forms, nu0)
        if adjoint:
            Ls = [X.conj().T for X in Ls]
        scale = np.linalg.norm(Ls[0], 2) + np.linalg.norm(Ls[1], 2) + np.linalg.norm(Ls[2], 2)
        out = []
        for j in range(self.length):
            r = sum(Ls[k] @ self.vectors[j - k] for k in range(min(j, 2) + 1))
            out.append(np.linalg.norm(r) / (scale * max(np.linalg.norm(v) for v in self.vectors)))
        return out


@dataclass
class Eigenmode:
    """One eigenvalue with its canonical system and (optionally) Keldysh adjoint system."""

    nu: complex
    chains: list[JordanChain]
    adjoint: list[JordanChain] | None = None
    branch: str = "in-plane"
    propagating: bool = False

    @property
    def geometric_multiplicity(self) -> int:
        return len(self.chains)

    @property
    def partial_multiplicities(self) -> list[int]:
        return [c.length for c in self.chains]

    @property
    def algebraic_multiplicity(self) -> int:
        return sum(self.partial_multiplicities)


@dataclass
class ModeSet:
    forms: FormMatrices = field(repr=False)
    window: SpectralWindow
    modes: list[Eigenmode]

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, i) -> Eigenmode:
        return self.modes[i]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([m.nu for m in self.modes])

    @property
    def kappa(self) -> int:
        return sum(m.algebraic_multiplicity for m in self.modes)

    def propagating(self) -> "ModeSet":
        return replace(self, modes=[m for m in self.modes if m.propagating])


# --------------------------------------------------------------------------
# linearization


@dataclass(frozen=True)
class LinearizedSpectrum:
    nu: np.ndarray       # all 6n eigenvalues
    vectors: np.ndarray  # top block of the companion eigenvectors (3n x 6n)


def linearized_spectrum(forms: FormMatrices) -> LinearizedSpectrum:
    """All eigenvalues of the pencil from the first companion form in ``-i nu``."""
    N = forms.size
    I = np.eye(N)
    Z = np.zeros((N, N))
    lhs = np.block([[Z, I], [-forms.A, -forms.B]])
    rhs = np.block([[I, Z], [Z, forms.C]])
    try:
        w, V = sla.eig(lhs, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise EigensolverFailure("linearization produced infinite eigenvalues")
    return LinearizedSpectrum(nu=1j * w, vectors=V[:N])


def _cluster(nu: np.ndarray, tol: float = CLUSTER_TOLERANCE) -> list[np.ndarray]:
    """Group indices of eigenvalues closer than ``tol * (1 + |nu|)`` (single linkage)."""
    order = np.argsort(nu.real + 1e-3 * nu.imag)
    unassigned = set(range(len(nu)))
    groups = []
    for i in order:
        if i not in unassigned:
            continue
        group = [i]
        unassigned.discard(i)
        k = 0
        while k < len(group):
            g = group[k]
            near = [j for j in unassigned
                    if abs(nu[j] - nu[g]) <= tol * (1 + abs(nu[g]))]
            for j in near:
                unassigned.discard(j)
            group.extend(near)
            k += 1
        groups.append(np.array(group))
    return groups


def newton_refine(forms: FormMatrices, nu: complex, phi: np.ndarray,
                  iterations: int = 4) -> tuple[complex, np.ndarray]:
    """Newton iteration on the bordered system [L, L' phi; w^H, 0]."""
    phi = phi / np.linalg.norm(phi)
    w = phi.copy()
    N = len(phi)
    for _ in range(iterations):
        L = evaluate_pencil(forms, nu)
        dL = -1j * forms.B - 2 * nu * forms.C
        J = np.zeros((N + 1, N + 1), dtype=complex)
        J[:N, :N] = L
        J[:N, N] = dL @ phi
        J[N, :N] = w.conj()
        rhs = -np.concatenate([L @ phi, [w.conj() @ phi - 1.0]])
        try:
            step = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            break
        phi = phi + step[:N]
        nu = nu + step[N]
        if abs(step[N]) <= 1e-15 * max(1.0, abs(nu)):
            break
    return nu, phi


def _branch(forms: FormMatrices, phi: np.ndarray) -> str:
    s = forms.grid.component(1)
    frac = np.linalg.norm(phi[s]) ** 2 / np.linalg.norm(phi) ** 2
    return "SH" if frac > 0.5 else "in-plane"


@dataclass(frozen=True)
class RawEigenvalue:
    nu: complex
    multiplicity: int
    vector: np.ndarray
    chains: tuple = ()


DEFECT_MERGE = 1e-5


def _merge_defective(forms: FormMatrices, nu: np.ndarray,
                     groups: list[np.ndarray]) -> list[tuple[np.ndarray, list]]:
    """Second clustering pass for split defective eigenvalues.

    Round-off of size eps splits a Jordan block of length k by eps^(1/k), which
    can exceed the plain clustering tolerance.  Neighbouring groups closer than
    DEFECT_MERGE are merged only if the pencil at their mean carries Jordan
    chains accounting for every merged eigenvalue; otherwise they stay apart.
    """
    centers = [complex(np.mean(nu[g])) for g in groups]
    merged: list[tuple[np.ndarray, list]] = []
    used = [False] * len(groups)
    for a in range(len(groups)):
        if used[a]:
            continue
        members = [a]
        for b in range(a + 1, len(groups)):
            if not used[b] and any(
                    abs(centers[b] - centers[m]) <= DEFECT_MERGE * (1 + abs(centers[m]))
                    for m in members):
                members.append(b)
        idx = np.concatenate([groups[m] for m in members])
        if len(members) == 1:
            merged.append((idx, []))
            used[a] = True
            continue
        mean = complex(np.mean(nu[idx]))
        try:
            chains = compute_jordan_chains(forms, mean, max_length=len(idx))
        except RankAmbiguity:
            chains = []  # not a confirmed defect: keep the groups apart
        if sum(c.length for c in chains) == len(idx):
            for m in members:
                used[m] = True
            merged.append((idx, chains))
        else:
            used[a] = True
            merged.append((groups[a], []))
    return merged


def refined_eigenvalues(forms: FormMatrices,
                        axis_tolerance: float = AXIS_TOLERANCE) -> list[RawEigenvalue]:
    """Clustered, Newton-refined, axis-snapped eigenvalues of the pencil."""
    lin = linearized_spectrum(forms)
    out = []
    for group, chains in _merge_defective(forms, lin.nu, _cluster(lin.nu)):
        if len(group) == 1:
            i = group[0]
            nu, phi = newton_refine(forms, lin.nu[i], lin.vectors[:, i])
        else:
            # the mean of a split defective eigenvalue is accurate to round-off
            nu = complex(np.mean(lin.nu[group]))
            phi = lin.vectors[:, group[0]]
        if abs(nu.real) <= axis_tolerance * max(1.0, abs(nu.imag)):
            nu = complex(0.0, nu.imag)
        if abs(nu.imag) <= axis_tolerance * max(1.0, abs(nu.real)):
            nu = complex(nu.real, 0.0)
        out.append(RawEigenvalue(nu, len(group), phi, tuple(chains)))
    out.sort(key=lambda r: (abs(r.nu.real), -r.nu.imag))
    return out


def default_delta(forms: FormMatrices, delta_max: float | None = None,
                  axis_tolerance: float = AXIS_TOLERANCE) -> float:
    """Half the distance from the imaginary axis to the nearest off-axis eigenvalue."""
    raw = refined_eigenvalues(forms, axis_tolerance)
    off = [abs(r.nu.real) for r in raw if r.nu.real != 0.0]
    delta = 0.5 * min(off)
    if delta_max is not None:
        delta = min(delta, delta_max)
    return delta


def sharp_decay_rate(forms: FormMatrices, axis_tolerance: float = AXIS_TOLERANCE) -> float:
    """Smallest |Re nu| over off-axis eigenvalues (supremum of admissible weights)."""
    raw = refined_eigenvalues(forms, axis_tolerance)
    return min(abs(r.nu.real) for r in raw if r.nu.real != 0.0)


# --------------------------------------------------------------------------
# rank decisions and Jordan chains


def _null_space(X: np.ndarray, max_dim: int | None = None) -> np.ndarray:
    """Orthonormal null-space basis with the two-threshold rank rule."""
    U, s, Vh = np.linalg.svd(X)
    smax = s[0] if len(s) and s[0] > 0 else 1.0
    rel = s / smax
    # only the smallest candidates are inspected; larger singular values belong
    # to other eigenvalues
    ncand = len(rel) if max_dim is None else min(len(rel), max_dim + 1)
    cand = rel[len(rel) - ncand:]
    if np.any((cand > RANK_ZERO) & (cand < RANK_AMBIGUOUS)):
        raise RankAmbiguity(
            "singular values inside the ambiguous band "
            f"({RANK_ZERO:g}, {RANK_AMBIGUOUS:g}) x sigma_max: "
            f"{cand[(cand > RANK_ZERO) & (cand < RANK_AMBIGUOUS)]}")
    rank = int(np.sum(rel > RANK_ZERO))
    # square matrices: SVD returns exactly n singular values
    return Vh[rank:].conj().T


def _range_basis(F: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal range basis of a block of an orthonormal matrix.

    The singular values are either O(1) or round-off, so the cut is absolute.
    """
    U, s, _ = np.linalg.svd(F, full_matrices=False)
    return U[:, :int(np.sum(s > tol))]


def _toeplitz(Ls: list[np.ndarray], k: int) -> np.ndarray:
    N = Ls[0].shape[0]
    T = np.zeros((k * N, k * N), dtype=complex)
    for r in range(k):
        for c in range(r + 1):
            m = r - c
            if m < len(Ls):
                T[r * N:(r + 1) * N, c * N:(c + 1) * N] = Ls[m]
    return T


def _normalize_chain(vecs: list[np.ndarray], weight: np.ndarray) -> list[np.ndarray]:
    v0 = vecs[0]
    nrm = np.sqrt(abs(v0.conj() @ weight @ v0))
    k = int(np.argmax(abs(v0)))
    phase = v0[k] / abs(v0[k])
    return [v / (nrm * phase) for v in vecs]


def branch_indices(forms: FormMatrices) -> dict[str, np.ndarray]:
    """Dof indices of the two decoupled subsystems (SH: u2; in-plane: u1, u3)."""
    g = forms.grid
    n = g.dof_per_component
    return {"SH": np.arange(n, 2 * n),
            "in-plane": np.concatenate([np.arange(n), np.arange(2 * n, 3 * n)])}


def _block_chains(Ls: list[np.ndarray], cap: int, weight: np.ndarray) -> list[list[np.ndarray]]:
    N = Ls[0].shape[0]
    kernel = _null_space(Ls[0], max_dim=cap)
    if kernel.shape[1] == 0:
        return []
    # S_k = eigenvectors of rank >= k, from the block-Toeplitz null spaces
    spaces = [kernel]
    nulls = [kernel]
    k = 1
    while k < cap:
        k += 1
        Nk = _null_space(_toeplitz(Ls, k), max_dim=cap)
        first = _range_basis(Nk[:N])
        if first.shape[1] == 0:
            break
        spaces.append(first)
        nulls.append(Nk)
    chains = []
    chosen = np.zeros((N, 0), dtype=complex)
    for length in range(len(spaces), 0, -1):
        S = spaces[length - 1]
        if chosen.shape[1]:
            Q, _ = np.linalg.qr(chosen)
            S = S - Q @ (Q.conj().T @ S)
        new = _range_basis(S)
        Nk = nulls[length - 1]
        for col in range(new.shape[1]):
            phi0 = new[:, col]
            # minimal-norm null vector of T_k with the prescribed head
            c = np.linalg.lstsq(Nk[:N], phi0, rcond=None)[0]
            X = Nk @ c
            vecs = [X[s * N:(s + 1) * N] for s in range(length)]
            vecs[0] = phi0
            chains.append(_normalize_chain(vecs, weight))
            chosen = np.column_stack([chosen, phi0])
    return chains


def compute_jordan_chains(forms: FormMatrices, nu: complex,
                          max_length: int | None = None) -> list[JordanChain]:
    """Canonical system of Jordan chains of L at ``nu`` (empty if not an eigenvalue).

    Chains are computed separately in the SH and in-plane subsystems, so every
    chain belongs to one branch.  ``max_length`` caps the search (the algebraic
    multiplicity when known).
    """
    Ls = pencil_taylor(forms, nu)
    N = forms.size
    cap = max_length if max_length is not None else N
    weight = forms.l2
    chains: list[JordanChain] = []
    for name, idx in branch_indices(forms).items():
        ix = np.ix_(idx, idx)
        for vecs in _block_chains([X[ix] for X in Ls], cap, weight[ix]):
            full = []
            for v in vecs:
                w = np.zeros(N, dtype=complex)
                w[idx] = v
                full.append(w)
            chains.append(JordanChain(nu, full, name))
    chains.sort(key=lambda c: -c.length)
    return chains


def compute_adjoint_system(forms: FormMatrices, nu: complex,
                           chains: list[JordanChain]) -> list[JordanChain]:
    """Keldysh adjoint chains psi (Jordan chains of L(nu)^H at conj(nu)) obeying
    the biorthogonality conditions.

    Chains of a single branch get adjoint chains supported on that branch; the
    pencil is block diagonal, so this is the unique solution of the full system.
    """
    Nfull = forms.size
    branches = {c.branch for c in chains}
    if len(branches) == 1 and "" not in branches:
        idx = branch_indices(forms)[branches.pop()]
    else:
        idx = np.arange(Nfull)
    ix = np.ix_(idx, idx)
    Ls = [X[ix] for X in pencil_taylor(forms, nu)]
    LsH = [X.conj().T for X in Ls]
    heads = [[v[idx] for v in c.vectors] for c in chains]
    N = len(idx)
    J = len(chains)
    kap = [c.length for c in chains]
    scale = sum(np.linalg.norm(X, 2) for X in Ls)
    out = []
    for k in range(J):
        K = kap[k]
        rows = []
        rhs = []
        # chain relations of the adjoint pencil
        for s in range(K):
            R = np.zeros((N, K * N), dtype=complex)
            for m in range(min(s, 2) + 1):
                R[:, (s - m) * N:(s - m + 1) * N] = LsH[m] / scale
            rows.append(R)
            rhs.append(np.zeros(N, dtype=complex))
        # biorthogonality, conjugated so that it is linear in psi
        for j in range(J):
            for n in range(K):
                row = np.zeros(K * N, dtype=complex)
                total = kap[j] + n
                for q in range(3):
                    for h in range(kap[j]):
                        s = total - q - h
                        if 0 <= s < K:
                            row[s * N:(s + 1) * N] += (Ls[q] @ heads[j][h]).conj()
                rn = np.linalg.norm(row) or 1.0
                rows.append(row[None, :] / rn)
                rhs.append(np.array([(1.0 if (j == k and n == 0) else 0.0) / rn]))
        Amat = np.vstack(rows)
        b = np.concatenate(rhs)
        sv = np.linalg.svd(Amat, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise SingularNormalization(
                f"biorthogonality system singular at nu={nu:.6g} "
                f"(sigma_min/sigma_max={sv[-1] / sv[0]:.2e})")
        x = np.linalg.lstsq(Amat, b, rcond=None)[0]
        vecs = []
        for s_ in range(K):
            v = np.zeros(Nfull, dtype=complex)
            v[idx] = x[s_ * N:(s_ + 1) * N]
            vecs.append(v)
        out.append(JordanChain(np.conj(nu), vecs, chains[k].branch))
    return out


def keldysh_residual(forms: FormMatrices, mode: Eigenmode) -> float:
    """Max deviation of the biorthogonality pattern for one eigenvalue."""
    Ls = pencil_taylor(forms, mode.nu)
    chains, adj = mode.chains, mode.adjoint
    kap = [c.length for c in chains]
    worst = 0.0
    for j in range(len(chains)):
        for k in range(len(adj)):
            for n in range(kap[k]):
                total = kap[j] + n
                val = 0.0
                for q in range(3):
                    for h in range(kap[j]):
                        s = total - q - h
                        if 0 <= s < kap[k]:
                            val += adj[k].vectors[s].conj() @ (Ls[q] @ chains[j].vectors[h])
                target = 1.0 if (j == k and n == 0) else 0.0
                worst = max(worst, abs(val - target))
    return worst


def compute_adjoint_chains(forms: FormMatrices, modeset: ModeSet) -> ModeSet:
    modes = [replace(m, adjoint=compute_adjoint_system(forms, m.nu, m.chains))
             for m in modeset.modes]
    return replace(modeset, modes=modes)


# --------------------------------------------------------------------------
# the solver


def solve_qep(forms: FormMatrices, window: SpectralWindow | None = None,
              adjoint: bool = True) -> ModeSet:
    """Eigenvalues in ``window.lo < Re nu < window.hi`` with canonical and
    adjoint chains.  ``window=None`` picks the default delta."""
    raw = refined_eigenvalues(forms, AXIS_TOLERANCE if window is None else window.axis_tolerance)
    if window is None:
        off = [abs(r.nu.real) for r in raw if r.nu.real != 0.0]
        window = SpectralWindow(delta=0.5 * min(off))
    tol = window.axis_tolerance
    for r in raw:
        for line in (window.lo, window.hi):
            if np.isfinite(line) and abs(r.nu.real - line) <= tol * max(1.0, abs(r.nu)):
                raise WindowViolation(
                    f"eigenvalue {r.nu:.10g} lies on the weight line Re nu = {line:g}")
    modes = []
    for r in raw:
        if not (window.lo < r.nu.real < window.hi):
            continue
        for mode in _modes_at(forms, r):
            if adjoint:
                mode.adjoint = compute_adjoint_system(forms, r.nu, mode.chains)
            modes.append(mode)
    modes.sort(key=lambda m: (m.nu.real, -m.nu.imag, m.branch))
    return ModeSet(forms=forms, window=window, modes=modes)


def _modes_at(forms: FormMatrices, r: RawEigenvalue) -> list[Eigenmode]:
    """One Eigenmode per branch present at the (clustered) eigenvalue ``r``."""
    if r.multiplicity == 1:
        # guard: a simple eigenvalue still has to pass the rank test
        _null_space(evaluate_pencil(forms, r.nu), max_dim=1)
        branch = _branch(forms, r.vector)
        phi = np.zeros_like(r.vector)
        idx = branch_indices(forms)[branch]
        phi[idx] = r.vector[idx]
        chains = [JordanChain(r.nu, _normalize_chain([phi], forms.l2), branch)]
    else:
        chains = compute_jordan_chains(forms, r.nu, max_length=r.multiplicity)
        if sum(c.length for c in chains) != r.multiplicity:
            raise RankAmbiguity(
                f"chains at nu={r.nu:.6g} account for "
                f"{sum(c.length for c in chains)} of {r.multiplicity} eigenvalues")
    out = []
    for branch in ("SH", "in-plane"):
        mine = [c for c in chains if c.branch == branch]
        if mine:
            out.append(Eigenmode(nu=r.nu, chains=mine, branch=branch,
                                 propagating=(r.nu.real == 0.0)))
    return out


def decaying_modes(forms: FormMatrices, count: int | None = None,
                   below: float = 0.0) -> ModeSet:
    """Eigenmodes with Re nu < -below (decaying toward +infinity), slowest first.

    ``count`` limits the number of eigenvalues (counted with algebraic multiplicity).
    """
    win = SpectralWindow(delta=max(below, 1e-300), strip_lo=-np.inf,
                         strip_hi=-below if below > 0 else -1e-300)
    raw = [r for r in refined_eigenvalues(forms) if r.nu.real < -below]
    raw.sort(key=lambda r: (-r.nu.real, -r.nu.imag))
    modes = []
    total = 0
    last = None
    for r in raw:
        if count is not None and total >= count:
            # keep complex-conjugate partners together
            if last is None or abs(r.nu - np.conj(last)) > 1e-10 * (1 + abs(last)):
                break
        last = r.nu
        for mode in _modes_at(forms, r):
            modes.append(mode)
            total += mode.algebraic_multiplicity
    return ModeSet(forms=forms, window=win, modes=modes)


# --------------------------------------------------------------------------
# resolvent check


def principal_part(modes: list[Eigenmode], m: int) -> np.ndarray:
    """Coefficient of (nu - nu0)^-m in the Laurent expansion of L^-1 at one
    eigenvalue (all branch entries sharing it)."""
    N = len(modes[0].chains[0].vectors[0])
    P = np.zeros((N, N), dtype=complex)
    for mode in modes:
        for phi, psi in zip(mode.chains, mode.adjoint):
            s = phi.length - m
            for sig in range(s + 1):
                P += np.outer(phi.vectors[s - sig], psi.vectors[sig].conj())
    return P


def resolvent_residue_check(forms: FormMatrices, modeset: ModeSet, nu0: complex,
                            radius: float, n_nodes: int = 96) -> float:
    """Compare contour moments of L^-1 around one eigenvalue with the projectors
    assembled from the chains; returns the max relative deviation."""
    inside = [m for m in modeset.modes if abs(m.nu - nu0) < radius]
    if not inside or any(m.nu != inside[0].nu for m in inside):
        raise CircleTouchesSpectrum(
            f"circle |nu - {nu0}| < {radius} must contain exactly one eigenvalue of the mode set")
    inside = [m if m.adjoint is not None
              else replace(m, adjoint=compute_adjoint_system(forms, m.nu, m.chains))
              for m in inside]
    nu_e = inside[0].nu
    others = np.array([r.nu for r in refined_eigenvalues(forms) if r.nu != nu_e])
    if np.min(abs(others - nu0)) <= radius * (1 + 1e-6):
        raise CircleTouchesSpectrum(f"circle of radius {radius} around {nu0} touches the spectrum")
    theta = 2 * np.pi * np.arange(n_nodes) / n_nodes
    pts = nu0 + radius * np.exp(1j * theta)
    N = forms.size
    kmax = max(c.length for m in inside for c in m.chains)
    moments = [np.zeros((N, N), dtype=complex) for _ in range(kmax + 1)]
    for z in pts:
        L = evaluate_pencil(forms, z)
        s = np.linalg.svd(L, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise CircleTouchesSpectrum(f"quadrature node {z} is numerically singular")
        Linv = np.linalg.inv(L)
        for m in range(1, kmax + 2):
            # (1/2 pi i) \oint (nu - nu_e)^(m-1) L^-1 dnu, with dnu = i (z - nu0) dtheta
            moments[m - 1] += (z - nu_e) ** (m - 1) * (z - nu0) * Linv / n_nodes
    ref = np.linalg.norm(principal_part(inside, 1), 2)
    worst = 0.0
    for m in range(1, kmax + 2):
        # m beyond the longest chain: the integrand is holomorphic, expected 0
        expected = principal_part(inside, m)
        worst = max(worst, np.linalg.norm(moments[m - 1] - expected, 2) / ref)
    return worst


# --------------------------------------------------------------------------
# analytic oracles


def sh_reference_spectrum(cfg, window: SpectralWindow) -> list[tuple[complex, int]]:
    """Closed-form SH eigenvalues nu = +-sqrt((n pi / 2h)^2 - omega^2 rho / mu)."""
    h, mu, rho, om = cfg.half_thickness, cfg.lame_mu, cfg.density, cfg.omega
    bound = max(abs(window.lo), abs(window.hi))
    out = []
    n = 0
    while True:
        kn = n * math.pi / (2 * h)
        val = kn ** 2 - om ** 2 * rho / mu
        if val > 0 and math.sqrt(val) > bound:
            break
        if abs(val) <= 1e-12 * max(kn ** 2, 1.0):
            cands = [(0j, 2)]
        elif val > 0:
            r = math.sqrt(val)
            cands = [(complex(r), 1), (complex(-r), 1)]
        else:
            r = math.sqrt(-val)
            cands = [(1j * r, 1), (-1j * r, 1)]
        out.extend((nu, m) for nu, m in cands if window.lo < nu.real < window.hi)
        n += 1
    return out


def _lamb_rhs(cfg, nu):
    lam, mu, rho, om = cfg.lame_lambda, cfg.lame_mu, cfg.density, cfg.omega
    lp2m = lam + 2 * mu

    # state y = (u1, u3, sigma11, sigma13); traction-free means sigma11 = sigma13 = 0
    def rhs(x, y):
        u1, u3, s11, s13 = y
        du1 = (s11 - lam * nu * u3) / lp2m
        du3 = s13 / mu - nu * u1
        s33 = lam * du1 + lp2m * nu * u3
        ds11 = -nu * s13 - rho * om ** 2 * u1
        ds13 = -nu * s33 - rho * om ** 2 * u3
        return [du1, du3, ds11, ds13]

    return rhs


def lamb_determinant(cfg, nu: complex, rtol: float = 1e-12) -> complex:
    """Traction determinant of the in-plane strong form, by shooting across the plate.

    Zero exactly at in-plane eigenvalues; independent of any finite-element data.
    """
    from scipy.integrate import solve_ivp

    from .errors import IntegratorFailure

    h = cfg.half_thickness
    rhs = _lamb_rhs(cfg, complex(nu))
    cols = []
    for y0 in ([1, 0, 0, 0], [0, 1, 0, 0]):
        sol = solve_ivp(rhs, (-h, h), np.array(y0, dtype=complex), method="DOP853",
                        rtol=rtol, atol=1e-14)
        if not sol.success:
            raise IntegratorFailure(sol.message)
        cols.append(sol.y[2:, -1])
    return complex(np.linalg.det(np.column_stack(cols)))


def lamb_axis_roots(cfg, k_max: float | None = None, n_scan: int = 400,
                    xtol: float = 1e-14) -> np.ndarray:
    """Positive wavenumbers k with lamb_determinant(i k) = 0, by scan + bisection."""
    from scipy.optimize import brentq

    if k_max is None:
        k_max = 1.5 * cfg.omega / cfg.shear_speed + 1.0
    ks = np.linspace(1e-6, k_max, n_scan)
    dets = np.array([lamb_determinant(cfg, 1j * k) for k in ks])
    phase = dets[np.argmax(abs(dets))]
    phase /= abs(phase)

    def f(k):
        return (lamb_determinant(cfg, 1j * k) / phase).real

    vals = (dets / phase).real
    roots = []
    for a, b, fa, fb in zip(ks[:-1], ks[1:], vals[:-1], vals[1:]):
        if fa == 0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(f, a, b, xtol=xtol, rtol=1e-15))
    return np.array(roots)


def discrete_sh_cutoffs(forms: FormMatrices, count: int = 4) -> np.ndarray:
    """Frequencies at which the discrete SH branch has a double root at nu = 0.

    These differ from the exact values n pi sqrt(mu/rho) / 2h by the discretization
    error only; a defective eigenvalue splits like the square root of any frequency
    offset, so cutoff studies must sit on the discrete value.
    """
    cfg = forms.cfg
    s = forms.grid.component(1)
    K = forms.A0[s, s].real / cfg.lame_mu
    theta = sla.eigh(K, forms.mass, eigvals_only=True)
    theta = np.clip(np.sort(theta), 0.0, None)
    return np.sqrt(cfg.lame_mu * theta[:count] / cfg.density)
