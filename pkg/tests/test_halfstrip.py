import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastostrip.errors import AssumptionViolation, IllConditionedClosure, InvalidGeometry
from elastostrip.halfstrip import (
    DirichletData,
    assemble_truncated,
    coefficient_crosscheck,
    dtn_consistency,
    dtn_operator,
    lift_dirichlet,
    make_domain,
    prepare_halfstrip,
    radiation_closure,
    scattering_matrix,
    section_traction,
    solve_endreflection,
    solve_halfstrip,
    solve_zeta,
    truncation_study,
    wave_field,
)
from elastostrip.modes import make_wave, nodal_traction, traction_on_section


def sh0_index(problem):
    return next(k for k, U in enumerate(problem.basis.outgoing) if abs(U.nu - 1j) < 1e-9)


def smooth_g(forms, seed):
    """Smooth random trace: low-order Chebyshev series per component."""
    rng = np.random.default_rng(seed)
    x = forms.grid.nodes / forms.cfg.half_thickness
    comps = []
    for _ in range(3):
        c = rng.normal(size=5) + 1j * rng.normal(size=5)
        comps.append(np.polynomial.chebyshev.chebval(x, c))
    return np.concatenate(comps)


# ---------------------------------------------------------------- lifting


def test_lift_zero_and_support(problem):
    dom = problem.domain
    N = problem.forms.size
    assert np.all(lift_dirichlet(DirichletData(np.zeros(N)), dom) == 0)
    g = problem.forms.grid.pack(1.0, 0.0, 0.0)
    u0 = lift_dirichlet(DirichletData(g), dom)
    x3 = dom.axial.nodes
    assert np.all(u0[x3 >= 1.0] == 0)
    assert np.any(u0[x3 < 1.0] != 0)
    assert np.array_equal(u0[0], g)


def test_dirichlet_data_rejects_nan():
    with pytest.raises(ValueError):
        DirichletData(np.array([np.nan, 0.0]))


def test_domain_validation():
    with pytest.raises(InvalidGeometry):
        make_domain(3.0)
    with pytest.raises(InvalidGeometry):
        make_domain(8.0, axial_h=0.3)
    dom = make_domain(8.0)
    assert dom.R == 7.0 and dom.n_axial == 16 * 6 + 1


# ---------------------------------------------------------------- assembly


def test_truncated_matrix_symmetric(problem):
    K = problem.solver.system.K
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    assert np.isrealobj(K.data)


def test_patch_constant_displacement(problem):
    static = dataclasses.replace(problem.forms, omega=0.0)
    K = assemble_truncated(static, problem.domain).K
    for c in range(3):
        u = np.tile(static.grid.pack(*(1.0 if k == c else 0.0 for k in range(3))),
                    problem.domain.n_axial)
        assert np.abs(K @ u).max() <= 1e-10 * abs(K).max()


def test_manufactured_sh_interior_residual(problem):
    """u = cos(k1 (x1 + h)) e^{i k3 x3} e2 solves the SH equation with load c u."""
    f, dom = problem.forms, problem.domain
    mu, rho, om, h = f.cfg.lame_mu, f.cfg.density, f.cfg.omega, f.cfg.half_thickness
    k1, k3 = math.pi / (2 * h), 0.7
    prof = f.grid.pack(0.0, lambda x: np.cos(k1 * (x + h)), 0.0)
    x3 = dom.axial.nodes
    U = np.exp(1j * k3 * x3)[:, None] * prof[None, :]
    K = problem.solver.system.K
    M3 = dom.axial.matrices()[0]
    import scipy.sparse as sp
    Mass = sp.kron(sp.csr_matrix(M3), sp.csr_matrix(f.l2))
    c = mu * (k1 ** 2 + k3 ** 2) - rho * om ** 2
    r = (K @ U.ravel() - c * (Mass @ U.ravel())).reshape(U.shape)
    interior = r[1:-1]
    assert np.abs(interior).max() <= 1e-6 * np.abs(K @ U.ravel()).max()


# ---------------------------------------------------------------- closure


def test_closure_reproduces_outgoing_traction(problem):
    cl = problem.solver.closure
    L = problem.domain.length
    for k, U in enumerate(problem.basis.outgoing):
        coef = cl.expand(U.value(L))
        e = np.zeros(cl.Phi.shape[1])
        e[k] = 1.0
        assert np.abs(coef - e).max() <= 1e-8
        t = nodal_traction(problem.forms, cl.traction(coef))
        assert np.abs(t - traction_on_section(U, L)).max() <= 1e-8 * np.abs(t).max()


def test_closure_reproduces_decaying_mode(problem):
    cl = problem.solver.closure
    L = problem.domain.length
    w = make_wave(problem.decaying, 0, 0, 0).moved(L)
    coef = cl.expand(w.value(L))
    t = nodal_traction(problem.forms, cl.traction(coef))
    assert np.abs(t - traction_on_section(w, L)).max() <= 1e-8 * np.abs(t).max()
    assert np.all(cl.traction(np.zeros(cl.Phi.shape[1])) == 0)


def test_closure_condition_guard(problem):
    with pytest.raises(IllConditionedClosure):
        # the window set repeats the propagating waves already in the closure
        radiation_closure(problem.basis, problem.modeset, problem.domain,
                          decaying=problem.modeset)


# ---------------------------------------------------------------- solves


def test_zero_data_gives_zero(problem):
    sol = solve_halfstrip(problem, np.zeros(problem.forms.size))
    assert np.abs(sol.field).max() <= 1e-10
    assert np.all(sol.coefficients == 0)


@pytest.mark.parametrize("c", [1.0, 2.0 - 0.5j])
def test_outgoing_sh0_trace_reproduced(problem, c):
    k = sh0_index(problem)
    U = problem.basis.U[k]
    sol = solve_halfstrip(problem, c * U.value(0.0))
    assert sol.coefficients[k] == pytest.approx(c, abs=1e-6 * abs(c))
    others = np.delete(sol.coefficients, k)
    assert np.abs(others).max() <= 1e-6 * abs(c)
    keep = sol.x3 <= problem.domain.R
    assert np.abs(sol.field[keep] - c * wave_field(U, sol.x3[keep])).max() <= 1e-5 * abs(c)
    # the incoming SH0 wave has the same trace up to its normalization; same data, same answer
    Uin = problem.basis.U[problem.basis.T + k]
    ratio = (U.value(0.0) @ Uin.value(0.0).conj()) / np.linalg.norm(Uin.value(0.0)) ** 2
    sol2 = solve_halfstrip(problem, c * Uin.value(0.0) * ratio)
    assert np.abs(sol2.coefficients - sol.coefficients).max() <= 1e-10


def test_each_outgoing_mode_reproduced(problem):
    for k in range(problem.basis.T):
        sol = solve_halfstrip(problem, problem.basis.U[k].value(0.0), with_decay=False)
        assert np.abs(sol.coefficients - np.eye(problem.basis.T)[k]).max() <= 1e-6


def test_sh0_end_reflection(problem):
    k = sh0_index(problem)
    sol, s = solve_endreflection(problem, k)
    assert s[k] == pytest.approx(-1.0, abs=1e-8)
    assert np.abs(np.delete(s, k)).max() <= 1e-10
    assert np.sum(np.abs(s) ** 2) == pytest.approx(1.0, abs=1e-6)
    assert np.abs(sol.field[0]).max() == 0.0


def test_scattering_matrix(problem):
    S = scattering_matrix(problem)
    k = sh0_index(problem)
    assert S.S.shape == (3, 3)
    assert S.unitarity_residual <= 1e-6
    assert S.S[k, k] == pytest.approx(-1.0, abs=1e-8)
    assert np.allclose(S.row_energy, 1.0, atol=1e-6)
    assert np.isfinite(S.reciprocity_residual)  # reported only
    S2 = scattering_matrix(problem, workers=3)
    assert np.array_equal(S.S, S2.S)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
                min_size=3, max_size=3))
def test_flux_balance(problem, amps):
    """Zero Dirichlet data with incident content: outgoing flux equals incoming flux."""
    b = np.array(amps)
    T = problem.basis.T
    sol = problem.solver.solve(np.zeros(problem.forms.size),
                               [(problem.basis.U[T + i], b[i]) for i in range(T)])
    assert np.sum(np.abs(sol.coefficients) ** 2) == pytest.approx(np.sum(np.abs(b) ** 2),
                                                                  rel=1e-6, abs=1e-12)


def test_zeta_rows_conjugate_eta_rows(problem):
    S = scattering_matrix(problem).S
    for i in range(problem.basis.T):
        z = solve_zeta(problem, i)
        assert np.allclose(z.closure_coefficients[:problem.basis.T], np.conj(S[i]), atol=1e-8)


# ---------------------------------------------------------------- DtN and cross-checks


@pytest.fixture(scope="module")
def dtn(problem):
    return dtn_operator(problem)


def test_dtn_sh0(problem, dtn):
    k = sh0_index(problem)
    U = problem.basis.U[k]
    t = dtn @ U.value(0.0)
    sh = problem.forms.grid.component(1)
    mu = problem.forms.cfg.lame_mu
    c = U.value(0.0)[sh][0]
    assert np.allclose(t[sh], 1j * mu * c, atol=1e-8)
    assert np.allclose(t, traction_on_section(U, 0.0), atol=1e-8)


def test_dtn_linearity(problem, dtn):
    g = smooth_g(problem.forms, 3)
    from elastostrip.halfstrip import sigma_traction
    U, _, _ = problem.solver._solve(g)
    assert np.allclose(dtn @ g, sigma_traction(problem, U), atol=1e-10 * np.abs(dtn @ g).max())
    alpha = 0.3 - 2j
    t = dtn @ g
    assert np.abs(dtn @ (alpha * g) - alpha * t).max() <= 1e-12 * np.abs(dtn).max() * np.abs(alpha * g).sum()


def test_dtn_consistency(problem, dtn):
    dev, lhs, rhs = dtn_consistency(problem, smooth_g(problem.forms, 11), dtn)
    assert dev <= 1e-6


def test_crosscheck_zero_and_sh0(problem):
    dev, aq, ab = coefficient_crosscheck(problem, np.zeros(problem.forms.size))
    assert np.all(aq == 0) and np.abs(ab).max() == 0
    k = sh0_index(problem)
    dev, aq, ab = coefficient_crosscheck(problem, problem.basis.U[k].value(0.0))
    assert dev <= 1e-6
    assert ab[k] == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------- diagnostics and guards


def test_remainder_decay(problem):
    sol = solve_halfstrip(problem, smooth_g(problem.forms, 5))
    delta = problem.modeset.window.delta
    assert sol.decay.slope <= -delta * 0.9
    assert np.all(np.diff(sol.decay.norms) < 0)


def test_truncation_differences_shrink(cfg, forms):
    g = smooth_g(forms, 2)
    study = truncation_study(cfg, g, lengths=(5.0, 6.0, 7.0), forms=forms)
    assert study.differences[1] < study.differences[0]
    assert study.slope < 0


def test_cutoff_rejected(cfg):
    with pytest.raises(AssumptionViolation):
        prepare_halfstrip(cfg.with_omega(math.pi / 2))


def test_section_traction_requires_element_boundary(problem):
    sol = solve_halfstrip(problem, np.zeros(problem.forms.size), with_decay=False)
    with pytest.raises(ValueError):
        section_traction(problem.forms, problem.domain, sol.field, 6.25)
