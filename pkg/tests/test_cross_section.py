import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastostrip.cross_section import (
    ProblemConfig,
    assemble_forms,
    build_grid,
    evaluate_pencil,
    pencil_derivative,
    pencil_taylor,
    validate_config,
)
from elastostrip.errors import (
    InvalidDiscretization,
    InvalidFrequency,
    InvalidGeometry,
    InvalidMaterial,
    UnsupportedOrder,
)


def test_validate_example_ok(cfg):
    assert validate_config(cfg) is cfg


@pytest.mark.parametrize("kw, exc, text", [
    (dict(lame_lambda=-1.0), InvalidMaterial, re.escape("3λ+2μ")),
    (dict(lame_mu=0.0), InvalidMaterial, "mu"),
    (dict(density=-1.0), InvalidMaterial, "density"),
    (dict(omega=0.0), InvalidFrequency, "omega"),
    (dict(half_thickness=0.0), InvalidGeometry, "half thickness"),
])
def test_validate_rejects(cfg, kw, exc, text):
    base = dict(lame_lambda=2.0, lame_mu=1.0, density=1.0, omega=1.0, half_thickness=1.0)
    base.update(kw)
    with pytest.raises(exc, match=text):
        validate_config(ProblemConfig(**base))


def test_grid_counts(cfg):
    g = build_grid(cfg, 4, 2)
    assert g.dof_per_component == 9 and g.total_dof == 27
    g1 = build_grid(cfg, 1, 2)
    assert np.allclose(g1.nodes, [-1.0, 0.0, 1.0])
    assert np.all(np.diff(build_grid(cfg).nodes) > 0)


@pytest.mark.parametrize("n, p", [(0, 2), (2, 1)])
def test_grid_rejects(cfg, n, p):
    with pytest.raises(InvalidDiscretization):
        build_grid(cfg, n, p)


def test_form_values_on_constants(forms):
    g = forms.grid
    phi = g.pack(1.0, 0.0, 0.0)
    assert (phi.conj() @ forms.C @ phi).real == pytest.approx(2.0, abs=1e-13)
    assert (phi.conj() @ forms.A @ phi).real == pytest.approx(-2.0, abs=1e-11)
    # b(phi, psi) with phi = (0, 0, 1), psi = (x1, 0, 0): 4i for lambda = 2, h = 1
    phi = g.pack(0.0, 0.0, 1.0)
    psi = g.pack(lambda x: x, 0.0, 0.0)
    assert psi.conj() @ forms.B @ phi == pytest.approx(4j, abs=1e-13)


def test_hermitian_and_definite(forms):
    for X in (forms.A0, forms.M, forms.B, forms.C):
        assert np.abs(X - X.conj().T).max() <= 1e-13 * np.abs(X).max()
    assert np.linalg.eigvalsh(forms.M).min() > 0
    assert np.linalg.eigvalsh(forms.C).min() > 0
    assert np.linalg.eigvalsh(forms.A0).min() > -1e-10 * np.abs(forms.A0).max()


def test_sh_block_decoupled(forms):
    sh = forms.grid.component(1)
    rest = np.r_[np.arange(forms.size)[forms.grid.component(0)],
                 np.arange(forms.size)[forms.grid.component(2)]]
    for X in (forms.A, forms.B, forms.C):
        assert np.all(X[sh][:, rest] == 0) and np.all(X[rest][:, sh] == 0)


def test_pencil_values(forms):
    assert np.array_equal(evaluate_pencil(forms, 0.0), forms.A)
    nu = 0.3 - 0.7j
    L = evaluate_pencil(forms, nu)
    assert np.abs(L.conj().T - evaluate_pencil(forms, -np.conj(nu))).max() < 1e-12
    Ls = evaluate_pencil(forms, 2.5j)
    assert np.abs(Ls - Ls.conj().T).max() < 1e-12


def test_pencil_derivatives(forms):
    assert np.allclose(pencil_derivative(forms, 0.7 + 0.1j, 2), -2 * forms.C)
    assert np.allclose(pencil_derivative(forms, 0.0, 1), -1j * forms.B)
    with pytest.raises(UnsupportedOrder):
        pencil_derivative(forms, 0.0, 3)
    # first derivative against a central difference
    nu, e = 0.2 + 0.9j, 1e-5
    fd = (evaluate_pencil(forms, nu + e) - evaluate_pencil(forms, nu - e)) / (2 * e)
    assert np.abs(fd - pencil_derivative(forms, nu, 1)).max() < 1e-7 * np.abs(fd).max()
    L0, L1, L2 = pencil_taylor(forms, nu)
    d = 0.05
    assert np.allclose(L0 + d * L1 + d ** 2 * L2, evaluate_pencil(forms, nu + d), atol=1e-11)


def test_coercive_far_out_on_axis(forms):
    for s in (50.0, -50.0):
        lmin = np.linalg.eigvalsh(evaluate_pencil(forms, 1j * s)).min()
        assert lmin > 0


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_adjoint_pencil_identity(forms, re, im):
    nu = complex(re, im)
    L = evaluate_pencil(forms, nu)
    assert np.abs(L.conj().T - evaluate_pencil(forms, -np.conj(nu))).max() < 1e-11 * (1 + abs(nu) ** 2)


def test_rayleigh_quotient_converges_at_twice_the_order(cfg):
    """Lowest nonzero Neumann eigenvalue of the SH block, (pi / 2h)^2, at rate n^(-2p)."""
    exact = (math.pi / 2) ** 2
    p = 3
    ns = (2, 4, 8)
    errs = []
    for n in ns:
        f = assemble_forms(cfg, build_grid(cfg, n, p))
        sh = f.grid.component(1)
        K = f.A0[sh, sh].real / cfg.lame_mu
        ev = np.sort(np.real(np.linalg.eigvals(np.linalg.solve(f.mass, K))))
        errs.append(abs(ev[1] - exact))
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert abs(-slope - 2 * p) <= 0.2 * 2 * p
