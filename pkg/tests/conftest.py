import math

import numpy as np
import pytest

from elastostrip.cross_section import ProblemConfig, assemble_forms, build_grid
from elastostrip.halfstrip import prepare_halfstrip
from elastostrip.modes import canonical_basis
from elastostrip.pencil import SpectralWindow, discrete_sh_cutoffs, solve_qep

EXAMPLE = ProblemConfig(lame_lambda=2.0, lame_mu=1.0, density=1.0, omega=1.0, half_thickness=1.0)


def sh_index(modeset, sign=+1):
    """Index of the SH0 axis mode with Im nu of the given sign."""
    return next(k for k, m in enumerate(modeset.modes)
                if m.branch == "SH" and m.propagating and np.sign(m.nu.imag) == sign)


@pytest.fixture(scope="session")
def cfg():
    return EXAMPLE


@pytest.fixture(scope="session")
def forms(cfg):
    return assemble_forms(cfg, build_grid(cfg))


@pytest.fixture(scope="session")
def modeset(forms):
    return solve_qep(forms)


@pytest.fixture(scope="session")
def basis(modeset):
    return canonical_basis(modeset)


@pytest.fixture(scope="session")
def problem(cfg, forms):
    return prepare_halfstrip(cfg, forms=forms)


@pytest.fixture(scope="session")
def cutoff_forms(cfg):
    """Forms at the first SH cutoff of the discrete cross-section (pi/2 to round-off)."""
    base = assemble_forms(cfg.with_omega(math.pi / 2), build_grid(cfg.with_omega(math.pi / 2)))
    om = float(discrete_sh_cutoffs(base, 2)[1])
    c = cfg.with_omega(om)
    return assemble_forms(c, build_grid(c))


@pytest.fixture(scope="session")
def cutoff_modeset(cutoff_forms):
    return solve_qep(cutoff_forms, SpectralWindow(0.3))
