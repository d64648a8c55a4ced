"""Axial wavenumbers of the example strip, their flux signs, and the cutoff at pi/2.

Run: python demos/spectrum_and_modes.py
"""
import math

from elastostrip.cross_section import ProblemConfig, assemble_forms, build_grid
from elastostrip.modes import canonical_basis, classify_wave, make_wave, symplectic_gram
from elastostrip.pencil import SpectralWindow, discrete_sh_cutoffs, sharp_decay_rate, solve_qep

cfg = ProblemConfig(lame_lambda=2.0, lame_mu=1.0, density=1.0, omega=1.0, half_thickness=1.0)
forms = assemble_forms(cfg, build_grid(cfg))

ms = solve_qep(forms)
print(f"omega = {cfg.omega}: window half-width {ms.window.delta:.4f}, "
      f"nearest off-axis eigenvalue at |Re nu| = {sharp_decay_rate(forms):.4f}")
for i, m in enumerate(ms.modes):
    cls = classify_wave(make_wave(ms, i, 0, 0)).value
    print(f"  nu = {m.nu.real:+.6f} {m.nu.imag:+.10f}i  {m.branch:8s}  {cls}")

gram = symplectic_gram(ms)
print(f"flux signature {gram.signature()} with kappa = {gram.kappa}")
basis = canonical_basis(ms)
print("outgoing basis wavenumbers:", ", ".join(f"{U.nu.imag:+.6f}i" for U in basis.outgoing))

# SH0 and the first SH cutoff: at omega = pi/2 the pair +-i(omega^2 - (pi/2)^2)^(1/2) merges at 0
cut = discrete_sh_cutoffs(forms, 2)[1]
print(f"\ndiscrete SH cutoff {cut:.12f} (pi/2 = {math.pi / 2:.12f})")
c = cfg.with_omega(float(cut))
ms_cut = solve_qep(assemble_forms(c, build_grid(c)), SpectralWindow(0.3))
for m in ms_cut.modes:
    if m.nu == 0:
        print(f"  nu = 0 ({m.branch}): partial multiplicities {m.partial_multiplicities}")
