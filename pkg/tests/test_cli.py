import csv
import io
import json
import math
import re

import numpy as np
import pytest

from elastostrip.cli import (
    ConfigError,
    parse_config,
    read_g_file,
    run,
    write_g_file,
)


BASE = """
[material]
lambda = 2.0
mu = 1.0
rho = 1.0

[geometry]
h = 1.0

[frequency]
{freq}
{extra}
"""


def write_cfg(tmp_path, freq="omega = 1.0", extra=""):
    p = tmp_path / "run.toml"
    p.write_text(BASE.format(freq=freq, extra=extra))
    return p


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


# ---------------------------------------------------------------- config parsing


def test_parse_defaults():
    rc = parse_config(BASE.format(freq="omega = 1.0", extra=""))
    assert rc.omegas == [1.0] and not rc.is_sweep
    assert rc.delta is None


def test_sweep_single_step():
    rc = parse_config(BASE.format(freq="sweep = [1.0, 1.0, 1]", extra=""))
    assert rc.omegas == [1.0]


@pytest.mark.parametrize("freq,extra,pattern", [
    ("omega = 1.0", "[bogus]\nx = 1", "unknown config block"),
    ("omega = 1.0", "[window]\nwidth = 1", "unknown key"),
    ("omega = 1.0\nsweep = [1, 2, 3]", "", "exactly one"),
    ("sweep = [2.0, 1.0, 3]", "", "ordered"),
    ("omega = 1.0", "[window]\ndelta = -0.1", "delta"),
    ("omega = 1.0", "[discretization]\nn_evanescent = -1", "n_evanescent"),
    ("omega = 1.0", "[strip]\nsource = 'other'", "source"),
    ("omega = true", "", "number"),
])
def test_config_errors(freq, extra, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(BASE.format(freq=freq, extra=extra))


def test_invalid_material_is_config_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(BASE.format(freq="omega = 1.0", extra="").replace("lambda = 2.0", "lambda = -1.0"))
    code, _, err = invoke("modes", "--config", p, "--out", tmp_path)
    assert code == 2
    assert re.search(re.escape("3λ+2μ"), err)


def test_missing_config_file(tmp_path):
    assert invoke("modes", "--config", tmp_path / "none.toml")[0] == 2


def test_bad_flags(tmp_path):
    cfg = write_cfg(tmp_path)
    assert invoke("modes", "--config", cfg, "--workers", 0)[0] == 2
    assert invoke("selfcheck", "--config", cfg, "--tolerance-scale", -1)[0] == 2


def test_sweep_rejected_for_single_frequency_verbs(tmp_path):
    cfg = write_cfg(tmp_path, "sweep = [0.5, 1.0, 3]")
    assert invoke("scatter", "--config", cfg, "--out", tmp_path)[0] == 2


# ---------------------------------------------------------------- g files


def test_g_file_roundtrip(tmp_path, forms):
    rng = np.random.default_rng(0)
    g = rng.normal(size=forms.size) + 1j * rng.normal(size=forms.size)
    write_g_file(tmp_path / "g.csv", forms, g)
    assert np.array_equal(read_g_file(tmp_path / "g.csv", forms), g)


def test_g_file_real_columns(tmp_path, forms):
    x = forms.grid.nodes
    rows = ["x1,g1,g2,g3"] + [f"{float(xi)!r},0.0,{math.cos(xi)!r},1.0" for xi in x]
    (tmp_path / "g.csv").write_text("\n".join(rows) + "\n")
    g = read_g_file(tmp_path / "g.csv", forms)
    assert np.allclose(g, forms.grid.pack(0.0, np.cos, 1.0))


def test_g_file_wrong_length(tmp_path, forms):
    write_g_file(tmp_path / "g.csv", forms, np.zeros(forms.size))
    lines = (tmp_path / "g.csv").read_text().splitlines()
    (tmp_path / "g.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ConfigError):
        read_g_file(tmp_path / "g.csv", forms)


def test_g_file_wrong_nodes(tmp_path, forms):
    write_g_file(tmp_path / "g.csv", forms, np.zeros(forms.size))
    text = (tmp_path / "g.csv").read_text().splitlines()
    parts = text[2].split(",")
    parts[0] = repr(float(parts[0]) + 0.01)
    text[2] = ",".join(parts)
    (tmp_path / "g.csv").write_text("\n".join(text) + "\n")
    with pytest.raises(ConfigError):
        read_g_file(tmp_path / "g.csv", forms)


# ---------------------------------------------------------------- verbs


def test_modes_verb(tmp_path):
    cfg = write_cfg(tmp_path)
    code, out, _ = invoke("modes", "--config", cfg, "--out", tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "modes.json").read_text())
    recs = doc["points"][0]["records"]
    prop = [r for r in recs if r["propagating"]]
    assert len(prop) == 6
    assert doc["points"][0]["kappa"] == 6
    assert all(len(r["flux"]) == 1 and abs(r["flux"][0]) > 0 for r in prop)


def test_modes_at_cutoff_reports_chains(tmp_path):
    cfg = write_cfg(tmp_path, f"omega = {math.pi / 2!r}", "[window]\ndelta = 0.3")
    code, _, _ = invoke("modes", "--config", cfg, "--out", tmp_path)
    assert code == 0
    recs = json.loads((tmp_path / "modes.json").read_text())["points"][0]["records"]
    zero = [r for r in recs if abs(complex(*r["nu"])) < 1e-4]
    assert sorted(r["branch"] for r in zero) == ["SH", "in-plane"]
    assert all(r["partial_multiplicities"] == [2] for r in zero)
    assert all(r["classification"] == ["NullFlux"] for r in zero)


def test_dispersion_single_step(tmp_path):
    cfg = write_cfg(tmp_path, "sweep = [1.0, 1.0, 1]")
    assert invoke("dispersion", "--config", cfg, "--out", tmp_path)[0] == 0
    rows = list(csv.DictReader(open(tmp_path / "dispersion.csv")))
    assert len(rows) == 6
    sh0 = [r for r in rows if r["branch"] == "SH" and float(r["im_nu"]) > 0]
    assert float(sh0[0]["im_nu"]) == pytest.approx(1.0, abs=1e-10)
    assert all(r["flag"] == "" for r in rows)


def test_dispersion_curves_follow_sh0(tmp_path):
    cfg = write_cfg(tmp_path, "sweep = [0.5, 1.0, 3]")
    assert invoke("dispersion", "--config", cfg, "--out", tmp_path, "--workers", 2)[0] == 0
    rows = list(csv.DictReader(open(tmp_path / "dispersion.csv")))
    sh0 = [r for r in rows if r["branch"] == "SH" and float(r["im_nu"]) > 0]
    assert len({r["curve"] for r in sh0}) == 1
    for r in sh0:
        assert float(r["im_nu"]) == pytest.approx(float(r["omega"]), abs=1e-10)


def test_scatter_verb_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert invoke("scatter", "--config", cfg, "--out", a)[0] == 0
    assert invoke("scatter", "--config", cfg, "--out", b, "--workers", 3)[0] == 0
    ta, tb = (a / "scattering.json").read_text(), (b / "scattering.json").read_text()
    assert ta == tb
    doc = json.loads(ta)
    S = np.array([[complex(*z) for z in row] for row in doc["S"]])
    assert doc["unitarity_residual"] <= 1e-6
    assert np.abs(S.conj().T @ S - np.eye(doc["T"])).max() <= 1e-6
    # JSON floats are written with full precision
    assert json.loads(json.dumps(doc)) == doc


def test_scatter_at_cutoff_is_numerical_failure(tmp_path):
    cfg = write_cfg(tmp_path, f"omega = {math.pi / 2!r}")
    code, _, err = invoke("scatter", "--config", cfg, "--out", tmp_path)
    assert code == 3
    assert "assumption" in err


def test_halfstrip_verb(tmp_path, problem):
    U = problem.basis.outgoing[next(k for k, U in enumerate(problem.basis.outgoing)
                                    if abs(U.nu - 1j) < 1e-9)]
    write_g_file(tmp_path / "g.csv", problem.forms, U.value(0.0))
    cfg = write_cfg(tmp_path, extra="[halfstrip]\ng_file = 'g.csv'\nfield_samples = 5")
    assert invoke("halfstrip", "--config", cfg, "--out", tmp_path)[0] == 0
    doc = json.loads((tmp_path / "halfstrip.json").read_text())
    a = np.array([complex(*z) for z in doc["coefficients"]])
    k = [i for i, nu in enumerate(doc["outgoing_nu"]) if abs(complex(*nu) - 1j) < 1e-9][0]
    assert a[k] == pytest.approx(1.0, abs=1e-6)
    assert len(doc["field"]["x3"]) == 5


def test_halfstrip_without_g_file(tmp_path):
    assert invoke("halfstrip", "--config", write_cfg(tmp_path), "--out", tmp_path)[0] == 2


def test_halfstrip_at_cutoff_is_assumption_violation(tmp_path, cfg):
    from elastostrip.cross_section import assemble_forms, build_grid
    f = assemble_forms(cfg.with_omega(math.pi / 2), build_grid(cfg))
    write_g_file(tmp_path / "g.csv", f, np.zeros(f.size))
    conf = write_cfg(tmp_path, f"omega = {math.pi / 2!r}", "[halfstrip]\ng_file = 'g.csv'")
    assert invoke("halfstrip", "--config", conf, "--out", tmp_path)[0] == 4


def test_strip_verify_verb(tmp_path):
    cfg = write_cfg(tmp_path, extra="[strip]\nsource = 'sh'")
    assert invoke("strip-verify", "--config", cfg, "--out", tmp_path)[0] == 0
    doc = json.loads((tmp_path / "strip_verify.json").read_text())
    assert doc["residual"] <= 1e-5
    assert doc["slab"] == [-0.8, 0.8]


@pytest.mark.slow
def test_selfcheck_verb(tmp_path):
    cfg = write_cfg(tmp_path)
    code, out, _ = invoke("selfcheck", "--config", cfg, "--out", tmp_path, "--workers", 2)
    assert code == 0
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL", "SKIP"))]
    assert len(lines) == 14 and all(l.startswith("PASS") for l in lines)
    doc = json.loads((tmp_path / "selfcheck.json").read_text())
    assert doc["passed"]


def test_selfcheck_tolerance_scale_can_fail(tmp_path):
    cfg = write_cfg(tmp_path, extra="[discretization]\nn_elems = 2\np = 2")
    code, out, _ = invoke("selfcheck", "--config", cfg, "--out", tmp_path,
                          "--tolerance-scale", 1e-6)
    assert code == 3
    assert "FAIL" in out
