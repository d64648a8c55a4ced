"""Command-line driver: ``elastostrip <verb> --config run.toml``.

Config (TOML; unknown keys are rejected)::

    [material]        lambda, mu, rho
    [geometry]        h
    [frequency]       omega = 1.0   or   sweep = [omega_min, omega_max, steps]
    [window]          delta, axis_tolerance            (optional)
    [discretization]  n_elems, p, L, n_evanescent, axial_h   (optional)
    [output]          dir                              (optional)
    [halfstrip]       g_file, field_samples            (halfstrip verb)
    [strip]           source, center, half_width, power, beta, gamma, slab

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 assumption
violation.  ``scatter`` reports a cutoff frequency with exit code 3, since
for that verb it is a failed window validation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
from scipy.optimize import linear_sum_assignment

from .cross_section import (
    DEFAULT_N_ELEMS,
    DEFAULT_ORDER,
    FormMatrices,
    ProblemConfig,
    assemble_forms,
    build_grid,
    validate_config,
)
from .errors import AssumptionViolation, ConfigError, ElastostripError, NumericalError
from .halfstrip import (
    DEFAULT_AXIAL_H,
    DEFAULT_LENGTH,
    DEFAULT_N_EVANESCENT,
    prepare_halfstrip,
    scattering_matrix,
    sharp_rate,
    solve_halfstrip,
)
from .modes import classify_wave, make_wave, symplectic_pairing
from .pencil import AXIS_TOLERANCE, ModeSet, SpectralWindow, solve_qep
from .selfcheck import run_selfcheck
from .strip import (
    Bump,
    SeparableSource,
    function_source,
    manufactured_sh_source,
    verify_strip_asymptotics,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSUMPTION = 0, 2, 3, 4

SCHEMA = {
    "material": {"lambda", "mu", "rho"},
    "geometry": {"h"},
    "frequency": {"omega", "sweep"},
    "window": {"delta", "axis_tolerance"},
    "discretization": {"n_elems", "p", "L", "n_evanescent", "axial_h"},
    "output": {"dir"},
    "halfstrip": {"g_file", "field_samples"},
    "strip": {"source", "center", "half_width", "power", "beta", "gamma", "slab"},
}


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    lame_lambda: float
    lame_mu: float
    density: float
    half_thickness: float
    omegas: list[float]
    delta: float | None = None
    axis_tolerance: float = AXIS_TOLERANCE
    n_elems: int = DEFAULT_N_ELEMS
    p: int = DEFAULT_ORDER
    length: float = DEFAULT_LENGTH
    n_evanescent: int | None = DEFAULT_N_EVANESCENT
    axial_h: float = DEFAULT_AXIAL_H
    out_dir: Path = Path(".")
    g_file: Path | None = None
    field_samples: int = 0
    strip: dict = field(default_factory=dict)

    @property
    def is_sweep(self) -> bool:
        return len(self.omegas) > 1

    def problem(self, omega: float | None = None) -> ProblemConfig:
        om = self.omegas[0] if omega is None else omega
        return validate_config(ProblemConfig(self.lame_lambda, self.lame_mu, self.density,
                                             om, self.half_thickness))

    def forms(self, omega: float | None = None) -> FormMatrices:
        cfg = self.problem(omega)
        return assemble_forms(cfg, build_grid(cfg, self.n_elems, self.p))

    def window(self) -> SpectralWindow | None:
        if self.delta is None:
            return None
        return SpectralWindow(self.delta, axis_tolerance=self.axis_tolerance)


def _number(block: str, key: str, val, kind=float):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"[{block}].{key} must be a number (got {val!r})")
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(f"[{block}].{key} must be an integer (got {val!r})")
        return int(val)
    if not math.isfinite(val):
        raise ConfigError(f"[{block}].{key} must be finite")
    return float(val)


def parse_config(text: str, base: Path = Path(".")) -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    for block, body in doc.items():
        if block not in SCHEMA:
            raise ConfigError(f"unknown config block [{block}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{block}] must be a table")
        extra = set(body) - SCHEMA[block]
        if extra:
            raise ConfigError(f"unknown key(s) in [{block}]: {', '.join(sorted(extra))}")
    for block in ("material", "geometry", "frequency"):
        if block not in doc:
            raise ConfigError(f"missing config block [{block}]")
    mat, geo, freq = doc["material"], doc["geometry"], doc["frequency"]
    for k in ("lambda", "mu", "rho"):
        if k not in mat:
            raise ConfigError(f"missing [material].{k}")
    if "h" not in geo:
        raise ConfigError("missing [geometry].h")

    if ("omega" in freq) == ("sweep" in freq):
        raise ConfigError("[frequency] needs exactly one of omega or sweep")
    if "omega" in freq:
        omegas = [_number("frequency", "omega", freq["omega"])]
    else:
        sw = freq["sweep"]
        if not isinstance(sw, list) or len(sw) != 3:
            raise ConfigError("[frequency].sweep must be [omega_min, omega_max, steps]")
        lo, hi = (_number("frequency", "sweep", v) for v in sw[:2])
        steps = _number("frequency", "sweep", sw[2], int)
        if steps < 1:
            raise ConfigError("sweep steps must be >= 1")
        if lo <= 0 or hi < lo or (steps > 1 and hi == lo):
            raise ConfigError(f"sweep bounds must be positive and ordered (got {lo}, {hi})")
        omegas = [lo] if steps == 1 else list(np.linspace(lo, hi, steps))

    rc = RunConfig(_number("material", "lambda", mat["lambda"]),
                   _number("material", "mu", mat["mu"]),
                   _number("material", "rho", mat["rho"]),
                   _number("geometry", "h", geo["h"]), omegas)
    win = doc.get("window", {})
    if "delta" in win:
        rc.delta = _number("window", "delta", win["delta"])
        if rc.delta <= 0:
            raise ConfigError("[window].delta must be > 0")
    if "axis_tolerance" in win:
        rc.axis_tolerance = _number("window", "axis_tolerance", win["axis_tolerance"])
    disc = doc.get("discretization", {})
    if "n_elems" in disc:
        rc.n_elems = _number("discretization", "n_elems", disc["n_elems"], int)
    if "p" in disc:
        rc.p = _number("discretization", "p", disc["p"], int)
    if "L" in disc:
        rc.length = _number("discretization", "L", disc["L"])
    if "axial_h" in disc:
        rc.axial_h = _number("discretization", "axial_h", disc["axial_h"])
    if "n_evanescent" in disc:
        rc.n_evanescent = _number("discretization", "n_evanescent", disc["n_evanescent"], int)
        if rc.n_evanescent < 0:
            raise ConfigError("[discretization].n_evanescent must be >= 0")
    if "dir" in doc.get("output", {}):
        rc.out_dir = base / str(doc["output"]["dir"])
    hs = doc.get("halfstrip", {})
    if "g_file" in hs:
        path = base / str(hs["g_file"])
        if not path.is_file():
            raise ConfigError(f"g_file {path} does not exist")
        rc.g_file = path
    if "field_samples" in hs:
        rc.field_samples = _number("halfstrip", "field_samples", hs["field_samples"], int)
    rc.strip = dict(doc.get("strip", {}))
    if rc.strip.get("source", "mixed") not in ("mixed", "sh"):
        raise ConfigError("[strip].source must be 'mixed' or 'sh'")
    # material and geometry checks happen here so errors surface as config errors
    rc.problem()
    build_grid(rc.problem(), rc.n_elems, rc.p)
    return rc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent)


def read_g_file(path: Path, forms: FormMatrices) -> np.ndarray:
    """CSV rows ``x1, g1, g2, g3`` (real) or ``x1, g1_re, g1_im, g2_re, ...``, one
    row per cross-section node, optional header line."""
    nodes = forms.grid.nodes
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if k == 0 and not rows:
                    continue  # header
                raise ConfigError(f"{path}: non-numeric entry on line {k + 1}") from None
    if len(rows) != len(nodes):
        raise ConfigError(f"{path}: {len(rows)} rows, expected one per cross-section node "
                          f"({len(nodes)})")
    widths = {len(r) for r in rows}
    if widths not in ({4}, {7}):
        raise ConfigError(f"{path}: rows must have 4 or 7 columns")
    data = np.array(rows)
    if np.abs(data[:, 0] - nodes).max() > 1e-9 * max(1.0, abs(nodes).max()):
        raise ConfigError(f"{path}: x1 column does not match the cross-section nodes")
    if data.shape[1] == 4:
        comps = [data[:, c].astype(complex) for c in (1, 2, 3)]
    else:
        comps = [data[:, 1 + 2 * c] + 1j * data[:, 2 + 2 * c] for c in range(3)]
    if not np.all(np.isfinite(np.concatenate(comps))):
        raise ConfigError(f"{path}: non-finite values")
    return np.concatenate(comps)


def write_g_file(path: Path, forms: FormMatrices, g: np.ndarray) -> None:
    n = forms.grid.dof_per_component
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "g1_re", "g1_im", "g2_re", "g2_im", "g3_re", "g3_im"])
        for k, x in enumerate(forms.grid.nodes):
            vals = [g[c * n + k] for c in range(3)]
            w.writerow([repr(float(x))] + [repr(float(f(v))) for v in vals
                                           for f in (np.real, np.imag)])


# --------------------------------------------------------------------------
# serialization


def cnum(z) -> list[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def cvec(v) -> list[list[float]]:
    return [cnum(z) for z in np.asarray(v).ravel()]


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def dump_json(doc: dict, path: Path) -> None:
    # repr-based float output round-trips exactly
    path.write_text(json.dumps(_json_safe(doc), indent=1, allow_nan=False) + "\n")


def _config_doc(rc: RunConfig, omega: float) -> dict:
    return {"lambda": rc.lame_lambda, "mu": rc.lame_mu, "rho": rc.density,
            "h": rc.half_thickness, "omega": float(omega), "n_elems": rc.n_elems, "p": rc.p}


# --------------------------------------------------------------------------
# commands


def mode_records(ms: ModeSet, omega: float) -> list[dict]:
    grid = ms.forms.grid
    recs = []
    for i, m in enumerate(ms.modes):
        rec = {"omega": float(omega), "nu": cnum(m.nu), "branch": m.branch,
               "partial_multiplicities": m.partial_multiplicities,
               "algebraic_multiplicity": m.algebraic_multiplicity,
               "geometric_multiplicity": m.geometric_multiplicity,
               "propagating": bool(m.propagating)}
        if m.propagating:
            heads = [make_wave(ms, i, j, 0) for j in range(len(m.chains))]
            rec["classification"] = [classify_wave(w).value for w in heads]
            rec["flux"] = [float((1j * symplectic_pairing(w, w)).real) for w in heads]
        n = grid.dof_per_component
        head = m.chains[0].vectors[0]
        rec["profile"] = {f"u{c + 1}": cvec(head[c * n:(c + 1) * n]) for c in range(3)}
        recs.append(rec)
    return recs


def cmd_modes(rc: RunConfig, workers: int = 1) -> dict:
    def one(om):
        forms = rc.forms(om)
        ms = solve_qep(forms, rc.window())
        return {"omega": float(om), "delta": ms.window.delta, "kappa": ms.kappa,
                "records": mode_records(ms, om)}

    with ThreadPoolExecutor(max(1, workers)) as ex:
        points = list(ex.map(one, rc.omegas))
    forms = rc.forms(rc.omegas[0])
    return {"config": _config_doc(rc, rc.omegas[0]), "x1": list(map(float, forms.grid.nodes)),
            "points": points}


DISPERSION_COLUMNS = ["omega", "curve", "branch", "re_nu", "im_nu", "classification",
                      "flux", "algebraic_multiplicity", "flag"]


def _sweep_point(rc: RunConfig, om: float) -> dict:
    try:
        forms = rc.forms(om)
        ms = solve_qep(forms, rc.window())
    except NumericalError as exc:
        return {"omega": om, "error": str(exc), "modes": []}
    modes = []
    for i, m in enumerate(ms.modes):
        if not m.propagating:
            continue
        w = make_wave(ms, i, 0, 0)
        flux = float((1j * symplectic_pairing(w, w)).real)
        head = m.chains[0].vectors[0]
        modes.append({"nu": m.nu, "branch": m.branch, "cls": classify_wave(w).value,
                      "flux": flux, "alg": m.algebraic_multiplicity,
                      "defective": m.algebraic_multiplicity != m.geometric_multiplicity,
                      "profile": head / np.linalg.norm(head)})
    return {"omega": om, "error": None, "modes": modes}


def _track(points: list[dict]) -> None:
    """Assign curve ids by nearest-profile matching between adjacent sweep points."""
    prev, next_id = [], 0
    for pt in points:
        cur = pt["modes"]
        ids = [None] * len(cur)
        if prev and cur:
            cost = np.array([[-abs(np.vdot(a["profile"], b["profile"]))
                              + (0.0 if a["branch"] == b["branch"] else 10.0)
                              + (0.0 if np.sign(a["nu"].imag) == np.sign(b["nu"].imag) else 10.0)
                              for b in cur] for a in prev])
            r, c = linear_sum_assignment(cost)
            for a, b in zip(r, c):
                if cost[a, b] < 0:
                    ids[b] = prev[a]["curve"]
        for k, m in enumerate(cur):
            if ids[k] is None:
                ids[k] = next_id
                next_id += 1
            m["curve"] = ids[k]
        prev = cur if cur else prev


def cmd_dispersion(rc: RunConfig, workers: int = 1) -> tuple[str, str]:
    """Returns (row table, per-curve plot data) as CSV text."""
    with ThreadPoolExecutor(max(1, workers)) as ex:
        points = list(ex.map(lambda om: _sweep_point(rc, om), rc.omegas))
    _track(points)
    rows = io.StringIO()
    w = csv.writer(rows, lineterminator="\n")
    w.writerow(DISPERSION_COLUMNS)
    for pt in points:
        om = repr(float(pt["omega"]))
        if pt["error"]:
            w.writerow([om, "", "", "nan", "nan", "", "nan", "", "solver-failure"])
            continue
        cutoff = any(m["defective"] for m in pt["modes"])
        for m in pt["modes"]:
            flag = "assumption-violated" if cutoff else ""
            w.writerow([om, m["curve"], m["branch"], repr(float(m["nu"].real)),
                        repr(float(m["nu"].imag)), m["cls"], repr(m["flux"]), m["alg"], flag])
    curves = sorted({m["curve"] for pt in points for m in pt["modes"]})
    plot = io.StringIO()
    w = csv.writer(plot, lineterminator="\n")
    w.writerow(["omega"] + [f"curve{c}_im_nu" for c in curves])
    for pt in points:
        vals = {m["curve"]: m["nu"].imag for m in pt["modes"]}
        w.writerow([repr(float(pt["omega"]))] + [repr(float(vals[c])) if c in vals else "nan"
                                                  for c in curves])
    return rows.getvalue(), plot.getvalue()


def _halfstrip_problem(rc: RunConfig, forms: FormMatrices):
    return prepare_halfstrip(forms.cfg, length=rc.length, n_evanescent=rc.n_evanescent,
                             axial_h=rc.axial_h, forms=forms, delta=rc.delta)


def cmd_scatter(rc: RunConfig, workers: int = 1) -> dict:
    forms = rc.forms()
    try:
        prob = _halfstrip_problem(rc, forms)
    except AssumptionViolation as exc:
        raise NumericalError(f"window validation failed (assumption violation): {exc}") from exc
    S = scattering_matrix(prob, workers=workers)
    basis = prob.basis
    return {"config": _config_doc(rc, rc.omegas[0]), "L": rc.length,
            "T": basis.T,
            "outgoing": [{"nu": cnum(U.nu), "flux": float((1j * symplectic_pairing(U, U)).real)}
                         for U in basis.outgoing],
            "incoming": [{"nu": cnum(U.nu), "flux": float((1j * symplectic_pairing(U, U)).real)}
                         for U in basis.incoming],
            "S": [cvec(row) for row in S.S],
            "unitarity_residual": S.unitarity_residual,
            "row_energy": list(map(float, S.row_energy)),
            "reciprocity_residual": S.reciprocity_residual}


def cmd_halfstrip(rc: RunConfig, workers: int = 1) -> dict:
    if rc.g_file is None:
        raise ConfigError("halfstrip needs [halfstrip].g_file")
    forms = rc.forms()
    g = read_g_file(rc.g_file, forms)
    prob = _halfstrip_problem(rc, forms)
    sol = solve_halfstrip(prob, g)
    doc = {"config": _config_doc(rc, rc.omegas[0]), "L": rc.length,
           "outgoing_nu": [cnum(U.nu) for U in prob.basis.outgoing],
           "coefficients": cvec(sol.coefficients),
           "system_residual": sol.residual,
           "sharp_decay_rate": sharp_rate(prob)}
    if sol.decay is not None:
        doc["decay"] = {"slab_centers": list(map(float, sol.decay.centers)),
                        "slab_norms": list(map(float, sol.decay.norms)),
                        "slope": sol.decay.slope}
    if rc.field_samples > 0:
        idx = np.unique(np.linspace(0, len(sol.x3) - 1, rc.field_samples).round().astype(int))
        doc["field"] = {"x3": [float(sol.x3[k]) for k in idx],
                        "values": [cvec(sol.field[k]) for k in idx]}
    return doc


def cmd_strip_verify(rc: RunConfig, workers: int = 1) -> dict:
    forms = rc.forms()
    ms = solve_qep(forms, rc.window())
    st = rc.strip
    bump = Bump(float(st.get("center", 0.0)), float(st.get("half_width", 1.0)),
                int(st.get("power", 8)))
    if st.get("source", "mixed") == "sh":
        src = manufactured_sh_source(forms, bump)
    else:
        src = SeparableSource([function_source(
            forms, (lambda x: 1.0 + x, lambda x: np.cos(x), lambda x: x ** 2), bump)], forms)
    d = ms.window.delta
    beta = float(st.get("beta", -d / 2))
    gamma = float(st.get("gamma", d / 2))
    # the SH response equals the compactly supported bump, so look inside its support
    default_slab = (bump.center - 0.8 * bump.half_width, bump.center + 0.8 * bump.half_width) \
        if st.get("source", "mixed") == "sh" else (3.0, 6.0)
    slab = tuple(float(v) for v in st.get("slab", default_slab))
    rep = verify_strip_asymptotics(src, beta, gamma, ms, slab=slab, workers=workers)
    return {"config": _config_doc(rc, rc.omegas[0]), "beta": beta, "gamma": gamma,
            "slab": list(slab), "residual": rep.residual,
            "coefficients": [{"mode": list(k), "nu": cnum(ms.modes[k[0]].nu), "c": cnum(v)}
                             for k, v in sorted(rep.coefficients.items())]}


def cmd_selfcheck(rc: RunConfig, workers: int = 1, tolerance_scale: float = 1.0) -> dict:
    forms = rc.forms()
    ms = solve_qep(forms, rc.window())
    results = run_selfcheck(rc.problem(), forms, ms, tolerance_scale, rc.length,
                            rc.n_evanescent, workers=workers)
    return {"config": _config_doc(rc, rc.omegas[0]), "tolerance_scale": tolerance_scale,
            "passed": all(r.passed for r in results),
            "checks": [{"name": r.name, "value": r.value, "threshold": r.threshold,
                        "passed": r.passed, "skipped": r.skipped} for r in results],
            "_lines": [r.line() for r in results]}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="elastostrip",
                                 description="Guided waves in an elastic strip.")
    ap.add_argument("verb", choices=["modes", "dispersion", "scatter", "halfstrip",
                                     "strip-verify", "selfcheck"])
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="output directory (overrides [output].dir)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--tolerance-scale", type=float, default=1.0,
                    help="multiply self-check thresholds by this factor")
    return ap


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=stderr)
        return EXIT_CONFIG
    if not (args.tolerance_scale > 0):
        print("error: --tolerance-scale must be > 0", file=stderr)
        return EXIT_CONFIG
    try:
        rc = load_config(args.config)
        if args.out:
            rc.out_dir = Path(args.out)
        if rc.is_sweep and args.verb not in ("modes", "dispersion"):
            raise ConfigError(f"{args.verb} needs a single [frequency].omega")
        rc.out_dir.mkdir(parents=True, exist_ok=True)
        out = rc.out_dir
        if args.verb == "dispersion":
            table, plot = cmd_dispersion(rc, args.workers)
            (out / "dispersion.csv").write_text(table)
            (out / "dispersion_curves.csv").write_text(plot)
            print(f"wrote {out / 'dispersion.csv'}", file=stdout)
            return EXIT_OK
        if args.verb == "modes":
            doc, name = cmd_modes(rc, args.workers), "modes.json"
        elif args.verb == "scatter":
            doc, name = cmd_scatter(rc, args.workers), "scattering.json"
        elif args.verb == "halfstrip":
            doc, name = cmd_halfstrip(rc, args.workers), "halfstrip.json"
        elif args.verb == "strip-verify":
            doc, name = cmd_strip_verify(rc, args.workers), "strip_verify.json"
        else:
            doc = cmd_selfcheck(rc, args.workers, args.tolerance_scale)
            name = "selfcheck.json"
            for line in doc.pop("_lines"):
                print(line, file=stdout)
        dump_json(doc, out / name)
        print(f"wrote {out / name}", file=stdout)
        if args.verb == "selfcheck" and not doc["passed"]:
            return EXIT_NUMERICAL
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption violation: {exc}", file=stderr)
        return EXIT_ASSUMPTION
    except (NumericalError, ElastostripError) as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure (LinAlgError): {exc}", file=stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())
