"""Command-line runner: single solves, eps-sweeps, estimate audits and validation.

    fracneumann solve    --config run.json [--set key=value ...] [--output-dir DIR] [--seed N]
    fracneumann sweep    --config run.json
    fracneumann audit    --which {phi,green,integrability} --config run.json
    fracneumann validate --config run.json

Every run writes report.json (results, checks and provenance), one CSV per
table, two-column plot-data files and a PNG rendering of each.  Exit status
is 0 when every check passes, 1 when a check fails, 2 on a config error.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .analysis import (critical_times, phi_seminorm_ledger,
                       random_smooth_field, random_smooth_function, scaling_fit, weighted_l1,
                       l2_local_check)
from .config import ConfigError, RunConfig
from .geometry import ExteriorTruncation, GeometryError, MeshSpec, build_domain, build_mesh, collar_region
from .io import OutputError, provenance, resolve_output_dir, write_csv, write_json, write_plot_data
from .kernel import ParameterError
from .operators import Field, exterior_closure, far_field_mean, green_identity, neumann_all
from .solver import SolveConfig, norm_energy_consistency, solve

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


@dataclass
class Outcome:
    """Everything a mode produces before it is written out."""

    tables: dict = field(default_factory=dict)    # name -> (columns, rows)
    checks: list = field(default_factory=list)    # dicts: name, passed, value, limit
    plots: dict = field(default_factory=dict)     # stem -> (x, y, comments)

    def check(self, name: str, passed: bool, value=None, limit=None):
        self.checks.append({"name": name, "passed": bool(passed),
                            "value": None if value is None else float(value),
                            "limit": None if limit is None else float(limit)})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------

def _solve_config(cfg: RunConfig, eps: float) -> SolveConfig:
    return SolveConfig(
        params=cfg.params(eps), mesh=cfg.mesh_spec(), init=cfg.init, amplitude=cfg.amplitude,
        center=tuple(cfg.center) if cfg.center is not None else None, sigma=cfg.sigma, tol=cfg.tol,
        max_iter=cfg.max_iter, representation=cfg.representation, symmetric=cfg.symmetric,
    )


SOLVE_COLUMNS = ("eps", "c_eps", "norm_sq", "residual", "iterations", "converged", "min_value",
                 "max_value", "gap", "constant_energy", "saddle", "identity_ok", "kato_ok",
                 "monotone_ok", "symmetric", "n_interior", "n_cells")


def _solve_row(cfg: RunConfig, eps: float):
    sc = _solve_config(cfg, eps)
    report, u = solve(sc)
    P = sc.params
    row = {k: getattr(report, k) for k in SOLVE_COLUMNS if hasattr(report, k)}
    row.update(eps=float(eps), identity_ok=norm_energy_consistency(report, P, cfg.tol),
               n_interior=u.mesh.n_interior, n_cells=u.mesh.n_cells)
    return row, report, u


def _sweep_point(args):
    cfg, eps = args
    row, report, _ = _solve_row(cfg, eps)
    return row


def mode_solve(cfg: RunConfig) -> Outcome:
    out = Outcome()
    row, report, u = _solve_row(cfg, cfg.eps)
    P = cfg.params()
    mesh = u.mesh
    nI = mesh.n_interior
    out.tables["solve"] = (SOLVE_COLUMNS, [row])

    cols = tuple(f"x{a}" for a in range(mesh.dim)) + ("region", "weight", "u")
    rows = []
    for i in range(mesh.n_cells):
        r = {f"x{a}": float(mesh.points[i, a]) for a in range(mesh.dim)}
        r.update(region="interior" if i < nI else "exterior", weight=float(mesh.weights[i]),
                 u=float(u.values[i]))
        rows.append(r)
    rows.append({"region": "far", "u": float(u.far)})
    out.tables["field"] = (cols, rows)

    scale = max(float(np.abs(u.interior).max()), 1e-300)
    neu = float(np.abs(neumann_all(u, P)).max())
    lo, hi = float(u.interior.min()), float(u.interior.max())
    ext = np.append(u.exterior, u.far)
    out.check("converged", report.converged, report.residual, cfg.tol)
    out.check("nonnegative", report.min_value >= -1e-12, report.min_value, -1e-12)
    out.check("positive_level", report.c_eps > 0, report.c_eps, 0.0)
    out.check("energy_identity", row["identity_ok"], report.norm_sq, None)
    out.check("kato", report.kato_ok)
    out.check("monotone", report.monotone_ok)
    out.check("neumann_zero", neu <= 1e-10 * scale, neu, 1e-10 * scale)
    out.check("closure_bounds", bool(np.all(ext >= lo - 1e-12 * scale) and np.all(ext <= hi + 1e-12 * scale)))

    pts = mesh.points
    if mesh.dim == 1:
        c = mesh.domain.centroid[0]
        keep = np.nonzero(np.abs(pts[:, 0] - c) <= mesh.domain.diameter)[0]
        order = keep[np.argsort(pts[keep, 0])]
        out.plots["profile"] = (pts[order, 0], u.values[order], [f"eps={P.eps!r}", "x u"])
    else:
        r = np.linalg.norm(pts[:nI] - mesh.domain.centroid, axis=1)
        order = np.argsort(r, kind="stable")
        out.plots["radial_profile"] = (r[order], u.interior[order], [f"eps={P.eps!r}", "r u"])
    it = np.arange(len(report.energies))
    out.plots["energy_history"] = (it, report.energies, ["iteration energy"])
    out.plots["residual_history"] = (it, report.residuals, ["iteration residual"])
    return out


SWEEP_COLUMNS = SOLVE_COLUMNS + ("c_scaled", "norm_scaled", "slope")


def mode_sweep(cfg: RunConfig) -> Outcome:
    out = Outcome()
    n, p = cfg.dim, cfg.p
    eps_list = cfg.eps_values()
    if cfg.synthetic:
        # test hook: c_eps = eps exactly, no solves
        rows = []
        for e in eps_list:
            c = float(e)
            rows.append({"eps": float(e), "c_eps": c, "norm_sq": 2 * (p + 1) / (p - 1) * c, "residual": 0.0,
                         "iterations": 0, "converged": True, "min_value": 0.0, "identity_ok": True})
    elif cfg.workers > 1 and len(eps_list) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            rows = list(ex.map(_sweep_point, [(cfg, e) for e in eps_list]))
    else:
        rows = [_sweep_point((cfg, e)) for e in eps_list]

    for k, r in enumerate(rows):
        r["c_scaled"] = r["c_eps"] * r["eps"] ** (-n)
        r["norm_scaled"] = r["norm_sq"] * r["eps"] ** (-n)
        pts = [(q["eps"], q["c_eps"]) for q in rows[: k + 1]]
        r["slope"] = scaling_fit(pts, min_points=2)[0] if k >= 1 and all(c > 0 for _, c in pts) else None
    out.tables["sweep"] = (SWEEP_COLUMNS, rows)

    out.check("all_converged", all(r["converged"] for r in rows))
    out.check("energy_identity", all(r["identity_ok"] for r in rows))
    out.check("nonnegative", all(r["min_value"] >= -1e-12 for r in rows), min(r["min_value"] for r in rows), -1e-12)
    if len(rows) >= 3 and all(r["c_eps"] > 0 for r in rows):
        slope, _ = scaling_fit([(r["eps"], r["c_eps"]) for r in rows])
        out.check("slope_low", slope >= 0.8 * n, slope, 0.8 * n)
        out.check("slope_high", slope <= 1.2 * n, slope, 1.2 * n)
    for name in ("c_scaled", "norm_scaled"):
        col = np.array([r[name] for r in rows])
        ratio = float(col.max() / col.min()) if np.all(col > 0) else math.inf
        out.check(f"{name}_bounded", ratio <= 4.0, ratio, 4.0)
    if not cfg.synthetic:
        small = min(rows, key=lambda r: r["eps"])
        out.check("nonconstant_smallest_eps", small["gap"] > 0 and not small["saddle"], small["gap"], 0.0)
    eps = [r["eps"] for r in rows]
    out.plots["scaling"] = (eps, [r["c_eps"] for r in rows], [f"n={n} s={cfg.s!r} p={p!r}", "eps c_eps"])
    out.plots["norm_scaling"] = (eps, [r["norm_scaled"] for r in rows], ["eps norm_sq*eps^-n"])
    return out


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

def mode_audit_phi(cfg: RunConfig) -> Outcome:
    out = Outcome()
    P0 = cfg.params(cfg.eps_values()[0])
    spec = cfg.mesh_spec()
    ledger = phi_seminorm_ledger(cfg.eps_values(), P0, spec,
                                 center=tuple(cfg.center) if cfg.center is not None else None)
    cols = ("eps", "T1", "T2", "exterior", "phi_l2", "phi_l2_exact", "phi_l2_relerr", "norm_sq",
            "T1_n", "T2_n", "exterior_n", "norm_sq_n", "decomposition_err", "C0", "t1", "t2")
    rows = []
    for r in ledger.rows:
        r = dict(r)
        P = P0.with_eps(r["eps"])
        C0 = 0.5 * r["norm_sq"] * r["eps"] ** P.n
        t1, t2 = critical_times(C0, P)
        r.update(phi_l2_relerr=abs(r["phi_l2"] / r["phi_l2_exact"] - 1), C0=C0, t1=t1, t2=t2)
        rows.append(r)
    out.tables["ledger"] = (cols, rows)
    for name, ratio in ledger.ratios().items():
        out.check(f"{name}_bounded", ratio <= 4.0, ratio, 4.0)
    err = max(r["decomposition_err"] for r in rows)
    out.check("decomposition", err <= 1e-8, err, 1e-8)
    eps = [r["eps"] for r in rows]
    for name in ("T1_n", "T2_n", "exterior_n", "norm_sq_n"):
        out.plots[f"ledger_{name}"] = (eps, [r[name] for r in rows], [f"eps {name}"])
    return out


def mode_audit_green(cfg: RunConfig) -> Outcome:
    out = Outcome()
    rng = np.random.default_rng(cfg.seed)
    P = cfg.params()
    dom = build_domain(cfg.domain)
    trunc = ExteriorTruncation(R_ext=cfg.R_ext, h_ext=cfg.h_ext, growth=cfg.growth)
    meshes = [build_mesh(dom, cfg.h, trunc, grading=cfg.grading),
              build_mesh(dom, cfg.h / 2, trunc, grading=cfg.grading)]
    pairs = []
    for _ in range(cfg.n_pairs):
        scale = dom.diameter / 2
        pairs.append(((random_smooth_function(rng, dom.dim, 4, scale), float(rng.normal())),
                      (random_smooth_function(rng, dom.dim, 4, scale), float(rng.normal()))))
    rows = []
    rel = {0: [], 1: []}
    for k, ((fu, au), (fv, av)) in enumerate(pairs):
        for lvl, mesh in enumerate(meshes):
            u = Field(mesh, fu(mesh.points), au)
            v = Field(mesh, fv(mesh.points), av)
            g = green_identity(u, v, P)
            r = g.residual / max(abs(g.lhs), 1e-300)
            rel[lvl].append(r)
            rows.append({"pair": k, "h": mesh.h, "lhs": g.lhs, "rhs": g.rhs, "residual": g.residual,
                         "relative": r})
    out.tables["green"] = (("pair", "h", "lhs", "rhs", "residual", "relative"), rows)
    worst = max(rel[0])
    m0, m1 = float(np.mean(rel[0])), float(np.mean(rel[1]))
    out.check("relative_residual", worst <= 0.05, worst, 0.05)
    out.check("refinement_decrease", m1 < m0, m1, m0)
    idx = np.arange(len(rel[0]))
    out.plots["green_residual_h"] = (idx, rel[0], [f"h={meshes[0].h!r}", "pair relative"])
    out.plots["green_residual_h2"] = (idx, rel[1], [f"h={meshes[1].h!r}", "pair relative"])
    return out


def mode_audit_integrability(cfg: RunConfig) -> Outcome:
    out = Outcome()
    P = cfg.params()
    rng = np.random.default_rng(cfg.seed)
    base = cfg.mesh_spec()
    mesh0 = base.build(P.eps)
    R = mesh0.R_ext
    rows = []
    sols = []
    for Rk in (R, 2 * R):
        spec = MeshSpec(base.domain, base.h, base.h_per_eps, Rk, base.h_ext, base.growth, base.grading, base.focus)
        sc = SolveConfig(P, spec, init=cfg.init, amplitude=cfg.amplitude, sigma=cfg.sigma, tol=cfg.tol,
                         max_iter=cfg.max_iter, representation=cfg.representation, symmetric=cfg.symmetric,
                         center=tuple(cfg.center) if cfg.center is not None else None)
        report, u = solve(sc)
        wl = weighted_l1(u, P)
        sols.append((report, u, wl))
        rows.append({"label": "solution", "R_ext": Rk, "converged": report.converged, "c_eps": report.c_eps,
                     "weighted_l1": wl.value, "weighted_l1_tail": wl.tail})
    change = abs(sols[1][2].value / sols[0][2].value - 1)
    out.check("solutions_converged", all(s[0].converged for s in sols))
    out.check("weighted_l1_truncation", change <= 0.02, change, 0.02)

    dom = mesh0.domain
    rho = cfg.collar_width if cfg.collar_width is not None else 0.5 * dom.diameter
    u = sols[0][1]
    collar = collar_region(dom, u.mesh, rho)
    crow = []
    fields_ = [("solution", u)]
    for k in range(cfg.n_random):
        f = random_smooth_field(u.mesh, rng)
        fields_.append((f"random_{k}", exterior_closure(f.interior, P, u.mesh)))
    for label, f in fields_:
        cc = l2_local_check(f, collar, P)
        crow.append({"label": label, "collar_l2": cc.collar_l2, "collar_l1": cc.collar_l1, "I": cc.I,
                     "a": cc.a, "b": cc.b, "c": cc.c, "rhs": cc.rhs, "slack": cc.slack})
    out.tables["truncation"] = (("label", "R_ext", "converged", "c_eps", "weighted_l1", "weighted_l1_tail"), rows)
    out.tables["collar"] = (("label", "collar_l2", "collar_l1", "I", "a", "b", "c", "rhs", "slack"), crow)
    worst = min(r["slack"] for r in crow)
    out.check("collar_slack", worst >= 0, worst, 0.0)

    w = u.mesh.weights[: u.mesh.n_interior]
    mean = float(w @ u.interior / w.sum())
    ff = far_field_mean(u, P, 4 * dom.diameter)
    dev = abs(ff / mean - 1)
    out.check("far_field_mean", dev <= 0.02, dev, 0.02)
    out.plots["l1_truncation"] = ([r["R_ext"] for r in rows], [r["weighted_l1"] for r in rows], ["R_ext weighted_l1"])
    out.plots["collar_slack"] = (np.arange(len(crow)), [r["slack"] for r in crow], ["field slack (0 = solution)"])
    return out


MODE_RUNNERS = {
    "solve": mode_solve,
    "sweep": mode_sweep,
    "audit-phi": mode_audit_phi,
    "audit-green": mode_audit_green,
    "audit-integrability": mode_audit_integrability,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def preflight(cfg: RunConfig) -> tuple[list[str], list[str]]:
    """(errors, warnings) from validation; mesh-resolution findings only warn."""
    diags = cfgmod.validate(cfg)
    errors = [d for d in diags if not d.startswith("mesh")]
    if cfg.mode == "audit-green":
        errors = [d for d in errors if not d.startswith("tent")]
    warnings = [d for d in diags if d.startswith("mesh")]
    return errors, warnings


def write_outcome(cfg: RunConfig, outcome: Outcome, outdir: Path) -> list[Path]:
    written = []
    tables = {}
    for name, (cols, rows) in outcome.tables.items():
        written.append(write_csv(outdir / f"{name}.csv", cols, rows))
        tables[name] = {"columns": list(cols), "rows": [{c: r.get(c) for c in cols} for r in rows]}
    check_cols = ("name", "passed", "value", "limit")
    written.append(write_csv(outdir / "checks.csv", check_cols, outcome.checks))
    plot_files = []
    for stem, (x, y, comments) in outcome.plots.items():
        path = write_plot_data(outdir / f"{stem}.dat", x, y, comments)
        written.append(path)
        plot_files.append(path.name)
        if cfg.plots:
            from .plotting import render

            written.append(render(path))
    doc = {"mode": cfg.mode, "passed": outcome.passed, "checks": outcome.checks, "tables": tables,
           "plot_data": plot_files, "provenance": provenance(cfg.echo(), cfg.seed)}
    written.append(write_json(outdir / "report.json", doc))
    return written


def run(cfg: RunConfig, stream=sys.stdout) -> int:
    errors, warnings = preflight(cfg)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    np.random.seed(cfg.seed)
    try:
        outdir = resolve_output_dir(cfg.output_dir)
        outcome = MODE_RUNNERS[cfg.mode](cfg)
    except OutputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_outcome(cfg, outcome, outdir)
    for c in outcome.checks:
        tag = "PASS" if c["passed"] else "FAIL"
        extra = "" if c["value"] is None else f" value={c['value']:.6g}"
        extra += "" if c["limit"] is None else f" limit={c['limit']:.6g}"
        print(f"{tag} {cfg.mode}:{c['name']}{extra}", file=stream)
    print(f"results written to {outdir}", file=stream)
    return EXIT_OK if outcome.passed else EXIT_FAIL


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracneumann", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (JSON literal or bare string); repeatable")
        p.add_argument("--output-dir", help="output directory (relative paths honour $FRACNEUMANN_OUTPUT_ROOT)")
        p.add_argument("--seed", type=int, help="random seed")

    common(sub.add_parser("solve", help="single solve"))
    common(sub.add_parser("sweep", help="eps-sweep with scaling fit"))
    pa = sub.add_parser("audit", help="estimate audits")
    pa.add_argument("--which", required=True, choices=("phi", "green", "integrability"))
    common(pa)
    common(sub.add_parser("validate", help="check a config without running it"))
    return ap


def _load(args, mode):
    overrides = list(args.set)
    if args.output_dir is not None:
        overrides.append(f"output_dir={args.output_dir}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    raw = cfgmod.apply_overrides(cfgmod.read_raw(args.config), overrides)
    if isinstance(raw.get("output_dir"), (int, float)):
        raw["output_dir"] = str(raw["output_dir"])
    return cfgmod.from_dict(raw, mode)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            raw = cfgmod.read_raw(args.config)
            cfg = _load(args, raw.get("mode", "solve"))
            diags = cfgmod.validate(cfg)
            for d in diags:
                print(d)
            if not diags:
                print("valid")
            return EXIT_OK if not diags else EXIT_FAIL
        mode = args.command if args.command != "audit" else f"audit-{args.which}"
        cfg = _load(args, mode)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
