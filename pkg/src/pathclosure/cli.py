"""
Command-line runner: ``pathclosure <subcommand> <config> [--out DIR] [--seed N]``.

Every subcommand writes CSV files whose first line is a provenance comment
(tool version, config hash, seed, subcommand) followed by a header row.
Files are written atomically. Exit status: 0 success, 1 invalid
configuration or a failed check, 2 numerical failure or non-convergence
(reports are still written).
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .errors import InvalidParameterError, PathClosureError
from .geometry import (ClosedFormProvider, MonteCarloProvider, TabulatedProvider, free_surrogate,
                       harmonic_surrogate, identity_suite, rotation_surrogate)
from .harmonic import HarmonicSpec, fig2_restart_table, fig2_weight_table, fig3_table
from .lagrangian import LagrangianContext, decomposition_audit
from .models import build_model
from .paths import classical_closure, solve_extremal
from .pde import compare_transfer_pde
from .transfer import (GridSpec, appendix_b_diagnostics, build_transfer, delta_field, gaussian_field,
                       propagate, steady_state, top_spectrum)
from .weaknoise import om_decomposition_check, ottinger_path, stationary_covariance, stationary_hj_quadratic

SUBCOMMANDS = ("geometry", "identities", "harmonic", "extremal", "closure", "propagate", "steady",
               "weaknoise", "pde-check", "appendix-b")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class Run:
    """Shared state for one subcommand invocation."""

    def __init__(self, sub, cfg, out_dir, seed):
        self.sub = sub
        self.cfg = cfg
        self.out_dir = out_dir
        self.seed = seed
        self.files = []

    @property
    def provenance(self):
        return (f"# pathclosure {__version__} config={self.cfg.text_hash} seed={self.seed} "
                f"subcommand={self.sub}")

    def write(self, name, header, rows):
        os.makedirs(self.out_dir, exist_ok=True)
        lines = [self.provenance, ",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        path = os.path.join(self.out_dir, name)
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files.append(path)
        return path

    def write_summary(self, name, items):
        return self.write(name, ["key", "value"], items)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else f"{float(v):.12g}"
    return str(v)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_provider(cfg, seed, grid=None):
    mdl = cfg["model"]
    kind = cfg["provider"]["kind"]
    name = mdl["name"]
    if name in ("harmonic", "free", "rotation"):
        if kind not in ("auto", "closed"):
            raise InvalidParameterError(f"provider kind {kind!r} needs a sampled model, not the {name} surrogate")
        if name == "harmonic":
            return harmonic_surrogate(mdl["kappa"])
        if name == "free":
            return free_surrogate(mdl["dim"])
        return rotation_surrogate(mdl["kappa"], mdl["omega"])
    model = build_model(name, Lambda=mdl["Lambda"], k_res=mdl["k_res"])
    if kind == "montecarlo":
        return MonteCarloProvider(model, mdl["beta"], cfg["provider"]["count"], seed)
    closed = ClosedFormProvider(model, mdl["beta"])
    if kind == "tabulated":
        if grid is None:
            raise InvalidParameterError("tabulated provider needs a [grid]")
        return TabulatedProvider(closed, grid.axes)
    return closed


def build_grid(cfg, m):
    gs = cfg["grid"]
    lower, upper = np.array(gs["lower"]), np.array(gs["upper"])
    if lower.size == 1 and m > 1:
        lower, upper = np.repeat(lower, m), np.repeat(upper, m)
    if lower.size != m:
        raise InvalidParameterError(f"grid has {lower.size} dimensions, the manifold has {m}")
    if gs["spacing"] is not None:
        return GridSpec.from_spacing(lower, upper, np.broadcast_to(gs["spacing"], (m,)))
    pts = gs["points"] if gs["points"] is not None else (401,)
    return GridSpec(tuple(lower), tuple(upper), tuple(np.broadcast_to(pts, (m,))))


def _vec(values, m, what):
    v = np.asarray(values, dtype=float)
    if v.size == 1 and m > 1:
        v = np.repeat(v, m)
    if v.size != m:
        raise InvalidParameterError(f"{what} needs {m} components, got {v.size}")
    return v


def _context(cfg, provider):
    lg = cfg["lagrangian"]
    return LagrangianContext(provider, lg["delta_t"], lg["w_rev"])


def _field_rows(field, extra=()):
    nodes = field.grid.nodes()
    return [tuple(extra) + tuple(x) + (v,) for x, v in zip(nodes, field.values)]


def _lam_header(m, prefix="lambda"):
    return [f"{prefix}_{i + 1}" for i in range(m)]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_geometry(run):
    cfg = run.cfg
    probe = build_provider(cfg, run.seed)
    grid = build_grid(cfg, probe.m)
    provider = build_provider(cfg, run.seed, grid)
    m = provider.m
    header = (_lam_header(m) + [f"a_{i + 1}" for i in range(m)]
              + [f"g_{i + 1}{j + 1}" for i in range(m) for j in range(m)]
              + [f"M_{i + 1}" for i in range(m)] + ["phi"])
    mc = isinstance(provider, MonteCarloProvider)
    if mc:
        header += [f"se_g_{i + 1}{j + 1}" for i in range(m) for j in range(m)] + [f"se_M_{i + 1}" for i in range(m)] + ["se_phi"]
    rows = []
    for lam in grid.nodes():
        p = provider.geometry_at(lam)
        row = list(lam) + list(p.a) + list(p.g.ravel()) + list(p.M) + [p.phi]
        if mc:
            row += list(p.se["g"].ravel()) + list(p.se["M"]) + [p.se["phi"]]
        rows.append(row)
    run.write("geometry.csv", header, rows)
    return EXIT_OK


def cmd_identities(run):
    cfg = run.cfg
    name = cfg["model"]["name"]
    if name not in ("oscillator", "tbh"):
        raise InvalidParameterError("identities needs a sampled model (oscillator or tbh)")
    model = build_model(name, Lambda=cfg["model"]["Lambda"], k_res=cfg["model"]["k_res"])
    sec = cfg["identities"]
    lam = _vec(sec["lam"], model.m, "identities.lam")
    lam_dot = None if sec["lam_dot"] is None else _vec(sec["lam_dot"], model.m, "identities.lam_dot")
    beta = cfg["model"]["beta"]
    rep = identity_suite(model, lam, beta, sec["count"], run.seed, lam_dot=lam_dot)
    run.write("identities.csv", ["identity", "index", "mean", "se", "passed"],
              [(c.name, c.index or "-", c.mean, c.se, c.passed) for c in rep.checks])
    ok = rep.passed
    if sec["decomp_inputs"]:
        ctx = LagrangianContext(ClosedFormProvider(model, beta), cfg["lagrangian"]["delta_t"])
        worst = decomposition_audit(ctx, sec["decomp_inputs"], run.seed)
        point = MonteCarloProvider(model, beta, sec["count"], run.seed).geometry_at(lam)
        gap, tol = point.reversible_gap()
        # IL_rev vanishes identically only when the resolved variables close the flow
        rev_ok = abs(gap) <= tol if name == "oscillator" else gap >= -tol
        rows = [("il_split_max_rel_error", worst, 1e-12, worst <= 1e-12),
                ("il_rev_montecarlo", 0.5 * ctx.delta_t ** 2 * gap, 0.5 * ctx.delta_t ** 2 * tol, rev_ok)]
        run.write("decomposition.csv", ["quantity", "value", "tolerance", "passed"], rows)
        ok = ok and all(r[-1] for r in rows)
    return EXIT_OK if ok else EXIT_INVALID


def cmd_harmonic(run):
    h = run.cfg["harmonic"]
    spec = HarmonicSpec(h["kappa"], h["u0"], h["delta_t"])
    run.write("fig2a.csv", ["t", "u_original", "u_restarted"],
              fig2_restart_table(spec, h["t_restart"], h["horizon"], h["step"]))
    u = np.linspace(h["u_lower"], h["u_upper"], h["u_points"])
    run.write("fig2b.csv", ["T", "uT", "psi"], fig2_weight_table(spec, h["weight_times"], u))
    run.write("fig3.csv", ["t", "u_thermo", "u_extremal"], fig3_table(spec, h["fig3_T"], h["step"]))
    return EXIT_OK


def cmd_extremal(run):
    cfg = run.cfg
    provider = build_provider(cfg, run.seed)
    ctx = _context(cfg, provider)
    e = cfg["extremal"]
    m = provider.m
    sol = solve_extremal(ctx, _vec(e["lam0"], m, "lam0"), _vec(e["lamT"], m, "lamT"), e["T"], e["n_nodes"],
                         tol=e["tol"])
    run.write("extremal.csv", ["t"] + _lam_header(m),
              [(t,) + tuple(x) for t, x in zip(sol.path.times, sol.path.points)])
    run.write_summary("extremal_summary.csv", [("action", sol.action), ("el_residual", sol.el_residual),
                                               ("converged", sol.converged), ("iterations", sol.iterations)])
    return EXIT_OK if sol.converged else EXIT_NUMERICAL


def cmd_closure(run):
    cfg = run.cfg
    provider = build_provider(cfg, run.seed)
    ctx = _context(cfg, provider)
    c = cfg["closure"]
    m = provider.m
    lo, hi = _vec(c["lower"], m, "closure.lower"), _vec(c["upper"], m, "closure.upper")
    pts = np.broadcast_to(c["points"], (m,))
    axes = [np.linspace(a, b, int(k)) for a, b, k in zip(lo, hi, pts)]
    res = classical_closure(ctx, _vec(c["lam0"], m, "closure.lam0"), c["T"], axes, n_nodes=c["n_nodes"])
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, m)
    run.write("closure.csv", _lam_header(m, "lambdaT") + ["S_m"],
              [tuple(x) + (s,) for x, s in zip(mesh, res.table.ravel())])
    run.write_summary("closure_summary.csv", [(f"lambda_opt_{i + 1}", v) for i, v in enumerate(res.lam_opt)])
    return EXIT_OK


def _transfer_setup(run, n_sub):
    cfg = run.cfg
    probe = build_provider(cfg, run.seed)
    grid = build_grid(cfg, probe.m)
    provider = build_provider(cfg, run.seed, grid)
    lg = cfg["lagrangian"]
    return provider, grid, build_transfer(provider, grid, lg["delta_t"], n_sub, lg["w_rev"])


def cmd_propagate(run):
    p = run.cfg["propagate"]
    provider, grid, op = _transfer_setup(run, p["n_sub"])
    psi = delta_field(grid, _vec(p["start"], grid.dim, "propagate.start"))
    rows, summary = [], []
    dt = op.delta_t
    for k in range(p["steps"] + 1):
        if k:
            psi = propagate(op, psi, 1)
        rows += _field_rows(psi, (k * dt,))
        if k:
            arg = psi.argmax()
            summary += [(f"mass_t{k * dt:g}", psi.mass())] + [
                (f"argmax_t{k * dt:g}_{i + 1}", v) for i, v in enumerate(arg)]
    run.write("propagate.csv", ["t"] + _lam_header(grid.dim) + ["psi"], rows)
    run.write_summary("propagate_summary.csv", summary)
    return EXIT_OK


def cmd_steady(run):
    s = run.cfg["steady"]
    provider, grid, op = _transfer_setup(run, s["n_sub"])
    ss = steady_state(op, s["tol"], s["max_iter"], run.seed)
    field = ss.field.normalized()
    mean, cov = field.moments()
    run.write("steady.csv", _lam_header(grid.dim) + ["psi"], _field_rows(field))
    summary = [("eigenvalue", ss.eigenvalue), ("rate_per_unit_time", ss.rate_per_unit_time),
               ("iterations", ss.iterations), ("converged", ss.converged), ("last_gap", ss.gap),
               ("confinement_ok", ss.confinement_ok)]
    summary += [(f"mean_{i + 1}", v) for i, v in enumerate(mean)]
    summary += [(f"cov_{i + 1}{j + 1}", cov[i, j]) for i in range(grid.dim) for j in range(grid.dim)]
    if s["spectrum"]:
        summary += [(f"spectrum_{i + 1}", v) for i, v in enumerate(top_spectrum(op, s["spectrum"]))]
    run.write_summary("steady_summary.csv", summary)
    return EXIT_OK if ss.converged else EXIT_NUMERICAL


def cmd_weaknoise(run):
    cfg = run.cfg
    provider = build_provider(cfg, run.seed)
    w = cfg["weaknoise"]
    m = provider.m
    gauge = stationary_hj_quadratic(provider, _vec(w["guess"], m, "weaknoise.guess"))
    sigma = stationary_covariance(gauge, cfg["lagrangian"]["delta_t"])
    res = ottinger_path(gauge, sigma, _vec(w["lam0"], m, "weaknoise.lam0"), w["T"], w["dt"])
    run.write("weaknoise.csv", ["t"] + _lam_header(m, "alpha") + _lam_header(m, "lambda_hat"),
              [(t,) + tuple(a) + tuple(b) for t, a, b in
               zip(res.alpha_path.times, res.alpha_path.points, res.thermo_path.points)])
    ev = gauge.drift_eigenvalues
    items = [(f"alpha_star_{i + 1}", v) for i, v in enumerate(gauge.alpha_star)]
    items += [(f"G_{i + 1}{j + 1}", gauge.G[i, j]) for i in range(m) for j in range(m)]
    items += [(f"sigma_{i + 1}{j + 1}", sigma[i, j]) for i in range(m) for j in range(m)]
    items += [(f"drift_eig_{i + 1}_re", e.real) for i, e in enumerate(ev)]
    items += [(f"drift_eig_{i + 1}_im", e.imag) for i, e in enumerate(ev)]
    run.write_summary("weaknoise_summary.csv", items)
    if not w["om_trials"]:
        return EXIT_OK
    if cfg["model"]["name"] != "harmonic":
        raise InvalidParameterError("weaknoise.om_trials needs the harmonic model")
    rng = np.random.default_rng(run.seed)
    rows = []
    for _ in range(w["om_trials"]):
        kappa, dt, T, u0 = rng.uniform(0.3, 2.0), rng.uniform(0.3, 3.0), rng.uniform(0.2, 3.0), rng.uniform(-2, 2)
        g = stationary_hj_quadratic(harmonic_surrogate(kappa), [0.1])
        rep = om_decomposition_check(g, HarmonicSpec(kappa, u0, dt), T)
        rows.append((kappa, dt, T, u0, rep.argmax, rep.expected, rep.argmax_error, rep.path_error, rep.passed))
    run.write("weaknoise_om.csv", ["kappa", "delta_t", "T", "u0", "argmax", "expected", "argmax_error",
                                   "path_error", "passed"], rows)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_INVALID


def cmd_pde_check(run):
    cfg = run.cfg
    p = cfg["pde-check"]
    probe = build_provider(cfg, run.seed)
    grid = build_grid(cfg, probe.m)
    provider = build_provider(cfg, run.seed, grid)
    start = _vec(p["start"], grid.dim, "pde-check.start")
    psi0 = gaussian_field(grid, start, p["width"] ** 2 * np.eye(grid.dim))
    lg = cfg["lagrangian"]
    cmp = compare_transfer_pde(provider, grid, lg["delta_t"], psi0, p["T"], p["n_subs"], p["dt_pde"],
                               p["steady_n_sub"], lg["w_rev"])
    run.write("pde_check.csv", ["n_sub", "sub_dt", "l1_gap"], zip(cmp.n_subs, cmp.sub_dts, cmp.l1_gaps))
    ok = cmp.order >= 1.0 and cmp.rate_rel_error <= 0.02
    run.write_summary("pde_check_summary.csv", [("empirical_order", cmp.order), ("pde_rate", cmp.pde_rate),
                                                ("transfer_rate", cmp.transfer_rate),
                                                ("rate_rel_error", cmp.rate_rel_error), ("passed", ok)])
    return EXIT_OK if ok else EXIT_INVALID


def cmd_appendix_b(run):
    a = run.cfg["appendix-b"]
    provider, grid, op = _transfer_setup(run, a["n_sub"])
    rep = appendix_b_diagnostics(op, a["trials"], run.seed, a["support"], confinement_factor=a["confinement_factor"])
    run.write("appendix_b.csv", ["quantity", "value", "ok"], rep.rows())
    return EXIT_OK if (rep.contraction_ok and rep.positivity_ok) else EXIT_INVALID


COMMANDS = {
    "geometry": cmd_geometry, "identities": cmd_identities, "harmonic": cmd_harmonic,
    "extremal": cmd_extremal, "closure": cmd_closure, "propagate": cmd_propagate,
    "steady": cmd_steady, "weaknoise": cmd_weaknoise, "pde-check": cmd_pde_check,
    "appendix-b": cmd_appendix_b,
}


def run_command(sub, cfg, out_dir=".", seed=None):
    """Run one subcommand on a parsed config; returns ``(exit_code, files)``."""
    seed = cfg["run"]["seed"] if seed is None else seed
    run = Run(sub, cfg, out_dir, seed)
    return COMMANDS[sub](run), run.files


def main(argv=None):
    parser = argparse.ArgumentParser(prog="pathclosure", description=__doc__.split("\n\n")[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--seed", type=int, default=None, help="override [run] seed")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None and args.seed < 0:
        print("--seed must be non-negative", file=sys.stderr)
        return EXIT_INVALID
    try:
        code, files = run_command(args.subcommand, cfg, args.out, args.seed)
    except InvalidParameterError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PathClosureError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in files:
        print(f)
    return code


if __name__ == "__main__":
    sys.exit(main())
