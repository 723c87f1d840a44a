"""Configuration-driven command line front end.

One YAML file describes one run: the model (a named preset with parameter
overrides), per-command parameters, and output options.  Verbs:

    validate    check kernel mass and the nonlinearity hypotheses
    dispersion  tabulate the two characteristic functions over a tilt grid
    minspeed    compute the linearized and constructive minimal speeds
    profile     solve a semi-wavefront profile and its diagnostics

Exit codes: 0 success, 1 validation failure, 2 numeric non-convergence,
3 configuration error.  CSV outputs are byte-identical across reruns of the
same configuration; every CSV carries the package version and the
configuration hash in its header comment.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from typing import Any

import numpy as np
import yaml

from . import __version__
from .dispersion import (DispersionFunction, eval_R, minimal_speed, mu_q,
                         positive_roots, transform_domain)
from .errors import (BadBracket, ConfigError, DomainExceeded, InvalidParameter,
                     NoAdmissibleM, NotConverged, QuadratureFailure,
                     SandwichBroken, SemiwaveError)
from .kernels import ABSCISSA_MARGIN, kernel_mass
from .models import (ModelSetup, epidemic_reconstruct, population_reconstruct,
                     preset)
from .profile import (Grid, critical_speed_profile, fixed_points_of_fg,
                      make_wave_problem, ode_interior, persistence_check,
                      residual_ode, solve_profile, sub_super,
                      validate_hypotheses)
from .svg import line_chart

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_CONFIG = 3

_NUMERIC_ERRORS = (NotConverged, BadBracket, QuadratureFailure, NoAdmissibleM,
                   SandwichBroken, DomainExceeded)


# ---------------------------------------------------------------------------
# config and output plumbing
# ---------------------------------------------------------------------------

def load_config(path: str) -> tuple[dict, str]:
    """Parse the YAML run configuration; returns (config, content hash)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    canonical = json.dumps(cfg, sort_keys=True, default=str)
    digest = hashlib.sha256(canonical.encode()).hexdigest()[:16]
    return cfg, digest


def build_model(cfg: dict) -> ModelSetup:
    model = cfg.get("model")
    if not isinstance(model, dict) or "preset" not in model:
        raise ConfigError("config needs model.preset (one of "
                          "benchmark | marine | epidemic | population)")
    params = model.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("model.params must be a mapping")
    try:
        return preset(str(model["preset"]), **params)
    except InvalidParameter as exc:
        raise ConfigError(str(exc)) from exc
    except TypeError as exc:
        raise ConfigError(f"bad model parameters: {exc}") from exc


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".semiwave-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, command: str, config_hash: str, columns: list[str],
              rows) -> None:
    lines = [f"# semiwave {__version__} command={command} config_sha256={config_hash}",
             ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".12g")
    return str(v)


def write_report(path: str, report: dict) -> None:
    _atomic_write(path, json.dumps(report, indent=2, sort_keys=True,
                                   default=str) + "\n")


class Run:
    """Shared state of one command invocation."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.cfg, self.cfg_hash = load_config(args.config)
        out_cfg = self.cfg.get("output") or {}
        self.out_dir = args.out or out_cfg.get("dir") or "out"
        formats = args.format.split(",") if args.format else \
            out_cfg.get("formats", ["csv"])
        self.formats = {f.strip() for f in formats if f and f.strip()}
        bad = self.formats - {"csv", "svg", "report"}
        if bad:
            raise ConfigError(f"unknown output formats: {sorted(bad)}")
        self.verbose = args.verbose
        self.warnings: list[str] = []
        self.timings: dict[str, float] = {}
        os.makedirs(self.out_dir, exist_ok=True)
        self.setup = build_model(self.cfg)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def warn(self, op: str, message: str) -> None:
        self.warnings.append(f"{op}: {message}")
        if self.verbose:
            print(f"warning [{op}]: {message}", file=sys.stderr)

    def timed(self, name: str, fn, *a, **kw):
        t0 = time.perf_counter()
        result = fn(*a, **kw)
        self.timings[name] = round(time.perf_counter() - t0, 6)
        return result

    def base_report(self, command: str) -> dict:
        return {
            "command": command,
            "version": __version__,
            "config": self.cfg,
            "config_sha256": self.cfg_hash,
            "model": self.setup.name,
            "warnings": self.warnings,
            "timings_s": self.timings,
        }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _require_chis(run: Run) -> None:
    if run.setup.chi0 is None or run.setup.chi_l is None:
        raise ConfigError(
            "the configured model is not monostable (growth slope does not "
            "exceed decay slope); run `semiwave validate` for details")


def _hypothesis_table(run: Run) -> tuple[dict, bool]:
    setup = run.setup
    mass = run.timed("kernel_mass", kernel_mass, setup.kernel)
    h0_ok = abs(mass - 1.0) < 1e-6
    rep = run.timed("validate_hypotheses", validate_hypotheses, setup.nl)
    table = {"H0": {"ok": h0_ok, "detail": f"kernel mass = {mass:.9f}"}}
    for chk in rep.checks:
        table[chk.name] = {"ok": chk.ok, "detail": chk.detail,
                           "first_violation": chk.first_violation}
    return table, h0_ok and rep.all_ok


def cmd_validate(run: Run) -> int:
    table, ok = _hypothesis_table(run)
    report = run.base_report("validate")
    report["hypotheses"] = table
    report["all_ok"] = ok
    write_report(run.path(f"report_{report['command']}.json"), report)
    for name, row in table.items():
        print(f"{name}: {'pass' if row['ok'] else 'FAIL'}"
              + (f"  ({row['detail']})" if row["detail"] else ""))
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_dispersion(run: Run) -> int:
    _require_chis(run)
    setup = run.setup
    dcfg = run.cfg.get("dispersion") or {}
    c = float(dcfg.get("c", 1.0))
    zcfg = dcfg.get("z") or {}
    n = int(zcfg.get("n", 400))
    if n < 2:
        raise ConfigError("dispersion.z.n must be at least 2")
    dom0 = transform_domain(setup.chi0.kernel, c)
    z_hi_auto = min(mu_q(c, setup.chi0.q), mu_q(c, setup.chi_l.q))
    if math.isfinite(dom0.z_hi):
        z_hi_auto = min(z_hi_auto, 0.98 * ABSCISSA_MARGIN * dom0.z_hi)
    z_lo = float(zcfg.get("lo", 0.0))
    z_hi = float(zcfg["hi"]) if zcfg.get("hi") is not None else z_hi_auto
    if not (0.0 <= z_lo < z_hi):
        raise ConfigError("dispersion.z must satisfy 0 <= lo < hi")

    rows = []
    omitted = 0
    for z in np.linspace(z_lo, z_hi, n):
        try:
            rows.append((float(z), eval_R(setup.chi0, float(z), c),
                         eval_R(setup.chi_l, float(z), c)))
        except DomainExceeded:
            omitted += 1
    if omitted:
        run.warn("dispersion", f"{omitted} grid points beyond the transform "
                               "domain were omitted")
    if "csv" in run.formats:
        write_csv(run.path("dispersion.csv"), "dispersion", run.cfg_hash,
                  ["z", "chi0", "chiL"], rows)
    if "svg" in run.formats:
        arr = np.asarray(rows)
        line_chart(run.path("dispersion.svg"),
                   [(arr[:, 0], arr[:, 1], "chi0"),
                    (arr[:, 0], arr[:, 2], "chiL")],
                   title=f"{setup.name}: characteristic functions at c={c:g}",
                   xlabel="z", ylabel="value")

    rr0 = positive_roots(setup.chi0, c)
    rrl = positive_roots(setup.chi_l, c)
    report = run.base_report("dispersion")
    report["c"] = c
    report["rows"] = len(rows)
    report["omitted_rows"] = omitted
    report["chi0_roots"] = {"roots": list(rr0.roots), "is_double": rr0.is_double,
                            "min_value": rr0.min_value, "min_z": rr0.min_z}
    report["chiL_roots"] = {"roots": list(rrl.roots), "is_double": rrl.is_double,
                            "min_value": rrl.min_value, "min_z": rrl.min_z}
    write_report(run.path(f"report_{report['command']}.json"), report)
    print(f"dispersion: {len(rows)} rows written, chi0 roots {rr0.roots}, "
          f"chiL roots {rrl.roots}")
    return EXIT_OK


def _minimal_speeds(run: Run) -> tuple[Any, Any]:
    _require_chis(run)
    mcfg = run.cfg.get("minspeed") or {}
    bracket = mcfg.get("bracket")
    if bracket is not None:
        bracket = (float(bracket[0]), float(bracket[1]))
    star = run.timed("minspeed_chi0", minimal_speed, run.setup.chi0, bracket)
    lower = run.timed("minspeed_chiL", minimal_speed, run.setup.chi_l, bracket)
    for name, res in (("chi0", star), ("chiL", lower)):
        if res.bracket_capped:
            run.warn("minspeed", f"{name}: bracket growth hit its heuristic cap")
    return star, lower


def cmd_minspeed(run: Run) -> int:
    star, lower = _minimal_speeds(run)
    report = run.base_report("minspeed")
    report["c_star_linearized"] = star.c_min
    report["c_star_constructive"] = lower.c_min
    report["lambda_tangent_linearized"] = star.lambda_tangent
    report["lambda_tangent_constructive"] = lower.lambda_tangent
    report["ordering_ok"] = lower.c_min >= star.c_min - 1e-9
    report["evaluations"] = {"chi0": star.evaluations, "chiL": lower.evaluations}
    write_report(run.path(f"report_{report['command']}.json"), report)
    if "csv" in run.formats:
        write_csv(run.path("minspeed.csv"), "minspeed", run.cfg_hash,
                  ["function", "c_min", "lambda_tangent", "bracket_lo",
                   "bracket_hi", "evaluations"],
                  [("chi0", star.c_min, star.lambda_tangent,
                    star.bracket[0], star.bracket[1], star.evaluations),
                   ("chiL", lower.c_min, lower.lambda_tangent,
                    lower.bracket[0], lower.bracket[1], lower.evaluations)])
    print(f"c_* = {star.c_min:.9g} (tangent z = {star.lambda_tangent:.6g})")
    print(f"c_star = {lower.c_min:.9g} (tangent z = {lower.lambda_tangent:.6g})")
    print(f"ordering c_star >= c_*: {'ok' if report['ordering_ok'] else 'VIOLATED'}")
    return EXIT_OK


def cmd_profile(run: Run) -> int:
    _require_chis(run)
    setup = run.setup
    pcfg = run.cfg.get("profile") or {}
    reg_n = int(pcfg.get("reg_n", 50))
    tol = float(pcfg.get("tol", 1e-8))
    max_iter = int(pcfg.get("max_iter", 2000))

    grid = None
    if pcfg.get("grid"):
        gcfg = pcfg["grid"]
        try:
            grid = Grid.regular(float(gcfg["t_min"]), float(gcfg["t_max"]),
                                float(gcfg["h"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"profile.grid needs t_min, t_max, h: {exc}") from exc

    critical = bool(pcfg.get("critical", False))
    c_star = run.timed("minspeed_chiL", minimal_speed, setup.chi_l).c_min
    if critical:
        c = c_star
    elif pcfg.get("c") is not None:
        c = float(pcfg["c"])
    else:
        c = float(pcfg.get("factor_of_critical", 1.5)) * c_star
    if c < c_star - 1e-9 and not critical:
        run.warn("profile", f"requested speed c={c:g} is below the "
                            f"constructive minimum {c_star:g}; the envelope "
                            "construction is expected to fail")

    report = run.base_report("profile")
    report["c"] = c
    report["c_star_constructive"] = c_star
    problem = make_wave_problem(setup.nl, setup.kernel, c, grid=grid,
                                reg_n=reg_n)
    report["beta"] = problem.beta
    report["lambda"] = problem.lam
    report["m"] = problem.m
    report["delta"] = problem.delta
    report["grid"] = {"t_min": problem.grid.t_min, "t_max": problem.grid.t_max,
                      "h": problem.grid.h, "n": problem.grid.n}

    exit_code = EXIT_OK
    try:
        if critical:
            prof, crit = run.timed(
                "critical_speed_profile", critical_speed_profile, problem,
                int(pcfg.get("n_max", 16)), tol=tol, max_iter=max_iter)
            report["critical"] = {
                "levels": list(crit.levels), "speeds": list(crit.speeds),
                "gaps": list(crit.gaps), "window": list(crit.window),
                "derivative_bound": crit.derivative_bound,
                "derivative_max": list(crit.derivative_max), "kappa": crit.kappa}
        else:
            prof, trace = run.timed("solve_profile", solve_profile, problem,
                                    tol=tol, max_iter=max_iter)
            if not prof.converged:
                run.warn("solve_profile", "iteration did not converge; "
                                          "outputs hold the best iterate")
                exit_code = EXIT_NUMERIC
            report["iterations"] = prof.iterations
            report["converged"] = prof.converged
            report["residual_sup"] = prof.residual_sup
            report["tail_rate"] = prof.tail_rate
            if trace.notes:
                report["solver_notes"] = trace.notes
    except _NUMERIC_ERRORS as exc:
        run.warn("solve_profile", f"{type(exc).__name__}: {exc}")
        report["error"] = f"{type(exc).__name__}: {exc}"
        write_report(run.path(f"report_{report['command']}.json"), report)
        print(f"profile at c={c:.6g}: failed ({type(exc).__name__}); "
              "see the run report", file=sys.stderr)
        return EXIT_NUMERIC

    fps = fixed_points_of_fg(setup.nl)
    kappa = max(k for k, _ in fps.points)
    report["fixed_points"] = [{"kappa": k, "attracting": a} for k, a in fps.points]
    report["slope_ratio_at_zero"] = fps.g_over_f_slope0

    ode_res = run.timed("residual_ode", residual_ode, problem, prof)
    report["residual_ode"] = ode_res
    xi1 = float(pcfg.get("xi1", 0.5 * kappa))
    report["persistence"] = {"xi1": xi1,
                             "ok": persistence_check(problem, prof, xi1)}

    columns = ["t", "phi", "sub", "super", "residual_local"]
    t = problem.grid.t
    try:
        sub, sup = sub_super(problem)
    except NoAdmissibleM:
        sub = np.full(problem.grid.n, math.nan)
        sup = problem.delta * np.exp(problem.lam * t)
    h = problem.grid.h
    phi = prof.values
    res_local = np.full(problem.grid.n, math.nan)
    interior = ode_interior(problem)
    d2 = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / (h * h)
    d1 = (phi[2:] - phi[:-2]) / (2 * h)
    from .profile import _convolve  # local import to keep the public surface small
    k2 = problem.k2_sampler()
    conv = _convolve(np.asarray(setup.nl.g(phi), dtype=float), k2.j_lo,
                     k2.weights, k2.atoms, problem.grid)
    full = d2 - c * d1 - np.asarray(setup.nl.f(phi[1:-1]), dtype=float) + conv[1:-1]
    res_local[interior] = full[interior.start - 1: interior.stop - 1]
    data = [t, phi, sub, sup, res_local]

    psi = None
    if setup.epidemic is not None:
        psi = epidemic_reconstruct(setup.epidemic, prof, c)
    elif setup.population is not None:
        psi = population_reconstruct(setup.population, prof, c)
    if psi is not None:
        columns.append("psi")
        data.append(psi)

    if "csv" in run.formats:
        write_csv(run.path("profile.csv"), "profile", run.cfg_hash, columns,
                  zip(*data))
    if "svg" in run.formats:
        series = [(t, phi, "phi"), (t, sup, "super")]
        if not np.all(np.isnan(sub)):
            series.append((t, sub, "sub"))
        if psi is not None:
            series.append((t, psi, "psi"))
        line_chart(run.path("profile.svg"), series,
                   title=f"{setup.name}: profile at c={c:g}",
                   xlabel="t", ylabel="density")
    write_report(run.path(f"report_{report['command']}.json"), report)
    print(f"profile at c={c:.6g}: residual_ode={ode_res:.3e}, "
          f"persistence={report['persistence']['ok']}")
    return exit_code


COMMANDS = {
    "validate": cmd_validate,
    "dispersion": cmd_dispersion,
    "minspeed": cmd_minspeed,
    "profile": cmd_profile,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="semiwave",
        description="Minimal wave speeds and semi-wavefront profiles for "
                    "non-local delayed reaction-diffusion equations.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--format", default=None,
                        help="comma-separated output formats (csv,svg)")
    parser.add_argument("--seedless", action="store_true",
                        help="reserved; no randomness exists in this tool")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    try:
        run = Run(args)
        code = COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidParameter as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SemiwaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


if __name__ == "__main__":
    sys.exit(main())
