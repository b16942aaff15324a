"""Command-line driver.

Verbs:
    run CONFIG            simulate a scenario file
    preset NAME           simulate a built-in scenario
    check-assumptions CONFIG   sampled coefficient bounds / ellipticity
    find-gamma CONFIG     scan for a decay-condition weight Gamma
    eps-scan [CONFIG]     regularization-strength sweep with stability checks

Exit codes: 0 success, 1 a check failed, 2 configuration error,
3 numerical failure during time stepping.
"""

from __future__ import annotations

import argparse
import datetime
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import config as cfgmod
from .coefficients import (
    EllipticityViolation,
    GammaSearchFailure,
    LongTimeCondition,
    LongTimeConditionFailure,
    check_assumptions,
    check_longtime_condition,
    find_gamma,
)
from .config import ConfigError, ScenarioConfig, parse_config, preset_config
from .diagnostics import (
    CheckReport,
    apriori_scaling_check,
    homogenization_metric,
    lyapunov_decay_check,
    mass_balance_check,
    record,
)
from .discretization import assemble_mass
from .output import write_diagnostics, write_flux, write_snapshot
from .solver import (
    LinearSolveFailure,
    NumericalFailure,
    RunResult,
    compute_flux,
    reconstruct_sigma,
    run,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3

EPS_SCAN_VALUES = (1e-2, 1e-3, 1e-4)


# ---------------------------------------------------------------------------
# signature trackers (phenomenology scans; never gate the exit code)


class _ExtremaTracker:
    """Running extrema of the nodal concentration over the whole run."""

    def __init__(self):
        self.max_over_time = -math.inf
        self.min_over_time = math.inf
        self.terminal_max = None
        self.terminal_min = None
        self.amplitude = 0.0

    def __call__(self, state):
        umax = float(np.max(state.u))
        umin = float(np.min(state.u))
        self.max_over_time = max(self.max_over_time, umax)
        self.min_over_time = min(self.min_over_time, umin)
        self.amplitude = max(self.amplitude, umax - umin)
        self.terminal_max, self.terminal_min = umax, umin

    def overshoot(self) -> tuple[bool, str]:
        scale = max(self.amplitude, 1e-12)
        excess = self.max_over_time - self.terminal_max
        return excess > 0.01 * scale, (
            f"peak u {self.max_over_time:.6g} vs terminal max "
            f"{self.terminal_max:.6g} (excess {excess:.3g})")

    def undershoot(self) -> tuple[bool, str]:
        scale = max(self.amplitude, 1e-12)
        deficit = self.terminal_min - self.min_over_time
        return deficit > 0.01 * scale, (
            f"trough u {self.min_over_time:.6g} vs terminal min "
            f"{self.terminal_min:.6g} (deficit {deficit:.3g})")


class _FrontTracker:
    """Rightmost threshold crossing of u, sampled every step.

    The crossing position is linearly interpolated between nodes; times
    and positions with the front strictly inside the domain are kept for
    the linear-in-t versus sqrt-t least-squares comparison.
    """

    def __init__(self, mesh, threshold: float):
        self.x = mesh.nodes
        self.L = mesh.L
        self.threshold = threshold
        self.times: list[float] = []
        self.positions: list[float] = []

    def __call__(self, state):
        u, c = state.u, self.threshold
        above = u >= c
        if not above.any() or above.all():
            return
        idx = np.nonzero(above[:-1] & ~above[1:])[0]
        if idx.size == 0:
            return
        i = int(idx[-1])
        frac = (c - u[i]) / (u[i + 1] - u[i])
        xf = float(self.x[i] + frac * (self.x[i + 1] - self.x[i]))
        if 0.0 < xf < self.L and state.t > 0:
            self.times.append(float(state.t))
            self.positions.append(xf)

    def fit(self) -> tuple[Optional[bool], str]:
        """(linear beats sqrt-t or None if untrackable, description)."""
        if len(self.times) < 10:
            return None, f"front tracked at only {len(self.times)} times"
        t = np.asarray(self.times)
        xf = np.asarray(self.positions)

        def rms(basis):
            A = np.column_stack([np.ones_like(t), basis])
            coef, *_ = np.linalg.lstsq(A, xf, rcond=None)
            return float(np.sqrt(np.mean((A @ coef - xf) ** 2)))

        r_lin = rms(t)
        r_sqrt = rms(np.sqrt(t))
        return r_lin < r_sqrt, (
            f"front fit residuals: linear {r_lin:.4g}, sqrt-t {r_sqrt:.4g} "
            f"over {len(self.times)} samples")


class _MultiObserver:
    def __init__(self, *observers):
        self.observers = [o for o in observers if o is not None]

    def __call__(self, state):
        for o in self.observers:
            o(state)


# ---------------------------------------------------------------------------
# scenario execution


def _override(cfg: ScenarioConfig, dt: Optional[float],
              n_cells: Optional[int]) -> ScenarioConfig:
    values = dict(cfg.values)
    if dt is not None:
        if dt <= 0:
            raise ConfigError("--dt must be positive", key="time.dt")
        values["time.dt"] = float(dt)
    if n_cells is not None:
        if n_cells < 2:
            raise ConfigError("--n-cells must be at least 2", key="mesh.N")
        values["mesh.N"] = int(n_cells)
    return ScenarioConfig(values=values)


def _longtime(cfg: ScenarioConfig, model):
    """Resolve the decay-condition weight, or None when not requested."""
    if not cfgmod.has_longtime(cfg):
        return None
    box = cfgmod.longtime_box(cfg)
    n = cfg.get("longtime.n_samples", 4096)
    if "longtime.Gamma" in cfg.values:
        return check_longtime_condition(model, cfg["longtime.Gamma"], box, n)
    grid = cfg.get("longtime.gamma_grid") or list(np.geomspace(0.1, 10.0, 25))
    return find_gamma(model, box, grid, n)


def _analytic_error(cfg: ScenarioConfig, mesh, final_state) -> float:
    """Mass-weighted L2 error against the decaying cosine solution."""
    kind, p = cfg.group("initial.u0")
    if kind != "cosine":
        raise ConfigError('check.analytic = "heat-cosine" requires a cosine '
                          "initial profile", key="check.analytic")
    _, dp = cfg.group("model.D0")
    if cfg["model.D0"] != "constant":
        raise ConfigError('check.analytic = "heat-cosine" requires constant '
                          "diffusivity", key="check.analytic")
    lam = dp["value"] * (p["mode"] * math.pi / mesh.L) ** 2
    exact = p["mean"] + p["amplitude"] * math.exp(-lam * final_state.t) \
        * np.cos(p["mode"] * math.pi * mesh.nodes / mesh.L)
    err = final_state.u - exact
    M = assemble_mass(mesh)
    return float(np.sqrt(max(err @ (M @ err), 0.0)))


def _execute(cfg: ScenarioConfig, quiet: bool):
    """Build and run one scenario; returns everything the writers need."""
    mesh = cfgmod.build_mesh_from(cfg)
    phys = cfgmod.build_physical(cfg)
    model = cfgmod.build_model(cfg)
    bd = cfgmod.build_boundary(cfg)
    try:
        bd.validate(cfg["time.T_end"])
        init = cfgmod.build_initial(cfg, mesh, phys)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    scfg = cfgmod.build_solver_config(cfg)

    lt = _longtime(cfg, model)
    gamma = lt.Gamma if lt is not None else 1.0

    extrema = _ExtremaTracker()
    front = None
    if cfg["signature"] == "front":
        front = _FrontTracker(mesh, cfg.get("front.threshold", 0.5))
    observer = _MultiObserver(extrema, front)

    output_every = cfg["time.output_every"] or None
    result = run(init, mesh, model, bd, scfg, output_every=output_every,
                 gamma=gamma, observer=observer)
    return mesh, phys, bd, lt, result, extrema, front


def _signature_lines(cfg: ScenarioConfig, extrema, front) -> list[str]:
    kind = cfg["signature"]
    if kind == "none":
        return []
    if kind == "overshoot":
        found, desc = extrema.overshoot()
    elif kind == "undershoot":
        found, desc = extrema.undershoot()
    else:
        found, desc = front.fit()
    verdict = "yes" if found else "no"
    return [f"signature detected: {verdict}",
            f"signature kind: {kind}", f"signature detail: {desc}"]


def _run_checks(cfg: ScenarioConfig, mesh, bd, lt, result) -> list[CheckReport]:
    checks = []
    if cfg["check.mass_balance"]:
        checks.append(mass_balance_check(result.records, bd))
    if cfg["check.lyapunov"]:
        if lt is None:
            checks.append(CheckReport(
                ok=False, name="lyapunov_decay",
                message="check.lyapunov requires a longtime section"))
        else:
            checks.append(lyapunov_decay_check(result.records, lt))
    if "check.analytic" in cfg.values:
        if cfg["check.analytic"] != "heat-cosine":
            raise ConfigError(
                f"unknown analytic reference {cfg['check.analytic']!r}",
                key="check.analytic")
        tol = cfg.get("check.analytic_tol", 1e-2)
        err = _analytic_error(cfg, mesh, result.final_state)
        checks.append(CheckReport(
            ok=err <= tol, name="analytic",
            message=f"L2 error vs decaying cosine {err:.6g} "
                    f"({'within' if err <= tol else 'exceeds'} {tol:g})"))
    return checks


def _write_outputs(outdir: Path, cfg: ScenarioConfig, mesh, phys, lt,
                   result, extrema, front,
                   checks: list[CheckReport]) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    write_diagnostics(outdir / "diagnostics.csv", result.records,
                      header_note=f"generated {stamp}")
    for k, state in enumerate(result.trajectory):
        sigma = reconstruct_sigma(state, phys)
        write_snapshot(outdir / f"snapshot_{k}.csv", mesh.nodes, state.u,
                       state.sigma_v, sigma)
        write_flux(outdir / f"flux_{k}.csv", mesh.midpoints,
                   compute_flux(state, mesh, phys))
    (outdir / "config.txt").write_text(cfgmod.serialize_config(cfg))

    final = result.final_state
    rec = result.records[-1]
    lines = [
        f"final time: {final.t:.17g}",
        f"final mass: {rec.mass:.17g}",
        f"final u range: [{rec.u_min:.17g}, {rec.u_max:.17g}]",
        f"final homogenization metric: "
        f"{homogenization_metric(final, mesh):.17g}",
    ]
    if lt is not None:
        lines.append(f"longtime condition: Gamma={lt.Gamma:.17g} "
                     f"Gamma_0={lt.Gamma_0:.17g}")
        below = next((r.t for r in result.records
                      if homogenization_from_record(r, mesh.L) < 1e-4), None)
        if below is not None:
            lines.append(f"homogenization metric first below 1e-4 at "
                         f"t={below:.6g}")
    for c in checks:
        lines.append(f"check {c.name}: {'PASS' if c.ok else 'FAIL'} "
                     f"- {c.message}")
    lines.extend(_signature_lines(cfg, extrema, front))
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")


def homogenization_from_record(rec, L: float) -> float:
    """Deviation-from-mean norm recovered from a diagnostics record.

    With ubar = mass/L the orthogonal split gives
    |u - ubar|^2 = |u|^2 - mass^2 / L exactly.
    """
    return math.sqrt(max(rec.l2_u ** 2 - rec.mass ** 2 / L, 0.0))


def _cmd_run(cfg: ScenarioConfig, outdir: Path, quiet: bool) -> int:
    try:
        mesh, phys, bd, lt, result, extrema, front = _execute(cfg, quiet)
    except (LongTimeConditionFailure, GammaSearchFailure,
            EllipticityViolation) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (NumericalFailure, LinearSolveFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE

    checks = _run_checks(cfg, mesh, bd, lt, result)
    _write_outputs(outdir, cfg, mesh, phys, lt, result, extrema, front, checks)
    if not quiet:
        rec = result.records[-1]
        print(f"completed {len(result.records) - 1} steps to "
              f"t={result.final_state.t:g}; final mass {rec.mass:.12g}")
        for c in checks:
            print(f"check {c.name}: {'PASS' if c.ok else 'FAIL'} - {c.message}")
        print(f"outputs in {outdir}")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_CHECK_FAILED


def _cmd_check_assumptions(cfg: ScenarioConfig, quiet: bool) -> int:
    model = cfgmod.build_model(cfg)
    box = cfgmod.longtime_box(cfg)
    n = cfg.get("longtime.n_samples", 4096)
    try:
        bounds = check_assumptions(model, box, n_samples=n)
    except EllipticityViolation as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    if not quiet:
        print(f"ellipticity constant d = {bounds.d:.6g}")
        for name in ("K_D", "K_E", "K_beta", "K_mu", "K_f", "K_g"):
            print(f"{name} = {getattr(bounds, name):.6g}")
    return EXIT_OK


def _cmd_find_gamma(cfg: ScenarioConfig, quiet: bool) -> int:
    model = cfgmod.build_model(cfg)
    box = cfgmod.longtime_box(cfg)
    grid = cfg.get("longtime.gamma_grid") or list(np.geomspace(0.1, 10.0, 25))
    n = cfg.get("longtime.n_samples", 4096)
    try:
        lt = find_gamma(model, box, grid, n_samples=n)
    except GammaSearchFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"Gamma = {lt.Gamma:.12g}")
    print(f"Gamma_0 = {lt.Gamma_0:.12g}")
    return EXIT_OK


def _cmd_eps_scan(cfg: ScenarioConfig, outdir: Path, quiet: bool) -> int:
    def run_one(eps: float) -> RunResult:
        values = dict(cfg.values)
        values["epsilon"] = eps
        c = ScenarioConfig(values=values)
        mesh = cfgmod.build_mesh_from(c)
        phys = cfgmod.build_physical(c)
        model = cfgmod.build_model(c)
        bd = cfgmod.build_boundary(c)
        init = cfgmod.build_initial(c, mesh, phys)
        return run(init, mesh, model, bd, cfgmod.build_solver_config(c))

    all_eps = (0.0,) + EPS_SCAN_VALUES
    try:
        with ThreadPoolExecutor(max_workers=len(all_eps)) as pool:
            results = dict(zip(all_eps, pool.map(run_one, all_eps)))
    except (NumericalFailure, LinearSolveFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE

    mesh = cfgmod.build_mesh_from(cfg)
    M = assemble_mass(mesh)
    u_ref = results[0.0].final_state.u

    def dist(eps: float) -> float:
        d = results[eps].final_state.u - u_ref
        return float(np.sqrt(max(d @ (M @ d), 0.0)))

    scaling = apriori_scaling_check({e: results[e] for e in EPS_SCAN_VALUES})
    distances = {e: dist(e) for e in EPS_SCAN_VALUES}
    ordered = sorted(EPS_SCAN_VALUES, reverse=True)
    monotone = all(distances[a] >= distances[b] - 1e-14
                   for a, b in zip(ordered, ordered[1:]))
    checks = [scaling, CheckReport(
        ok=monotone, name="eps_convergence",
        message="terminal L2 distance to the unregularized run "
                + ("decreases" if monotone else "does not decrease")
                + " with epsilon: "
                + ", ".join(f"{e:g}: {distances[e]:.6g}" for e in ordered))]

    outdir.mkdir(parents=True, exist_ok=True)
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    lines = [f"epsilon scan over {list(all_eps)}"]
    for e in all_eps:
        r = results[e]
        lines.append(f"eps={e:g}: sup H1(s)={r.sup_h1_s:.8g} "
                     f"regE_u={r.reg_energy_u:.8g} "
                     f"regE_s={r.reg_energy_s:.8g} "
                     f"dual={r.dual_time_derivative:.8g}"
                     + (f" dist_to_eps0={distances[e]:.8g}" if e else ""))
    for c in checks:
        lines.append(f"check {c.name}: {'PASS' if c.ok else 'FAIL'} "
                     f"- {c.message}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    for e in all_eps:
        tag = f"{e:g}".replace(".", "p").replace("-", "m")
        write_diagnostics(outdir / f"diagnostics_eps_{tag}.csv",
                          results[e].records,
                          header_note=f"generated {stamp} (eps={e:g})")
    if not quiet:
        for line in lines:
            print(line)
    return EXIT_OK if all(c.ok for c in checks) else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viscodiff",
        description="1D coupled concentration/stress diffusion simulator")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, needs_out=True):
        if needs_out:
            p.add_argument("--out", default="viscodiff_out",
                           help="output directory (default: viscodiff_out)")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")
        p.add_argument("--dt", type=float, default=None,
                       help="override the time step")
        p.add_argument("--n-cells", type=int, default=None,
                       help="override the number of mesh cells")

    p_run = sub.add_parser("run", help="simulate a scenario file")
    p_run.add_argument("config", help="path to a scenario file")
    common(p_run)

    p_pre = sub.add_parser("preset", help="simulate a built-in scenario")
    p_pre.add_argument("name", choices=sorted(cfgmod.PRESETS),
                       help="preset name")
    common(p_pre)

    p_chk = sub.add_parser("check-assumptions",
                           help="sampled coefficient bounds on the declared box")
    p_chk.add_argument("config", help="path to a scenario file")
    common(p_chk, needs_out=False)

    p_fg = sub.add_parser("find-gamma",
                          help="scan for a decay-condition weight")
    p_fg.add_argument("config", help="path to a scenario file")
    common(p_fg, needs_out=False)

    p_es = sub.add_parser("eps-scan",
                          help="regularization-strength sweep")
    p_es.add_argument("config", nargs="?", default=None,
                      help="base scenario file (default: built-in eps-scan)")
    common(p_es)
    return parser


def _load_config(args) -> ScenarioConfig:
    if args.verb == "preset":
        cfg = preset_config(args.name)
    elif args.verb == "eps-scan" and args.config is None:
        cfg = preset_config("eps-scan")
    else:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"no such file: {path}")
        cfg = parse_config(path.read_text())
    return _override(cfg, args.dt, args.n_cells)


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.verb in ("run", "preset"):
            return _cmd_run(cfg, Path(args.out), args.quiet)
        if args.verb == "check-assumptions":
            return _cmd_check_assumptions(cfg, args.quiet)
        if args.verb == "find-gamma":
            return _cmd_find_gamma(cfg, args.quiet)
        if args.verb == "eps-scan":
            return _cmd_eps_scan(cfg, Path(args.out), args.quiet)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (NumericalFailure, LinearSolveFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE
    raise AssertionError(f"unhandled verb {args.verb!r}")


if __name__ == "__main__":
    sys.exit(main())
