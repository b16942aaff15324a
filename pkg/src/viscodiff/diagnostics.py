"""Runtime monitors: norms, mass, Lyapunov functional, estimate checks.

All L2-type norms are weighted by the consistent mass matrix and the
H1 seminorms use the unit stiffness form, so values change only by
quadrature error under mesh refinement.  Cumulative time integrals use
the trapezoid rule at the recording cadence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .coefficients import LongTimeCondition
from .discretization import (
    BoundaryData,
    Mesh,
    mass_diagonals,
    stiffness_diagonals,
    tridiag_matvec,
)

__all__ = [
    "DiagnosticsRecord",
    "CheckReport",
    "CSV_COLUMNS",
    "record",
    "homogenization_metric",
    "lyapunov_decay_check",
    "apriori_scaling_check",
    "mass_balance_check",
    "format_csv",
]

CSV_COLUMNS = ("t", "mass", "l2_u", "h1semi_u", "l2_s", "h1semi_s",
               "lyapunov", "cum_grad_u", "cum_grad_s", "u_min", "u_max")

# absolute slack per step in decay checks, absorbing linear-solver round-off
DECAY_STEP_SLACK = 1e-8


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    l2_u: float
    h1semi_u: float
    l2_s: float
    h1semi_s: float
    lyapunov: float
    cum_grad_u: float
    cum_grad_s: float
    u_min: float
    u_max: float


@dataclass
class CheckReport:
    ok: bool
    name: str
    message: str
    first_violation: Optional[int] = None
    details: dict = None

    def __post_init__(self):
        if self.details is None:
            self.details = {}

    def __bool__(self):
        return self.ok


# small cache of quadrature weights keyed by mesh geometry
_WEIGHTS: dict[tuple[float, int], tuple] = {}


def _weights(mesh: Mesh):
    key = (mesh.L, mesh.N)
    if key not in _WEIGHTS:
        mm, mo = mass_diagonals(mesh)
        km, ko = stiffness_diagonals(mesh, np.ones(mesh.N + 1))
        _WEIGHTS[key] = (mm, mo, km, ko)
    return _WEIGHTS[key]


def _l2_sq(mesh: Mesh, v: np.ndarray) -> float:
    mm, mo, _, _ = _weights(mesh)
    return float(np.dot(v, tridiag_matvec(mm, mo, v)))


def _h1semi_sq(mesh: Mesh, v: np.ndarray) -> float:
    _, _, km, ko = _weights(mesh)
    return float(np.dot(v, tridiag_matvec(km, ko, v)))


def _total_mass(mesh: Mesh, v: np.ndarray) -> float:
    mm, mo, _, _ = _weights(mesh)
    return float(np.sum(tridiag_matvec(mm, mo, v)))


def record(state, mesh: Mesh, lt: Optional[LongTimeCondition] = None,
           gamma: float = 1.0,
           prev: Optional[DiagnosticsRecord] = None) -> DiagnosticsRecord:
    """Snapshot the monitored quantities for one state.

    ``lt`` (or the plain ``gamma`` fallback) sets the weight of the
    concentration term in the Lyapunov functional; ``prev`` continues
    the running time integrals of the squared gradients.
    """
    G = lt.Gamma if lt is not None else gamma
    if G <= 0:
        raise ValueError("Gamma must be positive")
    u, s = state.u, state.sigma_v
    l2u_sq = max(_l2_sq(mesh, u), 0.0)
    h1u_sq = max(_h1semi_sq(mesh, u), 0.0)
    l2s_sq = max(_l2_sq(mesh, s), 0.0)
    h1s_sq = max(_h1semi_sq(mesh, s), 0.0)
    if prev is None:
        cum_u = cum_s = 0.0
    else:
        dt = state.t - prev.t
        cum_u = prev.cum_grad_u + 0.5 * dt * (prev.h1semi_u ** 2 + h1u_sq)
        cum_s = prev.cum_grad_s + 0.5 * dt * (prev.h1semi_s ** 2 + h1s_sq)
    return DiagnosticsRecord(
        t=float(state.t),
        mass=_total_mass(mesh, u),
        l2_u=float(np.sqrt(l2u_sq)),
        h1semi_u=float(np.sqrt(h1u_sq)),
        l2_s=float(np.sqrt(l2s_sq)),
        h1semi_s=float(np.sqrt(h1s_sq)),
        lyapunov=0.5 * G * G * l2u_sq + 0.5 * h1s_sq,
        cum_grad_u=cum_u,
        cum_grad_s=cum_s,
        u_min=float(np.min(u)),
        u_max=float(np.max(u)),
    )


def homogenization_metric(state, mesh: Mesh) -> float:
    """Mass-weighted L2 distance of u from its mesh mean; zero iff constant."""
    ubar = _total_mass(mesh, state.u) / mesh.L
    return float(np.sqrt(max(_l2_sq(mesh, state.u - ubar), 0.0)))


def lyapunov_decay_check(series: Sequence[DiagnosticsRecord],
                         lt: LongTimeCondition,
                         tol: float = DECAY_STEP_SLACK) -> CheckReport:
    """Monotone decay of the Lyapunov functional plus the implied gradient bound.

    Intended for runs with no interior forcing and zero influx.  Checks
    per-step non-increase (with per-step slack) and that the cumulative
    gradient integrals stay below lyapunov(0)/min(Gamma_0*Gamma^2, Gamma_0).
    """
    G, G0 = lt.Gamma, lt.Gamma_0
    lyap0 = series[0].lyapunov
    bound = lyap0 / min(G0 * G * G, G0) + tol
    for k in range(1, len(series)):
        if series[k].lyapunov > series[k - 1].lyapunov + tol:
            return CheckReport(
                ok=False, name="lyapunov_decay", first_violation=k,
                message=(f"Lyapunov increase at step {k} (t={series[k].t:.6g}): "
                         f"{series[k - 1].lyapunov:.12g} -> "
                         f"{series[k].lyapunov:.12g}"))
        if series[k].cum_grad_u > bound or series[k].cum_grad_s > bound:
            return CheckReport(
                ok=False, name="lyapunov_decay", first_violation=k,
                message=(f"cumulative gradient integral exceeds the decay bound "
                         f"{bound:.6g} at step {k}"))
    # combined dissipation inequality: the implicit scheme controls the
    # right-endpoint quadrature of the gradient integrals, so rebuild it
    # here rather than using the trapezoid running totals
    combined_ok = True
    cum_right = 0.0
    w = G0 * min(G * G, 1.0)
    for k in range(1, len(series)):
        dt = series[k].t - series[k - 1].t
        cum_right += dt * (series[k].h1semi_u ** 2 + series[k].h1semi_s ** 2)
        if series[k].lyapunov + w * cum_right > lyap0 + tol * (k + 1):
            combined_ok = False
            break
    return CheckReport(
        ok=True, name="lyapunov_decay",
        message=f"non-increasing over {len(series)} records "
                f"(initial {lyap0:.6g}, final {series[-1].lyapunov:.6g})",
        details={"gradient_bound": bound, "combined_estimate_ok": combined_ok})


def mass_balance_check(series: Sequence[DiagnosticsRecord], bd: BoundaryData,
                       tol: float = 1e-10) -> CheckReport:
    """Total mass must track the time-accumulated boundary influx exactly.

    Assumes the series was recorded every step, so the accumulated
    influx matches the stepping rule term by term.
    """
    influx = 0.0
    scale = 1.0 + abs(series[0].mass)
    for k in range(1, len(series)):
        dt = series[k].t - series[k - 1].t
        influx += dt * (float(bd.phi_left(series[k].t))
                        + float(bd.phi_right(series[k].t)))
        drift = series[k].mass - series[0].mass - influx
        if abs(drift) > tol * scale:
            return CheckReport(
                ok=False, name="mass_balance", first_violation=k,
                message=(f"mass drift {drift:.3e} at step {k} "
                         f"(t={series[k].t:.6g}) exceeds {tol:g} relative"))
    return CheckReport(
        ok=True, name="mass_balance",
        message=(f"mass tracks influx over {len(series) - 1} steps "
                 f"(net gain {series[-1].mass - series[0].mass:.12g})"))


def apriori_scaling_check(runs: Mapping[float, "RunResult"],
                          margin: float = 0.1) -> CheckReport:
    """Boundedness of the regularization-energy family across epsilon.

    The epsilon-weighted H2-type energies of each run must stay within
    (1 + margin) of the largest-epsilon run's values, and the sup-in-time
    H1 norm of the stress must stay within the relative margin across
    the family.  A single run passes vacuously.
    """
    if len(runs) <= 1:
        return CheckReport(ok=True, name="apriori_scaling",
                           message="single run: vacuously bounded")
    eps_sorted = sorted(runs, reverse=True)
    ref = runs[eps_sorted[0]]
    details = {
        "reg_energy_u": {e: runs[e].reg_energy_u for e in eps_sorted},
        "reg_energy_s": {e: runs[e].reg_energy_s for e in eps_sorted},
        "dual_time_derivative": {e: runs[e].dual_time_derivative
                                 for e in eps_sorted},
        "sup_h1_s": {e: runs[e].sup_h1_s for e in eps_sorted},
    }
    floor = 1e-12
    for e in eps_sorted[1:]:
        r = runs[e]
        if r.reg_energy_u > (1 + margin) * ref.reg_energy_u + floor:
            return CheckReport(
                ok=False, name="apriori_scaling", details=details,
                message=(f"eps-weighted H2 energy of u grows: "
                         f"{r.reg_energy_u:.6g} at eps={e:g} vs "
                         f"{ref.reg_energy_u:.6g} at eps={eps_sorted[0]:g}"))
        if r.reg_energy_s > (1 + margin) * ref.reg_energy_s + floor:
            return CheckReport(
                ok=False, name="apriori_scaling", details=details,
                message=f"eps-weighted H2 energy of stress grows at eps={e:g}")
    sup_vals = [runs[e].sup_h1_s for e in eps_sorted]
    lo, hi = min(sup_vals), max(sup_vals)
    if hi > (1 + margin) * lo + floor:
        return CheckReport(
            ok=False, name="apriori_scaling", details=details,
            message=(f"sup-in-time H1 norm of stress spreads beyond "
                     f"{margin:.0%}: [{lo:.6g}, {hi:.6g}]"))
    dual_vals = [runs[e].dual_time_derivative for e in eps_sorted]
    details["dual_bounded"] = max(dual_vals) <= (1 + margin) * dual_vals[0] + floor
    return CheckReport(
        ok=True, name="apriori_scaling", details=details,
        message=(f"bounded across eps={eps_sorted}: sup H1(s) in "
                 f"[{lo:.6g}, {hi:.6g}]"))


def format_csv(series: Sequence[DiagnosticsRecord],
               header_note: Optional[str] = None) -> str:
    """Render a diagnostics series as CSV with the documented column order."""
    lines = []
    if header_note is not None:
        lines.append(f"# {header_note}")
    lines.append(",".join(CSV_COLUMNS))
    for r in series:
        lines.append(",".join(
            format(getattr(r, c), ".17g") for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"
