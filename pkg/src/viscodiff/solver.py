"""Semi-implicit time stepping for the coupled concentration/stress system.

Each step lags the coefficient fields to the previous state, solves the
concentration update implicitly in the diffusion term (banded SPD
solve), then updates the transformed stress nodewise with the decay
term implicit and the new concentration driving it.  An optional
fourth-order regularization term (strength epsilon) can be added to
both equations; it turns the stress update into a banded solve too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded, solveh_banded

from .coefficients import PhysicalCoefficients, TransformedModel
from .diagnostics import DiagnosticsRecord, record
from .discretization import (
    BoundaryData,
    DiscreteOperators,
    Mesh,
    boundary_functional,
    stiffness_diagonals,
    tridiag_matvec,
)

__all__ = [
    "State",
    "SolverConfig",
    "InitialData",
    "RunResult",
    "NumericalFailure",
    "LinearSolveFailure",
    "step",
    "step_regularized",
    "run",
    "compute_flux",
    "reconstruct_sigma",
]


class NumericalFailure(Exception):
    """Non-finite state detected; carries the offending step index and time."""

    def __init__(self, step_index: int, t: float, what: str):
        self.step_index = step_index
        self.t = t
        super().__init__(f"non-finite {what} at step {step_index}, t={t:.6g}")


class LinearSolveFailure(Exception):
    """Singular or indefinite step system (discrete ellipticity violation)."""


@dataclass
class State:
    """Time plus nodal concentration u and transformed stress varsigma."""

    t: float
    u: np.ndarray
    sigma_v: np.ndarray

    def check(self, mesh: Mesh) -> None:
        n = mesh.N + 1
        if self.u.shape != (n,) or self.sigma_v.shape != (n,):
            raise ValueError("field lengths do not match the mesh")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.sigma_v))):
            raise ValueError("state contains non-finite entries")

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.sigma_v.copy())


@dataclass
class SolverConfig:
    dt: float
    T_end: float
    epsilon: float = 0.0
    stress_scheme: str = "implicit-decay"
    coefficient_lag: str = "previous-step"
    newton_free: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.T_end < 0:
            raise ValueError("T_end must be non-negative")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.stress_scheme not in ("implicit-decay", "explicit"):
            raise ValueError(f"unknown stress scheme {self.stress_scheme!r}")
        if self.coefficient_lag != "previous-step":
            raise ValueError("only previous-step coefficient lagging is supported")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / self.dt))


class InitialData:
    """Initial concentration and physical stress; transformed stress derived."""

    def __init__(self, u0, sigma0, phys: PhysicalCoefficients):
        self.u0 = np.asarray(u0, dtype=float)
        self.sigma0 = np.asarray(sigma0, dtype=float)
        if self.u0.shape != self.sigma0.shape:
            raise ValueError("u0 and sigma0 must have the same shape")
        if not (np.all(np.isfinite(self.u0)) and np.all(np.isfinite(self.sigma0))):
            raise ValueError("initial data must be finite")
        shift = np.asarray(phys.nu0_antiderivative(self.u0), dtype=float)
        self.varsigma0 = self.sigma0 - shift
        # round-trip consistency of the change of variables
        back = self.varsigma0 + shift
        if np.max(np.abs(back - self.sigma0)) > 1e-12 * (
                1.0 + np.max(np.abs(self.sigma0))):
            raise ValueError("change of variables is not self-consistent")
        self._antiderivative = phys.nu0_antiderivative

    def initial_state(self) -> State:
        return State(t=0.0, u=self.u0.copy(), sigma_v=self.varsigma0.copy())


def reconstruct_sigma(state: State, phys: PhysicalCoefficients) -> np.ndarray:
    """Physical stress sigma = varsigma + int_0^u nu0."""
    return state.sigma_v + np.asarray(phys.nu0_antiderivative(state.u), dtype=float)


def compute_flux(state: State, mesh: Mesh,
                 phys: PhysicalCoefficients) -> np.ndarray:
    """Element-centered flux J = -D0 u' - E0 sigma' + M0 u."""
    sigma = reconstruct_sigma(state, phys)
    du = np.diff(state.u) / mesh.h
    dsig = np.diff(sigma) / mesh.h
    um = 0.5 * (state.u[:-1] + state.u[1:])
    sm = 0.5 * (sigma[:-1] + sigma[1:])
    xm = mesh.midpoints
    t = state.t
    D0 = np.asarray(phys.D0(t, xm, um, sm), dtype=float)
    E0 = np.asarray(phys.E0(t, xm, um, sm), dtype=float)
    M0 = np.asarray(phys.M0(t, xm, um, sm), dtype=float)
    return -D0 * du - E0 * dsig + M0 * um


class _Stepper:
    """Per-run workspace: pre-assembled operators and the step kernel."""

    def __init__(self, mesh: Mesh, model: TransformedModel, bd: BoundaryData,
                 cfg: SolverConfig):
        self.mesh = mesh
        self.model = model
        self.bd = bd
        self.cfg = cfg
        self.ops = DiscreteOperators.build(mesh)
        self.n = mesh.N + 1
        if cfg.epsilon > 0:
            # lumped-mass-weighted regularization, symmetric pentadiagonal
            ml = sp.diags(self.ops.lumped)
            self.reg_u = sp.csr_matrix(ml @ self.ops.bilaplacian)
            self.reg_s = sp.csr_matrix(self.ops.bilaplacian)
        else:
            self.reg_u = None
            self.reg_s = None

    def _coefficient_fields(self, state: State):
        t, x = state.t, self.mesh.nodes
        u, s = state.u, state.sigma_v
        shape = (self.n,)
        def full(v):
            return np.broadcast_to(np.asarray(v, dtype=float), shape)
        return (full(self.model.D(t, x, u, s)),
                full(self.model.E(t, x, u, s)),
                full(self.model.f(t, x, u, s)),
                full(self.model.beta1(t, x, u, s)),
                full(self.model.gamma(t, x, u, s)))

    def advance(self, state: State, step_index: int = 0) -> State:
        mesh, cfg = self.mesh, self.cfg
        dt = cfg.dt
        Dn, En, fn, b1n, gn = self._coefficient_fields(state)
        for name, field in (("diffusion", Dn), ("stress-diffusion", En),
                            ("forcing", fn), ("relaxation", b1n),
                            ("stress-drive", gn)):
            if not np.all(np.isfinite(field)):
                raise NumericalFailure(step_index, state.t,
                                       f"{name} coefficient field")

        kD_main, kD_off = stiffness_diagonals(mesh, Dn)
        kE_main, kE_off = stiffness_diagonals(mesh, En)
        wbar = 0.5 * (fn[:-1] + fn[1:])
        bf = np.zeros(self.n)
        bf[:-1] -= wbar
        bf[1:] += wbar

        t_next = state.t + dt
        psi = boundary_functional(mesh, self.bd, t_next)
        rhs = (tridiag_matvec(self.ops.mass_main, self.ops.mass_off, state.u)
               - dt * (tridiag_matvec(kE_main, kE_off, state.sigma_v) + bf)
               + dt * psi)

        if cfg.epsilon == 0.0:
            ab = np.zeros((2, self.n))
            ab[0, 1:] = self.ops.mass_off + dt * kD_off
            ab[1, :] = self.ops.mass_main + dt * kD_main
            try:
                u_next = solveh_banded(ab, rhs, lower=False)
            except np.linalg.LinAlgError as exc:
                raise LinearSolveFailure(
                    f"concentration system not SPD at step {step_index} "
                    f"(discrete ellipticity violation): {exc}") from exc
        else:
            A = (self.ops.mass
                 + dt * sp.diags([kD_off, kD_main, kD_off], [-1, 0, 1])
                 + (dt * cfg.epsilon) * self.reg_u)
            u_next = _solve_pentadiagonal(A, rhs, step_index, "concentration")

        drive = state.sigma_v + dt * gn * u_next
        if cfg.stress_scheme == "explicit":
            if dt * float(np.max(np.abs(b1n))) >= 1.0:
                raise ValueError(
                    "explicit stress scheme requires dt * max|beta1| < 1")
            s_next = state.sigma_v + dt * (b1n * state.sigma_v + gn * u_next)
            if cfg.epsilon > 0:
                s_next -= dt * cfg.epsilon * (self.ops.bilaplacian @ state.sigma_v)
        elif cfg.epsilon == 0.0:
            denom = 1.0 - dt * b1n
            if np.any(denom <= 0):
                raise LinearSolveFailure(
                    f"implicit stress decay singular at step {step_index}: "
                    "dt * beta1 >= 1 with positive beta1")
            s_next = drive / denom
        else:
            B = (sp.diags(1.0 - dt * b1n)
                 + (dt * cfg.epsilon) * self.reg_s)
            s_next = _solve_pentadiagonal(B, drive, step_index, "stress")

        if not (np.all(np.isfinite(u_next)) and np.all(np.isfinite(s_next))):
            what = "concentration" if not np.all(np.isfinite(u_next)) else "stress"
            raise NumericalFailure(step_index, t_next, what)
        return State(t=t_next, u=u_next, sigma_v=s_next)


def _solve_pentadiagonal(A: sp.spmatrix, rhs: np.ndarray, step_index: int,
                         what: str) -> np.ndarray:
    dia = sp.dia_matrix(A)
    n = dia.shape[0]
    ab = np.zeros((5, n))
    for off, row in zip(dia.offsets, dia.data):
        if abs(off) > 2:
            raise ValueError("matrix bandwidth exceeds 2")
        ab[2 - off, :] = row
    try:
        return solve_banded((2, 2), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveFailure(
            f"{what} system singular at step {step_index}: {exc}") from exc


def step(state: State, mesh: Mesh, model: TransformedModel, bd: BoundaryData,
         cfg: SolverConfig) -> State:
    """One semi-implicit step of the unregularized system (epsilon must be 0)."""
    if cfg.epsilon != 0.0:
        raise ValueError("step requires epsilon == 0; use step_regularized")
    state.check(mesh)
    return _Stepper(mesh, model, bd, cfg).advance(state)


def step_regularized(state: State, mesh: Mesh, model: TransformedModel,
                     bd: BoundaryData, cfg: SolverConfig) -> State:
    """One step with the fourth-order regularization term added (any epsilon).

    With epsilon == 0 this dispatches to the plain step and is
    bit-for-bit identical to it.
    """
    state.check(mesh)
    return _Stepper(mesh, model, bd, cfg).advance(state)


@dataclass
class RunResult:
    """Trajectory snapshots plus per-step diagnostics and estimate quantities."""

    trajectory: List[State]
    records: List[DiagnosticsRecord]
    epsilon: float
    # epsilon-weighted cumulative squared H2-type norms (regularization energies)
    reg_energy_u: float
    reg_energy_s: float
    # cumulative squared dual-type norm of the discrete time derivative of u
    dual_time_derivative: float
    sup_h1_s: float

    @property
    def final_state(self) -> State:
        return self.trajectory[-1]


def run(init: InitialData, mesh: Mesh, model: TransformedModel,
        bd: BoundaryData, cfg: SolverConfig,
        output_every: Optional[int] = None, gamma: float = 1.0,
        observer: Optional[Callable[[State], None]] = None) -> RunResult:
    """Advance from t=0 to T_end, recording diagnostics every step.

    Snapshots are kept every ``output_every`` steps (always including
    the initial and final states).  The run is deterministic for fixed
    inputs; step failures propagate with their step index and time.
    """
    state = init.initial_state()
    state.check(mesh)
    stepper = _Stepper(mesh, model, bd, cfg)
    ops = stepper.ops

    n_steps = cfg.n_steps
    records = [record(state, mesh, gamma=gamma)]
    trajectory = [state.copy()]
    if observer is not None:
        observer(state)

    ml = ops.lumped
    mlK_main = ops.unit_stiffness_main
    mlK_off = ops.unit_stiffness_off
    # factor of (M_L + K) for the dual-type norm solve
    dual_ab = np.zeros((2, mesh.N + 1))
    dual_ab[0, 1:] = mlK_off
    dual_ab[1, :] = ml + mlK_main

    reg_u = reg_s = dual = 0.0
    sup_h1_s = _h1_norm(records[0], )

    for k in range(1, n_steps + 1):
        prev_u = state.u
        state = stepper.advance(state, step_index=k)
        rec = record(state, mesh, gamma=gamma, prev=records[-1])
        records.append(rec)
        sup_h1_s = max(sup_h1_s, _h1_norm(rec))

        if cfg.epsilon > 0:
            wu = state.u + (tridiag_matvec(mlK_main, mlK_off, state.u) / ml)
            ws = state.sigma_v + (
                tridiag_matvec(mlK_main, mlK_off, state.sigma_v) / ml)
            reg_u += cfg.epsilon * cfg.dt * float(np.sum(ml * wu * wu))
            reg_s += cfg.epsilon * cfg.dt * float(np.sum(ml * ws * ws))
        dudt = (state.u - prev_u) / cfg.dt
        y = solveh_banded(dual_ab, ml * dudt, lower=False)
        dual += cfg.dt * float(np.dot(ml * dudt, y))

        if observer is not None:
            observer(state)
        if output_every and (k % output_every == 0) and k != n_steps:
            trajectory.append(state.copy())

    if n_steps > 0:
        trajectory.append(state.copy())
    return RunResult(trajectory=trajectory, records=records, epsilon=cfg.epsilon,
                     reg_energy_u=reg_u, reg_energy_s=reg_s,
                     dual_time_derivative=dual, sup_h1_s=sup_h1_s)


def _h1_norm(rec: DiagnosticsRecord) -> float:
    return float(np.hypot(rec.l2_s, rec.h1semi_s))
