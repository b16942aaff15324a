"""Coefficient models for stress-assisted polymer diffusion.

Provides the physical coefficient laws (glass/rubber tanh relaxation,
Cohen-type stress-diffusion coefficient), the change of variables that
absorbs the nu0 * du/dt term into a transformed stress field, the
gradient coefficients of the transformed stress equation, and numerical
checkers for ellipticity/boundedness and for the long-time decay
condition on the coupled quadratic form.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "GlassRubberParams",
    "TanhDiffusionParams",
    "StressDiffusionParams",
    "PhysicalCoefficients",
    "TransformedModel",
    "AssumptionBounds",
    "LongTimeCondition",
    "Box",
    "ScalarModel",
    "make_scalar_model",
    "eval_beta0",
    "eval_D0_tanh",
    "eval_E0",
    "transform",
    "gradient_coefficients",
    "check_assumptions",
    "check_longtime_condition",
    "find_gamma",
    "EllipticityViolation",
    "LongTimeConditionFailure",
    "GammaSearchFailure",
    "NonSmoothCoefficient",
]

# Below this |u| the gamma formula switches to its continuity limit:
# the ratio (integral of nu0 from 0 to u) / u is ill-conditioned there.
U_LIMIT_THRESHOLD = 1e-8

# Relative step for finite-difference partials of beta1 and gamma.
FD_STEP = 1e-5
# Relative disagreement between the h and h/2 central stencils above
# which the coefficient is flagged as non-smooth.
FD_SMOOTHNESS_TOL = 1e-3


class EllipticityViolation(Exception):
    """Diffusion coefficient fails the uniform positivity bound on the box."""

    def __init__(self, points, values):
        self.points = points
        self.values = values
        worst = points[0]
        super().__init__(
            f"diffusion coefficient not uniformly positive: "
            f"D={values[0]:.6g} at (t,x,u,s)={tuple(float(v) for v in worst)}"
        )


class LongTimeConditionFailure(Exception):
    """The coupled quadratic form is not positive definite on the box."""

    def __init__(self, gamma, point, eigenvalue):
        self.gamma = gamma
        self.point = point
        self.eigenvalue = eigenvalue
        super().__init__(
            f"quadratic form loses definiteness for Gamma={gamma:.6g}: "
            f"min eigenvalue {eigenvalue:.6g} at "
            f"(t,x,u,s)={tuple(float(v) for v in point)}"
        )


class GammaSearchFailure(Exception):
    """No candidate Gamma yields a positive definite quadratic form."""

    def __init__(self, failures):
        self.failures = failures
        super().__init__(
            "all Gamma candidates failed: "
            + "; ".join(f"{g:.4g} -> {exc.eigenvalue:.4g}" for g, exc in failures)
        )


class NonSmoothCoefficient(Exception):
    """Finite-difference stencils disagree beyond tolerance."""


# ---------------------------------------------------------------------------
# parameter records and closed-form laws


@dataclass(frozen=True)
class GlassRubberParams:
    """Parameters of the tanh relaxation-rate law across the glass/rubber transition."""

    beta_R: float
    beta_G: float
    delta: float
    u_RG: float

    def __post_init__(self):
        if not (self.beta_R > self.beta_G > 0):
            raise ValueError("require beta_R > beta_G > 0")
        if self.delta <= 0:
            raise ValueError("require delta > 0")
        if not (0 < self.u_RG < 1):
            raise ValueError("require 0 < u_RG < 1")


@dataclass(frozen=True)
class TanhDiffusionParams:
    """Concentration-dependent diffusivity rising from D_G (glassy) to D_R (rubbery)."""

    D_R: float
    D_G: float
    delta: float
    u_RG: float

    def __post_init__(self):
        if not (self.D_R > self.D_G > 0):
            raise ValueError("require D_R > D_G > 0")
        if self.delta <= 0:
            raise ValueError("require delta > 0")


@dataclass(frozen=True)
class StressDiffusionParams:
    """Parameters of the stress-diffusion coefficient vanishing at u=0 and u=1."""

    alpha_1: float
    alpha_2: float

    def __post_init__(self):
        if self.alpha_1 <= 0 or self.alpha_2 <= 0:
            raise ValueError("require alpha_1 > 0 and alpha_2 > 0")


def _tanh_profile(u, lo, hi, delta, center):
    u = np.asarray(u, dtype=float)
    return 0.5 * (hi + lo) + 0.5 * (hi - lo) * np.tanh((u - center) / delta)


def eval_beta0(u, p: GlassRubberParams):
    """Relaxation rate interpolating between beta_G (glassy) and beta_R (rubbery)."""
    return _tanh_profile(u, p.beta_G, p.beta_R, p.delta, p.u_RG)


def eval_D0_tanh(u, p: TanhDiffusionParams):
    """Diffusivity increasing with concentration on a tanh profile; always >= D_G."""
    return _tanh_profile(u, p.D_G, p.D_R, p.delta, p.u_RG)


def eval_E0(u, p: StressDiffusionParams):
    """Stress-diffusion coefficient alpha_1*u*(u-1)^2 / (alpha_2 + (u-1)^2)."""
    u = np.asarray(u, dtype=float)
    w = (u - 1.0) ** 2
    return p.alpha_1 * u * w / (p.alpha_2 + w)


def eval_E0_du(u, p: StressDiffusionParams):
    """Analytic u-derivative of eval_E0."""
    u = np.asarray(u, dtype=float)
    w = (u - 1.0) ** 2
    q = w / (p.alpha_2 + w)
    dq = 2.0 * (u - 1.0) * p.alpha_2 / (p.alpha_2 + w) ** 2
    return p.alpha_1 * (q + u * dq)


# ---------------------------------------------------------------------------
# named scalar models (the configuration-facing registry)


def _logcosh(z):
    z = np.abs(np.asarray(z, dtype=float))
    return z + np.log1p(np.exp(-2.0 * z)) - math.log(2.0)


@dataclass(frozen=True)
class ScalarModel:
    """A named single-variable coefficient law with derivative and antiderivative."""

    name: str
    params: Mapping[str, object]
    fn: Callable[[np.ndarray], np.ndarray]
    dfn: Callable[[np.ndarray], np.ndarray]
    antiderivative: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, u):
        return self.fn(u)

    @property
    def constant_value(self) -> Optional[float]:
        if self.name == "constant":
            return float(self.params["value"])
        return None


def make_scalar_model(name: str, **params) -> ScalarModel:
    """Build one of the registered coefficient laws.

    Registered names: "constant", "tanh", "cohen-e0", "polynomial".
    The tanh law accepts (lo, hi, delta, center) or the aliases
    (beta_G, beta_R, u_RG) / (D_G, D_R).
    """
    if name == "constant":
        value = float(params.pop("value"))
        _reject_extras(name, params)
        return ScalarModel(
            name="constant",
            params={"value": value},
            fn=lambda u: np.full(np.shape(u), value, dtype=float),
            dfn=lambda u: np.zeros(np.shape(u), dtype=float),
            antiderivative=lambda u: value * np.asarray(u, dtype=float),
        )
    if name == "tanh":
        aliases = {
            "beta_G": "lo", "beta_R": "hi", "u_RG": "center",
            "D_G": "lo", "D_R": "hi",
        }
        norm = {}
        for key, val in params.items():
            norm[aliases.get(key, key)] = float(val)
        lo, hi = norm.pop("lo"), norm.pop("hi")
        delta, center = norm.pop("delta"), norm.pop("center")
        _reject_extras(name, norm)
        if delta <= 0:
            raise ValueError("tanh model requires delta > 0")
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)

        def fn(u):
            return mid + half * np.tanh((np.asarray(u, float) - center) / delta)

        def dfn(u):
            return half / delta / np.cosh((np.asarray(u, float) - center) / delta) ** 2

        def antider(u):
            u = np.asarray(u, dtype=float)
            return mid * u + half * delta * (
                _logcosh((u - center) / delta) - _logcosh(-center / delta)
            )

        return ScalarModel("tanh", {"lo": lo, "hi": hi, "delta": delta,
                                    "center": center}, fn, dfn, antider)
    if name == "cohen-e0":
        p = StressDiffusionParams(float(params.pop("alpha_1")),
                                  float(params.pop("alpha_2")))
        _reject_extras(name, params)
        return ScalarModel(
            "cohen-e0",
            {"alpha_1": p.alpha_1, "alpha_2": p.alpha_2},
            fn=lambda u: eval_E0(u, p),
            dfn=lambda u: eval_E0_du(u, p),
            antiderivative=None,
        )
    if name == "polynomial":
        coeffs = [float(c) for c in params.pop("coeffs")]
        _reject_extras(name, params)
        poly = np.polynomial.Polynomial(coeffs)
        dpoly = poly.deriv()
        ipoly = poly.integ()
        return ScalarModel(
            "polynomial",
            {"coeffs": tuple(coeffs)},
            fn=lambda u: poly(np.asarray(u, float)),
            dfn=lambda u: dpoly(np.asarray(u, float)),
            antiderivative=lambda u: ipoly(np.asarray(u, float)),
        )
    raise ValueError(f"unknown coefficient model {name!r}")


def _reject_extras(name, params):
    if params:
        raise ValueError(f"unexpected parameters for model {name!r}: "
                         f"{sorted(params)}")


# ---------------------------------------------------------------------------
# physical coefficients and the change of variables


Coefficient = Callable[..., np.ndarray]  # (t, x, u, sigma_or_varsigma) -> values


@dataclass
class PhysicalCoefficients:
    """The raw coefficient maps of the concentration/stress system.

    D0, E0, M0, beta0 take (t, x, u, sigma); mu0, nu0 and the
    antiderivative of nu0 take the concentration only.  The optional
    derivative fields are used to attach analytic partials during the
    change of variables; supplying beta0_du asserts that beta0 depends
    on u only, and nu0_const asserts nu0 is that constant.
    """

    D0: Coefficient
    E0: Coefficient
    M0: Coefficient
    beta0: Coefficient
    mu0: Callable[[np.ndarray], np.ndarray]
    nu0: Callable[[np.ndarray], np.ndarray]
    nu0_antiderivative: Callable[[np.ndarray], np.ndarray]
    beta0_du: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mu0_du: Optional[Callable[[np.ndarray], np.ndarray]] = None
    nu0_const: Optional[float] = None

    def validate(self, u_range=(0.0, 1.0), box: Optional["Box"] = None,
                 n_samples: int = 256) -> None:
        """Sampled sanity checks: nu0 >= 0, consistent antiderivative, D0 > 0."""
        u = np.linspace(u_range[0], u_range[1], n_samples)
        nu = np.asarray(self.nu0(u), dtype=float)
        if np.any(nu < 0):
            raise ValueError("nu0 must be non-negative")
        if abs(float(self.nu0_antiderivative(0.0))) > 1e-12:
            raise ValueError("antiderivative of nu0 must vanish at 0")
        du = 1e-6
        approx = (np.asarray(self.nu0_antiderivative(u + du), float)
                  - np.asarray(self.nu0_antiderivative(u - du), float)) / (2 * du)
        if np.max(np.abs(approx - nu)) > 1e-4 * (1.0 + np.max(np.abs(nu))):
            raise ValueError("antiderivative of nu0 is inconsistent with nu0")
        if box is not None:
            t, x, uu, s = box.grid(n_samples)
            d0 = np.asarray(self.D0(t, x, uu, s), dtype=float)
            if np.min(d0) <= 0:
                raise ValueError("D0 must be uniformly positive on the box")


@dataclass
class TransformedModel:
    """Coefficients of the system in the (u, varsigma) variables.

    D, E, f, beta1, gamma take (t, x, u, varsigma).  ``partials`` holds
    analytic partial derivatives of beta1 and gamma (keys 'beta1_u',
    'beta1_s', 'beta1_x', 'gamma_u', 'gamma_s', 'gamma_x'); when absent,
    central finite differences are used.
    """

    D: Coefficient
    E: Coefficient
    f: Coefficient
    beta1: Coefficient
    gamma: Coefficient
    partials: Optional[Mapping[str, Coefficient]] = None

    def beta(self, t, x, u, s):
        return gradient_coefficients(self, t, x, u, s)[0]

    def mu(self, t, x, u, s):
        return gradient_coefficients(self, t, x, u, s)[1]

    def g(self, t, x, u, s):
        return gradient_coefficients(self, t, x, u, s)[2]


def constant_model(D=1.0, E=0.0, f=0.0, beta1=-1.0, gamma=0.0) -> TransformedModel:
    """Transformed model with constant coefficients (mainly for tests and checks)."""
    def const(v):
        return lambda t, x, u, s: np.full(
            np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(u), np.shape(s)),
            v, dtype=float)
    zero = const(0.0)
    return TransformedModel(
        D=const(D), E=const(E), f=const(f), beta1=const(beta1), gamma=const(gamma),
        partials={k: zero for k in
                  ("beta1_u", "beta1_s", "beta1_x", "gamma_u", "gamma_s", "gamma_x")},
    )


def transform(phys: PhysicalCoefficients) -> TransformedModel:
    """Change of variables varsigma = sigma - int_0^u nu0.

    Returns closures for D = D0 + nu0*E0, E = E0, f = -u*M0,
    beta1 = -beta0 and gamma = mu0 - beta0 * (int_0^u nu0)/u, each
    evaluated at sigma = varsigma + int_0^u nu0.  Near u = 0 the gamma
    ratio is replaced by its continuity limit nu0(u).
    """
    A = phys.nu0_antiderivative

    def sigma_of(u, s):
        return np.asarray(s, dtype=float) + np.asarray(A(u), dtype=float)

    def D(t, x, u, s):
        sig = sigma_of(u, s)
        return (np.asarray(phys.D0(t, x, u, sig), dtype=float)
                + np.asarray(phys.nu0(u), dtype=float)
                * np.asarray(phys.E0(t, x, u, sig), dtype=float))

    def E(t, x, u, s):
        return np.asarray(phys.E0(t, x, u, sigma_of(u, s)), dtype=float)

    def f(t, x, u, s):
        return -np.asarray(u, dtype=float) * np.asarray(
            phys.M0(t, x, u, sigma_of(u, s)), dtype=float)

    def beta1(t, x, u, s):
        return -np.asarray(phys.beta0(t, x, u, sigma_of(u, s)), dtype=float)

    def gamma(t, x, u, s):
        u_arr = np.asarray(u, dtype=float)
        sig = sigma_of(u_arr, s)
        small = np.abs(u_arr) < U_LIMIT_THRESHOLD
        safe_u = np.where(small, 1.0, u_arr)
        ratio = np.where(small,
                         np.asarray(phys.nu0(u_arr), dtype=float),
                         np.asarray(A(u_arr), dtype=float) / safe_u)
        return (np.asarray(phys.mu0(u_arr), dtype=float)
                - np.asarray(phys.beta0(t, x, u_arr, sig), dtype=float) * ratio)

    partials = None
    if (phys.beta0_du is not None and phys.mu0_du is not None
            and phys.nu0_const is not None):
        c = float(phys.nu0_const)
        b0du, m0du = phys.beta0_du, phys.mu0_du

        def zero(t, x, u, s):
            return np.zeros(np.broadcast_shapes(
                np.shape(t), np.shape(x), np.shape(u), np.shape(s)), dtype=float)

        partials = {
            "beta1_u": lambda t, x, u, s: -np.asarray(b0du(u), dtype=float)
            + zero(t, x, u, s),
            "beta1_s": zero,
            "beta1_x": zero,
            # gamma = mu0(u) - c*beta0(u) identically when nu0 is constant
            "gamma_u": lambda t, x, u, s: np.asarray(m0du(u), dtype=float)
            - c * np.asarray(b0du(u), dtype=float) + zero(t, x, u, s),
            "gamma_s": zero,
            "gamma_x": zero,
        }

    return TransformedModel(D=D, E=E, f=f, beta1=beta1, gamma=gamma,
                            partials=partials)


def physical_from_models(D0: ScalarModel, E0: ScalarModel, M0: ScalarModel,
                         beta0: ScalarModel, mu0: ScalarModel,
                         nu0: ScalarModel) -> PhysicalCoefficients:
    """Assemble PhysicalCoefficients from single-variable named models.

    All maps then depend on the concentration only; analytic derivative
    data is attached so the change of variables can carry analytic
    partials when nu0 is constant.
    """
    if nu0.antiderivative is None:
        raise ValueError(
            f"model {nu0.name!r} has no closed-form antiderivative; "
            "it cannot be used for nu0")

    def lift(m: ScalarModel) -> Coefficient:
        return lambda t, x, u, s: np.asarray(m.fn(u), dtype=float) + 0.0 * (
            np.asarray(x, dtype=float) + np.asarray(s, dtype=float)
            + np.asarray(t, dtype=float))

    return PhysicalCoefficients(
        D0=lift(D0), E0=lift(E0), M0=lift(M0), beta0=lift(beta0),
        mu0=mu0.fn, nu0=nu0.fn, nu0_antiderivative=nu0.antiderivative,
        beta0_du=beta0.dfn, mu0_du=mu0.dfn,
        nu0_const=nu0.constant_value,
    )


# ---------------------------------------------------------------------------
# gradient coefficients of the stress equation's right-hand side


def _shifted_eval(fn, which, t, x, u, s, delta):
    if which == "u":
        return fn(t, x, u + delta, s)
    if which == "s":
        return fn(t, x, u, s + delta)
    if which == "x":
        return fn(t, x + delta, u, s)
    raise ValueError(which)


def _fd_partial(fn, which, t, x, u, s):
    """Second-order central difference with a stencil-consistency check."""
    base = {"u": u, "s": s, "x": x}[which]
    h = FD_STEP * (1.0 + np.abs(np.asarray(base, dtype=float)))
    d1 = (_shifted_eval(fn, which, t, x, u, s, h)
          - _shifted_eval(fn, which, t, x, u, s, -h)) / (2.0 * h)
    d2 = (_shifted_eval(fn, which, t, x, u, s, 0.5 * h)
          - _shifted_eval(fn, which, t, x, u, s, -0.5 * h)) / h
    scale = 1.0 + np.maximum(np.abs(d1), np.abs(d2))
    if np.any(np.abs(d1 - d2) > FD_SMOOTHNESS_TOL * scale):
        raise NonSmoothCoefficient(
            f"stencil disagreement in d/d{which} exceeds "
            f"{FD_SMOOTHNESS_TOL:g}; coefficient appears non-smooth")
    return d2


def _partial(model: TransformedModel, field_name: str, which: str, t, x, u, s):
    if model.partials is not None:
        key = f"{field_name}_{which}"
        if key in model.partials:
            return np.asarray(model.partials[key](t, x, u, s), dtype=float)
    fn = getattr(model, field_name)
    return np.asarray(_fd_partial(fn, which, t, x, u, s), dtype=float)


def gradient_coefficients(model: TransformedModel, t, x, u, s):
    """Coefficients (beta, mu, g) of grad(beta1*varsigma + gamma*u).

    beta multiplies grad u, mu multiplies grad varsigma, g collects the
    explicit spatial dependence:
        beta = (d beta1/du) s + gamma + (d gamma/du) u
        mu   = beta1 + (d beta1/ds) s + (d gamma/ds) u
        g    = (d beta1/dx) s + (d gamma/dx) u
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    b1 = np.asarray(model.beta1(t, x, u, s), dtype=float)
    gm = np.asarray(model.gamma(t, x, u, s), dtype=float)
    db1_du = _partial(model, "beta1", "u", t, x, u, s)
    db1_ds = _partial(model, "beta1", "s", t, x, u, s)
    db1_dx = _partial(model, "beta1", "x", t, x, u, s)
    dgm_du = _partial(model, "gamma", "u", t, x, u, s)
    dgm_ds = _partial(model, "gamma", "s", t, x, u, s)
    dgm_dx = _partial(model, "gamma", "x", t, x, u, s)
    beta = db1_du * s + gm + dgm_du * u
    mu = b1 + db1_ds * s + dgm_ds * u
    g = db1_dx * s + dgm_dx * u
    return beta, mu, g


# ---------------------------------------------------------------------------
# sampled assumption checking


@dataclass(frozen=True)
class Box:
    """Axis-aligned evaluation box in (t, x, u, varsigma)."""

    t: tuple[float, float]
    x: tuple[float, float]
    u: tuple[float, float]
    s: tuple[float, float]

    def __post_init__(self):
        for name, (lo, hi) in zip("txus", (self.t, self.x, self.u, self.s)):
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"invalid {name}-range ({lo}, {hi})")

    @property
    def volume(self) -> float:
        v = 1.0
        for lo, hi in (self.t, self.x, self.u, self.s):
            v *= hi - lo
        return v

    def grid(self, n_samples: int):
        """Deterministic product grid with about n_samples points."""
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        axes = []
        live = sum(1 for lo, hi in (self.t, self.x, self.u, self.s) if hi > lo)
        per_axis = max(2, round(n_samples ** (1.0 / live))) if live else 1
        for lo, hi in (self.t, self.x, self.u, self.s):
            axes.append(np.linspace(lo, hi, per_axis) if hi > lo
                        else np.array([lo]))
        T, X, U, S = np.meshgrid(*axes, indexing="ij")
        return T.ravel(), X.ravel(), U.ravel(), S.ravel()


@dataclass(frozen=True)
class AssumptionBounds:
    """Empirical bounds for the transformed coefficients on a declared box."""

    K_D: float
    K_E: float
    K_beta: float
    K_mu: float
    K_f: float
    K_g: float
    d: float
    f_tilde: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g_tilde: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("ellipticity constant d must be positive")
        for k in (self.K_D, self.K_E, self.K_beta, self.K_mu, self.K_f, self.K_g):
            if not math.isfinite(k) or k < 0:
                raise ValueError("bounds must be finite and non-negative")


def _affine_growth_fit(radius: np.ndarray, values: np.ndarray):
    """Least-squares slope/intercept of |values| against |u|+|s|, clamped >= 0."""
    if np.ptp(radius) < 1e-14:
        slope, intercept = 0.0, float(np.max(values))
    else:
        slope, intercept = np.polyfit(radius, values, 1)
    return max(float(slope), 0.0), max(float(intercept), 0.0)


def check_assumptions(model: TransformedModel, box: Box,
                      n_samples: int = 4096) -> AssumptionBounds:
    """Empirical coefficient bounds over a deterministic sample grid.

    Raises EllipticityViolation when the sampled diffusion coefficient
    fails to stay positive.
    """
    t, x, u, s = box.grid(n_samples)
    shape = np.broadcast_shapes(t.shape, x.shape, u.shape, s.shape)

    def full(vals):
        return np.broadcast_to(np.asarray(vals, dtype=float), shape)

    D = full(model.D(t, x, u, s))
    E = full(model.E(t, x, u, s))
    b1 = full(model.beta1(t, x, u, s))
    gm = full(model.gamma(t, x, u, s))
    beta, mu, g = (full(v) for v in gradient_coefficients(model, t, x, u, s))
    fv = full(model.f(t, x, u, s))

    d = float(np.min(D))
    if d <= 0:
        bad = np.nonzero(D <= 0)[0]
        order = np.argsort(D[bad])
        bad = bad[order][:5]
        pts = [(t[i], x[i], u[i], s[i]) for i in bad]
        raise EllipticityViolation(pts, [float(D[i]) for i in bad])

    radius = np.abs(u) + np.abs(s)
    K_f, f0 = _affine_growth_fit(radius, np.abs(fv))
    K_g, g0 = _affine_growth_fit(radius, np.abs(g))

    return AssumptionBounds(
        K_D=float(np.max(np.abs(D))),
        K_E=float(np.max(np.abs(E))),
        K_beta=float(max(np.max(np.abs(beta)), np.max(np.abs(gm)))),
        K_mu=float(max(np.max(np.abs(mu)), np.max(np.abs(b1)))),
        K_f=K_f,
        K_g=K_g,
        d=d,
        f_tilde=lambda tt, xx: np.full(np.broadcast_shapes(
            np.shape(tt), np.shape(xx)), f0, dtype=float),
        g_tilde=lambda tt, xx: np.full(np.broadcast_shapes(
            np.shape(tt), np.shape(xx)), g0, dtype=float),
    )


# ---------------------------------------------------------------------------
# long-time decay condition


@dataclass(frozen=True)
class LongTimeCondition:
    """Certified positivity margin of the coupled quadratic form."""

    Gamma: float
    Gamma_0: float
    verified_box: Box

    def __post_init__(self):
        if self.Gamma <= 0 or self.Gamma_0 <= 0:
            raise ValueError("Gamma and Gamma_0 must be positive")


def quadratic_form_min_eig(D, E, beta, mu, Gamma):
    """Min eigenvalue of [[D, c/2], [c/2, -mu]] with c = E*Gamma - beta/Gamma."""
    a = np.asarray(D, dtype=float)
    c = -np.asarray(mu, dtype=float)
    b = 0.5 * (np.asarray(E, dtype=float) * Gamma
               - np.asarray(beta, dtype=float) / Gamma)
    return 0.5 * ((a + c) - np.sqrt((a - c) ** 2 + 4.0 * b * b))


def check_longtime_condition(model: TransformedModel, Gamma: float, box: Box,
                             n_samples: int = 4096) -> LongTimeCondition:
    """Infimum over the box of the quadratic-form margin for the given Gamma.

    Raises LongTimeConditionFailure (carrying the minimizing point and
    eigenvalue) when the infimum is not positive.
    """
    if Gamma <= 0:
        raise ValueError("Gamma must be positive")
    t, x, u, s = box.grid(n_samples)
    shape = np.broadcast_shapes(t.shape, x.shape, u.shape, s.shape)
    D = np.broadcast_to(np.asarray(model.D(t, x, u, s), float), shape)
    E = np.broadcast_to(np.asarray(model.E(t, x, u, s), float), shape)
    beta, mu, _ = gradient_coefficients(model, t, x, u, s)
    lam = quadratic_form_min_eig(D, E, np.broadcast_to(beta, shape),
                                 np.broadcast_to(mu, shape), Gamma)
    i = int(np.argmin(lam))
    g0 = float(lam[i])
    if g0 <= 0:
        raise LongTimeConditionFailure(Gamma, (t[i], x[i], u[i], s[i]), g0)
    return LongTimeCondition(Gamma=Gamma, Gamma_0=g0, verified_box=box)


def find_gamma(model: TransformedModel, box: Box,
               gamma_grid: Sequence[float],
               n_samples: int = 4096) -> LongTimeCondition:
    """Scan candidate Gamma values and keep the one with the largest margin."""
    if not gamma_grid:
        raise ValueError("gamma_grid must be non-empty")
    if any(g <= 0 for g in gamma_grid):
        raise ValueError("all Gamma candidates must be positive")
    if box.volume == 0:
        raise ValueError("evaluation box has zero volume")
    best: Optional[LongTimeCondition] = None
    failures = []
    for g in gamma_grid:
        try:
            cond = check_longtime_condition(model, float(g), box, n_samples)
        except LongTimeConditionFailure as exc:
            failures.append((float(g), exc))
            continue
        if best is None or cond.Gamma_0 > best.Gamma_0:
            best = cond
    if best is None:
        raise GammaSearchFailure(failures)
    return best
