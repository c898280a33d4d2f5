"""Domain types for perturbed homogeneous delay systems and their Lyapunov data.

The system class is

    x'(t) = f(x(t), x(t-h)) + B(t) Q(x(t), x(t-h)),

with f positively homogeneous of degree mu > 1, Q of growth degree sigma > 1
and ||B(t)|| <= b_hat.  A delay-free Lyapunov function V certifies the
unperturbed dynamics.  All norms are Euclidean (spectral for matrices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SystemSpec",
    "LyapunovSpec",
    "CaseA",
    "CaseB",
    "PerturbationClass",
    "BoundCheck",
    "BoundCheckReport",
    "build_example_system",
    "kappa_and_w",
    "example_omega",
    "check_bound_constants",
    "EXAMPLE_B_HAT",
]

Evaluator2 = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Uniform bound used for the built-in example's diagonal B(t): each entry is a
# sum of two unit-amplitude oscillations, so 2 is exact enough and safe.
EXAMPLE_B_HAT = 2.0


@dataclass(frozen=True)
class SystemSpec:
    """Perturbed delay system together with its homogeneity bound constants."""

    n: int
    h: float
    mu: float
    sigma: float
    f_eval: Evaluator2
    q_eval: Evaluator2
    b_eval: Callable[[float], np.ndarray]
    b_hat: float
    m1: float
    m2: float
    eta11: float
    eta12: float
    p1: float
    p2: float
    q11: float
    q12: float
    q21: float
    q22: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be positive")
        if self.h <= 0:
            raise ValueError("delay h must be > 0")
        if self.mu <= 1:
            raise ValueError("homogeneity degree mu must be > 1")
        if self.sigma <= 1:
            raise ValueError("perturbation degree sigma must be > 1")
        for name in ("b_hat", "m1", "m2", "eta11", "eta12", "p1", "p2",
                     "q11", "q12", "q21", "q22"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LyapunovSpec:
    """Delay-free Lyapunov function V with its bound constants."""

    v_eval: Callable[[np.ndarray], float]
    grad_eval: Callable[[np.ndarray], np.ndarray]
    gamma: float
    w: float
    alpha0: float
    alpha1: float
    beta: float
    psi: float

    def __post_init__(self):
        if self.gamma < 2:
            raise ValueError("gamma must be >= 2")
        if self.w <= 0:
            raise ValueError("decay constant w must be > 0")
        if not (0 < self.alpha0 <= self.alpha1):
            raise ValueError("need 0 < alpha0 <= alpha1")
        if self.beta <= 0 or self.psi <= 0:
            raise ValueError("beta and psi must be > 0")


@dataclass(frozen=True)
class CaseA:
    """Bounded-integral perturbation: ||L(t,0)|| <= l0.  Requires sigma > (mu+1)/2."""

    l0: float

    def __post_init__(self):
        if self.l0 < 0:
            raise ValueError("l0 must be >= 0")


@dataclass(frozen=True)
class CaseB:
    """Vanishing-mean perturbation with eps*||L(t,eps)|| <= omega(eps).

    Requires sigma >= mu; omega(eps) -> 0 as eps -> 0.
    """

    omega_eval: Callable[[float], float]

    def check_decay(self, eps_grid=None, rel_slack=1e-9):
        """Check omega is nonincreasing toward 0 on a decreasing eps grid."""
        if eps_grid is None:
            eps_grid = np.logspace(-2, -12, 11)
        vals = [self.omega_eval(float(e)) for e in eps_grid]
        if any(v < 0 for v in vals):
            raise ValueError("omega(eps) must be >= 0")
        for prev, cur in zip(vals, vals[1:]):
            if cur > prev * (1 + rel_slack) + rel_slack:
                raise ValueError("omega(eps) is not nonincreasing as eps decreases")
        if vals[-1] > 1e-6 * max(vals[0], 1.0):
            raise ValueError("omega(eps) does not appear to vanish as eps -> 0")


PerturbationClass = CaseA | CaseB


def kappa_and_w(zeta: float, mu: float) -> tuple[float, float]:
    """Decay constants of the example's Lyapunov function: w = kappa / 2^(mu-1)."""
    if mu <= 1:
        raise ValueError("mu must be > 1")
    if not 0 < zeta < min(1 / (mu + 1), 4 / (mu + 1) ** 2):
        raise ValueError(
            f"zeta={zeta} outside admissible interval "
            f"(0, {min(1 / (mu + 1), 4 / (mu + 1) ** 2)})"
        )
    kappa = min(
        1 - zeta * (mu + 1),
        zeta,
        zeta / (1 + zeta) * (1 - zeta * (1 + mu) ** 2 / 4),
    )
    return kappa, kappa / 2 ** (mu - 1)


def example_omega(eps: float) -> float:
    """Closed-form omega(eps) for the built-in example's B(t)."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    s2 = math.sqrt(2.0)
    return eps * ((2 * eps + 1) / (eps * eps + 1)
                  + max(eps + 2 * s2, 2 * eps + s2) / (eps * eps + 2))


def _odd_int(value: float, name: str) -> int:
    k = int(round(value))
    if abs(value - k) > 1e-12 or k < 1 or k % 2 == 0:
        raise ValueError(f"{name}={value} must be an odd positive integer")
    return k


def build_example_system(mu: float, sigma: float, h: float,
                         zeta: float) -> tuple[SystemSpec, LyapunovSpec]:
    """Two-state oscillator family with quasi-periodic zero-mean perturbation.

        x1' = x2(t)^mu
        x2' = -x1(t)^mu - x2(t-h)^mu
    plus B(t) = diag(cos t + sin(sqrt2 t), cos t + cos(sqrt2 t)) acting on
    Q = (x1^sigma(t-h), x2^sigma(t)).

    V(x) = (x1^(mu+1) + x2^(mu+1))/(mu+1) + zeta x1^mu x2, gamma = mu + 1.
    Componentwise powers need odd integer exponents to stay sign-preserving.
    """
    imu = _odd_int(mu, "mu")
    isig = _odd_int(sigma, "sigma")
    if h <= 0:
        raise ValueError("h must be > 0")
    kappa, w = kappa_and_w(zeta, mu)  # also validates zeta

    sq2 = math.sqrt(2.0)
    cos, sin = math.cos, math.sin

    def f_eval(x1, x2):
        out = np.empty(2)
        out[0] = x1[1] ** imu
        out[1] = -(x1[0] ** imu) - x2[1] ** imu
        return out

    def q_eval(x1, x2):
        out = np.empty(2)
        out[0] = x2[0] ** isig
        out[1] = x1[1] ** isig
        return out

    def b_eval(t):
        c = cos(t)
        return np.array([[c + sin(sq2 * t), 0.0],
                         [0.0, c + cos(sq2 * t)]])

    def v_eval(x):
        return (x[0] ** (imu + 1) + x[1] ** (imu + 1)) / (imu + 1) \
            + zeta * x[0] ** imu * x[1]

    def grad_eval(x):
        out = np.empty(2)
        out[0] = x[0] ** imu + zeta * imu * x[0] ** (imu - 1) * x[1]
        out[1] = x[1] ** imu + zeta * x[0] ** imu
        return out

    gamma = mu + 1.0
    alpha0 = 0.5 ** ((mu - 1) / 2) * (1 / (mu + 1) - zeta)
    alpha1 = 1 / (mu + 1) + zeta
    beta = math.sqrt((1 + zeta * mu) ** 2 + (1 + zeta) ** 2)
    psi = 2 * (mu + mu * mu * zeta)

    spec = SystemSpec(
        n=2, h=h, mu=float(mu), sigma=float(sigma),
        f_eval=f_eval, q_eval=q_eval, b_eval=b_eval, b_hat=EXAMPLE_B_HAT,
        m1=sq2, m2=sq2, eta11=float(mu), eta12=0.0,
        p1=1.0, p2=1.0, q11=float(sigma), q12=0.0, q21=0.0, q22=float(sigma),
    )
    lyap = LyapunovSpec(
        v_eval=v_eval, grad_eval=grad_eval, gamma=gamma, w=w,
        alpha0=alpha0, alpha1=alpha1, beta=beta, psi=psi,
    )
    return spec, lyap


@dataclass(frozen=True)
class BoundCheck:
    """Worst-case result of one sampled inequality check."""

    name: str
    worst_slack: float      # min over samples of (bound - value), >= 0 means ok
    scale: float            # magnitude used for the relative tolerance
    ok: bool


@dataclass(frozen=True)
class BoundCheckReport:
    seed: int
    n_samples: int
    radius: float
    checks: tuple[BoundCheck, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.ok]


_REL_TOL = 1e-9


def _run_check(name, slacks, scales) -> BoundCheck:
    slacks = np.asarray(slacks, dtype=float)
    scales = np.asarray(scales, dtype=float)
    rel = slacks + _REL_TOL * np.maximum(scales, 0.0)
    i = int(np.argmin(slacks)) if slacks.size else 0
    worst = float(slacks[i]) if slacks.size else 0.0
    scale = float(scales[i]) if slacks.size else 0.0
    return BoundCheck(name=name, worst_slack=worst, scale=scale,
                      ok=bool(np.all(rel >= 0)))


def check_bound_constants(spec: SystemSpec, lyap: LyapunovSpec,
                          n_samples: int = 1000, radius: float = 1.0,
                          seed: int = 12345,
                          check_jacobians: bool = False) -> BoundCheckReport:
    """Seeded randomized validation of every declared bound inequality.

    Samples states uniformly in the ball of the given radius and checks the
    f/Q/B norm bounds, the V sandwich and gradient bounds, the delay-free
    decay bound, and positive homogeneity of f and V.  With check_jacobians
    the df/dx1 bound is also verified by central finite differences.
    """
    if n_samples <= 0 or radius <= 0:
        raise ValueError("n_samples and radius must be positive")
    rng = np.random.default_rng(seed)
    n = spec.n

    def ball(count):
        pts = rng.normal(size=(count, n))
        pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1e-300)
        pts *= radius * rng.uniform(0, 1, size=(count, 1)) ** (1 / n)
        return pts

    x1s, x2s = ball(n_samples), ball(n_samples)

    f_slack, f_scale = [], []
    q_slack, q_scale = [], []
    for x1, x2 in zip(x1s, x2s):
        r1, r2 = np.linalg.norm(x1), np.linalg.norm(x2)
        bound = spec.m1 * r1 ** spec.mu + spec.m2 * r2 ** spec.mu
        f_slack.append(bound - np.linalg.norm(spec.f_eval(x1, x2)))
        f_scale.append(bound)
        bound = spec.p1 * r1 ** spec.sigma + spec.p2 * r2 ** spec.sigma
        q_slack.append(bound - np.linalg.norm(spec.q_eval(x1, x2)))
        q_scale.append(bound)

    t_grid = np.linspace(0.0, 100.0, 257)
    b_slack = [spec.b_hat - np.linalg.norm(spec.b_eval(float(t)), 2)
               for t in t_grid]
    b_scale = [spec.b_hat] * len(t_grid)

    cs = rng.uniform(0.1, 10.0, size=n_samples)
    fh_slack, fh_scale = [], []
    vh_slack, vh_scale = [], []
    for x1, x2, c in zip(x1s, x2s, cs):
        fv = spec.f_eval(x1, x2)
        fc = spec.f_eval(c * x1, c * x2)
        scale = np.linalg.norm(fc) + c ** spec.mu * np.linalg.norm(fv)
        err = np.linalg.norm(fc - c ** spec.mu * fv)
        fh_slack.append(1e-10 * max(scale, 1e-300) - err)
        fh_scale.append(scale)
        vv, vc = lyap.v_eval(x1), lyap.v_eval(c * x1)
        scale = abs(vc) + c ** lyap.gamma * abs(vv)
        vh_slack.append(1e-10 * max(scale, 1e-300) - abs(vc - c ** lyap.gamma * vv))
        vh_scale.append(scale)

    vlo_slack, vhi_slack, v_scale = [], [], []
    g_slack, g_scale = [], []
    d_slack, d_scale = [], []
    for x in x1s:
        r = np.linalg.norm(x)
        v = lyap.v_eval(x)
        vlo_slack.append(v - lyap.alpha0 * r ** lyap.gamma)
        vhi_slack.append(lyap.alpha1 * r ** lyap.gamma - v)
        v_scale.append(lyap.alpha1 * r ** lyap.gamma)
        g = lyap.grad_eval(x)
        gb = lyap.beta * r ** (lyap.gamma - 1)
        g_slack.append(gb - np.linalg.norm(g))
        g_scale.append(gb)
        db = lyap.w * r ** (lyap.gamma + spec.mu - 1)
        d_slack.append(-float(g @ spec.f_eval(x, x)) - db)
        d_scale.append(db)

    checks = [
        _run_check("f_norm_bound", f_slack, f_scale),
        _run_check("q_norm_bound", q_slack, q_scale),
        _run_check("b_norm_bound", b_slack, b_scale),
        _run_check("f_homogeneity", fh_slack, fh_scale),
        _run_check("v_homogeneity", vh_slack, vh_scale),
        _run_check("v_lower_bound", vlo_slack, v_scale),
        _run_check("v_upper_bound", vhi_slack, v_scale),
        _run_check("grad_v_bound", g_slack, g_scale),
        _run_check("delay_free_decay", d_slack, d_scale),
    ]

    if check_jacobians:
        j_slack, j_scale = [], []
        for x1, x2 in zip(x1s[:100], x2s[:100]):
            r1, r2 = np.linalg.norm(x1), np.linalg.norm(x2)
            step = 1e-6 * max(r1, 1e-3)
            jac = np.empty((n, n))
            for j in range(n):
                e = np.zeros(n)
                e[j] = step
                jac[:, j] = (spec.f_eval(x1 + e, x2) - spec.f_eval(x1 - e, x2)) / (2 * step)
            bound = spec.eta11 * r1 ** (spec.mu - 1) + spec.eta12 * r2 ** (spec.mu - 1)
            # finite-difference error allowance on top of the relative tolerance
            j_slack.append(bound - np.linalg.norm(jac, 2) + 1e-6 * bound)
            j_scale.append(bound)
        checks.append(_run_check("df_dx1_bound", j_slack, j_scale))

    return BoundCheckReport(seed=seed, n_samples=n_samples, radius=radius,
                            checks=tuple(checks))
