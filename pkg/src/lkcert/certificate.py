"""Certificate constants: derivative-bound coefficients, attraction radius,
comparison rate and the algebraic decay envelope.

All closed forms are evaluated exactly as stated by the underlying stability
lemmas; root searches use bisection only (each equation is monotone).
Case (a) perturbations (bounded integral) are handled by substituting
omega = 0 and omega/eps = l0 into the case (b) formulas, which reproduces the
case (a) constants identically.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import CaseA, CaseB, LyapunovSpec, PerturbationClass, SystemSpec

__all__ = [
    "DerivedConstants",
    "WSplit",
    "Certificate",
    "CertifyOptions",
    "InfeasibleError",
    "derive_aggregate_constants",
    "split_w",
    "lemma1_constants",
    "lemma2_a1",
    "lemma3_b",
    "find_delta",
    "find_capital_delta",
    "compute_rho",
    "choose_rho_tilde",
    "envelope",
    "certify",
]


class InfeasibleError(RuntimeError):
    """No positive constants exist for the requested configuration."""

    def __init__(self, message: str, violated: str = ""):
        super().__init__(message)
        self.violated = violated


@dataclass(frozen=True)
class DerivedConstants:
    """Aggregate constants built from the system/Lyapunov bound constants."""

    m: float
    eta: float
    p: float
    q: float
    kappa1: float
    kappa2: float
    L1: float
    L2: float
    L3: float


@dataclass(frozen=True)
class WSplit:
    """Split of the decay constant w into w0 + w1 + h*w2 with all parts > 0."""

    w0: float
    w1: float
    w2: float

    def __post_init__(self):
        if self.w0 <= 0 or self.w1 <= 0 or self.w2 <= 0:
            raise ValueError("w0, w1, w2 must all be > 0")


def derive_aggregate_constants(spec: SystemSpec, lyap: LyapunovSpec) -> DerivedConstants:
    m = spec.m1 + spec.m2
    eta = spec.eta11 + spec.eta12
    p = spec.p1 + spec.p2
    q = spec.q11 + spec.q12
    L2 = lyap.psi * p + lyap.beta * q
    return DerivedConstants(
        m=m, eta=eta, p=p, q=q,
        kappa1=lyap.psi * spec.m2 + lyap.beta * spec.eta12,
        kappa2=lyap.psi * spec.p2 + lyap.beta * spec.q12,
        L1=lyap.psi * m + lyap.beta * eta,
        L2=L2,
        L3=L2 + lyap.beta * (spec.q21 + spec.q22),
    )


def split_w(w: float, h: float, w1_frac: float = 0.25,
            w2h_frac: float = 0.25) -> WSplit:
    """Choose w1 = w1_frac*w and w2 = w2h_frac*w/h, leaving w0 = rest.

    The default leaves w0 = w/2.  Fractions with w0 <= 0 are rejected.
    """
    if w <= 0 or h <= 0:
        raise ValueError("w and h must be > 0")
    if w1_frac <= 0 or w2h_frac <= 0:
        raise ValueError("split fractions must be > 0")
    w1 = w1_frac * w
    w2 = w2h_frac * w / h
    w0 = w - w1 - h * w2
    if w0 <= 0:
        raise ValueError(f"w split leaves w0 = {w0:g} <= 0")
    return WSplit(w0=w0, w1=w1, w2=w2)


def _pow(base: float, exponent: float) -> float:
    # 0**0 == 1 so the sigma == mu boundary term survives at delta -> 0
    return base ** exponent


def lemma1_constants(spec: SystemSpec, lyap: LyapunovSpec, dc: DerivedConstants,
                     ws: WSplit, delta: float, eps: float, omega_val: float,
                     omega_over_eps: float) -> tuple[float, float, float]:
    """Coefficients of the certified derivative bound at radius delta.

    May return non-positive values; callers test positivity.  Case (a) uses
    omega_val = 0 and omega_over_eps = l0.
    """
    mu, sigma, h, b = spec.mu, spec.sigma, spec.h, spec.b_hat
    beta = lyap.beta
    d_mu = _pow(delta, mu - 1)
    d_sig = _pow(delta, sigma - 1)
    d_mix = _pow(delta, 2 * sigma - mu - 1)
    # omega_val == 0 (case (a)) kills the delta^(sigma-mu) term even when the
    # exponent is negative there
    omega_term = (beta * dc.p * omega_val * _pow(delta, sigma - mu)
                  if omega_val != 0 else 0.0)
    c0 = (ws.w0
          - omega_term
          - dc.m * h * dc.L1 * d_mu
          - (b * h * (dc.p * dc.L1 + dc.m * dc.L2)
             + dc.m * dc.L3 * omega_over_eps) * d_sig
          - dc.p * b * (b * h * dc.L2 + dc.L3 * omega_over_eps) * d_mix)
    c1 = (ws.w1
          - spec.m2 * h * dc.L1 * d_mu
          - (b * h * (spec.p2 * dc.L1 + spec.m2 * dc.L2)
             + spec.m2 * dc.L3 * omega_over_eps) * d_sig
          - spec.p2 * b * (b * h * dc.L2 + dc.L3 * omega_over_eps) * d_mix)
    c2 = (ws.w2
          - dc.m * dc.kappa1 * d_mu
          - b * (dc.p * dc.kappa1 + dc.m * dc.kappa2) * d_sig
          - dc.p * b * b * dc.kappa2 * d_mix)
    return c0, c1, c2


def lemma2_a1(spec: SystemSpec, lyap: LyapunovSpec, alpha: float, delta: float,
              omega_over_eps: float) -> float:
    """Lower-bound coefficient a1(alpha) on the segment set S_alpha."""
    if alpha <= 1:
        raise ValueError("alpha must be > 1")
    mu, sigma, h, b = spec.mu, spec.sigma, spec.h, spec.b_hat
    beta = lyap.beta
    p = spec.p1 + spec.p2
    return (lyap.alpha0
            - beta * h * (spec.m1 + spec.m2 * alpha ** mu) * _pow(delta, mu - 1)
            - (beta * b * h * (spec.p1 + spec.p2 * alpha ** sigma)
               + beta * p * omega_over_eps) * _pow(delta, sigma - 1))


def lemma3_b(spec: SystemSpec, lyap: LyapunovSpec, ws: WSplit, delta: float,
             omega_over_eps: float) -> tuple[float, float, float, float]:
    """Upper-bound coefficients; b2 and b3 are independent of delta."""
    mu, sigma, h, b = spec.mu, spec.sigma, spec.h, spec.b_hat
    beta = lyap.beta
    m = spec.m1 + spec.m2
    p = spec.p1 + spec.p2
    d_mu = _pow(delta, mu - 1)
    d_sig = _pow(delta, sigma - 1)
    b0 = lyap.alpha1 + beta * m * h * d_mu + beta * p * (b * h + omega_over_eps) * d_sig
    b1 = (beta * spec.m2 + ws.w1 + h * ws.w2) * d_mu + beta * spec.p2 * b * d_sig
    b2 = (beta * m + ws.w1 + h * ws.w2) * h
    b3 = beta * p * (b * h + omega_over_eps)
    return b0, b1, b2, b3


def find_delta(spec: SystemSpec, lyap: LyapunovSpec, dc: DerivedConstants,
               ws: WSplit, alpha: float, eps: float, omega_val: float,
               omega_over_eps: float, safety: float = 0.5,
               cap: float = 1.0) -> float:
    """Largest-feasible-radius policy: safety * sup{delta : c0,c1,c2,a1 > 0}.

    The positivity region is an interval (all four constants are strictly
    decreasing in delta), so the boundary is bisected.  When even the cap is
    feasible (no correction terms bite) the cap itself is returned.
    """
    if not 0 < safety < 1:
        raise ValueError("safety must be in (0, 1)")
    if cap <= 0:
        raise ValueError("cap must be > 0")

    def feasible(delta):
        c0, c1, c2 = lemma1_constants(spec, lyap, dc, ws, delta, eps,
                                      omega_val, omega_over_eps)
        a1 = lemma2_a1(spec, lyap, alpha, delta, omega_over_eps)
        return min(c0, c1, c2, a1) > 0

    if not feasible(0.0):
        raise InfeasibleError(
            f"infeasible at this eps ({eps:g}): positivity fails as delta -> 0",
            violated="delta_zero_limit")
    if feasible(cap):
        return cap
    lo, hi = 0.0, cap
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return safety * lo


def find_capital_delta(lyap: LyapunovSpec, a1: float, b2: float, b3: float,
                       delta: float, gamma: float, mu: float,
                       sigma: float) -> float:
    """Unique positive root of the attraction-region equation.

        alpha1 D^gamma + b2 D^(gamma+mu-1) + b3 D^(gamma+sigma-1) = a1 delta^gamma

    The left side is strictly increasing from 0 and exceeds the right side at
    D = delta (a1 <= alpha0 <= alpha1), so the root lies in (0, delta).
    """
    if a1 <= 0 or delta <= 0:
        raise ValueError("need a1 > 0 and delta > 0")
    alpha1 = lyap.alpha1
    target = a1 * delta ** gamma

    def lhs(d):
        return (alpha1 * d ** gamma + b2 * d ** (gamma + mu - 1)
                + b3 * d ** (gamma + sigma - 1))

    hi = delta
    if lhs(hi) < target:  # cannot occur when a1 <= alpha1; clamp defensively
        return delta
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lhs(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def compute_rho(b0: float, b1: float, c0: float, c2: float, gamma: float,
                mu: float, h: float) -> float:
    """Comparison-equation rate linking v to its derivative bound."""
    if min(b0, b1, c0, c2) <= 0 or h <= 0:
        raise ValueError("all inputs must be > 0")
    b = max(b0, b1)
    c = min(c0, c2)
    return c / (b ** ((gamma + mu - 1) / gamma)
                * (2 * max(1.0, h)) ** ((mu - 1) / gamma))


def choose_rho_tilde(rho: float, alpha: float, h: float, gamma: float,
                     mu: float, sigma: float, alpha1: float, b2: float,
                     b3: float, Delta: float, margin: float = 0.99) -> float:
    """Largest admissible comparison rate below rho.

    The admissibility constraint (linear in rho_tilde) keeps the comparison
    trajectory inside S_alpha:
        1 + rho_tilde * h * ((mu-1)/gamma) * K^((mu-1)/gamma) * Delta^(mu-1)
            <= alpha^(mu-1),  K = alpha1 + b2 Delta^(mu-1) + b3 Delta^(sigma-1).
    """
    if alpha <= 1:
        raise ValueError("alpha must be > 1")
    if not 0 < margin < 1:
        raise ValueError("margin must be in (0, 1)")
    K = alpha1 + b2 * Delta ** (mu - 1) + b3 * Delta ** (sigma - 1)
    coef = h * ((mu - 1) / gamma) * K ** ((mu - 1) / gamma) * Delta ** (mu - 1)
    if coef <= 0:
        return margin * rho
    cond = (alpha ** (mu - 1) - 1) / coef
    return min(margin * rho, cond)


@dataclass(frozen=True)
class Certificate:
    """Complete constant chain of a certified configuration."""

    alpha: float
    eps: float
    omega_val: float
    omega_over_eps: float   # holds l0 in case (a)
    wsplit: WSplit
    delta: float
    c0: float
    c1: float
    c2: float
    a1: float
    b0: float
    b1: float
    b2: float
    b3: float
    Delta: float
    rho: float
    rho_tilde: float
    c_hat1: float
    c_hat2: float
    gamma: float
    mu: float
    sigma: float
    h: float
    alpha1: float

    def upper_coeff(self) -> float:
        """alpha1 + b2 Delta^(mu-1) + b3 Delta^(sigma-1)."""
        D = self.Delta
        return (self.alpha1 + self.b2 * D ** (self.mu - 1)
                + self.b3 * D ** (self.sigma - 1))

    def root_residual(self) -> float:
        """Relative residual of the attraction-region equation at Delta."""
        target = self.a1 * self.delta ** self.gamma
        lhs = self.upper_coeff() * self.Delta ** self.gamma
        return abs(lhs - target) / target

    def admissibility_slack(self) -> float:
        """Slack of the S_alpha admissibility inequality for rho_tilde."""
        lhs = 1 + (self.rho_tilde * self.h * ((self.mu - 1) / self.gamma)
                   * self.upper_coeff() ** ((self.mu - 1) / self.gamma)
                   * self.Delta ** (self.mu - 1))
        return self.alpha ** (self.mu - 1) - lhs

    def validate(self):
        pos = ("delta", "c0", "c1", "c2", "a1", "b0", "b1", "b2",
               "Delta", "rho", "rho_tilde", "c_hat1", "c_hat2")
        for name in pos:
            if getattr(self, name) <= 0:
                raise InfeasibleError(f"certificate field {name} is not positive",
                                      violated=name)
        # b3 multiplies only perturbation corrections and vanishes for an
        # unperturbed system (p = 0)
        if self.b3 < 0:
            raise InfeasibleError("certificate field b3 is negative",
                                  violated="b3")
        if self.alpha <= 1:
            raise InfeasibleError("alpha must be > 1", violated="alpha")
        if self.Delta > self.delta * (1 + 1e-12):
            raise InfeasibleError("Delta exceeds delta", violated="Delta")
        if not self.rho_tilde < self.rho:
            raise InfeasibleError("rho_tilde must be < rho", violated="rho_tilde")
        ratio = self.delta / self.Delta
        if abs(self.c_hat1 - ratio) > 1e-12 * ratio:
            raise InfeasibleError("c_hat1 != delta/Delta identity violated",
                                  violated="c_hat1")
        if self.root_residual() > 1e-10:
            raise InfeasibleError("attraction-region root residual too large",
                                  violated="Delta_residual")
        if self.admissibility_slack() < 0:
            raise InfeasibleError("rho_tilde admissibility violated",
                                  violated="rho_tilde_admissibility")
        # rho is a closed function of the stored constants, so a certificate
        # with an inconsistent c0/c2/b0/b1 quadruple is detectably corrupt
        rho_expect = compute_rho(self.b0, self.b1, self.c0, self.c2,
                                 self.gamma, self.mu, self.h)
        if abs(self.rho - rho_expect) > 1e-12 * rho_expect:
            raise InfeasibleError(
                "rho is inconsistent with min{c0,c2}/max{b0,b1}",
                violated="rho_consistency")


def envelope(cert: Certificate, phi_norm: float, t: float) -> float:
    """Pointwise decay bound for ||x(t, phi)|| when ||phi||_h < Delta."""
    if phi_norm >= cert.Delta:
        raise ValueError(
            f"phi_norm={phi_norm:g} is outside the certified region "
            f"(Delta={cert.Delta:g})")
    if t < 0:
        raise ValueError("t must be >= 0")
    mu = cert.mu
    return (cert.c_hat1 * phi_norm
            * (1 + cert.c_hat2 * phi_norm ** (mu - 1) * t) ** (-1 / (mu - 1)))


@dataclass(frozen=True)
class CertifyOptions:
    """Tunable policies of the certification pipeline.

    eps / delta / rho_tilde, when given, pin the respective quantity instead
    of searching; pinned values are still validated against all constraints.
    """

    safety: float = 0.5
    margin: float = 0.99
    delta_cap: float = 1.0
    w1_frac: float = 0.25
    w2h_frac: float = 0.25
    eps: float | None = None
    delta: float | None = None
    rho_tilde: float | None = None
    eps_grid_min: float = 1e-16
    eps_grid_max: float = 1e-2
    eps_grid_points: int = 15


def _certify_at(spec, lyap, dc, ws, alpha, eps, omega_val, omega_over_eps,
                opts: CertifyOptions):
    """Constants at a fixed eps; returns None when infeasible there."""
    try:
        if opts.delta is not None:
            delta = opts.delta
        else:
            delta = find_delta(spec, lyap, dc, ws, alpha, eps, omega_val,
                               omega_over_eps, safety=opts.safety,
                               cap=opts.delta_cap)
    except InfeasibleError:
        return None
    c0, c1, c2 = lemma1_constants(spec, lyap, dc, ws, delta, eps, omega_val,
                                  omega_over_eps)
    a1 = lemma2_a1(spec, lyap, alpha, delta, omega_over_eps)
    if min(c0, c1, c2, a1) <= 0:
        return None
    b0, b1, b2, b3 = lemma3_b(spec, lyap, ws, delta, omega_over_eps)
    Delta = find_capital_delta(lyap, a1, b2, b3, delta, lyap.gamma, spec.mu,
                               spec.sigma)
    return (delta, c0, c1, c2, a1, b0, b1, b2, b3, Delta)


def certify(spec: SystemSpec, lyap: LyapunovSpec, pclass: PerturbationClass,
            alpha: float, options: CertifyOptions | None = None) -> Certificate:
    """Assemble the full certificate for one perturbation class.

    Case (b) searches a logarithmic eps grid (unless eps is pinned) and keeps
    the eps maximizing the attraction radius, ties broken toward smaller eps.
    """
    opts = options or CertifyOptions()
    if alpha <= 1:
        raise ValueError("alpha must be > 1")
    if isinstance(pclass, CaseA):
        if not spec.sigma > (spec.mu + 1) / 2:
            raise ValueError(
                f"case (a) requires sigma > (mu+1)/2; got sigma={spec.sigma}, "
                f"mu={spec.mu}")
    elif isinstance(pclass, CaseB):
        if not spec.sigma >= spec.mu:
            raise ValueError(
                f"case (b) requires sigma >= mu; got sigma={spec.sigma}, "
                f"mu={spec.mu}")
    else:
        raise TypeError("pclass must be CaseA or CaseB")

    dc = derive_aggregate_constants(spec, lyap)
    ws = split_w(lyap.w, spec.h, opts.w1_frac, opts.w2h_frac)

    if isinstance(pclass, CaseA):
        candidates = [(0.0, 0.0, pclass.l0)]
    elif opts.eps is not None:
        e = opts.eps
        candidates = [(e, pclass.omega_eval(e), pclass.omega_eval(e) / e)]
    else:
        pclass.check_decay()
        grid = [opts.eps_grid_min * (opts.eps_grid_max / opts.eps_grid_min)
                ** (i / (opts.eps_grid_points - 1))
                for i in range(opts.eps_grid_points)]
        candidates = [(e, pclass.omega_eval(e), pclass.omega_eval(e) / e)
                      for e in grid]

    best = None
    first_failure = None
    for eps, omega_val, omega_over_eps in candidates:
        got = _certify_at(spec, lyap, dc, ws, alpha, eps, omega_val,
                          omega_over_eps, opts)
        if got is None:
            if first_failure is None:
                c0, c1, c2 = lemma1_constants(
                    spec, lyap, dc, ws, opts.delta or 0.0, eps, omega_val,
                    omega_over_eps)
                a1 = lemma2_a1(spec, lyap, alpha, opts.delta or 0.0,
                               omega_over_eps)
                named = dict(c0=c0, c1=c1, c2=c2, a1=a1)
                bad = min(named, key=named.get)
                first_failure = InfeasibleError(
                    f"infeasible at eps={eps:g}: {bad} = {named[bad]:g} <= 0",
                    violated=bad)
            continue
        Delta = got[-1]
        # strict improvement keeps the smallest eps on ties
        if best is None or Delta > best[1][-1] * (1 + 1e-12):
            best = ((eps, omega_val, omega_over_eps), got)
    if best is None:
        raise first_failure or InfeasibleError("infeasible at every grid eps")

    (eps, omega_val, omega_over_eps), (delta, c0, c1, c2, a1, b0, b1, b2, b3,
                                       Delta) = best
    gamma = lyap.gamma
    rho = compute_rho(b0, b1, c0, c2, gamma, spec.mu, spec.h)
    if opts.rho_tilde is not None:
        rho_tilde = opts.rho_tilde
    else:
        rho_tilde = choose_rho_tilde(rho, alpha, spec.h, gamma, spec.mu,
                                     spec.sigma, lyap.alpha1, b2, b3, Delta,
                                     margin=opts.margin)
    K = lyap.alpha1 + b2 * Delta ** (spec.mu - 1) + b3 * Delta ** (spec.sigma - 1)
    c_hat1 = (K / a1) ** (1 / gamma)
    c_hat2 = rho_tilde * ((spec.mu - 1) / gamma) * K ** ((spec.mu - 1) / gamma)

    cert = Certificate(
        alpha=alpha, eps=eps, omega_val=omega_val,
        omega_over_eps=omega_over_eps, wsplit=ws, delta=delta,
        c0=c0, c1=c1, c2=c2, a1=a1, b0=b0, b1=b1, b2=b2, b3=b3,
        Delta=Delta, rho=rho, rho_tilde=rho_tilde,
        c_hat1=c_hat1, c_hat2=c_hat2,
        gamma=gamma, mu=spec.mu, sigma=spec.sigma, h=spec.h,
        alpha1=lyap.alpha1,
    )
    cert.validate()
    return cert
