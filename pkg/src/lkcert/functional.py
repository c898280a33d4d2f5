"""Evaluation of the Lyapunov-Krasovskii functional along trajectories.

The functional is

    v(t, phi) = V(phi(0))
              + grad V(phi(0))^T [ int_{-h}^0 (f(phi(0), phi(th))
                                   + B(t+th+h) Q(phi(0), phi(th))) dth
                                   - L(t, eps) Q(phi(0), phi(0)) ]
              + int_{-h}^0 (w1 + (h+th) w2) ||phi(th)||^(gamma+mu-1) dth,

with L(t, eps) the exponentially weighted running integral of B over
[0, t+h], advanced as the matrix ODE dL/dt = B(t+h) - eps L from L(-h) = 0.
B must therefore be evaluable h ahead of the current trajectory time.  Both
theta integrals use composite Simpson on the integrator node grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .certificate import Certificate
from .ddesim import Trajectory, sample
from .model import LyapunovSpec, SystemSpec
from .certificate import WSplit

__all__ = [
    "LState",
    "SegmentGrid",
    "FunctionalTrace",
    "DerivativeBoundReport",
    "simpson_weights",
    "advance_L",
    "initial_lstate",
    "eval_v",
    "trace_functional",
    "check_derivative_bound",
]


def simpson_weights(intervals: int, step: float) -> np.ndarray:
    """Composite Simpson weights on a uniform grid with the given interval count.

    Odd interval counts get a Simpson 3/8 tail on the last three intervals.
    """
    if intervals < 2:
        raise ValueError("need at least 2 intervals for Simpson quadrature")
    w = np.zeros(intervals + 1)
    even_part = intervals if intervals % 2 == 0 else intervals - 3
    if intervals % 2 == 1 and even_part < 2 and even_part != 0:
        raise ValueError(f"cannot tile {intervals} intervals with Simpson panels")
    if even_part >= 2:
        w[0:even_part + 1:2] = 2.0 / 3.0
        w[1:even_part:2] = 4.0 / 3.0
        w[0] = 1.0 / 3.0
        w[even_part] = 1.0 / 3.0
    if intervals % 2 == 1:
        w[even_part] += 3.0 / 8.0
        w[even_part + 1] += 9.0 / 8.0
        w[even_part + 2] += 9.0 / 8.0
        w[even_part + 3] += 3.0 / 8.0
    return w * step


@dataclass(frozen=True)
class LState:
    """Current value of the weighted running integral L(t, eps)."""

    t: float
    eps: float
    L: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.L, 2))


def initial_lstate(eps: float, n: int, h: float) -> LState:
    """L vanishes at t = -h where the integration window is empty."""
    return LState(t=-h, eps=eps, L=np.zeros((n, n)))


def advance_L(state: LState, dt: float, b_eval: Callable[[float], np.ndarray],
              h: float) -> LState:
    """One RK4 step of dL/dt = B(t+h) - eps L.

    dt is expected to equal the simulation step so the B lookups share the
    trajectory node clock.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    eps, t, L = state.eps, state.t, state.L
    b0 = b_eval(t + h)
    bh = b_eval(t + 0.5 * dt + h)
    b1 = b_eval(t + dt + h)
    k1 = b0 - eps * L
    k2 = bh - eps * (L + 0.5 * dt * k1)
    k3 = bh - eps * (L + 0.5 * dt * k2)
    k4 = b1 - eps * (L + dt * k3)
    return LState(t=t + dt, eps=eps,
                  L=L + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4))


@dataclass(frozen=True)
class SegmentGrid:
    """Solution segment phi sampled on the node-aligned theta grid [-h, 0]."""

    values: np.ndarray   # (M+1, n), values[k] = phi(-h + k*step)
    step: float
    h: float

    def __post_init__(self):
        m = len(self.values) - 1
        if m < 2:
            raise ValueError("segment grid needs at least 3 samples")
        if abs(m * self.step - self.h) > 1e-9 * max(1.0, self.h):
            raise ValueError("segment grid is misaligned: M*step != h")

    @property
    def intervals(self) -> int:
        return len(self.values) - 1

    @classmethod
    def from_callable(cls, fn, h: float, step: float) -> "SegmentGrid":
        m = int(round(h / step))
        vals = np.array([np.asarray(fn(-h + k * step), dtype=float)
                         for k in range(m + 1)])
        return cls(values=vals, step=step, h=h)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, t: float) -> "SegmentGrid":
        m = int(round(traj.h / traj.step))
        vals = np.array([sample(traj, t - traj.h + k * traj.step)
                         for k in range(m + 1)])
        return cls(values=vals, step=traj.step, h=traj.h)

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def in_S_alpha(self, alpha: float) -> bool:
        return self.sup_norm() <= alpha * float(np.linalg.norm(self.values[-1]))


def eval_v(t: float, seg: SegmentGrid, lstate: LState, spec: SystemSpec,
           lyap: LyapunovSpec, ws: WSplit) -> float:
    """Value of the functional at time t for the given segment."""
    if abs(lstate.t - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"L state clock {lstate.t} does not match t={t}")
    h, step = seg.h, seg.step
    weights = simpson_weights(seg.intervals, step)
    phi0 = seg.values[-1]
    grad = lyap.grad_eval(phi0)

    integral_vec = np.zeros(spec.n)
    integral_w = 0.0
    power = lyap.gamma + spec.mu - 1
    for k, wk in enumerate(weights):
        theta = -h + k * step
        phik = seg.values[k]
        term = spec.f_eval(phi0, phik) \
            + spec.b_eval(t + theta + h) @ spec.q_eval(phi0, phik)
        integral_vec += wk * term
        integral_w += wk * (ws.w1 + (h + theta) * ws.w2) \
            * float(np.linalg.norm(phik)) ** power

    q00 = spec.q_eval(phi0, phi0)
    return (float(lyap.v_eval(phi0))
            + float(grad @ (integral_vec - lstate.L @ q00))
            + integral_w)


@dataclass(frozen=True)
class FunctionalTrace:
    """Sampled functional values and certified bounds along a trajectory."""

    times: np.ndarray
    v: np.ndarray
    dvdt_fd: np.ndarray       # centered differences, one-sided at the ends
    bound_rhs: np.ndarray     # certified derivative-bound right-hand side
    fd_tol: np.ndarray        # finite-difference error allowance
    in_s_alpha: np.ndarray    # bool flags
    seg_norm: np.ndarray      # ||x_t||_h on the node grid
    x_norm: np.ndarray        # ||x(t)||
    l_norm_ok: bool           # ||L|| <= omega/eps held at every advance

    def __post_init__(self):
        sizes = {len(self.times), len(self.v), len(self.dvdt_fd),
                 len(self.bound_rhs), len(self.fd_tol), len(self.in_s_alpha),
                 len(self.seg_norm), len(self.x_norm)}
        if len(sizes) != 1:
            raise ValueError("trace arrays must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")


def _fd_derivative(times: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centered finite differences plus a documented error allowance.

    The allowance combines the quadratic truncation term (third-derivative
    estimate from third differences) with a roundoff term eps*|v|/dt.
    """
    n = len(v)
    dt = times[1] - times[0]
    d = np.empty(n)
    d[1:-1] = (v[2:] - v[:-2]) / (2 * dt)
    d[0] = (v[1] - v[0]) / dt
    d[-1] = (v[-1] - v[-2]) / dt
    tol = np.empty(n)
    vscale = np.max(np.abs(v)) if n else 0.0
    round_term = 8 * np.finfo(float).eps * vscale / dt
    if n >= 4:
        d3 = np.abs(np.diff(v, 3)) / dt ** 3
        d3 = np.concatenate([[d3[0]], d3, [d3[-1]], [d3[-1]]])[:n]
        tol[:] = dt ** 2 / 6.0 * d3 + round_term
    else:
        tol[:] = round_term
    if n >= 3:
        d2 = np.abs(np.diff(v, 2)) / dt ** 2
        tol[0] = dt / 2.0 * d2[0] + round_term
        tol[-1] = dt / 2.0 * d2[-1] + round_term
    return d, tol


def trace_functional(traj: Trajectory, cert: Certificate, spec: SystemSpec,
                     lyap: LyapunovSpec, stride: int = 1) -> FunctionalTrace:
    """Evaluate v on the strided node grid with L advanced incrementally.

    Also records the certified right-hand side of the derivative bound,
    segment sup norms and S_alpha membership at each sample.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    step = traj.step
    m = int(round(traj.h / traj.step))
    n_nodes = len(traj.nodes)
    sample_idx = np.arange(0, n_nodes, stride)
    ws = cert.wsplit

    # advance L from t = -h to t = 0 on the same step grid
    lstate = initial_lstate(cert.eps, spec.n, spec.h)
    for _ in range(m):
        lstate = advance_L(lstate, step, spec.b_eval, spec.h)

    l_bound = cert.omega_over_eps * (1 + 1e-9) + 1e-30
    l_ok = lstate.norm() <= l_bound

    weights = simpson_weights(m, step)
    power = lyap.gamma + spec.mu - 1
    pre_values = np.array([traj.phi(-traj.h + k * step) for k in range(m)])
    all_values = np.concatenate([pre_values, traj.nodes])
    all_norms = np.linalg.norm(all_values, axis=1)
    norm_pow = all_norms ** power

    times, vs, rhs, salpha, segn, xn = [], [], [], [], [], []
    next_pos = 0
    for i in range(n_nodes):
        if next_pos < len(sample_idx) and i == sample_idx[next_pos]:
            t = traj.t0 + i * step
            # the node-aligned segment is a plain window of the stored history
            seg = SegmentGrid(values=all_values[i:i + m + 1], step=step,
                              h=traj.h)
            v = eval_v(t, seg, lstate, spec, lyap, ws)
            window = norm_pow[i:i + m + 1]
            integral = float(weights @ window)
            rhs_val = (-cert.c0 * norm_pow[i + m]
                       - cert.c1 * norm_pow[i]
                       - cert.c2 * integral)
            norms_win = all_norms[i:i + m + 1]
            times.append(t)
            vs.append(v)
            rhs.append(rhs_val)
            segn.append(float(np.max(norms_win)))
            xn.append(float(all_norms[i + m]))
            salpha.append(bool(np.max(norms_win)
                               <= cert.alpha * all_norms[i + m]))
            next_pos += 1
        if i < n_nodes - 1:
            lstate = advance_L(lstate, step, spec.b_eval, spec.h)
            if l_ok and lstate.norm() > l_bound:
                l_ok = False

    times = np.asarray(times)
    vs = np.asarray(vs)
    dvdt, fd_tol = _fd_derivative(times, vs)
    return FunctionalTrace(
        times=times, v=vs, dvdt_fd=dvdt, bound_rhs=np.asarray(rhs),
        fd_tol=fd_tol, in_s_alpha=np.asarray(salpha, dtype=bool),
        seg_norm=np.asarray(segn), x_norm=np.asarray(xn), l_norm_ok=l_ok)


@dataclass(frozen=True)
class DerivativeBoundReport:
    """Pointwise verification of the two certified derivative inequalities."""

    ok: bool
    worst_slack_bound: float       # min over samples of RHS + tol - dv/dt
    worst_slack_comparison: float  # same for the comparison-equation bound
    first_violation_time: float | None
    n_checked: int
    n_skipped: int                 # samples outside ||x_t||_h <= delta


def check_derivative_bound(trace: FunctionalTrace,
                           cert: Certificate) -> DerivativeBoundReport:
    """Check dv/dt against the certified bound and the comparison equation.

    Tolerance per sample: fd allowance + 1e-9 * |v|.  Samples with
    ||x_t||_h > delta are outside the certified neighbourhood and skipped.
    """
    if len(trace.times) == 0:
        raise ValueError("trace is empty")
    exponent = (cert.gamma + cert.mu - 1) / cert.gamma
    worst_b = math.inf
    worst_c = math.inf
    first_t = None
    checked = skipped = 0
    for i, t in enumerate(trace.times):
        if trace.seg_norm[i] > cert.delta * (1 + 1e-12):
            skipped += 1
            continue
        checked += 1
        tol = trace.fd_tol[i] + 1e-9 * abs(trace.v[i])
        slack_b = trace.bound_rhs[i] + tol - trace.dvdt_fd[i]
        v = max(trace.v[i], 0.0)
        comp_rhs = -cert.rho * v ** exponent
        slack_c = comp_rhs + tol - trace.dvdt_fd[i]
        worst_b = min(worst_b, slack_b)
        worst_c = min(worst_c, slack_c)
        if (slack_b < 0 or slack_c < 0) and first_t is None:
            first_t = float(t)
    ok = first_t is None and checked > 0
    return DerivativeBoundReport(
        ok=ok,
        worst_slack_bound=worst_b if checked else math.nan,
        worst_slack_comparison=worst_c if checked else math.nan,
        first_violation_time=first_t, n_checked=checked, n_skipped=skipped)
