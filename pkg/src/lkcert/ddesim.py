"""Fixed-step method-of-steps RK4 integrator with dense C1 output.

The delay h must be an exact integer multiple of the step, so the delayed
values needed at RK stage times land either on stored nodes (begin/end of a
completed step) or at a half point, which is filled by cubic Hermite
interpolation from the stored node values and derivatives.  Within the first
delay interval the initial function is read directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import maximum_filter1d

__all__ = [
    "InitialFunction",
    "SimConfig",
    "Trajectory",
    "RhsSystem",
    "SimulationAborted",
    "rhs_eval",
    "simulate",
    "sample",
    "segment_sup_norm",
    "node_segment_sup_norms",
    "in_S_alpha",
]


class SimulationAborted(RuntimeError):
    """Raised when the state becomes non-finite; carries the failure time."""

    def __init__(self, t_fail: float):
        super().__init__(f"simulation aborted: non-finite state at t = {t_fail:g}")
        self.t_fail = t_fail


@dataclass(frozen=True)
class RhsSystem:
    """Minimal right-hand-side bundle accepted by the integrator.

    SystemSpec satisfies the same attribute protocol; this lighter type lets
    test problems (e.g. linear DDEs outside the homogeneous class) reuse the
    integrator.
    """

    n: int
    h: float
    f_eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    q_eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    b_eval: Callable[[float], np.ndarray]


@dataclass(frozen=True)
class InitialFunction:
    """Continuous initial segment phi on [-h, 0] with its sup norm."""

    evaluator: Callable[[float], np.ndarray]
    h: float
    sup_norm: float

    @classmethod
    def from_callable(cls, fn, h: float, num: int = 201) -> "InitialFunction":
        thetas = np.linspace(-h, 0.0, num)
        sup = max(float(np.linalg.norm(fn(float(th)))) for th in thetas)
        return cls(evaluator=fn, h=h, sup_norm=sup)

    @classmethod
    def constant(cls, value, h: float) -> "InitialFunction":
        value = np.asarray(value, dtype=float).copy()
        norm = float(np.linalg.norm(value))
        return cls(evaluator=lambda theta: value, h=h, sup_norm=norm)

    def __call__(self, theta: float) -> np.ndarray:
        return np.asarray(self.evaluator(theta), dtype=float)


@dataclass(frozen=True)
class SimConfig:
    step: float
    t_end: float
    record_stride: int = 1

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be > 0")
        if self.t_end <= 0:
            raise ValueError("t_end must be > 0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


def _delay_multiple(h: float, step: float) -> int:
    ratio = h / step
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"delay h={h} must be a positive integer multiple of step={step}")
    return m


@dataclass(frozen=True)
class Trajectory:
    """Dense piecewise-cubic solution history (nodes, derivatives, phi)."""

    t0: float
    step: float
    h: float
    nodes: np.ndarray    # (N+1, n) states at t0 + k*step
    derivs: np.ndarray   # (N+1, n) RHS values at the nodes
    phi: InitialFunction

    def __post_init__(self):
        _delay_multiple(self.h, self.step)
        self.nodes.setflags(write=False)
        self.derivs.setflags(write=False)

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self.nodes) - 1) * self.step

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(len(self.nodes))

    @property
    def n(self) -> int:
        return self.nodes.shape[1]


def rhs_eval(spec, t: float, x: np.ndarray, x_del: np.ndarray) -> np.ndarray:
    """f(x, x_del) + B(t) Q(x, x_del)."""
    if len(x) != spec.n or len(x_del) != spec.n:
        raise ValueError("state dimension mismatch")
    return spec.f_eval(x, x_del) + spec.b_eval(t) @ spec.q_eval(x, x_del)


def simulate(spec, phi: InitialFunction, cfg: SimConfig) -> Trajectory:
    """Integrate the delay system from t = 0 with classical RK4.

    Deterministic: identical inputs produce bit-identical trajectories.
    Raises SimulationAborted if the state overflows.
    """
    if abs(phi.h - spec.h) > 1e-12 * max(1.0, spec.h):
        raise ValueError("initial function delay horizon differs from spec.h")
    step = cfg.step
    m = _delay_multiple(spec.h, step)
    n_steps = int(math.ceil(cfg.t_end / step - 1e-9))
    n = spec.n

    nodes = np.empty((n_steps + 1, n))
    derivs = np.empty((n_steps + 1, n))
    x = phi(0.0).copy()
    if len(x) != n:
        raise ValueError("initial function dimension mismatch")
    nodes[0] = x

    f_eval, q_eval, b_eval = spec.f_eval, spec.q_eval, spec.b_eval
    half, sixth = 0.5 * step, step / 6.0

    def rhs(t, y, yd):
        return f_eval(y, yd) + b_eval(t) @ q_eval(y, yd)

    for i in range(n_steps):
        t = i * step
        j = i - m
        if j >= 0:
            xd0 = nodes[j]
            xd1 = nodes[j + 1]
            # cubic Hermite midpoint of the completed step [t_j, t_{j+1}]
            xdh = 0.5 * (xd0 + xd1) + 0.125 * step * (derivs[j] - derivs[j + 1])
        else:
            th = t - m * step
            xd0 = phi(th)
            xdh = phi(th + half)
            xd1 = nodes[j + 1] if j + 1 >= 0 else phi(th + step)

        k1 = rhs(t, x, xd0)
        derivs[i] = k1
        th2 = t + half
        k2 = rhs(th2, x + half * k1, xdh)
        k3 = rhs(th2, x + half * k2, xdh)
        k4 = rhs(t + step, x + step * k3, xd1)
        x = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        nodes[i + 1] = x
        if not math.isfinite(float(x.sum())):
            raise SimulationAborted((i + 1) * step)

    j = n_steps - m
    xd = nodes[j] if j >= 0 else phi(n_steps * step - m * step)
    derivs[n_steps] = rhs(n_steps * step, x, xd)

    return Trajectory(t0=0.0, step=step, h=spec.h, nodes=nodes, derivs=derivs,
                      phi=phi)


def sample(traj: Trajectory, t: float) -> np.ndarray:
    """Dense evaluation: exact at nodes, cubic Hermite in between, phi before t0."""
    tol = 1e-9 * max(1.0, abs(t))
    if t < traj.t0 - traj.h - tol or t > traj.t_end + tol:
        raise ValueError(f"t={t} outside [{traj.t0 - traj.h}, {traj.t_end}]")
    if t <= traj.t0:
        return traj.phi(max(t - traj.t0, -traj.h))
    s = (t - traj.t0) / traj.step
    near = int(round(s))
    if abs(s - near) < 1e-9 and 0 <= near < len(traj.nodes):
        return traj.nodes[near].copy()
    i = min(int(math.floor(s)), len(traj.nodes) - 2)
    frac = s - i
    y0, y1 = traj.nodes[i], traj.nodes[i + 1]
    d0, d1 = traj.derivs[i] * traj.step, traj.derivs[i + 1] * traj.step
    u = frac
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u * u * (3 - 2 * u)
    h11 = u * u * (u - 1)
    return h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1


def _segment_grid(traj: Trajectory, t: float) -> np.ndarray:
    m = _delay_multiple(traj.h, traj.step)
    offsets = np.arange(m + 1) * traj.step
    return t - traj.h + offsets


def segment_sup_norm(traj: Trajectory, t: float) -> float:
    """max over the node-aligned grid of ||x(t + theta)||, theta in [-h, 0]."""
    tol = 1e-9 * max(1.0, abs(t))
    if t < traj.t0 - tol or t > traj.t_end + tol:
        raise ValueError(f"t={t} outside [{traj.t0}, {traj.t_end}]")
    grid = np.append(_segment_grid(traj, t), t)
    return max(float(np.linalg.norm(sample(traj, float(s)))) for s in grid)


def node_segment_sup_norms(traj: Trajectory) -> np.ndarray:
    """segment_sup_norm at every node, via a rolling window over node norms.

    Grid semantics match segment_sup_norm at node times.  The pre-history part
    uses phi sampled on the same spacing.
    """
    m = _delay_multiple(traj.h, traj.step)
    pre = np.array([np.linalg.norm(traj.phi(-traj.h + k * traj.step))
                    for k in range(m)])
    norms = np.concatenate([pre, np.linalg.norm(traj.nodes, axis=1)])
    # trailing-window max of width m+1 ending at each index: the window at
    # index j is [j - size//2 - origin, j + (size-1)//2 - origin]
    windowed = maximum_filter1d(norms, size=m + 1, origin=m // 2,
                                mode="nearest")
    return windowed[m:]


def in_S_alpha(traj: Trajectory, t: float, alpha: float) -> bool:
    """True iff ||x(t+theta)|| <= alpha * ||x(t)|| on the node-aligned grid."""
    if alpha <= 1:
        raise ValueError("alpha must be > 1")
    xt = float(np.linalg.norm(sample(traj, t)))
    return segment_sup_norm(traj, t) <= alpha * xt
