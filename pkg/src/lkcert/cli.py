"""Command-line pipelines: certify, simulate, envelope, trace, repro-example.

Configuration is a TOML document with named sections (system, perturbation,
sim, certify, trace, output); unknown sections or keys are rejected.
Certificates serialize as flat ``key = value`` lines with 17 significant
digits so they round-trip losslessly and diff cleanly.

Exit codes: 0 ok, 1 config error, 2 infeasible / out of certified region,
3 integrator failure, 4 certified-inequality violation, 5 reproduction
tolerance failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import certificate as cert_mod
from . import functional as func_mod
from .certificate import Certificate, CertifyOptions, InfeasibleError, certify
from .ddesim import (InitialFunction, RhsSystem, SimConfig, SimulationAborted,
                     node_segment_sup_norms, simulate)
from .model import (CaseA, CaseB, LyapunovSpec, SystemSpec,
                    build_example_system, example_omega, kappa_and_w)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_INTEGRATOR = 3
EXIT_VIOLATION = 4
EXIT_REPRO = 5


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

_SCHEMA = {
    "system": {"builtin": str, "mu": float, "sigma": float, "h": float,
               "zeta": float},
    "perturbation": {"case": str, "l0": float, "omega": str},
    "sim": {"step": float, "t_end": float, "record_stride": int,
            "phi": list},
    "certify": {"alpha": float, "safety": float, "margin": float,
                "delta_cap": float, "w1_frac": float, "w2h_frac": float,
                "eps": float, "delta": float, "rho_tilde": float,
                "eps_grid_min": float, "eps_grid_max": float,
                "eps_grid_points": int},
    "trace": {"stride": int},
    "output": {"dir": str},
}


@dataclass
class RunConfig:
    system: dict
    perturbation: dict
    sim: dict
    certify: dict
    trace: dict
    output: dict


def load_config(path: str | Path) -> RunConfig:
    """Parse and schema-validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc

    for section in doc:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
    out = {}
    for section, keys in _SCHEMA.items():
        block = doc.get(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in block.items():
            if key not in keys:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            want = keys[key]
            if want is float and isinstance(value, int) \
                    and not isinstance(value, bool):
                value = float(value)
                block[key] = value
            if not isinstance(value, want) or isinstance(value, bool):
                raise ConfigError(
                    f"key '{key}' in [{section}] must be {want.__name__}")
        out[section] = dict(block)
    cfg = RunConfig(**out)
    _validate_physics(cfg)
    return cfg


def _validate_physics(cfg: RunConfig):
    sysc = cfg.system
    if sysc.get("builtin", "example") not in _BUILTINS:
        raise ConfigError(f"unknown builtin system '{sysc.get('builtin')}'; "
                          f"known: {sorted(_BUILTINS)}")
    if "h" in sysc and sysc["h"] <= 0:
        raise ConfigError("system.h must be > 0")
    sim = cfg.sim
    if "step" in sim and sim["step"] <= 0:
        raise ConfigError("sim.step must be > 0")
    if "t_end" in sim and sim["t_end"] <= 0:
        raise ConfigError("sim.t_end must be > 0")
    if "record_stride" in sim and sim["record_stride"] < 1:
        raise ConfigError("sim.record_stride must be >= 1")
    if "phi" in sim and not all(isinstance(v, (int, float))
                                and not isinstance(v, bool)
                                for v in sim["phi"]):
        raise ConfigError("sim.phi must be a list of numbers")
    cer = cfg.certify
    if "alpha" in cer and cer["alpha"] <= 1:
        raise ConfigError("certify.alpha must be > 1")
    pert = cfg.perturbation
    case = pert.get("case", "b")
    if case not in ("a", "b"):
        raise ConfigError("perturbation.case must be 'a' or 'b'")
    if case == "a" and "l0" not in pert:
        raise ConfigError("perturbation case 'a' requires l0")


# --------------------------------------------------------------------------
# builtin systems

def _build_example(cfg: RunConfig):
    sysc = cfg.system
    mu = sysc.get("mu", 5.0)
    sigma = sysc.get("sigma", 5.0)
    h = sysc.get("h", 10.0)
    zeta = sysc.get("zeta", 1e-4)
    return build_example_system(mu, sigma, h, zeta)


def _build_linear_test(cfg: RunConfig):
    """Scalar x'(t) = -x(t-h): integrator test problem, not certifiable."""
    h = cfg.system.get("h", 1.0)
    sys = RhsSystem(
        n=1, h=h,
        f_eval=lambda x1, x2: -x2,
        q_eval=lambda x1, x2: np.zeros(1),
        b_eval=lambda t: np.zeros((1, 1)),
    )
    return sys, None


_BUILTINS = {"example": _build_example, "linear_test": _build_linear_test}


def _build_system(cfg: RunConfig):
    builder = _BUILTINS[cfg.system.get("builtin", "example")]
    return builder(cfg)


def _build_pclass(cfg: RunConfig):
    pert = cfg.perturbation
    if pert.get("case", "b") == "a":
        return CaseA(l0=pert["l0"])
    name = pert.get("omega", "example")
    if name != "example":
        raise ConfigError(f"unknown omega function '{name}'")
    return CaseB(omega_eval=example_omega)


def _certify_options(cfg: RunConfig) -> CertifyOptions:
    cer = dict(cfg.certify)
    cer.pop("alpha", None)
    return CertifyOptions(**cer)


def _initial_function(cfg: RunConfig, h: float, n: int) -> InitialFunction:
    phi = cfg.sim.get("phi")
    if phi is None:
        raise ConfigError("sim.phi (constant initial state) is required")
    vec = np.asarray([float(v) for v in phi])
    if len(vec) != n:
        raise ConfigError(f"sim.phi has length {len(vec)}, system needs {n}")
    return InitialFunction.constant(vec, h)


def _sim_config(cfg: RunConfig, step=None, t_end=None) -> SimConfig:
    sim = cfg.sim
    return SimConfig(step=step if step is not None else sim.get("step", 1e-2),
                     t_end=t_end if t_end is not None else sim.get("t_end", 100.0),
                     record_stride=sim.get("record_stride", 1))


# --------------------------------------------------------------------------
# certificate serialization

_CERT_SCALARS = ("alpha", "eps", "omega_val", "omega_over_eps", "delta",
                 "c0", "c1", "c2", "a1", "b0", "b1", "b2", "b3", "Delta",
                 "rho", "rho_tilde", "c_hat1", "c_hat2", "gamma", "mu",
                 "sigma", "h", "alpha1")


def write_certificate(cert: Certificate, path: str | Path):
    lines = []
    for name in _CERT_SCALARS:
        lines.append(f"{name} = {getattr(cert, name):.17g}")
    for name in ("w0", "w1", "w2"):
        lines.append(f"{name} = {getattr(cert.wsplit, name):.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_certificate(path: str | Path) -> Certificate:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        try:
            values[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad number {val!r}") from exc
    missing = [k for k in _CERT_SCALARS + ("w0", "w1", "w2") if k not in values]
    if missing:
        raise ConfigError(f"certificate file {path} missing keys: {missing}")
    ws = cert_mod.WSplit(w0=values.pop("w0"), w1=values.pop("w1"),
                         w2=values.pop("w2"))
    return Certificate(wsplit=ws, **{k: values[k] for k in _CERT_SCALARS})


# --------------------------------------------------------------------------
# commands

def _out_path(args, cfg: RunConfig, name: str) -> Path:
    base = Path(args.out) if getattr(args, "out", None) \
        else Path(cfg.output.get("dir", "."))
    base.mkdir(parents=True, exist_ok=True)
    return base / name


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    built = _build_system(cfg)
    if built[1] is None:
        print("error: the selected builtin system has no Lyapunov data and "
              "cannot be certified", file=sys.stderr)
        return EXIT_CONFIG
    spec, lyap = built
    pclass = _build_pclass(cfg)
    alpha = cfg.certify.get("alpha", 1.1)
    try:
        cert = certify(spec, lyap, pclass, alpha, _certify_options(cfg))
    except (InfeasibleError, ValueError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    path = _out_path(args, cfg, "certificate.txt")
    write_certificate(cert, path)
    print(f"wrote {path}")
    return EXIT_OK


def _write_csv(path: Path, header: str, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    spec = _build_system(cfg)[0]
    phi = _initial_function(cfg, spec.h, spec.n)
    sim_cfg = _sim_config(cfg, step=args.step, t_end=args.t_end)
    try:
        traj = simulate(spec, phi, sim_cfg)
    except SimulationAborted as exc:
        print(f"integrator failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR
    stride = sim_cfg.record_stride
    idx = np.arange(0, len(traj.nodes), stride)
    path = _out_path(args, cfg, "trajectory.csv")
    header = "t," + ",".join(f"x_{j+1}" for j in range(spec.n)) + ",norm_x"
    rows = ([float(traj.t0 + i * traj.step)]
            + [float(v) for v in traj.nodes[i]]
            + [float(np.linalg.norm(traj.nodes[i]))]
            for i in idx)
    _write_csv(path, header, rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_envelope(args) -> int:
    cfg = load_config(args.config)
    spec = _build_system(cfg)[0]
    cert = read_certificate(args.cert)
    phi = _initial_function(cfg, spec.h, spec.n)
    if phi.sup_norm >= cert.Delta:
        print(f"out of certified region: ||phi||_h = {phi.sup_norm:.6g} >= "
              f"Delta = {cert.Delta:.6g}", file=sys.stderr)
        return EXIT_INFEASIBLE
    sim_cfg = _sim_config(cfg, step=args.step, t_end=args.t_end)
    n_nodes = int(math.ceil(sim_cfg.t_end / sim_cfg.step - 1e-9)) + 1
    idx = np.arange(0, n_nodes, sim_cfg.record_stride)
    path = _out_path(args, cfg, "envelope.csv")
    rows = ([float(i * sim_cfg.step),
             cert_mod.envelope(cert, phi.sup_norm, float(i * sim_cfg.step))]
            for i in idx)
    _write_csv(path, "t,envelope", rows)
    print(f"wrote {path}")
    if args.plot_script:
        script = _out_path(args, cfg, "plot.txt")
        script.write_text(
            "# renderer-agnostic plot commands\n"
            "series trajectory.csv t norm_x solid label=||x(t)||\n"
            "series envelope.csv t envelope dashed label=envelope\n"
            "yscale log\n"
            "xlabel t\n"
            "ylabel norm\n")
        print(f"wrote {script}")
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = load_config(args.config)
    built = _build_system(cfg)
    if built[1] is None:
        print("error: trace needs a certifiable builtin system", file=sys.stderr)
        return EXIT_CONFIG
    spec, lyap = built
    cert = read_certificate(args.cert)
    try:
        cert.validate()
    except InfeasibleError as exc:
        print(f"certificate failed validation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    phi = _initial_function(cfg, spec.h, spec.n)
    sim_cfg = _sim_config(cfg, step=args.step, t_end=args.t_end)
    try:
        traj = simulate(spec, phi, sim_cfg)
    except SimulationAborted as exc:
        print(f"integrator failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR
    stride = cfg.trace.get("stride", 1)
    trace = func_mod.trace_functional(traj, cert, spec, lyap, stride=stride)
    report = func_mod.check_derivative_bound(trace, cert)

    path = _out_path(args, cfg, "trace.csv")
    tol = trace.fd_tol + 1e-9 * np.abs(trace.v)
    exponent = (cert.gamma + cert.mu - 1) / cert.gamma
    comp_rhs = -cert.rho * np.maximum(trace.v, 0.0) ** exponent
    slack = np.minimum(trace.bound_rhs, comp_rhs) + tol - trace.dvdt_fd
    rows = ([float(trace.times[i]), float(trace.v[i]), float(trace.dvdt_fd[i]),
             float(trace.bound_rhs[i]), float(slack[i]),
             int(trace.in_s_alpha[i]), float(trace.seg_norm[i])]
            for i in range(len(trace.times)))
    _write_csv(path, "t,v,dvdt_fd,bound_rhs,slack,in_S_alpha,seg_norm", rows)
    print(f"wrote {path}")
    if not report.ok:
        print(f"certified inequality violated at t = "
              f"{report.first_violation_time}", file=sys.stderr)
        return EXIT_VIOLATION
    if not trace.l_norm_ok:
        print("||L(t,eps)|| exceeded omega(eps)/eps", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"ok: {report.n_checked} samples checked, worst slack "
          f"{report.worst_slack_bound:.3e}")
    return EXIT_OK


# --------------------------------------------------------------------------
# reproduction of the published example

_REPRO = dict(mu=5.0, sigma=5.0, h=10.0, zeta=1e-4, alpha=1.1, eps=1e-14,
              delta=1e-3, rho_tilde=3.3e-7, phi=4.9e-4, step=1e-2, t_end=1e4,
              record_stride=100)

_TABLE = dict(w=6.2e-6, delta=1e-3, Delta_lo=5e-4, Delta_hi=1e-3,
              c_hat2=6.7e-8)


def cmd_repro_example(args) -> int:
    """Full pipeline with the published example constants; writes a report."""
    out = Path(args.out or "repro_out")
    out.mkdir(parents=True, exist_ok=True)
    t_end = args.t_end if args.t_end is not None else _REPRO["t_end"]
    step = args.step if args.step is not None else _REPRO["step"]

    checks = []

    def check(name, ok, detail):
        checks.append((name, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

    t_start = time.time()
    spec, lyap = build_example_system(_REPRO["mu"], _REPRO["sigma"],
                                      _REPRO["h"], _REPRO["zeta"])
    _, w = kappa_and_w(_REPRO["zeta"], _REPRO["mu"])
    check("w_value", abs(w - _TABLE["w"]) <= 0.02 * _TABLE["w"],
          f"w = {w:.6g}, published {_TABLE['w']:.2g}")

    opts = CertifyOptions(eps=_REPRO["eps"], delta=_REPRO["delta"],
                          rho_tilde=_REPRO["rho_tilde"])
    try:
        cert = certify(spec, lyap, CaseB(omega_eval=example_omega),
                       _REPRO["alpha"], opts)
    except InfeasibleError as exc:
        check("certificate", False, f"infeasible: {exc}")
        _write_repro_report(out, checks)
        return EXIT_REPRO
    cert_time = time.time() - t_start
    write_certificate(cert, out / "certificate.txt")

    check("delta_feasible", min(cert.c0, cert.c1, cert.c2, cert.a1) > 0,
          f"c0={cert.c0:.3g} c1={cert.c1:.3g} c2={cert.c2:.3g} a1={cert.a1:.3g}")
    check("Delta_range", _TABLE["Delta_lo"] <= cert.Delta <= _TABLE["Delta_hi"],
          f"Delta = {cert.Delta:.6g}, published 7e-4")
    check("c_hat2",
          abs(cert.c_hat2 - _TABLE["c_hat2"]) <= 0.15 * _TABLE["c_hat2"],
          f"c_hat2 = {cert.c_hat2:.6g}, published {_TABLE['c_hat2']:.2g}")
    check("rho_tilde_admissible",
          cert.rho_tilde < cert.rho and cert.admissibility_slack() >= 0,
          f"rho_tilde = {cert.rho_tilde:.3g} < rho = {cert.rho:.3g}, "
          f"slack = {cert.admissibility_slack():.3g}")
    check("c_hat1_identity",
          abs(cert.c_hat1 - cert.delta / cert.Delta)
          <= 1e-12 * (cert.delta / cert.Delta),
          f"c_hat1 = {cert.c_hat1:.12g} vs delta/Delta = "
          f"{cert.delta / cert.Delta:.12g}")
    check("certify_runtime", cert_time < 1.0, f"{cert_time:.3f} s")

    phi = InitialFunction.constant(np.array([_REPRO["phi"], _REPRO["phi"]]),
                                   spec.h)
    sim_cfg = SimConfig(step=step, t_end=t_end,
                        record_stride=_REPRO["record_stride"])
    t_start = time.time()
    try:
        traj = simulate(spec, phi, sim_cfg)
    except SimulationAborted as exc:
        check("simulation", False, str(exc))
        _write_repro_report(out, checks)
        return EXIT_REPRO
    sim_time = time.time() - t_start

    idx = np.arange(0, len(traj.nodes), sim_cfg.record_stride)
    times = traj.t0 + idx * traj.step
    norms = np.linalg.norm(traj.nodes[idx], axis=1)
    env = np.array([cert_mod.envelope(cert, phi.sup_norm, float(t))
                    for t in times])
    _write_csv(out / "trajectory.csv", "t,x_1,x_2,norm_x",
               ([float(times[k]), float(traj.nodes[idx[k], 0]),
                 float(traj.nodes[idx[k], 1]), float(norms[k])]
                for k in range(len(idx))))
    _write_csv(out / "envelope.csv", "t,envelope",
               ([float(times[k]), float(env[k])] for k in range(len(idx))))

    check("envelope_dominance", bool(np.all(norms <= env)),
          f"max ratio = {float(np.max(norms / env)):.6g}")
    seg_sup = node_segment_sup_norms(traj)
    check("segment_in_delta", bool(np.all(seg_sup <= cert.delta)),
          f"max ||x_t||_h = {float(np.max(seg_sup)):.6g} <= delta = "
          f"{cert.delta:.3g}")
    check("sim_runtime", sim_time < 60.0, f"{sim_time:.1f} s")

    _write_repro_report(out, checks)
    ok = all(c[1] for c in checks)
    if not ok:
        failed = [c[0] for c in checks if not c[1]]
        print(f"reproduction FAILED: {failed}", file=sys.stderr)
        return EXIT_REPRO
    print(f"reproduction ok; outputs in {out}")
    return EXIT_OK


def _write_repro_report(out: Path, checks):
    with open(out / "report.txt", "w") as fh:
        for name, ok, detail in checks:
            fh.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lkcert",
        description="Stability certificates and solution envelopes for "
                    "homogeneous time-delay systems")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_config=True, needs_cert=False):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True)
        if needs_cert:
            p.add_argument("--cert", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--step", type=float, default=None)
        p.add_argument("--t-end", dest="t_end", type=float, default=None)
        p.add_argument("--seed", type=int, default=12345)
        p.add_argument("--plot-script", action="store_true")
        p.set_defaults(fn=fn)
        return p

    add("certify", cmd_certify)
    add("simulate", cmd_simulate)
    add("envelope", cmd_envelope, needs_cert=True)
    add("trace", cmd_trace, needs_cert=True)
    add("repro-example", cmd_repro_example, needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
