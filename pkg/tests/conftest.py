import time

import numpy as np
import pytest

from lkcert import (CaseB, CertifyOptions, InitialFunction, SimConfig,
                    build_example_system, certify, example_omega, simulate)

# Published configuration of the built-in two-state example (mu = sigma = 5)
# and the faster-decaying mu = 3 variant used by the falsification checks.
EX5 = dict(mu=5.0, sigma=5.0, h=10.0, zeta=1e-4)
EX3 = dict(mu=3.0, sigma=3.0, h=0.5, zeta=0.05)

PIN5 = dict(eps=1e-14, delta=1e-3, rho_tilde=3.3e-7)
ALPHA = 1.1
PHI5 = np.array([4.9e-4, 4.9e-4])


@pytest.fixture(scope="session")
def example5():
    return build_example_system(**EX5)


@pytest.fixture(scope="session")
def example3():
    return build_example_system(**EX3)


@pytest.fixture(scope="session")
def cert5(example5):
    spec, lyap = example5
    return certify(spec, lyap, CaseB(omega_eval=example_omega), ALPHA,
                   CertifyOptions(**PIN5))


@pytest.fixture(scope="session")
def cert3(example3):
    spec, lyap = example3
    return certify(spec, lyap, CaseB(omega_eval=example_omega), ALPHA,
                   CertifyOptions(eps=1e-14))


@pytest.fixture(scope="session")
def long_sim5(example5):
    """The [0, 1e4] reference trajectory plus its wall-clock integration time."""
    spec, _ = example5
    phi = InitialFunction.constant(PHI5, spec.h)
    start = time.perf_counter()
    traj = simulate(spec, phi, SimConfig(step=1e-2, t_end=1e4))
    return traj, time.perf_counter() - start


@pytest.fixture(scope="session")
def report_line(request):
    """Write a line straight to the terminal, bypassing output capture."""
    terminal = request.config.pluginmanager.get_plugin("terminalreporter")

    def write(text):
        if terminal is not None:
            terminal.write_line(text)
        else:
            print(text)

    return write
