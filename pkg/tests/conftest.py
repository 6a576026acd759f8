import numpy as np
import pytest

from ait.problem import coherence, generate_instance


def certified_instances(M, N, k_star, dr, c, count, ensemble="gaussian", start_seed=0, max_tries=500):
    """Instances whose realized coherence satisfies mu < 1/((3+c) k*)."""
    found = []
    seed = start_seed
    while len(found) < count and seed < start_seed + max_tries:
        inst = generate_instance(M, N, k_star, dr, seed=seed, ensemble=ensemble)
        mu = coherence(inst.matrix).mu
        if mu < 1.0 / ((3.0 + c) * k_star):
            found.append((inst, mu))
        seed += 1
    return found


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
