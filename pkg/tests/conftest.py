import numpy as np
import pytest

from afpo.analytic import baseline_params


def mixed_uniform_eps(n: int, seed: int = 0, params=None) -> np.ndarray:
    """Two-region residual claims: S = 0 w.p. p0, else U[0, W]; split in proportion to mu."""
    p = params or baseline_params()
    rng = np.random.default_rng(seed)
    s = np.where(rng.random(n) < p.p0, 0.0, rng.uniform(0.0, p.W, n))
    share = p.mu1 / (p.mu1 + p.mu2)
    return np.column_stack([s * share, s * (1 - share)])


@pytest.fixture(scope="session")
def baseline():
    return baseline_params()


@pytest.fixture(scope="session")
def baseline_eps():
    return mixed_uniform_eps(200_000, seed=1)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
