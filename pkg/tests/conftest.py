import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

# derandomized so the suite is reproducible run to run
settings.register_profile(
    "ci", derandomize=True, deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def small_synth():
    """A 3000-block chain from a 12-miner mixed population, with its truth."""
    from chainagents.synth import generate, mixed_population

    return generate(mixed_population(12, 3000, seed=2), 3000, seed=5, settle=True)


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; printed in the terminal summary."""
    lines = request.config.stash.setdefault(_CRITERIA, {})

    def record(number: int, ok: bool, title: str, detail: str = ""):
        lines[number] = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}" + (f" | {detail}" if detail else "")
        print(lines[number])

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
