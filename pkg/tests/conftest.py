import pytest

from holosim.config import ScenarioConfig
from holosim.io import generate_synthetic_base
from holosim.rng import make_rng

# (criterion, verdict, detail) lines printed after the run
ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: desk-scale acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in sorted(ACCEPTANCE_LINES, key=lambda r: _order(r[0])):
        terminalreporter.write_line(f"{verdict} {name}: {detail}")


def _order(name):
    head = name.split()[0].lstrip("C")
    digits = "".join(ch for ch in head if ch.isdigit())
    return (int(digits) if digits else 99, name)


@pytest.fixture(scope="session")
def small_base():
    """40 SNPs, 30 taxa, 24 individuals: fast enough for unit tests."""
    return generate_synthetic_base(40, 30, 24, make_rng(11), depth=2000)


@pytest.fixture(scope="session")
def desk_base():
    """Desk-scale synthetic base used by most acceptance checks."""
    return generate_synthetic_base(1000, 400, 300, make_rng(20240))


@pytest.fixture
def small_config():
    return ScenarioConfig(n_gen=2, n_clusters=6, cluster_size_min=2, cluster_size_max=10,
                          otu_g=0.2, qtl_y=10, depth=(2000,), seed=3)
