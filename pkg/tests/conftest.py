import numpy as np
import pytest

from ncsched.model import PlantSpec, random_instance, validate_instance


def scalar_plant(a=0.5, b=1.0, c=1.0, q=1.0, r=1.0, w=1.0, v=1.0, qf=None, x0=0.0, X0=1.0, id=0):
    return PlantSpec.build(id, A=[[a]], B=[[b]], C=[[c]], Q=[[q]], R=[[r]], W=[[w]], V=[[v]],
                           Qf=None if qf is None else [[qf]], x0_mean=[x0], x0_cov=[[X0]])


def instance_of(plants, channels):
    """Instance from independently built plants; ids are reassigned by position."""
    docs = []
    for i, p in enumerate(plants):
        d = {f: getattr(p, f).tolist() for f in ("A", "B", "C", "Q", "Qf", "R", "W", "V", "x0_mean", "x0_cov")}
        d["id"] = i
        docs.append(d)
    return validate_instance({"channels": channels, "plants": docs})


@pytest.fixture
def scalar():
    return scalar_plant


@pytest.fixture(scope="session")
def inst3():
    # all three plants open-loop unstable, like the first numerical example
    return random_instance(3, 1, seed=1)


@pytest.fixture(scope="session")
def inst_mixed():
    return random_instance(3, 1, seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
