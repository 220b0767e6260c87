import pytest

from aebmc import (
    PhysicalConstants,
    ScenarioSample,
    SimConfig,
    UncertaintyModel,
    VehicleGeometry,
    draw_batch,
    run_parallel,
)


@pytest.fixture(scope="session")
def consts():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def geom():
    return VehicleGeometry()


@pytest.fixture(scope="session")
def config():
    return SimConfig()


@pytest.fixture(scope="session")
def nominal():
    return ScenarioSample(v0=30.0, mu=0.8, theta=0.0, mass=1500.0, c_d=0.3)


@pytest.fixture(scope="session")
def default_model():
    return UncertaintyModel()


@pytest.fixture(scope="session")
def batch_12k(default_model):
    return draw_batch(default_model, 12_000)


@pytest.fixture(scope="session")
def results_12k(batch_12k, config, geom, consts):
    return run_parallel(batch_12k, config, geom, consts).results


# ------------------------------------------------------------ acceptance log

_ACCEPTANCE: dict = {}
_SUMMARY: dict = {}


class _Recorder:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        _ACCEPTANCE.setdefault(number, (title, []))

    def check(self, label: str, ok: bool, detail: str) -> bool:
        ok = bool(ok)
        _ACCEPTANCE[self.number][1].append((label, ok, detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {self.number}.{label}: {detail}")
        return ok

    @property
    def checks(self) -> list:
        return _ACCEPTANCE[self.number][1]

    def summary(self, text: str) -> None:
        _SUMMARY[self.number] = text

    def verdict(self):
        failed = [f"{label}: {detail}" for label, ok, detail in _ACCEPTANCE[self.number][1] if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion():
    return _Recorder


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, checks = _ACCEPTANCE[number]
        ok = all(c[1] for c in checks) and bool(checks)
        bad = [f"{label} ({detail})" for label, good, detail in checks if not good]
        shown = _SUMMARY.get(number) or "; ".join(f"{label}: {detail}" for label, _, detail in checks)
        tail = f" | {shown}" + ("" if ok else " | FAILED: " + "; ".join(bad))
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}{tail}")
