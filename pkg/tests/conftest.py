import numpy as np
import pytest

from vegspec.net import init_net
from vegspec.spectra import SpectralLibrary, Spectrum, WavelengthGrid

_acceptance_results = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(criterion): exit criterion for the build")


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance_criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance_results.append((marker, report.outcome, report.duration))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        report.acceptance_criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, outcome, duration in _acceptance_results:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {criterion} ({duration:.2f}s)")


def make_library(rows, wavelengths=(500.0, 600.0), label_key="species"):
    """rows: iterable of (species, reflectance) or (species, health, stage, reflectance)."""
    spectra = []
    for i, row in enumerate(rows):
        if len(row) == 2:
            species, refl = row
            health = stage = None
        else:
            species, health, stage, refl = row
        spectra.append(Spectrum(f"s{i:03d}", species, np.asarray(refl, float), health, stage))
    return SpectralLibrary(WavelengthGrid(np.asarray(wavelengths, float)), tuple(spectra), label_key)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_net(rng):
    """Random D=10, H=5, C=3 net with non-zero biases."""
    net = init_net(10, 5, 3, rng)
    return net.replace(b1=rng.normal(0, 0.3, 5), b2=rng.normal(0, 0.3, 3))


@pytest.fixture
def library_factory():
    return make_library
