import pytest


def _run(geometry, model, T=1.0, dt=1e-3, records=10, initial=None, checks=None, operator=None):
    return {
        "schema_version": "1",
        "geometry": geometry,
        "model": model,
        "operator": operator or {"C": "derived"},
        "integration": {"T": T, "stepping": {"kind": "fixed", "dt": dt}, "records": records,
                        "initial": initial or {"kind": "normal"}, "seeds": [0]},
        "checks": checks or {},
    }


@pytest.fixture
def scalar_decay_config():
    """One point, U = q^2 / 2 and no kernel, so q' = -q."""
    return _run(
        {"kind": "points", "dim": 1, "points": [[0.0]], "radius": 1.0},
        {"variant": "GradientPair", "nu": 1, "potential": {"family": "Quadratic", "a": 0.5}},
        initial={"kind": "constant", "value": 1.0},
    )


@pytest.fixture
def zero_field_config():
    """Constant potential: the field vanishes identically."""
    return _run(
        {"kind": "lattice", "dim": 1, "extent": 2, "radius": 1.0},
        {"variant": "GradientPair", "nu": 1, "potential": {"family": "Custom", "terms": [[1.0, 0]]}},
        dt=0.1,
    )


@pytest.fixture
def negative_control_config():
    """Two coupled points where half the calibrated C breaks the comparison bound."""
    return _run(
        {"kind": "points", "dim": 1, "points": [[0.0], [1.0]], "radius": 1.0},
        {"variant": "GradientPair", "nu": 1, "potential": {"family": "Quadratic", "a": 0.25},
         "kernel": {"family": "LinearPull", "J": 1.0}},
        T=2.0, records=20, initial={"kind": "constant", "value": 1.0},
        operator={"C": "calibrated", "C_factor": 0.5, "samples": 0},
        checks={"comparison": {}},
    )


@pytest.fixture
def blowup_config():
    """U = -|q|^4 pushes q' = 4 q^3, which escapes to infinity before T."""
    return _run(
        {"kind": "points", "dim": 1, "points": [[0.0]], "radius": 1.0},
        {"variant": "GradientPair", "nu": 1, "potential": {"family": "Custom", "terms": [[-1.0, 4]]}},
        T=10.0, dt=0.01, initial={"kind": "constant", "value": 1.0},
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
