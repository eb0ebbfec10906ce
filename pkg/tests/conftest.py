import pytest

from kvbeam import BeamParameters, DampingConfiguration, assemble_generator, build_mesh

ACCEPTANCE_LINES = []


def record_criterion(label, passed, detail):
    """Keep one PASS/FAIL line per acceptance criterion for the terminal summary."""
    line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unit_params():
    return BeamParameters()


@pytest.fixture(scope="session")
def small_systems(unit_params):
    """n=16 systems: undamped, shear-damped and bending-damped."""
    mesh = build_mesh(16)
    return {
        "none": assemble_generator(mesh, unit_params, DampingConfiguration()),
        "shear": assemble_generator(mesh, unit_params, DampingConfiguration.single("shear", 1.0, 0.5)),
        "bending": assemble_generator(mesh, unit_params, DampingConfiguration.single("bending", 1.0, 0.5)),
    }
