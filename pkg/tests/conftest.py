import pytest

from camsearch.kinematics import RobotGeometry
from camsearch.workspace import CameraSpec, build_layout


@pytest.fixture(scope="session")
def geom_visual():
    return RobotGeometry(extension=0.017)


@pytest.fixture(scope="session")
def geom_tool():
    return RobotGeometry(extension=0.127)


@pytest.fixture(scope="session")
def layout(geom_visual, geom_tool):
    return build_layout(geom_visual, geom_tool, CameraSpec(), l_m=2.83, l_vt=4.182,
                        r_v=1.716, r_t=1.606, visual_reach_extension=0.033)


@pytest.fixture(scope="session")
def reference_world():
    from camsearch.scenario import World, load_scenario

    return World(load_scenario())


_VERDICTS: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def report(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
