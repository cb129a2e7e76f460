import pathlib

import pytest

REPO = pathlib.Path(__file__).resolve().parent.parent
USECASES = REPO / "usecases"


@pytest.fixture(scope="session")
def smarthome_xml() -> str:
    return (USECASES / "smarthome.xml").read_text()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per acceptance criterion at the end of the run."""
    verdicts: dict[str, bool] = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            nodeid = getattr(rep, "nodeid", "")
            outcome = getattr(rep, "outcome", None)
            if "test_acceptance" not in str(nodeid) or outcome is None:
                continue
            verdicts[nodeid] = verdicts.get(nodeid, True) and outcome == "passed"
    if not verdicts:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(verdicts):
        word = "PASS" if verdicts[nodeid] else "FAIL"
        terminalreporter.write_line(f"{word} {nodeid.split('::')[-1]}")
