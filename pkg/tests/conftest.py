import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import ACCEPTANCE  # noqa: E402
from vtolftc import VehicleParams, load_scenario, run_scenario  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def shipped_runs():
    """Every shipped scenario run with and without reallocation, computed once."""
    runs = {}
    for name in ("nofault", "sym-1b2b-elev50", "asym-1b3b-elev50"):
        s = load_scenario(name)
        for realloc in (True, False):
            sc = s.with_(reallocation=realloc)
            t0 = time.perf_counter()
            tr = run_scenario(sc)
            tr.elapsed = time.perf_counter() - t0
            runs[name, realloc] = (sc, tr)
    return runs
