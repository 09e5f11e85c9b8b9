import contextlib
import time

import pytest

CRITERIA = {
    1: "seed round trip, 2^24 window",
    2: "full 2^29 seed-space scan",
    3: "segmentation counts 19 / 20",
    4: "miss-threshold robustness, 50 trials",
    5: "MT state prediction from 624 outputs",
    6: "tempering inversion",
    7: "column bias table",
    8: "rejection-sampled columns unbiased",
    9: "TLS strict/lax conformance matrix",
    10: "certificate lint",
}


def pytest_configure(config):
    config.acceptance_lines = {}


class Recorder:
    def __init__(self, lines):
        self._lines = lines

    @contextlib.contextmanager
    def criterion(self, number):
        note = {"detail": ""}
        t0 = time.perf_counter()
        try:
            yield note
        except BaseException as exc:
            status = "FAIL"
            note["detail"] = note["detail"] or f"{type(exc).__name__}: {exc}".splitlines()[0]
            raise
        else:
            status = "PASS"
        finally:
            line = (f"criterion {number:>2} {status}  {CRITERIA[number]}  "
                    f"[{time.perf_counter() - t0:.1f}s] {note['detail']}").rstrip()
            self._lines[number] = line
            print(line)


@pytest.fixture
def acceptance(request):
    return Recorder(request.config.acceptance_lines)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.acceptance_lines
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in CRITERIA:
        terminalreporter.write_line(lines.get(number, f"criterion {number:>2} NOT RUN  {CRITERIA[number]}"))
