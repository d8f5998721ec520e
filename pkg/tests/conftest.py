"""Shared test configuration.

Pins torch to one thread so training runs are bit-reproducible across
processes, and collects acceptance-criterion verdicts so the terminal
summary ends with one PASS/FAIL line per criterion.
"""

import re

import pytest
import torch

torch.set_num_threads(1)

# criterion number -> (name, ok | None, detail); None marks a skip
ACCEPTANCE: dict = {}


def record_acceptance(num: int, name: str, ok, detail: str) -> None:
    ACCEPTANCE[num] = (name, bool(ok), detail)


@pytest.fixture
def acceptance():
    """Record function the acceptance tests report their verdicts through."""
    return record_acceptance


_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    m = _CRITERION.search(item.name)
    if m and rep.when == "call":
        num, name = int(m.group(1)), m.group(2).replace("_", "-")
        if rep.failed:
            if num in ACCEPTANCE and ACCEPTANCE[num][1]:
                # recorded ok but a later assert blew up; flip the verdict
                ACCEPTANCE[num] = (ACCEPTANCE[num][0], False, ACCEPTANCE[num][2])
            elif num not in ACCEPTANCE:
                msg = "failed"
                if call.excinfo is not None:
                    msg = "error: " + str(call.excinfo.value).split("\n")[0][:120]
                ACCEPTANCE[num] = (name, False, msg)
        elif rep.skipped and num not in ACCEPTANCE:
            ACCEPTANCE[num] = (name, None, "skipped")
    return rep


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[num]
        status = "PASS" if ok else ("SKIP" if ok is None else "FAIL")
        terminalreporter.write_line(
            "criterion %02d %-22s %s  %s" % (num, name, status, detail))
