"""Shared fixtures, plus the acceptance-criteria reporter.

Acceptance tests call the ``criterion`` fixture once per numbered criterion;
the hook at the bottom prints one PASS/FAIL line per criterion after the run
so the gate can be read off the terminal without opening the junit xml.
"""

import random

import pytest

from podnet import crypto

_CRITERION_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, label: str, ok: bool, detail: str = ""):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] acceptance criterion {number}: {label}"
        if detail:
            line += f" -- {detail}"
        _CRITERION_LINES[number] = line
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[number])


@pytest.fixture(scope="session")
def attack_outcomes():
    # One shared execution of the whole adversarial suite; several test
    # modules and two acceptance criteria read from it.
    from podnet.sim import run_attack_suite

    return {outcome.name: outcome for outcome in run_attack_suite()}


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def keypair(rng):
    return crypto.KeyPair.generate(rng)
