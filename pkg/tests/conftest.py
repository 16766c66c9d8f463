from __future__ import annotations

from pathlib import Path

import pytest

from cphs.config import load_config
from cphs.loop import run_design_loop

ROOT = Path(__file__).resolve().parents[1]
CASE_STUDY = ROOT / "configs" / "case_study.cfg"
PLANTED = ROOT / "configs" / "planted.cfg"

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(scope="session")
def case_config():
    return load_config(CASE_STUDY)


@pytest.fixture(scope="session")
def planted_config():
    return load_config(PLANTED)


@pytest.fixture(scope="session")
def case_result(case_config):
    return run_design_loop(case_config)


@pytest.fixture(scope="session")
def planted_result(planted_config):
    return run_design_loop(planted_config)
