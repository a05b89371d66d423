import pytest

from sandpile_odometer.plugin import report_lines
from sandpile_odometer.tracking import CheckMonitor

PLUGIN = ("-p", "sandpile_odometer.plugin")

test_checks = """
def test_close(mc_tracker):
    assert mc_tracker("close", 1.0, 1.0, 0.1)


def test_near(mc_tracker):
    assert mc_tracker("near", 1.2, 1.0, 0.1)


def test_far(mc_tracker):
    assert not mc_tracker("far off", 1.5, 1.0, 0.1)
"""

test_other_checks = """
def test_wide_band(mc_tracker):
    assert mc_tracker("wide", 1.5, 1.0, 0.1, band=6.0)
"""

test_seed = """
def test_seed(mc_seed):
    print("seed is", mc_seed)
"""


@pytest.fixture
def checks_project(pytester):
    pytester.makepyfile(test_checks=test_checks)
    yield pytester


@pytest.fixture
def two_module_project(checks_project):
    checks_project.makepyfile(test_other_checks=test_other_checks)
    yield checks_project


def test_report(checks_project):
    res = checks_project.runpytest(*PLUGIN, "--mc_report")
    lines = ("-+sandpile_mc-+", "test_checks +3 +1 +66%", "TOTAL +3 +1 +66%")

    res.assert_outcomes(passed=3)
    res.stdout.re_match_lines(lines)


def test_report_with_failed(checks_project):
    res = checks_project.runpytest(*PLUGIN, "--mc_report=term-failed")
    lines = (
        r"Name +Checks +Fail +Pass +Failed",
        r"test_checks +3 +1 +66% +far off \(z=\+5\.00\)",
        r"TOTAL +3 +1 +66%",
    )

    res.stdout.re_match_lines(lines)


def test_report_groups_modules(two_module_project):
    res = two_module_project.runpytest(*PLUGIN, "--mc_report")
    lines = ("test_checks +3 +1 +66%", "test_other_checks +1 +0 +100%", "TOTAL +4 +1 +75%")

    res.stdout.re_match_lines(lines)


def test_no_report_without_flag(checks_project):
    res = checks_project.runpytest(*PLUGIN)

    res.assert_outcomes(passed=3)
    assert "sandpile_mc" not in res.stdout.str()


def test_default_seed(pytester):
    pytester.makepyfile(test_seed=test_seed)

    res = pytester.runpytest(*PLUGIN, "-s")

    res.stdout.fnmatch_lines(["*seed is 20240601*"])


def test_seed_from_command_line(pytester):
    pytester.makepyfile(test_seed=test_seed)

    res = pytester.runpytest(*PLUGIN, "-s", "--mc_seed", "5")

    res.stdout.fnmatch_lines(["*seed is 5*"])


def test_seed_from_ini(pytester):
    pytester.makeini("[pytest]\nmc_seed = 77\n")
    pytester.makepyfile(test_seed=test_seed)

    res = pytester.runpytest(*PLUGIN, "-s")

    res.stdout.fnmatch_lines(["*seed is 77*"])


def test_report_lines_align_columns():
    monitor = CheckMonitor()
    monitor.record("mean", "tests.test_long_module", 0.0, 0.0, 1.0)
    monitor.record("tail", "tests.test_long_module", 4.0, 0.0, 1.0)

    header, _, row, _, total = report_lines(monitor.summaries(), include_failed=True)[1:]

    assert header.split() == ["Name", "Checks", "Fail", "Pass", "Failed"]
    assert row.split(maxsplit=4) == ["tests.test_long_module", "2", "1", "50%", "tail (z=+4.00)"]
    assert total.split() == ["TOTAL", "2", "1", "50%"]
    assert len(header) <= len(row)
