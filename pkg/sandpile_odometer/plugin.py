import pytest

from .tracking import CheckMonitor

DEFAULT_MC_SEED = 20240601

MONITOR_KEY = pytest.StashKey[CheckMonitor]()


def pytest_addoption(parser):
    """
    Pytest hook - register command line arguments. --mc_seed fixes the base
    seed of every Monte Carlo fixture and --mc_report turns on the summary
    of recorded statistical checks.

    Args:
        parser:
    """
    group = parser.getgroup("sandpile_mc")
    group.addoption(
        "--mc_seed",
        dest="mc_seed",
        type=int,
        default=None,
        metavar="SEED",
    )
    group.addoption(
        "--mc_report",
        dest="mc_report",
        action="append",
        default=[],
        metavar="TYPE",
        nargs="?",
        const="term",
    )

    parser.addini("mc_seed", "base seed for Monte Carlo tests", default=str(DEFAULT_MC_SEED))


def pytest_configure(config):
    config.stash[MONITOR_KEY] = CheckMonitor()
    if config.getoption("mc_report"):
        plugin = McReportPlugin(config)
        config.pluginmanager.register(plugin, "_sandpile_mc")


@pytest.fixture
def mc_seed(request):
    """
    Base seed for Monte Carlo tests: --mc_seed, else the mc_seed ini value.
    """
    seed = request.config.getoption("mc_seed")
    if seed is None:
        seed = int(request.config.getini("mc_seed"))
    return seed


@pytest.fixture
def mc_tracker(request):
    """
    Record a statistical check for the session report. Call as
    mc_tracker(name, observed, expected, stderr, band=3.0); returns whether
    |z| <= band.
    """
    monitor = request.config.stash[MONITOR_KEY]
    module = request.module.__name__

    def track(name, observed, expected, stderr, band=3.0):
        return monitor.record(name, module, observed, expected, stderr, band)

    return track


def report_lines(summaries, include_failed=False):
    """
    Lay out the check summary as a table, one row per test module and a
    closing TOTAL row.

    Args:
        summaries (Sequence[ModuleSummary]): as returned by
            CheckMonitor.summaries, TOTAL last
        include_failed (bool): add a column naming the failed checks

    Returns:
        List[str]
    """
    *modules, total = summaries
    width = max([len(row.module) for row in modules] + [5])

    def line(name, checks, fail, rate, failed=None):
        text = f"{name:<{width}}  {checks:>6} {fail:>6} {rate:>9}"
        if failed is not None:
            text += f"   {failed}"
        return text

    def row_line(row):
        failed = None
        if include_failed:
            failed = ", ".join(f"{c.name} (z={c.z:+.2f})" for c in row.failed) if row is not total else ""
        return line(row.module, row.checks, len(row.failed), f"{row.pass_rate}%", failed)

    header = line("Name", "Checks", "Fail", "Pass", "Failed" if include_failed else None)
    rule = "-" * len(header)
    return [
        "-" * 20 + "sandpile_mc" + "-" * 20,
        header,
        rule,
        *(row_line(row) for row in modules),
        rule,
        row_line(total),
    ]


class McReportPlugin:
    def __init__(self, config):
        self.config = config

    def pytest_terminal_summary(self, terminalreporter):
        """
        Pytest hook - called when the test summary is outputted. Here we
        output the number of statistical checks recorded per test module and
        how many of them fell outside their band.

        Args:
            terminalreporter:
        """
        include_failed = "term-failed" in self.config.getoption("mc_report")
        summaries = self.config.stash[MONITOR_KEY].summaries()
        for text in report_lines(summaries, include_failed):
            terminalreporter.write(text + "\n")
