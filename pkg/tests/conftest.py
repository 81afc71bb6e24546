import numpy as np
import pytest

from chipqa.ingest import parse_layout

TINY_LAYOUT = "rows=2\tcols=2\nPS1\t0\t0\t0\nPS1\t1\t1\t0\nPS2\t0\t0\t1\nPS2\t1\t1\t1\n"
TINY_CHIP = "0\t0\t100\n1\t0\t200\n0\t1\t50\n1\t1\t80\n"


@pytest.fixture
def tiny_layout():
    return parse_layout(TINY_LAYOUT)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_files(chips, layout_text=TINY_LAYOUT, batches=None):
    """In-memory file map plus manifest text for ``load_chipset``."""
    files = {"layout.tsv": layout_text}
    rows = ["layout\tlayout.tsv"]
    for i, (name, text) in enumerate(chips.items()):
        files[f"{name}.tsv"] = text
        row = f"chip\t{name}\t{name}.tsv"
        if batches:
            row += f"\t{batches[name]}"
        rows.append(row)
    return "\n".join(rows) + "\n", files.__getitem__


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, secs in _acceptance:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  ({secs:.1f}s)")
