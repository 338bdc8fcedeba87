import pathlib

import pytest
import torch

from keigoseq.rules import FormalityLabel

DATA = pathlib.Path(__file__).parent / "data"


def load_golden():
    rows = []
    for line in (DATA / "rules_golden.tsv").read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            continue
        code, sentence, reason = line.split("\t")
        rows.append((FormalityLabel.from_code(code), sentence, reason))
    return rows


@pytest.fixture(scope="session")
def golden():
    return load_golden()


@pytest.fixture(autouse=True)
def _single_thread():
    # bitwise comparisons assume a fixed reduction order
    torch.set_num_threads(1)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
