import os
from pathlib import Path

import numpy as np
import pytest

from claimtail.data import load_claims

DATA = Path(__file__).parent / "data"
DANISH_N = 2492


def danish_path():
    """Full 2492-claim Danish file: $CLAIMTAIL_DANISH or tests/data/danish.csv."""
    env = os.environ.get("CLAIMTAIL_DANISH")
    for p in ([Path(env)] if env else []) + [DATA / "danish.csv"]:
        if p.exists():
            return p
    return None


@pytest.fixture(scope="session")
def danish_full():
    p = danish_path()
    if p is None:
        pytest.skip("full Danish file not supplied (set CLAIMTAIL_DANISH or add tests/data/danish.csv)")
    return np.sort(load_claims(p).values)


@pytest.fixture(scope="session")
def danish_top():
    """The claims of at least 1M DKK, which are the top 2167 order statistics of the full data."""
    return np.sort(load_claims(DATA / "danish_evir.csv").values)


def full_rank(top, index, n=DANISH_N):
    """Value of the ``index``-th order statistic (1-based) of the full data set, from its top part."""
    pos = index - (n - top.size) - 1
    if pos < 0:
        raise IndexError(f"rank {index} lies below the available upper part")
    return float(top[pos])


# acceptance criterion -> list of (part, status, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, list] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        states = {s for _, s, _ in parts}
        status = "FAIL" if "FAIL" in states else "SKIP" if "SKIP" in states else "PASS"
        detail = "; ".join(f"{p}: {s} {d}".strip() for p, s, d in parts)
        tr.write_line(f"criterion {crit}: {status}  [{detail}]")
