import numpy as np
import pytest

from stochcorr.joint_distribution import AssetParams
from stochcorr.vasicek import vasicek_sample


@pytest.fixture
def baseline_assets():
    return AssetParams(0.05, 0.10, (100.0, 100.0), (96.5, 96.5))


def write_chargeoff_csv(path, categories, n_quarters=48, seed=3, percent=True, start_year=1995):
    """Synthetic Fed-shaped file: ``date,<cat>...`` with Vasicek-drawn rates."""
    rng = np.random.default_rng(seed)
    cols = {k: vasicek_sample(p, r, n_quarters, rng) for k, (p, r) in categories.items()}
    scale = 100.0 if percent else 1.0
    with open(path, "w") as fh:
        fh.write("date," + ",".join(categories) + "\n")
        for i in range(n_quarters):
            y, q = start_year + i // 4, i % 4 + 1
            fh.write(f"{y}Q{q}," + ",".join(f"{scale * cols[k][i]:.6f}" for k in categories) + "\n")
    return path


# --------------------------------------------------------------- acceptance

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
