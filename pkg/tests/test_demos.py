import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parent.parent / "demos"

# the training demo repeats the synthetic overfit acceptance run, so it is left out here
QUICK = sorted(p.name for p in DEMOS.glob("0[1-5]_*.py"))


def test_all_quick_demos_found():
    assert len(QUICK) == 5


@pytest.mark.parametrize("name", QUICK)
def test_demo_runs(name):
    proc = subprocess.run([sys.executable, str(DEMOS / name)], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip()
