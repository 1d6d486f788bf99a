import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from xaifs.flowdata import Dataset, FeatureSchema, synth_planted  # noqa: E402
from xaifs.models import MLPNet, TrainedModel  # noqa: E402


def make_dataset(x, y, classes=None, names=None):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes = classes or [f"c{i}" for i in range(int(y.max()) + 1)]
    names = names or [f"f{j}" for j in range(x.shape[1])]
    return Dataset(x, y, FeatureSchema.identity(names, classes))


def random_mlp(rng, sizes):
    ws = [rng.normal(size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [rng.normal(size=b) * 0.5 for b in sizes[1:]]
    return TrainedModel.from_network(MLPNet(ws, bs))


@pytest.fixture(scope="session")
def planted_small():
    return synth_planted(1500, 8, 3, 3, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed after the run
VERDICTS: dict[int, tuple[str, str]] = {}


def record(criterion: int, ok: bool | None, detail: str) -> bool:
    """Store a verdict; ``ok=None`` marks a skipped criterion."""
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    VERDICTS[criterion] = (status, detail)
    print(f"criterion {criterion}: {status} ({detail})")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        status, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
