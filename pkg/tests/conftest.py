import os
from pathlib import Path

import numpy as np
import pytest

from advkern.core.data import synthesize
from advkern.core.specs import KernelFamily, KernelSpec, SyntheticSpec, SyntheticTarget


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gaussian():
    return KernelSpec(family=KernelFamily.GAUSSIAN, gamma=1.0)


@pytest.fixture
def linear():
    return KernelSpec(family=KernelFamily.LINEAR)


@pytest.fixture
def sine_data():
    """Small noisy sine problem shared by the solver tests."""
    return synthesize(SyntheticSpec(target=SyntheticTarget.SINE, n=30, noise_sigma=0.1, seed=3))


@pytest.fixture
def regression_csv(tmp_path: Path, rng) -> Path:
    """40-row CSV with two numeric features, one categorical feature and a target."""
    n = 40
    a = rng.uniform(-1, 1, n)
    b = rng.uniform(0, 2, n)
    kind = np.where(np.arange(n) % 2 == 0, "M", "F")
    y = np.sin(2 * a) + 0.5 * b + (kind == "M") + 0.05 * rng.standard_normal(n)
    lines = ["a,b,kind,target"] + [f"{a[i]:.6f},{b[i]:.6f},{kind[i]},{y[i]:.6f}" for i in range(n)]
    path = tmp_path / "regression.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def abalone_csv() -> Path:
    """Path to a local abalone CSV given by ADVKERN_ABALONE_CSV; skips when absent."""
    value = os.environ.get("ADVKERN_ABALONE_CSV")
    if not value or not Path(value).is_file():
        pytest.skip("ADVKERN_ABALONE_CSV is not set")
    return Path(value)
