from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from vigxray.model import ModelConfig, init_weights

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"

# filled by test_acceptance, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(20250101)


@pytest.fixture(scope="session")
def small_weights():
    """Two-layer, 8-dim model on full 196-patch images."""
    return init_weights(ModelConfig(num_layers=2, hidden_dim=8, k=4, num_classes=5, seed=11))


@pytest.fixture(scope="session")
def seven_weights():
    return init_weights(ModelConfig(num_layers=16, hidden_dim=64, k=9, num_classes=10, seed=7))


def random_image(rng, h=224, w=224):
    from vigxray.imaging import ImageRGB

    return ImageRGB(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))
