import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from locvlad.features import FeatureSet  # noqa: E402


def random_feature_set(rng, m, d, width=100, height=80, image_id="img", nonneg=False):
    kp = np.column_stack(
        [
            rng.uniform(0, width, m),
            rng.uniform(0, height, m),
            rng.uniform(0.5, 10, m),
            rng.uniform(-np.pi, np.pi, m),
        ]
    ).astype(np.float32)
    kp[:, 0] = np.minimum(kp[:, 0], np.nextafter(np.float32(width), np.float32(0)))
    kp[:, 1] = np.minimum(kp[:, 1], np.nextafter(np.float32(height), np.float32(0)))
    desc = rng.uniform(0, 1, (m, d)) if nonneg else rng.normal(0, 1, (m, d))
    return FeatureSet(image_id, width, height, kp, desc.astype(np.float32))


def features_from_descriptors(desc, image_id="img"):
    desc = np.asarray(desc, dtype=np.float32)
    if desc.ndim == 1:
        desc = desc[:, None]
    m = len(desc)
    kp = np.tile(np.array([[1.0, 1.0, 1.0, 0.0]], np.float32), (m, 1))
    return FeatureSet(image_id, 10, 10, kp, desc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
