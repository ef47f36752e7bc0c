import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

torch.set_num_threads(1)


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_pose(rng):
    """Random head rotation and a face location in front of the camera."""
    from gazepipe.geometry import HeadPose

    H = random_rotation(rng)
    p = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.3, 1.5)])
    return HeadPose(H, p)


def random_unit(rng, n=None):
    v = rng.standard_normal((n or 1, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v if n else v[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_data():
    """Two subjects, one smooth-pursuit session each, normalized (48 frames)."""
    from gazepipe import synthgen as sg
    from gazepipe.datamodel import SampleSet

    spec = sg.DatasetSpec(n_subjects=2, frames_per_subject=24, sessions=(("FT", "moving"),), seed=11)
    imgs, recs = [], []
    for img, rec, _ in sg.iter_dataset(spec):
        imgs.append(img)
        recs.append(rec)
    return SampleSet.from_records(recs, images=imgs), recs


_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; returns the pass flag."""

    def record(number, title, passed, detail=""):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        _acceptance_lines.append(f"criterion {number} [{status}] {title}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
