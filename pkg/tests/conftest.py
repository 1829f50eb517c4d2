import numpy as np
import pytest

from seqvis.masks import rle_encode
from seqvis.sequence import SequenceResult
from seqvis.synth import ScenarioConfig, generate_dataset, save_dataset

# filled by the acceptance module, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []

PERTURBED = dict(detector="oracle", propagator="oracle", morph_radius=1, score_noise=0.6)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def benchmark():
    """The default 20-video synthetic benchmark."""
    return generate_dataset(ScenarioConfig())


@pytest.fixture(scope="session")
def benchmark_path(benchmark, tmp_path_factory):
    return save_dataset(benchmark, tmp_path_factory.mktemp("bench") / "dataset.json")


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(ScenarioConfig(video_count=3, frames_per_video=10, rng_seed=7))


@pytest.fixture(scope="session")
def small_path(small_dataset, tmp_path_factory):
    return save_dataset(small_dataset, tmp_path_factory.mktemp("small") / "dataset.json")


def random_masks(rng, t, h, w, p=0.4):
    return tuple(rle_encode(rng.random((h, w)) < p) for _ in range(t))


def result(masks, score=1.0, category=1, video="v", key_frame=0, slot=0):
    return SequenceResult(video, key_frame, slot, category, score, tuple(masks))
