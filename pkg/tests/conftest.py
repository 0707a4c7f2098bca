import numpy as np
import pytest

from mespot.dataio import dataset_config
from mespot.synth import SynthEvent, SynthSpec, generate_sequence


@pytest.fixture
def casme2():
    return dataset_config("CASME2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_spec(events=(), **kw):
    params = dict(video_id="v1", subject_id="s1", fps=30.0, duration_s=4.0,
                  noise_sigma=0.0, seed=7, events=tuple(events))
    params.update(kw)
    return SynthSpec(**params)


@pytest.fixture
def brow_event_video():
    """A 4 s synthetic video with one 300 ms brightening at the inner right eyebrow."""
    spec = small_spec([SynthEvent("micro", "right_brow_inner", 50, 9, 40.0)])
    return generate_sequence(spec)
