"""global pytest fixtures"""
from emoretrieval.emotion_space import Taxonomy, default_lexicon_path, load_lexicon
from emoretrieval.synthetic import SyntheticSpec, gen_synthetic
import pytest
import numpy as np


@pytest.fixture(scope="session")
def lexicon():
    return load_lexicon(default_lexicon_path())


@pytest.fixture(scope="session")
def speech_taxonomy(lexicon):
    return Taxonomy.from_lexicon("speech", ["angry", "happy", "sad", "neutral"], lexicon)


@pytest.fixture(scope="session")
def music_taxonomy(lexicon):
    labels = ["happy", "funny", "sad", "tender", "exciting", "angry", "scary", "noise"]
    return Taxonomy.from_lexicon("music", labels, lexicon)


@pytest.fixture(scope="session")
def small_spec(lexicon):
    return SyntheticSpec(
        lexicon=lexicon,
        n_speech_per_class=20,
        n_music_per_class=10,
        speech_dim=8,
        music_dim=6,
        tag_dim=4,
        separation=10.0,
        noise_sigma=0.5,
    )


@pytest.fixture(scope="session")
def small_bundle(small_spec):
    return gen_synthetic(small_spec, seed=1)


@pytest.fixture(scope="session")
def separable_bundle(lexicon):
    spec = SyntheticSpec(
        lexicon=lexicon,
        n_speech_per_class=100,
        n_music_per_class=100,
        speech_dim=32,
        music_dim=32,
        separation=100.0,
        noise_sigma=0.01,
    )
    return gen_synthetic(spec, seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(seed=1)
