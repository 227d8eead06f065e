import numpy as np
import pytest

from cliplta import Taxonomy, build_text_table, stub_embed
from cliplta.taxonomy import CATEGORIES


@pytest.fixture
def small_taxonomy():
    return Taxonomy(
        verbs=("take", "put", "cut", "wash"),
        nouns=("cup", "knife", "pan", "board"),
        scenarios=("cooking", "cleaning", "crafting"),
        places=("kitchen", "workshop", "garden"),
    )


@pytest.fixture
def stub_tables(small_taxonomy):
    def make(c=16, seed=100):
        encoder = lambda prompt: stub_embed(seed, prompt, c)
        return {cat: build_text_table(small_taxonomy, cat, "a photo of {}", encoder)
                for cat in CATEGORIES}
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
