import numpy as np
import pytest

from crosse.graph import add_inverse_relations, build_graph, triples_to_array
from crosse.model import ScoreMode, init_params
from crosse.vocab import Dictionary

import synthetic


def encode_corpus(corpus):
    """Label triples -> (graph with inverses, ent_dict, rel_dict)."""
    ents, rels = Dictionary(), Dictionary()
    encoded = {}
    for split in ("train", "valid", "test"):
        encoded[split] = triples_to_array(
            [(ents.add(h), rels.add(r), ents.add(t)) for h, r, t in corpus[split]]
        )
    g = build_graph(encoded["train"], encoded["valid"], encoded["test"],
                    n_e=len(ents), n_r=len(rels))
    return add_inverse_relations(g), ents, rels


def random_params(n_e: int, n_r_eff: int, d: int, mode: ScoreMode, seed: int = 3):
    return init_params(n_e, n_r_eff, d, mode, seed=seed)


def random_graph(rng, n_e=12, n_r=3, n_train=60, n_valid=8, n_test=8,
                 inverses=True):
    def draw(n):
        cols = [rng.integers(0, n_e, n), rng.integers(0, n_r, n),
                rng.integers(0, n_e, n)]
        return np.stack(cols, axis=1).astype(np.int32)

    g = build_graph(draw(n_train), draw(n_valid), draw(n_test), n_e=n_e, n_r=n_r)
    return add_inverse_relations(g) if inverses else g


@pytest.fixture(scope="session")
def family_corpus():
    return synthetic.family_corpus()


@pytest.fixture(scope="session")
def family_graph(family_corpus):
    return encode_corpus(family_corpus)
