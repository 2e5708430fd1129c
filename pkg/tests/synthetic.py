"""Synthetic desk-scale corpus with a known compositional rule.

Families of husband/wife/children where hasWife(h, w) and hasChild(w, c)
always imply isFatherOf(h, c). Career facts (worksAs) and home towns
(livesIn) act as distractors. A slice of the isFatherOf triples is held
out, so a model that learns the composition can place the right children
on top, and the explanation search has real paths to find.
"""

from __future__ import annotations

import numpy as np

HAS_WIFE = "hasWife"
HAS_CHILD = "hasChild"
IS_FATHER_OF = "isFatherOf"
WORKS_AS = "worksAs"
LIVES_IN = "livesIn"


def family_corpus(n_families: int = 130, n_jobs: int = 5, seed: int = 7,
                  test_fraction: float = 0.10, valid_fraction: float = 0.04,
                  n_cities: int = 8, children=(1, 4)):
    """Returns dict with train/valid/test label-triple lists plus counts."""
    rng = np.random.default_rng([seed, 91])
    base = []
    father_facts = []
    people = []
    for i in range(n_families):
        h, w = f"h{i}", f"w{i}"
        people.extend([h, w])
        base.append((h, HAS_WIFE, w))
        for j in range(int(rng.integers(*children))):
            c = f"c{i}_{j}"
            people.append(c)
            base.append((w, HAS_CHILD, c))
            father_facts.append((h, IS_FATHER_OF, c))
    jobs = [f"job{k}" for k in range(n_jobs)]
    cities = [f"city{k}" for k in range(n_cities)]
    for p in people:
        if rng.random() < 0.35:
            base.append((p, WORKS_AS, jobs[int(rng.integers(n_jobs))]))
        if rng.random() < 0.3:
            base.append((p, LIVES_IN, cities[int(rng.integers(n_cities))]))

    order = rng.permutation(len(father_facts))
    n_test = max(1, int(round(test_fraction * len(father_facts))))
    test = [father_facts[i] for i in order[:n_test]]
    train = base + [father_facts[i] for i in order[n_test:]]

    # valid is carved from the distractor noise so every family edge stays
    # in train and each held-out fact keeps its two premises reachable
    career = [i for i, tr in enumerate(train)
              if tr[1] in (WORKS_AS, LIVES_IN)]
    if not career:
        career = list(range(len(train)))
    order2 = rng.permutation(len(career))
    n_valid = min(len(career) - 1 or 1,
                  max(1, int(round(valid_fraction * len(train)))))
    chosen = {career[i] for i in order2[:n_valid]}
    valid = [train[i] for i in sorted(chosen)]
    train = [tr for i, tr in enumerate(train) if i not in chosen]

    return {
        "train": train,
        "valid": valid,
        "test": test,
        "relations": (HAS_WIFE, HAS_CHILD, IS_FATHER_OF, WORKS_AS,
                      LIVES_IN),
    }


def write_corpus_files(corpus, directory) -> dict[str, str]:
    paths = {}
    for split in ("train", "valid", "test"):
        p = directory / f"{split}.txt"
        with open(p, "w", encoding="utf-8") as fh:
            for h, r, t in corpus[split]:
                fh.write(f"{h}\t{r}\t{t}\n")
        paths[split] = str(p)
    return paths
