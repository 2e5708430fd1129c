import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crosse.model import (
    ModelParams,
    ScoreMode,
    combine_query,
    head_interaction,
    init_params,
    mode_tensors,
    param_count,
    relation_interaction,
    score,
    score_all_tails,
)

import oracles

MODES = (ScoreMode.CROSSE, ScoreMode.CROSSE_S, ScoreMode.TRANSE)


def test_mode_tensor_lists():
    assert mode_tensors(ScoreMode.CROSSE) == ("E", "R", "C", "b")
    assert mode_tensors(ScoreMode.CROSSE_S) == ("E", "R", "b")
    assert mode_tensors(ScoreMode.TRANSE) == ("E", "R")


@pytest.mark.parametrize("mode", MODES)
def test_init_shapes_bounds_and_counts(mode):
    d = 16
    p = init_params(7, 6, d, mode, seed=0)
    p.validate(mode)
    assert p.n_entities == 7 and p.n_relations == 6 and p.dim == d
    bound = 6.0 / np.sqrt(d)
    for name in ("E", "R") + (("C",) if mode is ScoreMode.CROSSE else ()):
        arr = getattr(p, name)
        assert arr.dtype == np.float32
        assert (np.abs(arr) <= bound).all()
        assert np.abs(arr).max() > 0.5 * bound  # actually spread out
    if mode is not ScoreMode.TRANSE:
        assert (p.b == 0).all()
    want = 7 * d + 6 * d
    if mode is ScoreMode.CROSSE:
        want += 6 * d + d
    elif mode is ScoreMode.CROSSE_S:
        want += d
    assert param_count(p) == want


def test_init_seed_reproducible_and_entity_rows_mode_independent():
    a = init_params(5, 4, 8, ScoreMode.CROSSE, seed=11)
    b = init_params(5, 4, 8, ScoreMode.CROSSE, seed=11)
    c = init_params(5, 4, 8, ScoreMode.TRANSE, seed=11)
    d = init_params(5, 4, 8, ScoreMode.CROSSE, seed=12)
    for name, arr in a.tensors().items():
        assert np.array_equal(arr, getattr(b, name))
    assert np.array_equal(a.E, c.E) and np.array_equal(a.R, c.R)
    assert not np.array_equal(a.E, d.E)


def test_validate_rejects_bad_dtype_and_shape():
    p = init_params(4, 2, 8, ScoreMode.CROSSE, seed=0)
    with pytest.raises(ValueError):
        ModelParams(E=p.E.astype(np.float64), R=p.R, C=p.C, b=p.b).validate(
            ScoreMode.CROSSE)
    with pytest.raises(ValueError):
        ModelParams(E=p.E, R=p.R[:, :4], C=p.C, b=p.b).validate(ScoreMode.CROSSE)
    with pytest.raises(ValueError):
        ModelParams(E=p.E, R=p.R).validate(ScoreMode.CROSSE)  # C missing


@pytest.mark.parametrize("mode", MODES)
def test_scores_match_scalar_reference(mode):
    p = init_params(9, 8, 12, mode, seed=5)
    for h, r in [(0, 0), (3, 5), (8, 7)]:
        all_scores = score_all_tails(p, mode, h, r)
        assert all_scores.dtype == np.float64 and all_scores.shape == (9,)
        want = oracles.score_all(p, mode, h, r)
        np.testing.assert_allclose(all_scores, want, rtol=0, atol=1e-12)
        for t in (0, 4, 8):
            assert score(p, mode, h, r, t) == pytest.approx(want[t], abs=1e-12)


def test_scalar_and_vector_paths_agree():
    # same q, but vector-vector vs matrix-vector dots may associate
    # differently, so equality only up to a few ulp
    p = init_params(30, 4, 16, ScoreMode.CROSSE, seed=1)
    sv = score_all_tails(p, ScoreMode.CROSSE, 2, 3)
    for t in range(30):
        assert math.isclose(score(p, ScoreMode.CROSSE, 2, 3, t), sv[t],
                            rel_tol=1e-13, abs_tol=1e-15)


def test_cached_e64_changes_nothing():
    p = init_params(20, 4, 16, ScoreMode.CROSSE, seed=2)
    E64 = p.E.astype(np.float64)
    a = score_all_tails(p, ScoreMode.CROSSE, 1, 2)
    b = score_all_tails(p, ScoreMode.CROSSE, 1, 2, E64=E64)
    assert np.array_equal(a, b)


def test_interaction_helpers():
    p = init_params(6, 4, 8, ScoreMode.CROSSE, seed=3)
    hi = head_interaction(p, [0, 2], 1)
    np.testing.assert_array_equal(hi[0], p.C[1] * p.E[0])
    np.testing.assert_array_equal(hi[1], p.C[1] * p.E[2])
    ri = relation_interaction(p, 2, [0, 3])
    np.testing.assert_array_equal(ri[1], p.C[3] * p.E[2] * p.R[3])


def test_combine_query_undefined_for_transe():
    p = init_params(4, 2, 8, ScoreMode.TRANSE, seed=0)
    with pytest.raises(ValueError):
        combine_query(p, ScoreMode.TRANSE, 0, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 8), st.integers(0, 5), st.integers(0, 8),
       st.sampled_from(MODES))
def test_score_in_valid_range(h, r, t, mode):
    p = init_params(9, 6, 8, mode, seed=9)
    s = score(p, mode, h, r, t)
    if mode is ScoreMode.TRANSE:
        assert s <= 0.0
    else:
        assert 0.0 < s < 1.0


def test_identical_entity_rows_score_identically():
    p = init_params(5, 2, 8, ScoreMode.CROSSE, seed=4)
    p.E[3] = p.E[1]
    sv = score_all_tails(p, ScoreMode.CROSSE, 0, 1)
    assert sv[3] == sv[1]
