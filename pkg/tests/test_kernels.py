import numpy as np
import pytest

from crosse.kernels import backend_name, get_kernels
from crosse.model import ScoreMode, init_params

import oracles


def _make_backends():
    mods = [get_kernels("numpy")]
    try:
        mods.append(get_kernels("numba"))
    except ImportError:
        pass
    return mods


BACKENDS = _make_backends()
IDS = [m.NAME for m in BACKENDS]


def bag_arrays(rng, n_bags, n_e, n_r_eff, max_bag=6):
    # dtypes mirror what the training loop hands the kernels
    heads = rng.integers(0, n_e, n_bags).astype(np.int32)
    rels = rng.integers(0, n_r_eff, n_bags).astype(np.int32)
    sizes = rng.integers(2, max_bag + 1, n_bags)
    bag_ptr = np.zeros(n_bags + 1, dtype=np.int64)
    np.cumsum(sizes, out=bag_ptr[1:])
    tails = rng.integers(0, n_e, int(bag_ptr[-1])).astype(np.int32)
    labels = (rng.random(int(bag_ptr[-1])) < 0.4).astype(np.float64)
    return heads, rels, bag_ptr, tails, labels


def zeros_like_params(p):
    return {k: np.zeros(v.shape, dtype=np.float64) for k, v in p.tensors().items()}


def to_bag_list(heads, rels, bag_ptr, tails, labels):
    out = []
    for i in range(len(heads)):
        lo, hi = int(bag_ptr[i]), int(bag_ptr[i + 1])
        out.append((int(heads[i]), int(rels[i]),
                    [(int(t), float(l)) for t, l in zip(tails[lo:hi], labels[lo:hi])]))
    return out


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
@pytest.mark.parametrize("use_keep", [False, True])
def test_crosse_batch_matches_scalar_loss(mod, use_keep):
    rng = np.random.default_rng(0)
    p = init_params(11, 6, 7, ScoreMode.CROSSE, seed=2)
    heads, rels, bag_ptr, tails, labels = bag_arrays(rng, 5, 11, 6)
    keep = (rng.random((5, 7)) < 0.7).astype(np.float32) * np.float32(2.0)
    g = zeros_like_params(p)
    ce_train, ce_eval = mod.crosse_batch(
        p.E, p.R, p.C, p.b, heads, rels, bag_ptr, tails, labels,
        keep, use_keep, g["E"], g["R"], g["C"], g["b"])
    bags = to_bag_list(heads, rels, bag_ptr, tails, labels)
    want_plain = sum(oracles.bag_ce(p, "crosse", h, r, ex) for h, r, ex in bags)
    assert ce_eval == pytest.approx(want_plain, rel=1e-12)
    if use_keep:
        want_kept = sum(oracles.bag_ce(p, "crosse", h, r, ex, keep[i])
                        for i, (h, r, ex) in enumerate(bags))
        assert ce_train == pytest.approx(want_kept, rel=1e-12)
    else:
        assert ce_train == ce_eval


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
def test_crosse_s_batch_matches_scalar_loss(mod):
    rng = np.random.default_rng(1)
    p = init_params(10, 4, 6, ScoreMode.CROSSE_S, seed=4)
    heads, rels, bag_ptr, tails, labels = bag_arrays(rng, 4, 10, 4)
    keep = np.zeros((0, 0), dtype=np.float32)
    g = zeros_like_params(p)
    ce_train, ce_eval = mod.crosse_s_batch(
        p.E, p.R, p.b, heads, rels, bag_ptr, tails, labels,
        keep, False, g["E"], g["R"], g["b"])
    want = sum(oracles.bag_ce(p, "crosse_s", h, r, ex)
               for h, r, ex in to_bag_list(heads, rels, bag_ptr, tails, labels))
    assert ce_train == pytest.approx(want, rel=1e-12)
    assert ce_eval == ce_train


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
def test_transe_batch_matches_scalar_loss(mod):
    rng = np.random.default_rng(2)
    p = init_params(9, 4, 5, ScoreMode.TRANSE, seed=6)
    heads, rels, bag_ptr, tails, labels = bag_arrays(rng, 4, 9, 4)
    g = zeros_like_params(p)
    loss, loss2 = mod.transe_batch(p.E, p.R, heads, rels, bag_ptr, tails,
                                   labels, 1.0, g["E"], g["R"])
    want = sum(oracles.bag_margin(p, h, r, ex, 1.0)
               for h, r, ex in to_bag_list(heads, rels, bag_ptr, tails, labels))
    assert loss == pytest.approx(want, rel=1e-12)
    assert loss2 == loss


@pytest.mark.skipif(len(BACKENDS) < 2, reason="numba backend unavailable")
@pytest.mark.parametrize("mode", list(ScoreMode))
def test_backend_gradient_parity(mode):
    rng = np.random.default_rng(3)
    p = init_params(14, 8, 9, mode, seed=8)
    heads, rels, bag_ptr, tails, labels = bag_arrays(rng, 7, 14, 8)
    keep = (rng.random((7, 9)) < 0.6).astype(np.float32) * np.float32(1.8)
    results = []
    for mod in BACKENDS:
        g = zeros_like_params(p)
        if mode is ScoreMode.CROSSE:
            ces = mod.crosse_batch(p.E, p.R, p.C, p.b, heads, rels, bag_ptr,
                                   tails, labels, keep, True,
                                   g["E"], g["R"], g["C"], g["b"])
        elif mode is ScoreMode.CROSSE_S:
            ces = mod.crosse_s_batch(p.E, p.R, p.b, heads, rels, bag_ptr,
                                     tails, labels, keep, True,
                                     g["E"], g["R"], g["b"])
        else:
            ces = mod.transe_batch(p.E, p.R, heads, rels, bag_ptr, tails,
                                   labels, 1.0, g["E"], g["R"])
        results.append((ces, g))
    (ce_a, ga), (ce_b, gb) = results
    assert ce_a[0] == pytest.approx(ce_b[0], rel=1e-12)
    assert ce_a[1] == pytest.approx(ce_b[1], rel=1e-12)
    for name in ga:
        np.testing.assert_allclose(ga[name], gb[name], rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
def test_fill_negatives_avoids_positives_and_duplicates(mod):
    pos_flat = np.array([1, 3, 5, 0, 2], dtype=np.int32)
    pos_ptr = np.array([0, 3, 5], dtype=np.int64)
    counts = np.array([3, 2], dtype=np.int32)
    rng = np.random.default_rng(7)
    rand_buf = rng.integers(0, 8, 64)
    out = np.empty(5, dtype=np.int32)
    out_ptr = np.array([0, 3, 5], dtype=np.int64)
    consumed = mod.fill_negatives(pos_flat, pos_ptr, counts, 8, rand_buf,
                                  out, out_ptr)
    assert consumed > 0
    bag0, bag1 = out[:3], out[3:]
    assert len(set(bag0.tolist())) == 3 and not set(bag0.tolist()) & {1, 3, 5}
    assert len(set(bag1.tolist())) == 2 and not set(bag1.tolist()) & {0, 2}


@pytest.mark.skipif(len(BACKENDS) < 2, reason="numba backend unavailable")
def test_fill_negatives_backend_exact_parity():
    rng = np.random.default_rng(11)
    pos_flat = np.sort(rng.choice(50, 6, replace=False)).astype(np.int32)
    pos_ptr = np.array([0, 4, 6], dtype=np.int64)
    counts = np.array([5, 4], dtype=np.int32)
    rand_buf = rng.integers(0, 50, 256)
    outs, consumed = [], []
    for mod in BACKENDS:
        out = np.full(9, -1, dtype=np.int32)
        consumed.append(mod.fill_negatives(pos_flat, pos_ptr, counts, 50,
                                           rand_buf.copy(), out,
                                           np.array([0, 5, 9], dtype=np.int64)))
        outs.append(out)
    assert consumed[0] == consumed[1]
    np.testing.assert_array_equal(outs[0], outs[1])


@pytest.mark.parametrize("mod", BACKENDS, ids=IDS)
def test_fill_negatives_reports_exhaustion(mod):
    # only entity 1 is eligible but the buffer keeps offering 0
    pos_flat = np.array([0], dtype=np.int32)
    pos_ptr = np.array([0, 1], dtype=np.int64)
    counts = np.array([1], dtype=np.int32)
    rand_buf = np.zeros(4, dtype=np.int64)
    out = np.empty(1, dtype=np.int32)
    got = mod.fill_negatives(pos_flat, pos_ptr, counts, 2, rand_buf, out,
                             np.array([0, 1], dtype=np.int64))
    assert got == -1


def test_env_selection(monkeypatch):
    monkeypatch.setenv("CROSSE_BACKEND", "numpy")
    assert get_kernels().NAME == "numpy"
    assert backend_name() == "numpy"
    monkeypatch.setenv("CROSSE_BACKEND", "bogus")
    with pytest.raises(ValueError, match="bogus"):
        get_kernels()
