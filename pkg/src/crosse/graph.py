"""Integer-encoded triple store with the adjacency indexes used everywhere else.

A knowledge graph is held as three splits (train/valid/test) of (head,
relation, tail) id triples. Each split keeps four indexes:

  (h, r) -> sorted tail ids          (r, t) -> sorted head ids
  h -> (relation, tail) edge list    t -> (relation, head) edge list

Lookups against the sorted arrays are binary searches, so membership probes
stay cheap even when evaluation issues millions of them. A built graph is
immutable and safe to share across threads.
"""

from __future__ import annotations

import enum
import io
import json
import logging
import os
from typing import Iterable, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

_EMPTY_IDS = np.empty(0, dtype=np.int32)
_EMPTY_EDGES = np.empty((0, 2), dtype=np.int32)


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Split(enum.IntFlag):
    TRAIN = 1
    VALID = 2
    TEST = 4
    ALL = 7


_SPLIT_ORDER = (Split.TRAIN, Split.VALID, Split.TEST)
_SPLIT_NAMES = {Split.TRAIN: "train", Split.VALID: "valid", Split.TEST: "test"}


def split_from_name(name: str) -> Split:
    for s, n in _SPLIT_NAMES.items():
        if n == name:
            return s
    raise ValueError(f"unknown split {name!r} (expected train/valid/test)")


class TripleParseError(ValueError):
    """Malformed line in a triple file; carries the offending line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def load_triples(path, ent_dict, rel_dict) -> list[Triple]:
    """Read a `head<TAB>relation<TAB>tail` file into id triples.

    Labels are encoded in first-seen order, extending the dictionaries in
    place; re-loading a file with the same dictionaries yields identical
    ids. Empty lines are skipped; LF and CRLF both accepted. Labels are
    opaque: no normalization of case or inner whitespace.
    """
    triples = []
    with io.open(path, "r", encoding="utf-8", newline="\n") as f:
        for lineno, line in enumerate(f, start=1):
            if line.endswith("\n"):
                line = line[:-1]
            if line.endswith("\r"):
                line = line[:-1]
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise TripleParseError(
                    path, lineno,
                    f"expected 3 tab-separated fields, got {len(fields)}",
                )
            h, r, t = fields
            triples.append(Triple(ent_dict.add(h), rel_dict.add(r), ent_dict.add(t)))
    return triples


def triples_to_array(triples) -> np.ndarray:
    if isinstance(triples, np.ndarray):
        arr = np.asarray(triples, dtype=np.int32)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"triple array must be (N, 3), got {arr.shape}")
        return arr
    arr = np.array(triples, dtype=np.int32)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    return arr


def _dedup_stable(arr: np.ndarray) -> tuple[np.ndarray, int]:
    """Drop duplicate rows keeping first occurrence order."""
    if len(arr) == 0:
        return arr, 0
    _, first = np.unique(arr, axis=0, return_index=True)
    if len(first) == len(arr):
        return arr, 0
    first.sort()
    return arr[first], len(arr) - len(first)


class _SplitIndex:
    """Adjacency indexes for one split. Internal to KnowledgeGraph."""

    __slots__ = ("arr", "hr", "rt", "out", "inc")

    def __init__(self, arr: np.ndarray):
        self.arr = arr
        h, r, t = arr[:, 0], arr[:, 1], arr[:, 2]
        self.hr = self._group_pairs(h, r, t)
        self.rt = self._group_pairs(r, t, h)
        self.out = self._group_edges(h, r, t)
        self.inc = self._group_edges(t, r, h)

    @staticmethod
    def _group_pairs(a, b, vals):
        # keys (a, b) -> ascending unique vals; lexsort makes slices sorted
        index: dict[tuple[int, int], np.ndarray] = {}
        if len(a) == 0:
            return index
        order = np.lexsort((vals, b, a))
        a, b, vals = a[order], b[order], vals[order]
        boundary = np.empty(len(a), dtype=bool)
        boundary[0] = True
        np.logical_or(a[1:] != a[:-1], b[1:] != b[:-1], out=boundary[1:])
        starts = np.flatnonzero(boundary)
        stops = np.append(starts[1:], len(a))
        for s, e in zip(starts, stops):
            index[(int(a[s]), int(b[s]))] = vals[s:e]
        return index

    @staticmethod
    def _group_edges(key, r, other):
        index: dict[int, np.ndarray] = {}
        if len(key) == 0:
            return index
        order = np.lexsort((other, r, key))
        key, r, other = key[order], r[order], other[order]
        edges = np.column_stack((r, other))
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        stops = np.append(starts[1:], len(key))
        for s, e in zip(starts, stops):
            index[int(key[s])] = edges[s:e]
        return index

    def contains(self, h: int, r: int, t: int) -> bool:
        tails = self.hr.get((h, r))
        if tails is None:
            return False
        i = np.searchsorted(tails, t)
        return i < len(tails) and tails[i] == t


class KnowledgeGraph:
    """Immutable three-split triple store over dense entity/relation ids.

    `n_r` is the number of forward relations; once inverse relations are
    materialized, relation ids run to `n_r_effective = 2 * n_r` and id
    `r + n_r` is the inverse of forward id `r`.
    """

    def __init__(self, splits: dict[Split, np.ndarray], n_e: int, n_r: int,
                 has_inverses: bool = False,
                 duplicates_dropped: dict[str, int] | None = None):
        self.n_e = int(n_e)
        self.n_r = int(n_r)
        self.has_inverses = bool(has_inverses)
        self.duplicates_dropped = duplicates_dropped or {}
        self._splits = {s: _SplitIndex(splits.get(s, _EMPTY_IDS.reshape(0, 3)))
                        for s in _SPLIT_ORDER}
        self._key_cache: dict[Split, np.ndarray] = {}

    @property
    def n_r_effective(self) -> int:
        return 2 * self.n_r if self.has_inverses else self.n_r

    def _selected(self, mask: Split) -> list[_SplitIndex]:
        return [self._splits[s] for s in _SPLIT_ORDER if s & mask]

    def num_triples(self, mask: Split = Split.ALL) -> int:
        return sum(len(ix.arr) for ix in self._selected(mask))

    def triples_array(self, mask: Split = Split.ALL) -> np.ndarray:
        parts = [ix.arr for ix in self._selected(mask)]
        if len(parts) == 1:
            return parts[0]
        return np.concatenate(parts) if parts else _EMPTY_IDS.reshape(0, 3)

    def iter_triples(self, mask: Split = Split.ALL) -> Iterable[Triple]:
        for row in self.triples_array(mask):
            yield Triple(int(row[0]), int(row[1]), int(row[2]))

    def contains(self, t: Triple, mask: Split = Split.ALL) -> bool:
        """True iff the triple is present in any selected split."""
        return any(ix.contains(t.head, t.relation, t.tail)
                   for ix in self._selected(mask))

    def tails(self, h: int, r: int, mask: Split = Split.ALL) -> np.ndarray:
        """Sorted unique tail ids t with (h, r, t) in the selected splits."""
        parts = [v for ix in self._selected(mask)
                 if (v := ix.hr.get((h, r))) is not None]
        if not parts:
            return _EMPTY_IDS
        if len(parts) == 1:
            return parts[0]
        return np.unique(np.concatenate(parts))

    def heads(self, r: int, t: int, mask: Split = Split.ALL) -> np.ndarray:
        """Sorted unique head ids h with (h, r, t) in the selected splits."""
        parts = [v for ix in self._selected(mask)
                 if (v := ix.rt.get((r, t))) is not None]
        if not parts:
            return _EMPTY_IDS
        if len(parts) == 1:
            return parts[0]
        return np.unique(np.concatenate(parts))

    def out_edges(self, h: int, mask: Split = Split.ALL) -> np.ndarray:
        """(k, 2) array of (relation, tail) pairs leaving entity h."""
        parts = [v for ix in self._selected(mask)
                 if (v := ix.out.get(h)) is not None]
        if not parts:
            return _EMPTY_EDGES
        if len(parts) == 1:
            return parts[0]
        return np.concatenate(parts)

    def in_edges(self, t: int, mask: Split = Split.ALL) -> np.ndarray:
        """(k, 2) array of (relation, head) pairs entering entity t."""
        parts = [v for ix in self._selected(mask)
                 if (v := ix.inc.get(t)) is not None]
        if not parts:
            return _EMPTY_EDGES
        if len(parts) == 1:
            return parts[0]
        return np.concatenate(parts)

    def encoded_keys(self, mask: Split = Split.TRAIN) -> np.ndarray:
        """Sorted int64 keys (h * n_r_eff + r) * n_e + t for the selected splits.

        Cached; used for vectorized membership tests in hot loops.
        """
        key = Split(mask)
        cached = self._key_cache.get(key)
        if cached is None:
            arr = self.triples_array(mask).astype(np.int64)
            cached = np.sort(
                (arr[:, 0] * self.n_r_effective + arr[:, 1]) * self.n_e + arr[:, 2]
            )
            self._key_cache[key] = cached
        return cached


def build_graph(train, valid=(), test=(), *, n_e: int, n_r: int) -> KnowledgeGraph:
    """Index train/valid/test triples into a KnowledgeGraph.

    Duplicate triples inside one split are dropped (count logged and kept on
    the graph); duplicates across splits are preserved since the filtered
    ranking protocol accounts for them. Out-of-range ids fail construction.
    """
    splits: dict[Split, np.ndarray] = {}
    dropped: dict[str, int] = {}
    for s, triples in ((Split.TRAIN, train), (Split.VALID, valid), (Split.TEST, test)):
        arr = triples_to_array(triples)
        if len(arr):
            bad_e = (arr[:, [0, 2]] < 0) | (arr[:, [0, 2]] >= n_e)
            bad_r = (arr[:, 1] < 0) | (arr[:, 1] >= n_r)
            if bad_e.any() or bad_r.any():
                row = int(np.argmax(bad_e.any(axis=1) | bad_r))
                raise ValueError(
                    f"{_SPLIT_NAMES[s]} triple {tuple(int(v) for v in arr[row])} "
                    f"out of range for n_e={n_e}, n_r={n_r}"
                )
        arr, n_dup = _dedup_stable(arr)
        if n_dup:
            log.info("dropped %d duplicate %s triples", n_dup, _SPLIT_NAMES[s])
            dropped[_SPLIT_NAMES[s]] = n_dup
        splits[s] = arr
    return KnowledgeGraph(splits, n_e=n_e, n_r=n_r, duplicates_dropped=dropped)


def add_inverse_relations(g: KnowledgeGraph) -> KnowledgeGraph:
    """Materialize (t, r + n_r, h) for every (h, r, t), in the same split.

    The returned graph has n_r_effective = 2 * n_r. Applying this twice is
    rejected.
    """
    if g.has_inverses:
        raise ValueError("inverse relations already materialized")
    splits = {}
    for s in _SPLIT_ORDER:
        arr = g.triples_array(s)
        inv = np.column_stack((arr[:, 2], arr[:, 1] + g.n_r, arr[:, 0]))
        splits[s] = np.concatenate((arr, inv)) if len(arr) else arr
    return KnowledgeGraph(splits, n_e=g.n_e, n_r=g.n_r, has_inverses=True,
                          duplicates_dropped=dict(g.duplicates_dropped))


def inverse_relation(r: int, n_r: int) -> int:
    """Map a relation id to its inverse id and back (r <-> r + n_r)."""
    return r - n_r if r >= n_r else r + n_r


# ---------------------------------------------------------------------------
# Prepared-dataset cache: dictionary dumps plus raw little-endian id triples.
# ---------------------------------------------------------------------------

_CACHE_META = "meta.json"
_CACHE_FILES = {"train": "train.bin", "valid": "valid.bin", "test": "test.bin"}
ENTITY_DICT_FILE = "entities.dict"
RELATION_DICT_FILE = "relations.dict"


def save_dataset(out_dir, splits: dict[str, np.ndarray], ent_dict, rel_dict) -> None:
    """Write dictionaries and a compact binary triple cache to `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    ent_dict.save(os.path.join(out_dir, ENTITY_DICT_FILE))
    rel_dict.save(os.path.join(out_dir, RELATION_DICT_FILE))
    meta = {"n_entities": len(ent_dict), "n_relations": len(rel_dict), "counts": {}}
    for name, fname in _CACHE_FILES.items():
        arr = triples_to_array(splits.get(name, ()))
        meta["counts"][name] = int(len(arr))
        with open(os.path.join(out_dir, fname), "wb") as f:
            f.write(np.ascontiguousarray(arr, dtype="<i4").tobytes())
    with io.open(os.path.join(out_dir, _CACHE_META), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dataset(data_dir):
    """Load a prepared dataset. Returns (graph, ent_dict, rel_dict)."""
    from .vocab import Dictionary

    meta_path = os.path.join(data_dir, _CACHE_META)
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"no prepared dataset at {data_dir} (missing {_CACHE_META})")
    with io.open(meta_path, "r", encoding="utf-8") as f:
        meta = json.load(f)
    ent_dict = Dictionary.load(os.path.join(data_dir, ENTITY_DICT_FILE))
    rel_dict = Dictionary.load(os.path.join(data_dir, RELATION_DICT_FILE))
    if len(ent_dict) != meta["n_entities"] or len(rel_dict) != meta["n_relations"]:
        raise ValueError(
            f"dictionary sizes ({len(ent_dict)}, {len(rel_dict)}) disagree with "
            f"meta ({meta['n_entities']}, {meta['n_relations']})"
        )
    arrays = {}
    for name, fname in _CACHE_FILES.items():
        raw = np.fromfile(os.path.join(data_dir, fname), dtype="<i4")
        want = meta["counts"][name] * 3
        if len(raw) != want:
            raise ValueError(f"{fname}: expected {want} int32 values, found {len(raw)}")
        arrays[name] = raw.reshape(-1, 3).astype(np.int32)
    g = build_graph(arrays["train"], arrays["valid"], arrays["test"],
                    n_e=len(ent_dict), n_r=len(rel_dict))
    return g, ent_dict, rel_dict
