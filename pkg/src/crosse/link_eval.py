"""Link-prediction evaluation: ranks, MR/MRR/Hit@N, relation-type buckets.

Tail ranks score (h, r, ?) against every entity; head ranks reuse the same
machinery through the inverse relation, scoring (t, r_inv, ?). Ranks use
descending score with pessimistic ties: every candidate scoring >= the
target counts, so the target's own entry makes ranks start at 1. The
filter setting drops candidates known true in any split (other than the
target itself) before counting.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass

import numpy as np

from .graph import KnowledgeGraph, Split, Triple
from .model import ModelParams, ScoreMode, score_all_tails

log = logging.getLogger(__name__)

RAW = "raw"
FILTER = "filter"
SETTINGS = (RAW, FILTER)

TAIL = "tail"
HEAD = "head"
BOTH = "both"

BUCKETS = ("1-1", "1-N", "N-1", "N-N")
ALL_BUCKET = "all"

HIT_KS = (1, 3, 10)


@dataclass
class RankRecord:
    triple: Triple
    direction: str
    raw_rank: int
    filtered_rank: int


def _rank_from_scores(scores: np.ndarray, target: int,
                      known: np.ndarray) -> tuple[int, int]:
    s_true = scores[target]
    raw = int(np.count_nonzero(scores >= s_true))
    others = known[known != target]
    filtered = raw - int(np.count_nonzero(scores[others] >= s_true))
    return raw, filtered


def rank_tail(params: ModelParams, mode: ScoreMode, g: KnowledgeGraph,
              t: Triple, E64: np.ndarray | None = None) -> tuple[int, int]:
    """(raw, filtered) rank of the true tail among all entities."""
    scores = score_all_tails(params, mode, t.head, t.relation, E64)
    known = g.tails(t.head, t.relation, Split.ALL)
    return _rank_from_scores(scores, t.tail, known)


def rank_head(params: ModelParams, mode: ScoreMode, g: KnowledgeGraph,
              t: Triple, E64: np.ndarray | None = None) -> tuple[int, int]:
    """(raw, filtered) rank of the true head, scored under the inverse
    relation as (t, r_inv, ?)."""
    if not g.has_inverses:
        raise ValueError("head ranking needs inverse relations materialized")
    r_inv = t.relation + g.n_r
    if params.n_relations < g.n_r_effective:
        raise ValueError(
            f"params have {params.n_relations} relation rows; head ranking "
            f"needs {g.n_r_effective} (inverse rows missing)")
    scores = score_all_tails(params, mode, t.tail, r_inv, E64)
    known = g.tails(t.tail, r_inv, Split.ALL)
    return _rank_from_scores(scores, t.head, known)


def classify_relations(g: KnowledgeGraph) -> dict[int, str]:
    """Bucket each forward relation by its train-split cardinality.

    tph = triples / distinct heads, hpt = triples / distinct tails;
    both < 1.5 is 1-1, tails-heavy is 1-N, heads-heavy is N-1, else N-N.
    Relations absent from train fall back to the other splits.
    """
    out: dict[int, str] = {}
    for r in range(g.n_r):
        arr = _relation_triples(g, r, Split.TRAIN)
        if len(arr) == 0:
            arr = _relation_triples(g, r, Split.ALL)
            if len(arr) == 0:
                log.warning("relation %d has no triples anywhere; bucketing as N-N", r)
                out[r] = "N-N"
                continue
            log.warning("relation %d missing from train; classified from "
                        "all splits", r)
        tph = len(arr) / len(np.unique(arr[:, 0]))
        hpt = len(arr) / len(np.unique(arr[:, 2]))
        if hpt < 1.5 and tph < 1.5:
            out[r] = "1-1"
        elif hpt < 1.5 <= tph:
            out[r] = "1-N"
        elif tph < 1.5 <= hpt:
            out[r] = "N-1"
        else:
            out[r] = "N-N"
    return out


def _relation_triples(g: KnowledgeGraph, r: int, mask: Split) -> np.ndarray:
    arr = g.triples_array(mask)
    return arr[arr[:, 1] == r]


@dataclass
class MetricsTable:
    """Metric values keyed (metric, setting, bucket, direction), plus
    record counts keyed (bucket, direction)."""

    values: dict[tuple[str, str, str, str], float]
    counts: dict[tuple[str, str], int]
    settings: tuple[str, ...]

    def get(self, metric: str, setting: str = FILTER, bucket: str = ALL_BUCKET,
            direction: str = BOTH) -> float:
        return self.values[(metric, setting, bucket, direction)]

    def rows(self):
        for (metric, setting, bucket, direction), v in sorted(self.values.items()):
            yield metric, setting, bucket, direction, v
        for (bucket, direction), c in sorted(self.counts.items()):
            yield "count", "-", bucket, direction, float(c)

    def to_json_dict(self) -> dict:
        nested: dict = {s: {} for s in self.settings}
        for (metric, setting, bucket, direction), v in self.values.items():
            nested[setting].setdefault(bucket, {}).setdefault(direction, {})[metric] = v
        nested["counts"] = {f"{b}/{d}": c for (b, d), c in sorted(self.counts.items())}
        return nested


def _cell_metrics(ranks: np.ndarray) -> dict[str, float]:
    inv = 1.0 / ranks
    out = {"MR": float(ranks.mean()), "MRR": float(inv.mean())}
    for k in HIT_KS:
        out[f"Hit@{k}"] = float(np.count_nonzero(ranks <= k) / len(ranks))
    return out


def evaluate(params: ModelParams, mode: ScoreMode, g: KnowledgeGraph,
             split: Split = Split.TEST,
             settings: tuple[str, ...] = SETTINGS, threads: int = 1):
    """Rank every triple of the split in both directions.

    Returns (MetricsTable, records). Metrics are aggregated per setting,
    per relation-type bucket (plus "all"), per direction (plus "both").
    Params and graph are read-only here, so triples may be partitioned
    across threads; record order stays that of the split either way.
    """
    mode = ScoreMode(mode)
    for s in settings:
        if s not in SETTINGS:
            raise ValueError(f"unknown setting {s!r} (expected raw/filter)")
    arr = g.triples_array(split)
    arr = arr[arr[:, 1] < g.n_r]  # forward triples; inverses are derived
    if len(arr) == 0:
        raise ValueError(f"no triples to evaluate in split {split!r}")
    buckets = classify_relations(g)
    E64 = params.E.astype(np.float64)

    def work(rows) -> list[RankRecord]:
        recs: list[RankRecord] = []
        for h, r, t in rows:
            trip = Triple(int(h), int(r), int(t))
            tr, tf = rank_tail(params, mode, g, trip, E64)
            recs.append(RankRecord(trip, TAIL, tr, tf))
            hr, hf = rank_head(params, mode, g, trip, E64)
            recs.append(RankRecord(trip, HEAD, hr, hf))
        return recs

    if threads > 1 and len(arr) > 1:
        from concurrent.futures import ThreadPoolExecutor
        bounds = np.linspace(0, len(arr), min(threads, len(arr)) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(work, arr[a:b])
                       for a, b in zip(bounds[:-1], bounds[1:]) if a < b]
            records = [rec for fu in futures for rec in fu.result()]
    else:
        records = work(arr)
    return aggregate(records, buckets, settings), records


def aggregate(records, buckets: dict[int, str],
              settings: tuple[str, ...] = SETTINGS) -> MetricsTable:
    """Fold RankRecords into a MetricsTable (recount-friendly entry point)."""
    values: dict[tuple[str, str, str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    rec_bucket = [buckets[rec.triple.relation] for rec in records]
    for setting in settings:
        ranks = np.array([rec.raw_rank if setting == RAW else rec.filtered_rank
                          for rec in records], dtype=np.float64)
        dirs = np.array([rec.direction for rec in records])
        bks = np.array(rec_bucket)
        for bucket in (ALL_BUCKET,) + BUCKETS:
            b_mask = np.ones(len(records), bool) if bucket == ALL_BUCKET else bks == bucket
            for direction in (BOTH, TAIL, HEAD):
                m = b_mask if direction == BOTH else b_mask & (dirs == direction)
                counts[(bucket, direction)] = int(m.sum())
                if not m.any():
                    continue
                for metric, v in _cell_metrics(ranks[m]).items():
                    values[(metric, setting, bucket, direction)] = v
    return MetricsTable(values=values, counts=counts, settings=tuple(settings))


# -- report files ------------------------------------------------------------

def write_metrics_tsv(table: MetricsTable, path) -> None:
    with io.open(path, "w", encoding="utf-8") as f:
        f.write("metric\tsetting\tbucket\tdirection\tvalue\n")
        for metric, setting, bucket, direction, v in table.rows():
            f.write(f"{metric}\t{setting}\t{bucket}\t{direction}\t{v:.10g}\n")


def write_metrics_json(table: MetricsTable, path) -> None:
    with io.open(path, "w", encoding="utf-8") as f:
        json.dump(table.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_rank_records(records, path) -> None:
    with io.open(path, "w", encoding="utf-8") as f:
        f.write("h\tr\tt\tdirection\traw\tfiltered\n")
        for rec in records:
            f.write(f"{rec.triple.head}\t{rec.triple.relation}\t{rec.triple.tail}"
                    f"\t{rec.direction}\t{rec.raw_rank}\t{rec.filtered_rank}\n")


def load_rank_records(path) -> list[RankRecord]:
    records = []
    with io.open(path, "r", encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("h\t"):
            raise ValueError(f"{path}: not a rank-record dump")
        for line in f:
            if not line.strip():
                continue
            h, r, t, direction, raw, filt = line.rstrip("\n").split("\t")
            records.append(RankRecord(Triple(int(h), int(r), int(t)),
                                      direction, int(raw), int(filt)))
    return records
