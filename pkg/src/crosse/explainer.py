"""Path-based explanations for predicted triples.

For a target (h, r, t): pick the k_r relations most similar to r, find
every closed path of length one or two from h to t whose first relation is
in that set, then look for the same structure elsewhere: heads similar to
h that carry both the path and an r-edge. Each such instantiation is one
support; paths backed by at least one support are the explanations.

Six path shapes cover both edge directions (e' is the intermediate):

  T1  h -(r_s)-> t                 T2  t -(r_s)-> h
  T3  e' -(r_s)-> h, e' -(r')-> t  T4  e' -(r_s)-> h, t -(r')-> e'
  T5  h -(r_s)-> e', e' -(r')-> t  T6  h -(r_s)-> e', t -(r')-> e'

Similarity uses Euclidean distance between relation-specific interaction
representations in crosse mode and between general embedding rows
otherwise; ties break toward the smaller id. Search and supports run over
the train split, forward relations only.
"""

from __future__ import annotations

import enum
import io
import logging
from dataclasses import dataclass

import numpy as np

from .graph import KnowledgeGraph, Split, Triple
from .model import (ModelParams, ScoreMode, head_interaction,
                    relation_interaction)

log = logging.getLogger(__name__)


class PathType(str, enum.Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    T5 = "T5"
    T6 = "T6"


@dataclass(frozen=True)
class PathMatch:
    """A closed path pattern from the target head to its tail.

    witnesses holds the intermediate entities that realize it (empty for
    the single-edge types T1/T2, where second_relation is None too).
    """

    path_type: PathType
    first_relation: int
    second_relation: int | None
    witnesses: tuple[int, ...]


@dataclass(frozen=True)
class Support:
    similar_head: int
    analog_tail: int
    witness_triples: tuple[Triple, ...]


@dataclass
class Explanation:
    target: Triple
    path_type: PathType
    first_relation: int
    second_relation: int | None
    supports: list[Support]


@dataclass
class ExplanationMetrics:
    k_r: int
    k_e: int
    total: int
    explained: int
    total_supports: int
    supports_by_type: dict[str, int]

    @property
    def recall(self) -> float:
        return self.explained / self.total if self.total else 0.0

    @property
    def avg_support(self) -> float | None:
        if self.explained == 0:
            return None
        return self.total_supports / self.explained

    @property
    def type_shares(self) -> dict[str, float]:
        if self.total_supports == 0:
            return {pt.value: 0.0 for pt in PathType}
        return {pt.value: self.supports_by_type.get(pt.value, 0) / self.total_supports
                for pt in PathType}


def _nearest(reps: np.ndarray, anchor: np.ndarray, k: int,
             exclude: int | None = None,
             pin_first: int | None = None) -> list[int]:
    diff = reps.astype(np.float64) - anchor.astype(np.float64)
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if exclude is not None:
        dist[exclude] = np.inf
    if pin_first is not None:
        # the query item leads even if another row duplicates it exactly
        dist[pin_first] = -1.0
    order = np.argsort(dist, kind="stable")  # stable: equal distances by id
    if exclude is not None:
        order = order[:-1]
    return [int(i) for i in order[:k]]


def similar_relations(params: ModelParams, mode: ScoreMode, h: int, r: int,
                      k_r: int, n_pool: int) -> list[int]:
    """Top k_r relations near r, drawn from forward ids [0, n_pool).

    crosse compares interaction representations anchored at the query head
    (so similarity is specific to this triple); other modes compare R rows.
    r itself sits at distance zero, so it is always included.
    """
    if k_r < 1:
        raise ValueError(f"k_r must be >= 1, got {k_r}")
    if k_r > n_pool:
        log.warning("k_r=%d exceeds %d relations; truncating", k_r, n_pool)
        k_r = n_pool
    ids = np.arange(n_pool, dtype=np.int64)
    mode = ScoreMode(mode)
    if mode is ScoreMode.CROSSE:
        reps = relation_interaction(params, h, ids)
    else:
        reps = params.R[ids]
    return _nearest(reps, reps[r], k_r, pin_first=r)


def similar_entities(params: ModelParams, mode: ScoreMode, h: int, r: int,
                     k_e: int) -> list[int]:
    """Top k_e entities near h, excluding h itself."""
    if k_e < 1:
        raise ValueError(f"k_e must be >= 1, got {k_e}")
    n_e = params.n_entities
    if k_e >= n_e:
        log.warning("k_e=%d leaves no room on %d entities; truncating", k_e, n_e)
        k_e = n_e - 1
    ids = np.arange(n_e, dtype=np.int64)
    mode = ScoreMode(mode)
    if mode is ScoreMode.CROSSE:
        reps = head_interaction(params, ids, r)
    else:
        reps = params.E
    return _nearest(reps, reps[h], k_e, exclude=h)


def _fwd_out(g: KnowledgeGraph, e: int) -> np.ndarray:
    """(relation, tail) train edges leaving e, forward relations only."""
    edges = g.out_edges(e, Split.TRAIN)
    cut = np.searchsorted(edges[:, 0], g.n_r)
    return edges[:cut]


def _fwd_in(g: KnowledgeGraph, e: int) -> np.ndarray:
    """(relation, head) train edges entering e, forward relations only."""
    edges = g.in_edges(e, Split.TRAIN)
    cut = np.searchsorted(edges[:, 0], g.n_r)
    return edges[:cut]


def search_paths(g: KnowledgeGraph, h: int, t: int, S_r) -> list[PathMatch]:
    """All closed paths h ~> t starting with a relation in S_r.

    Length-1 types are direct lookups; length-2 types join the first-hop
    frontier against the edges touching t, so cost scales with the
    frontier, not the graph. The second relation is unconstrained.
    """
    in_t = _fwd_in(g, t)
    out_t = _fwd_out(g, t)
    matches: list[PathMatch] = []
    for r_s in S_r:
        if _contains_fwd(g, h, r_s, t):
            matches.append(PathMatch(PathType.T1, r_s, None, ()))
        if _contains_fwd(g, t, r_s, h):
            matches.append(PathMatch(PathType.T2, r_s, None, ()))
        into_h = g.heads(r_s, h, Split.TRAIN)    # e' with (e', r_s, h)
        from_h = g.tails(h, r_s, Split.TRAIN)    # e' with (h, r_s, e')
        matches += _join(PathType.T3, r_s, into_h, in_t)
        matches += _join(PathType.T4, r_s, into_h, out_t)
        matches += _join(PathType.T5, r_s, from_h, in_t)
        matches += _join(PathType.T6, r_s, from_h, out_t)
    return matches


def _contains_fwd(g: KnowledgeGraph, h: int, r: int, t: int) -> bool:
    return g.contains(Triple(h, r, t), Split.TRAIN)


def _join(ptype: PathType, r_s: int, frontier: np.ndarray,
          t_edges: np.ndarray) -> list[PathMatch]:
    if len(frontier) == 0 or len(t_edges) == 0:
        return []
    hits = t_edges[np.isin(t_edges[:, 1], frontier)]
    if len(hits) == 0:
        return []
    out = []
    for r2 in np.unique(hits[:, 0]):
        wit = np.sort(hits[hits[:, 0] == r2, 1])
        out.append(PathMatch(ptype, r_s, int(r2), tuple(int(w) for w in wit)))
    return out


def find_supports(g: KnowledgeGraph, target: Triple, match: PathMatch,
                  S_h) -> list[Support]:
    """Instantiations of the path pattern at similar heads.

    For each h_s in S_h and each train tail t_s of (h_s, r): one support
    per way the pattern connects h_s to t_s (per intermediate entity for
    the length-2 types).
    """
    r = target.relation
    r_s = match.first_relation
    r2 = match.second_relation
    pt = match.path_type
    out: list[Support] = []
    for h_s in S_h:
        for t_s in g.tails(h_s, r, Split.TRAIN):
            t_s = int(t_s)
            fact = Triple(h_s, r, t_s)
            if pt is PathType.T1:
                if _contains_fwd(g, h_s, r_s, t_s):
                    out.append(Support(h_s, t_s, (Triple(h_s, r_s, t_s), fact)))
            elif pt is PathType.T2:
                if _contains_fwd(g, t_s, r_s, h_s):
                    out.append(Support(h_s, t_s, (Triple(t_s, r_s, h_s), fact)))
            elif pt is PathType.T3:
                for e in _isect(g.heads(r_s, h_s, Split.TRAIN),
                                g.heads(r2, t_s, Split.TRAIN)):
                    out.append(Support(h_s, t_s,
                                       (Triple(e, r_s, h_s), Triple(e, r2, t_s), fact)))
            elif pt is PathType.T4:
                for e in _isect(g.heads(r_s, h_s, Split.TRAIN),
                                g.tails(t_s, r2, Split.TRAIN)):
                    out.append(Support(h_s, t_s,
                                       (Triple(e, r_s, h_s), Triple(t_s, r2, e), fact)))
            elif pt is PathType.T5:
                for e in _isect(g.tails(h_s, r_s, Split.TRAIN),
                                g.heads(r2, t_s, Split.TRAIN)):
                    out.append(Support(h_s, t_s,
                                       (Triple(h_s, r_s, e), Triple(e, r2, t_s), fact)))
            else:
                for e in _isect(g.tails(h_s, r_s, Split.TRAIN),
                                g.tails(t_s, r2, Split.TRAIN)):
                    out.append(Support(h_s, t_s,
                                       (Triple(h_s, r_s, e), Triple(t_s, r2, e), fact)))
    return out


def _isect(a: np.ndarray, b: np.ndarray) -> list[int]:
    if len(a) == 0 or len(b) == 0:
        return []
    return [int(x) for x in np.intersect1d(a, b, assume_unique=True)]


def explain_triple(params: ModelParams, mode: ScoreMode, g: KnowledgeGraph,
                   target: Triple, k_r: int, k_e: int) -> list[Explanation]:
    """Explanations for one (possibly predicted) triple: every path found
    by the similarity-guided search that has at least one support."""
    mode = ScoreMode(mode)
    S_r = similar_relations(params, mode, target.head, target.relation, k_r, g.n_r)
    matches = search_paths(g, target.head, target.tail, S_r)
    if not matches:
        return []
    S_h = similar_entities(params, mode, target.head, target.relation, k_e)
    out = []
    for match in matches:
        sup = find_supports(g, target, match, S_h)
        if sup:
            out.append(Explanation(target, match.path_type, match.first_relation,
                                   match.second_relation, sup))
    return out


def evaluate_explanations(params: ModelParams, mode: ScoreMode,
                          g: KnowledgeGraph, split: Split, k_r: int, k_e: int,
                          on_triple=None) -> ExplanationMetrics:
    """Explain every forward triple of the split and tally recall,
    supports per explained triple, and per-type support shares.

    on_triple(triple, explanations) streams results as they are produced
    (used for the JSON-lines dump).
    """
    arr = g.triples_array(split)
    arr = arr[arr[:, 1] < g.n_r]
    if len(arr) == 0:
        raise ValueError(f"no triples to explain in split {split!r}")
    explained = 0
    total_supports = 0
    by_type: dict[str, int] = {}
    for h, r, t in arr:
        trip = Triple(int(h), int(r), int(t))
        expls = explain_triple(params, mode, g, trip, k_r, k_e)
        if on_triple is not None:
            on_triple(trip, expls)
        if expls:
            explained += 1
            for e in expls:
                n = len(e.supports)
                total_supports += n
                by_type[e.path_type.value] = by_type.get(e.path_type.value, 0) + n
    return ExplanationMetrics(k_r=k_r, k_e=k_e, total=len(arr),
                              explained=explained, total_supports=total_supports,
                              supports_by_type=by_type)


# -- report files ------------------------------------------------------------

def explanation_json(target: Triple, expls, ent_dict=None, rel_dict=None) -> dict:
    def ent(i):
        return ent_dict.decode(i) if ent_dict is not None else int(i)

    def rel(i):
        return rel_dict.decode(i) if rel_dict is not None else int(i)

    def trip(tr: Triple):
        return [ent(tr.head), rel(tr.relation), ent(tr.tail)]

    return {
        "triple": trip(target),
        "explanations": [
            {
                "type": e.path_type.value,
                "first_relation": rel(e.first_relation),
                "second_relation": (rel(e.second_relation)
                                    if e.second_relation is not None else None),
                "supports": [
                    {
                        "similar_head": ent(s.similar_head),
                        "analog_tail": ent(s.analog_tail),
                        "witnesses": [trip(w) for w in s.witness_triples],
                    }
                    for s in e.supports
                ],
            }
            for e in expls
        ],
    }


_METRICS_COLUMNS = ("k_r", "k_e", "recall", "avg_support",
                    "share_T1", "share_T2", "share_T3", "share_T4",
                    "share_T5", "share_T6")


def write_explanation_metrics(rows, path) -> None:
    """TSV, one row per (k_r, k_e) operating point; avg_support is left
    empty when nothing was explained."""
    with io.open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(_METRICS_COLUMNS) + "\n")
        for m in rows:
            shares = m.type_shares
            avg = "" if m.avg_support is None else f"{m.avg_support:.10g}"
            cells = [str(m.k_r), str(m.k_e), f"{m.recall:.10g}", avg]
            cells += [f"{shares[pt.value]:.10g}" for pt in PathType]
            f.write("\t".join(cells) + "\n")
