"""Embedding models: interaction-based scoring plus two ablation modes.

Three scoring modes share one parameter container:

  crosse    sigmoid(tanh(c_r*h + c_r*h*r + b) . t)   with c_r = C[r] (* is
            elementwise), so each relation reshapes the head before scoring
  crosse_s  sigmoid(tanh(h + r + b) . t)             no interaction weights
  transe    -||h + r - t||_2                          translation distance

Parameters are stored float32; scoring upcasts to float64 before any
arithmetic so ranks are reproducible bit-for-bit against a scalar
re-evaluation regardless of vectorization or backend.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ScoreMode(str, enum.Enum):
    CROSSE = "crosse"
    CROSSE_S = "crosse_s"
    TRANSE = "transe"


# tensors each mode trains and scores with
_MODE_TENSORS = {
    ScoreMode.CROSSE: ("E", "R", "C", "b"),
    ScoreMode.CROSSE_S: ("E", "R", "b"),
    ScoreMode.TRANSE: ("E", "R"),
}


def mode_tensors(mode: ScoreMode) -> tuple[str, ...]:
    return _MODE_TENSORS[ScoreMode(mode)]


@dataclass
class ModelParams:
    """Model tensors. C and b are absent for modes that do not use them.

    E: (n_e, d) entity embeddings
    R: (n_r_effective, d) relation embeddings (inverses in the upper half)
    C: (n_r_effective, d) per-relation interaction weights, or None
    b: (d,) shared combination bias, or None
    """

    E: np.ndarray
    R: np.ndarray
    C: np.ndarray | None = None
    b: np.ndarray | None = None

    @property
    def n_entities(self) -> int:
        return self.E.shape[0]

    @property
    def n_relations(self) -> int:
        return self.R.shape[0]

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"E": self.E, "R": self.R}
        if self.C is not None:
            out["C"] = self.C
        if self.b is not None:
            out["b"] = self.b
        return out

    def validate(self, mode: ScoreMode) -> None:
        d = self.dim
        have = self.tensors()
        for name in mode_tensors(mode):
            if name not in have:
                raise ValueError(f"mode {ScoreMode(mode).value} needs tensor {name}")
            t = have[name]
            if t.dtype != np.float32:
                raise ValueError(f"tensor {name} must be float32, got {t.dtype}")
            want_cols = d if name != "b" else (d,)
            if name == "b":
                if t.shape != (d,):
                    raise ValueError(f"b must have shape ({d},), got {t.shape}")
            elif t.ndim != 2 or t.shape[1] != want_cols:
                raise ValueError(f"tensor {name} must be (*, {d}), got {t.shape}")
        if self.C is not None and self.C.shape != self.R.shape:
            raise ValueError(
                f"C shape {self.C.shape} must match R shape {self.R.shape}")


def param_count(params: ModelParams) -> int:
    """Number of trained scalars (only tensors actually present)."""
    return sum(t.size for t in params.tensors().values())


def init_params(n_e: int, n_r_eff: int, d: int, mode: ScoreMode,
                seed: int) -> ModelParams:
    """Uniform init in [-6/sqrt(d), 6/sqrt(d)] for E, R (and C); zero bias.

    Draw order is fixed (E, R, C, b) so a seed pins every tensor regardless
    of mode.
    """
    mode = ScoreMode(mode)
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(d)

    def draw(rows):
        return rng.uniform(-bound, bound, size=(rows, d)).astype(np.float32)

    E = draw(n_e)
    R = draw(n_r_eff)
    names = mode_tensors(mode)
    C = draw(n_r_eff) if "C" in names else None
    b = np.zeros(d, dtype=np.float32) if "b" in names else None
    return ModelParams(E=E, R=R, C=C, b=b)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[np.logical_not(pos)])
    out[np.logical_not(pos)] = ex / (1.0 + ex)
    return out


def head_interaction(params: ModelParams, ents, r: int) -> np.ndarray:
    """Relation-specific head representations c_r * h for the given entities."""
    ents = np.asarray(ents, dtype=np.int64)
    return params.C[r] * params.E[ents]


def relation_interaction(params: ModelParams, h: int, rels) -> np.ndarray:
    """Head-specific relation representations (c_r * h) * r for the given relations."""
    rels = np.asarray(rels, dtype=np.int64)
    return params.C[rels] * params.E[h] * params.R[rels]


def combine_query(params: ModelParams, mode: ScoreMode, h: int, r: int) -> np.ndarray:
    """The float64 query vector dotted against candidate tails."""
    mode = ScoreMode(mode)
    if mode is ScoreMode.CROSSE:
        hi = params.C[r].astype(np.float64) * params.E[h].astype(np.float64)
        u = hi + hi * params.R[r].astype(np.float64) + params.b.astype(np.float64)
    elif mode is ScoreMode.CROSSE_S:
        u = (params.E[h].astype(np.float64) + params.R[r].astype(np.float64)
             + params.b.astype(np.float64))
    else:
        raise ValueError("combine_query is undefined for transe")
    return np.tanh(u)


def score_all_tails(params: ModelParams, mode: ScoreMode, h: int, r: int,
                    E64: np.ndarray | None = None) -> np.ndarray:
    """Scores against every entity as tail, float64, shape (n_e,).

    Pass a cached float64 copy of params.E as E64 to amortize the upcast
    across many queries.
    """
    mode = ScoreMode(mode)
    if E64 is None:
        E64 = params.E.astype(np.float64)
    if mode is ScoreMode.TRANSE:
        trans = params.E[h].astype(np.float64) + params.R[r].astype(np.float64)
        diff = E64 - trans
        return -np.sqrt(np.einsum("ij,ij->i", diff, diff))
    q = combine_query(params, mode, h, r)
    return _sigmoid(E64 @ q)


def score(params: ModelParams, mode: ScoreMode, h: int, r: int, t: int) -> float:
    """Score of one triple; float64 scalar on the same scale as score_all_tails."""
    mode = ScoreMode(mode)
    if mode is ScoreMode.TRANSE:
        diff = (params.E[h].astype(np.float64) + params.R[r].astype(np.float64)
                - params.E[t].astype(np.float64))
        return float(-np.sqrt(diff @ diff))
    q = combine_query(params, mode, h, r)
    x = params.E[t].astype(np.float64) @ q
    return float(_sigmoid(np.asarray([x]))[0])
