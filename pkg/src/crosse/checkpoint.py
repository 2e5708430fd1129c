"""Checkpoint directories: a text header, raw float32 tensors, dictionaries.

Layout:

  meta            key = value lines: n_e, n_r_effective, d, mode, seed
  E.f32, R.f32    little-endian float32, row-major
  C.f32, b.f32    only when the mode trains them
  entities.dict   label<TAB>id dictionary dumps
  relations.dict

Tensor files carry no shape information of their own; the loader sizes them
from the header and refuses anything that does not match exactly.
"""

from __future__ import annotations

import io
import os

import numpy as np

from .model import ModelParams, ScoreMode, mode_tensors
from .vocab import Dictionary
from . import graph as _graph

_META_FILE = "meta"
_META_KEYS = ("n_e", "n_r_effective", "d", "mode", "seed")


class CheckpointError(ValueError):
    pass


def _tensor_file(name: str) -> str:
    return f"{name}.f32"


def save_checkpoint(out_dir, params: ModelParams, mode: ScoreMode, seed: int,
                    ent_dict: Dictionary, rel_dict: Dictionary,
                    extra: dict | None = None) -> None:
    """Write a checkpoint directory; `extra` adds informational meta lines."""
    mode = ScoreMode(mode)
    params.validate(mode)
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "n_e": params.n_entities,
        "n_r_effective": params.n_relations,
        "d": params.dim,
        "mode": mode.value,
        "seed": int(seed),
    }
    if extra:
        for k, v in extra.items():
            if k in meta:
                raise ValueError(f"extra meta key {k!r} collides with a required key")
            meta[k] = v
    with io.open(os.path.join(out_dir, _META_FILE), "w", encoding="utf-8") as f:
        for k, v in meta.items():
            f.write(f"{k} = {v}\n")
    tensors = params.tensors()
    for name in mode_tensors(mode):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        with open(os.path.join(out_dir, _tensor_file(name)), "wb") as f:
            f.write(arr.tobytes())
    ent_dict.save(os.path.join(out_dir, _graph.ENTITY_DICT_FILE))
    rel_dict.save(os.path.join(out_dir, _graph.RELATION_DICT_FILE))


def read_meta(ckpt_dir) -> dict:
    path = os.path.join(ckpt_dir, _META_FILE)
    if not os.path.exists(path):
        raise CheckpointError(f"not a checkpoint directory: {ckpt_dir} (no {_META_FILE})")
    meta: dict = {}
    with io.open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CheckpointError(f"{path}: malformed meta line {line!r}")
            meta[key.strip()] = value.strip()
    for k in _META_KEYS:
        if k not in meta:
            raise CheckpointError(f"{path}: missing meta key {k!r}")
    for k in ("n_e", "n_r_effective", "d", "seed"):
        meta[k] = int(meta[k])
    meta["mode"] = ScoreMode(meta["mode"])
    return meta


def _read_tensor(ckpt_dir, name: str, shape: tuple) -> np.ndarray:
    path = os.path.join(ckpt_dir, _tensor_file(name))
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint tensor missing: {path}")
    raw = np.fromfile(path, dtype="<f4")
    want = int(np.prod(shape))
    if raw.size != want:
        raise CheckpointError(
            f"{path}: size mismatch, header implies {want} float32 values "
            f"({shape}), file holds {raw.size}"
        )
    return raw.reshape(shape).astype(np.float32)


def load_checkpoint(ckpt_dir):
    """Load (params, meta, ent_dict, rel_dict), validating sizes end to end."""
    meta = read_meta(ckpt_dir)
    n_e, n_r_eff, d = meta["n_e"], meta["n_r_effective"], meta["d"]
    mode: ScoreMode = meta["mode"]
    shapes = {"E": (n_e, d), "R": (n_r_eff, d), "C": (n_r_eff, d), "b": (d,)}
    loaded = {name: _read_tensor(ckpt_dir, name, shapes[name])
              for name in mode_tensors(mode)}
    params = ModelParams(E=loaded["E"], R=loaded["R"],
                         C=loaded.get("C"), b=loaded.get("b"))
    params.validate(mode)
    ent_dict = Dictionary.load(os.path.join(ckpt_dir, _graph.ENTITY_DICT_FILE))
    rel_dict = Dictionary.load(os.path.join(ckpt_dir, _graph.RELATION_DICT_FILE))
    if len(ent_dict) != n_e:
        raise CheckpointError(
            f"{ckpt_dir}: entity dictionary has {len(ent_dict)} labels but "
            f"header says n_e = {n_e}"
        )
    if len(rel_dict) not in (n_r_eff, n_r_eff // 2 if n_r_eff % 2 == 0 else -1):
        raise CheckpointError(
            f"{ckpt_dir}: relation dictionary has {len(rel_dict)} labels but "
            f"header says n_r_effective = {n_r_eff} (expected that or half)"
        )
    return params, meta, ent_dict, rel_dict
