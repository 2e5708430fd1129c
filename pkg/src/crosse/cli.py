"""Command line: prep ingests triple files, train fits a model, eval ranks
a split, explain searches for path explanations.

One positional data directory per command plus the documented flags; every
path is explicit. Each train run writes a manifest first so it can be
replayed later (pass the manifest as --config), and exit status is 0 only
on full success.
"""

from __future__ import annotations

import argparse
import importlib.metadata
import io
import json
import logging
import os
import sys
import time

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import explainer, link_eval
from .graph import (KnowledgeGraph, Split, TripleParseError,
                    add_inverse_relations, build_graph, load_dataset,
                    load_triples, save_dataset, split_from_name)
from .model import ScoreMode
from .trainer import TrainError, train
from .vocab import Dictionary

log = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


def _version() -> str:
    try:
        return "crosse " + importlib.metadata.version("crosse")
    except importlib.metadata.PackageNotFoundError:
        return "crosse (uninstalled)"


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crosse",
                                description="knowledge-graph embeddings with "
                                            "path-based explanations")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prep", help="ingest triple files into a data directory")
    sp.add_argument("train")
    sp.add_argument("valid")
    sp.add_argument("test")
    sp.add_argument("--out", required=True, help="output data directory")

    st = sub.add_parser("train", help="train a model on a prepared dataset")
    st.add_argument("data", help="directory written by prep")
    st.add_argument("--config", help="key = value file, or a manifest.json to replay")
    st.add_argument("--out", required=True, help="run directory for checkpoint, "
                                                 "loss log, manifest")
    st.add_argument("--seed", type=int)
    st.add_argument("--threads", type=int)
    st.add_argument("--mode", choices=[m.value for m in ScoreMode])
    st.add_argument("--checkpoint", help="resume from this checkpoint directory")

    se = sub.add_parser("eval", help="link-prediction metrics on a split")
    se.add_argument("data")
    se.add_argument("split", nargs="?", default="test",
                    choices=["train", "valid", "test"])
    se.add_argument("--checkpoint", required=True)
    se.add_argument("--out", required=True)
    se.add_argument("--settings", default="raw,filter",
                    help="comma list from {raw,filter}")
    se.add_argument("--threads", type=int, default=1)
    se.add_argument("--mode", choices=[m.value for m in ScoreMode],
                    help="override the checkpoint's scoring mode")

    sx = sub.add_parser("explain", help="path explanations for a split")
    sx.add_argument("data")
    sx.add_argument("split", nargs="?", default="test",
                    choices=["train", "valid", "test"])
    sx.add_argument("--checkpoint", required=True)
    sx.add_argument("--out", required=True)
    sx.add_argument("--kr", type=_int_list, default=[3],
                    help="similar-relation count(s), comma list sweeps")
    sx.add_argument("--ke", type=_int_list, default=[10],
                    help="similar-entity count(s), comma list sweeps")
    sx.add_argument("--mode", choices=[m.value for m in ScoreMode])
    return p


# -- prep ---------------------------------------------------------------------

def cmd_prep(args) -> int:
    for path in (args.train, args.valid, args.test):
        if not os.path.exists(path):
            print(f"error: no such file: {path}", file=sys.stderr)
            return 1
    ent, rel = Dictionary(), Dictionary()
    splits = {}
    for name, path in (("train", args.train), ("valid", args.valid),
                       ("test", args.test)):
        splits[name] = load_triples(path, ent, rel)
    # validates ids and surfaces in-split duplicates before anything trains
    g = build_graph(splits["train"], splits["valid"], splits["test"],
                    n_e=len(ent), n_r=len(rel))
    save_dataset(args.out, {k: np.array(v, dtype=np.int32).reshape(-1, 3)
                            for k, v in splits.items()}, ent, rel)
    print(f"entities\t{len(ent)}")
    print(f"relations\t{len(rel)}")
    for name in ("train", "valid", "test"):
        dup = g.duplicates_dropped.get(name)
        note = f"\t({dup} duplicates)" if dup else ""
        print(f"{name}\t{len(splits[name])}{note}")
    print(f"prepared dataset written to {args.out}")
    return 0


# -- train --------------------------------------------------------------------

def _load_config_mapping(path) -> dict:
    if path.endswith(".json"):
        with io.open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        mapping = doc.get("config", doc)
        if not isinstance(mapping, dict):
            raise ValueError(f"{path}: expected a config object")
        return {k: str(v) for k, v in mapping.items()}
    return cfgmod.parse_kv_file(path)


def _write_manifest(out_dir, doc) -> None:
    with io.open(os.path.join(out_dir, MANIFEST_FILE), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_train(args) -> int:
    g0, ent, rel = load_dataset(args.data)
    g = add_inverse_relations(g0)
    mapping = _load_config_mapping(args.config) if args.config else {}
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.mode is not None:
        overrides["mode"] = args.mode
    cfg = cfgmod.make_train_config(mapping, overrides)
    os.makedirs(args.out, exist_ok=True)
    manifest = {
        "dataset": os.path.abspath(args.data),
        "config": cfgmod.config_to_mapping(cfg),
        "seed": cfg.seed,
        "checkpoint_dir": os.path.abspath(os.path.join(args.out, "checkpoint")),
        "resumed_from": os.path.abspath(args.checkpoint) if args.checkpoint else None,
        "version": _version(),
        "timestamps": {"started": _now(), "finished": None},
    }
    _write_manifest(args.out, manifest)
    _, loss_log = train(g, cfg, ent_dict=ent, rel_dict=rel, out_dir=args.out,
                        resume_from=args.checkpoint)
    manifest["timestamps"]["finished"] = _now()
    _write_manifest(args.out, manifest)
    if loss_log:
        print(f"epoch {loss_log[-1][0]}: loss {loss_log[-1][1]:.6f}")
    print(f"checkpoint written to {manifest['checkpoint_dir']}")
    return 0


# -- eval ---------------------------------------------------------------------

def _load_checkpoint_for(g: KnowledgeGraph, ent: Dictionary, rel: Dictionary,
                         ckpt_dir, mode_override):
    params, meta, ck_ent, ck_rel = ckpt.load_checkpoint(ckpt_dir)
    problems = []
    if meta["n_e"] != g.n_e:
        problems.append(f"entities: checkpoint {meta['n_e']} vs dataset {g.n_e}")
    if meta["n_r_effective"] != g.n_r_effective:
        problems.append(f"relation rows: checkpoint {meta['n_r_effective']} "
                        f"vs dataset {g.n_r_effective}")
    if not problems and ck_ent.labels() != ent.labels():
        problems.append("entity dictionaries differ in content")
    if not problems and ck_rel.labels() != rel.labels():
        problems.append("relation dictionaries differ in content")
    if problems:
        raise ckpt.CheckpointError(
            "checkpoint does not match dataset: " + "; ".join(problems))
    mode = ScoreMode(mode_override) if mode_override else meta["mode"]
    params.validate(mode)
    return params, mode


def cmd_eval(args) -> int:
    g0, ent, rel = load_dataset(args.data)
    g = add_inverse_relations(g0)
    params, mode = _load_checkpoint_for(g, ent, rel, args.checkpoint, args.mode)
    settings = tuple(s for s in args.settings.split(",") if s)
    split = split_from_name(args.split)
    table, records = link_eval.evaluate(params, mode, g, split, settings,
                                        threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    link_eval.write_metrics_tsv(table, os.path.join(args.out, "metrics.tsv"))
    link_eval.write_metrics_json(table, os.path.join(args.out, "metrics.json"))
    link_eval.write_rank_records(records, os.path.join(args.out, "ranks.tsv"))
    print("setting\tMR\tMRR\tHit@1\tHit@3\tHit@10")
    for s in settings:
        cells = [f"{table.get(m, s):.4f}"
                 for m in ("MR", "MRR", "Hit@1", "Hit@3", "Hit@10")]
        print(s + "\t" + "\t".join(cells))
    print(f"reports written to {args.out}")
    return 0


# -- explain -------------------------------------------------------------------

def cmd_explain(args) -> int:
    g0, ent, rel = load_dataset(args.data)
    g = add_inverse_relations(g0)
    params, mode = _load_checkpoint_for(g, ent, rel, args.checkpoint, args.mode)
    split = split_from_name(args.split)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for k_r in args.kr:
        for k_e in args.ke:
            dump = os.path.join(args.out, f"explanations-kr{k_r}-ke{k_e}.jsonl")
            with io.open(dump, "w", encoding="utf-8") as f:
                def on_triple(trip, expls, _f=f):
                    if expls:
                        doc = explainer.explanation_json(trip, expls, ent, rel)
                        _f.write(json.dumps(doc, sort_keys=True) + "\n")
                metrics = explainer.evaluate_explanations(
                    params, mode, g, split, k_r, k_e, on_triple=on_triple)
            rows.append(metrics)
    explainer.write_explanation_metrics(
        rows, os.path.join(args.out, "explain_metrics.tsv"))
    print("k_r\tk_e\trecall\tavg_support")
    for m in rows:
        avg = "-" if m.avg_support is None else f"{m.avg_support:.2f}"
        print(f"{m.k_r}\t{m.k_e}\t{m.recall:.4f}\t{avg}")
    print(f"reports written to {args.out}")
    return 0


_COMMANDS = {"prep": cmd_prep, "train": cmd_train, "eval": cmd_eval,
             "explain": cmd_explain}

_EXPECTED_ERRORS = (ValueError, OSError, TrainError, ckpt.CheckpointError,
                    TripleParseError, KeyError)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _EXPECTED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
