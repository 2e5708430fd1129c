"""Training loop: bag construction, loss/gradient, Adam, checkpoint cadence.

Each train triple (h, r, t) anchors a bag holding every known tail of
(h, r) labeled 1 plus n rejection-sampled unlinked tails labeled 0; the
loss is summed cross-entropy over bag examples plus an L2 penalty. The
public loss()/grad() pair computes the exact objective (full penalty over
every row) so gradients can be checked against finite differences; the
epoch loop applies the penalty only to rows a batch touches, scaled by the
batch's fraction of the epoch, which keeps the per-step cost proportional
to the batch.

Determinism: all randomness derives from (seed, epoch) so an interrupted
run resumed from its last checkpoint replays the remaining epochs exactly.
Mini-batch negative sampling consumes a single pre-drawn buffer
sequentially, so batch contents do not depend on the thread count.
"""

from __future__ import annotations

import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graph import KnowledgeGraph, Split, Triple
from .kernels import get_kernels
from .model import ModelParams, ScoreMode, init_params, mode_tensors
from . import checkpoint as ckpt

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOSS_LOG_FILE = "loss_log.tsv"
FINAL_CHECKPOINT_DIR = "checkpoint"
OPTIM_DIR = "optim"


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Run settings. `lambda_` is spelled `lambda` in config files and flags.

    margin only affects transe mode; checkpoint_every = 0 means only the
    final checkpoint is written.
    """

    d: int = 100
    n: int = 50
    lr: float = 0.01
    lambda_: float = 1e-4
    batch: int = 2048
    epochs: int = 500
    dropout: float = 0.5
    seed: int = 0
    mode: ScoreMode = ScoreMode.CROSSE
    margin: float = 1.0
    checkpoint_every: int = 0
    threads: int = 1

    def __post_init__(self):
        self.mode = ScoreMode(self.mode)
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.lambda_ < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lambda_}")
        if self.d < 1 or self.batch < 1 or self.epochs < 0:
            raise ValueError("d and batch must be >= 1, epochs >= 0")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")


@dataclass
class TrainingBag:
    """All positive tails of the anchor's (h, r) plus sampled negatives."""

    anchor: Triple
    tails: np.ndarray
    labels: np.ndarray

    @property
    def examples(self) -> list[tuple[int, int]]:
        return [(int(t), int(l)) for t, l in zip(self.tails, self.labels)]


@dataclass
class Gradients:
    E: np.ndarray
    R: np.ndarray
    C: np.ndarray | None = None
    b: np.ndarray | None = None

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"E": self.E, "R": self.R}
        if self.C is not None:
            out["C"] = self.C
        if self.b is not None:
            out["b"] = self.b
        return out


def _zero_grads(params: ModelParams, mode: ScoreMode) -> Gradients:
    names = mode_tensors(mode)
    t = params.tensors()
    return Gradients(
        E=np.zeros(t["E"].shape, dtype=np.float64),
        R=np.zeros(t["R"].shape, dtype=np.float64),
        C=np.zeros(t["C"].shape, dtype=np.float64) if "C" in names else None,
        b=np.zeros(t["b"].shape, dtype=np.float64) if "b" in names else None,
    )


def build_bag(g: KnowledgeGraph, t: Triple, n: int, rng) -> TrainingBag:
    """Bag for one anchor: every true tail of (h, r) then n sampled negatives.

    Negatives are uniform over entities not linked to (h, r) in the train
    split and distinct within the bag. When fewer than n such entities
    exist they are all taken, in ascending id order, with a warning.
    """
    pos = g.tails(t.head, t.relation, Split.TRAIN)
    if len(pos) == 0:
        raise ValueError(f"anchor {tuple(t)} has no train tails for its (h, r)")
    avail = g.n_e - len(pos)
    if avail <= n:
        neg = np.setdiff1d(np.arange(g.n_e, dtype=np.int32), pos)
        if avail < n:
            log.warning(
                "bag (%d, %d): only %d unlinked entities for %d requested negatives",
                t.head, t.relation, avail, n)
    else:
        kern = get_kernels()
        neg = np.empty(n, dtype=np.int32)
        need = 2 * n + 64
        while True:
            buf = rng.integers(0, g.n_e, size=need)
            got = kern.fill_negatives(
                pos, np.array([0, len(pos)], dtype=np.int64),
                np.array([n], dtype=np.int32), g.n_e, buf,
                neg, np.array([0], dtype=np.int64))
            if got >= 0:
                break
            need *= 2
    tails = np.concatenate((pos, neg)).astype(np.int32)
    labels = np.concatenate((np.ones(len(pos)), np.zeros(len(neg))))
    return TrainingBag(anchor=t, tails=tails, labels=labels)


def _bags_to_arrays(bags):
    heads = np.array([b.anchor.head for b in bags], dtype=np.int32)
    rels = np.array([b.anchor.relation for b in bags], dtype=np.int32)
    sizes = [len(b.tails) for b in bags]
    bag_ptr = np.zeros(len(bags) + 1, dtype=np.int64)
    np.cumsum(sizes, out=bag_ptr[1:])
    if bags:
        tails = np.concatenate([b.tails for b in bags]).astype(np.int32)
        labels = np.concatenate([b.labels for b in bags]).astype(np.float64)
    else:
        tails = np.empty(0, dtype=np.int32)
        labels = np.empty(0, dtype=np.float64)
    return heads, rels, bag_ptr, tails, labels


def draw_keep_mask(rng, n_bags: int, d: int, dropout: float) -> np.ndarray:
    """Inverted-dropout mask: entries 0 or 1/(1-dropout), one row per bag."""
    keep = (rng.random((n_bags, d)) >= dropout).astype(np.float32)
    keep *= np.float32(1.0 / (1.0 - dropout))
    return keep


_NO_KEEP = np.zeros((0, 0), dtype=np.float32)


def _run_kernel(kern, params: ModelParams, mode: ScoreMode, arrays, keep,
                grads: Gradients, margin: float):
    heads, rels, bag_ptr, tails, labels = arrays
    use_keep = keep is not None
    k = keep if use_keep else _NO_KEEP
    if mode is ScoreMode.CROSSE:
        return kern.crosse_batch(params.E, params.R, params.C, params.b,
                                 heads, rels, bag_ptr, tails, labels,
                                 k, use_keep, grads.E, grads.R, grads.C, grads.b)
    if mode is ScoreMode.CROSSE_S:
        return kern.crosse_s_batch(params.E, params.R, params.b,
                                   heads, rels, bag_ptr, tails, labels,
                                   k, use_keep, grads.E, grads.R, grads.b)
    return kern.transe_batch(params.E, params.R, heads, rels, bag_ptr,
                             tails, labels, margin, grads.E, grads.R)


def sq_norm(params: ModelParams) -> float:
    """Sum of squared entries over every present tensor, in float64."""
    return float(sum(np.sum(np.square(t.astype(np.float64)))
                     for t in params.tensors().values()))


def loss(params: ModelParams, bags, cfg: TrainConfig, rng=None,
         train_mode: bool = False, keep: np.ndarray | None = None) -> float:
    """Exact objective: summed cross-entropy (or margin loss for transe)
    plus lambda times the squared norm of every parameter.

    In train_mode with dropout > 0 a keep mask is drawn from rng unless one
    is passed in; pass the same mask to grad() for a consistent pair.
    """
    mode = cfg.mode
    params.validate(mode)
    arrays = _bags_to_arrays(bags)
    if mode is not ScoreMode.TRANSE and train_mode and cfg.dropout > 0.0:
        if keep is None:
            if rng is None:
                raise ValueError("train_mode loss with dropout needs rng or keep mask")
            keep = draw_keep_mask(rng, len(bags), cfg.d, cfg.dropout)
    else:
        keep = None
    scratch = _zero_grads(params, mode)
    ce_train, ce_eval = _run_kernel(get_kernels(), params, mode, arrays, keep,
                                    scratch, cfg.margin)
    ce = ce_train if (train_mode and keep is not None) else ce_eval
    return ce + cfg.lambda_ * sq_norm(params)


def grad(params: ModelParams, bags, cfg: TrainConfig, rng=None,
         keep: np.ndarray | None = None) -> Gradients:
    """Gradient of loss(): bag terms on touched rows plus 2*lambda*theta
    everywhere. A keep mask makes it the gradient of the train_mode loss
    with that fixed mask."""
    mode = cfg.mode
    params.validate(mode)
    arrays = _bags_to_arrays(bags)
    if mode is ScoreMode.TRANSE:
        keep = None
    elif keep is None and cfg.dropout > 0.0 and rng is not None:
        keep = draw_keep_mask(rng, len(bags), cfg.d, cfg.dropout)
    grads = _zero_grads(params, mode)
    _run_kernel(get_kernels(), params, mode, arrays, keep, grads, cfg.margin)
    if cfg.lambda_ > 0.0:
        t = params.tensors()
        for name, arr in grads.tensors().items():
            arr += (2.0 * cfg.lambda_) * t[name].astype(np.float64)
    return grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        return cls(m={k: np.zeros(t.shape) for k, t in params.tensors().items()},
                   v={k: np.zeros(t.shape) for k, t in params.tensors().items()})


def adam_step(params: ModelParams, grads: Gradients, state: AdamState,
              lr: float) -> None:
    """One bias-corrected Adam update, in place on the float32 tensors."""
    gt = grads.tensors()
    for name in gt:
        if not np.all(np.isfinite(gt[name])):
            raise TrainError(f"non-finite gradient in tensor {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    pt = params.tensors()
    for name, g in gt.items():
        m, v = state.m[name], state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * np.square(g)
        update = (lr / c1) * m / (np.sqrt(v / c2) + ADAM_EPS)
        pt[name][:] = (pt[name].astype(np.float64) - update).astype(np.float32)


def _save_optim(out_dir, state: AdamState, epoch: int) -> None:
    od = os.path.join(out_dir, OPTIM_DIR)
    os.makedirs(od, exist_ok=True)
    with io.open(os.path.join(od, "state"), "w", encoding="utf-8") as f:
        f.write(f"step = {state.step}\n")
        f.write(f"epoch = {epoch}\n")
        f.write(f"tensors = {','.join(sorted(state.m))}\n")
    for name in state.m:
        for kind, store in (("m", state.m), ("v", state.v)):
            path = os.path.join(od, f"{kind}_{name}.f64")
            with open(path, "wb") as f:
                f.write(np.ascontiguousarray(store[name], dtype="<f8").tobytes())


def _load_optim(ckpt_dir, params: ModelParams) -> tuple[AdamState, int]:
    od = os.path.join(ckpt_dir, OPTIM_DIR)
    state_path = os.path.join(od, "state")
    if not os.path.exists(state_path):
        raise TrainError(f"checkpoint {ckpt_dir} has no optimizer state to resume from")
    kv = {}
    with io.open(state_path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
    names = kv["tensors"].split(",")
    shapes = {k: t.shape for k, t in params.tensors().items()}
    if sorted(names) != sorted(shapes):
        raise TrainError(f"optimizer state tensors {names} do not match params")
    state = AdamState(m={}, v={}, step=int(kv["step"]))
    for name in names:
        for kind, store in (("m", state.m), ("v", state.v)):
            raw = np.fromfile(os.path.join(od, f"{kind}_{name}.f64"), dtype="<f8")
            want = int(np.prod(shapes[name]))
            if raw.size != want:
                raise TrainError(f"optimizer tensor {kind}_{name} has {raw.size} "
                                 f"values, expected {want}")
            store[name] = raw.reshape(shapes[name])
    return state, int(kv["epoch"])


class _BatchBuilder:
    """Assembles flattened bag arrays for slices of the anchor permutation."""

    def __init__(self, g: KnowledgeGraph, anchors: np.ndarray, n: int, kern):
        self.g = g
        self.anchors = anchors
        self.n = n
        self.kern = kern
        self._warned: set[tuple[int, int]] = set()
        # positives per anchor resolved once; bags for a shared (h, r) repeat
        self._pos = [g.tails(int(h), int(r), Split.TRAIN)
                     for h, r, _ in anchors]

    def batch(self, idx: np.ndarray, rng):
        g, n = self.g, self.n
        B = len(idx)
        heads = np.ascontiguousarray(self.anchors[idx, 0])
        rels = np.ascontiguousarray(self.anchors[idx, 1])
        pos_list = [self._pos[i] for i in idx]
        n_pos = np.array([len(p) for p in pos_list], dtype=np.int64)
        counts = np.minimum(n, g.n_e - n_pos).astype(np.int32)
        enum = counts < n  # bags where all unlinked entities are taken
        sample_counts = np.where(enum, 0, counts).astype(np.int32)
        total = int(sample_counts.sum())
        out_ptr = np.zeros(B + 1, dtype=np.int64)
        np.cumsum(sample_counts, out=out_ptr[1:])
        negs = np.empty(total, dtype=np.int32)
        if total:
            pos_ptr = np.zeros(B + 1, dtype=np.int64)
            np.cumsum(n_pos, out=pos_ptr[1:])
            pos_flat = np.concatenate(pos_list)
            need = 2 * total + 64
            while True:
                buf = rng.integers(0, g.n_e, size=need)
                got = self.kern.fill_negatives(pos_flat, pos_ptr, sample_counts,
                                               g.n_e, buf, negs, out_ptr[:-1])
                if got >= 0:
                    break
                need *= 2
        parts = []
        labels_parts = []
        for i in range(B):
            p = pos_list[i]
            if enum[i]:
                nn = np.setdiff1d(np.arange(g.n_e, dtype=np.int32), p)
                key = (int(heads[i]), int(rels[i]))
                if len(nn) < n and key not in self._warned:
                    self._warned.add(key)
                    log.warning("bag (%d, %d): only %d unlinked entities for %d "
                                "requested negatives", key[0], key[1], len(nn), n)
            else:
                nn = negs[out_ptr[i]:out_ptr[i + 1]]
            parts.append(p)
            parts.append(nn)
            labels_parts.append(np.ones(len(p)))
            labels_parts.append(np.zeros(len(nn)))
        tails = np.concatenate(parts).astype(np.int32)
        labels = np.concatenate(labels_parts)
        sizes = np.array([len(a) for a in parts], dtype=np.int64).reshape(B, 2).sum(axis=1)
        bag_ptr = np.zeros(B + 1, dtype=np.int64)
        np.cumsum(sizes, out=bag_ptr[1:])
        return heads, rels, bag_ptr, tails, labels


def _touched_rows(arrays):
    heads, rels, _, tails, _ = arrays
    ent = np.unique(np.concatenate((heads, tails)))
    rel = np.unique(rels)
    return ent, rel


def _apply_batch_reg(grads: Gradients, params: ModelParams, lam: float,
                     fraction: float, arrays) -> None:
    # touched rows only, scaled by the batch's share of the epoch
    if lam <= 0.0:
        return
    scale = 2.0 * lam * fraction
    ent, rel = _touched_rows(arrays)
    grads.E[ent] += scale * params.E[ent].astype(np.float64)
    grads.R[rel] += scale * params.R[rel].astype(np.float64)
    if grads.C is not None:
        grads.C[rel] += scale * params.C[rel].astype(np.float64)
    if grads.b is not None:
        grads.b += scale * params.b.astype(np.float64)


def _epoch_rngs(seed: int, epoch: int):
    return (np.random.default_rng([seed, epoch, 0]),
            np.random.default_rng([seed, epoch, 1]))


def _chunk_slices(n_bags: int, pieces: int):
    bounds = np.linspace(0, n_bags, pieces + 1).astype(np.int64)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(pieces)
            if bounds[i] < bounds[i + 1]]


class Trainer:
    """Owns mutable params and optimizer state for one run."""

    def __init__(self, g: KnowledgeGraph, cfg: TrainConfig,
                 ent_dict=None, rel_dict=None, out_dir=None):
        if not g.has_inverses:
            raise TrainError("training expects a graph with inverse relations "
                             "materialized")
        self.g = g
        self.cfg = cfg
        self.ent_dict = ent_dict
        self.rel_dict = rel_dict
        self.out_dir = out_dir
        self.kern = get_kernels()
        self.params = init_params(g.n_e, g.n_r_effective, cfg.d, cfg.mode, cfg.seed)
        self.adam = AdamState.fresh(self.params)
        self.start_epoch = 0
        self.loss_log: list[tuple[int, float]] = []

    def resume(self, ckpt_dir) -> None:
        params, meta, _, _ = ckpt.load_checkpoint(ckpt_dir)
        cfg = self.cfg
        if meta["mode"] is not cfg.mode or meta["d"] != cfg.d:
            raise TrainError(
                f"checkpoint {ckpt_dir} was trained with mode={meta['mode'].value} "
                f"d={meta['d']}, config says mode={cfg.mode.value} d={cfg.d}")
        if meta["seed"] != cfg.seed:
            raise TrainError(f"checkpoint seed {meta['seed']} != config seed {cfg.seed}")
        if meta["n_e"] != self.g.n_e or meta["n_r_effective"] != self.g.n_r_effective:
            raise TrainError(
                f"checkpoint sized ({meta['n_e']}, {meta['n_r_effective']}) but "
                f"graph has ({self.g.n_e}, {self.g.n_r_effective})")
        self.params = params
        self.adam, self.start_epoch = _load_optim(ckpt_dir, params)
        log.info("resumed at epoch %d from %s", self.start_epoch, ckpt_dir)

    # -- checkpoint plumbing -------------------------------------------------

    def _write_checkpoint(self, path, epoch: int) -> None:
        if self.ent_dict is None or self.rel_dict is None:
            raise TrainError("checkpoints need entity/relation dictionaries")
        ckpt.save_checkpoint(path, self.params, self.cfg.mode, self.cfg.seed,
                             self.ent_dict, self.rel_dict, extra={"epoch": epoch})
        _save_optim(path, self.adam, epoch)

    def _checkpoint_cadence(self, epoch: int, final: bool) -> None:
        if self.out_dir is None:
            return
        ce = self.cfg.checkpoint_every
        if ce > 0 and epoch > 0 and epoch % ce == 0 and not final:
            self._write_checkpoint(
                os.path.join(self.out_dir, "checkpoints", f"epoch-{epoch:05d}"), epoch)
        if final:
            self._write_checkpoint(
                os.path.join(self.out_dir, FINAL_CHECKPOINT_DIR), epoch)

    def _append_loss(self, epoch: int, value: float) -> None:
        self.loss_log.append((epoch, value))
        if epoch % 25 == 0 or epoch == self.cfg.epochs:
            log.info("epoch %d: loss %.6f", epoch, value)
        else:
            log.debug("epoch %d: loss %.6f", epoch, value)
        if self.out_dir is None:
            return
        path = os.path.join(self.out_dir, LOSS_LOG_FILE)
        mode = "a" if (self.loss_log[:-1] or self.start_epoch > 0) else "w"
        with io.open(path, mode, encoding="utf-8") as f:
            f.write(f"{epoch}\t{value:.17g}\n")

    def _trim_loss_log(self) -> None:
        # on resume, drop logged epochs past the checkpoint so the file
        # matches an uninterrupted run
        if self.out_dir is None:
            return
        path = os.path.join(self.out_dir, LOSS_LOG_FILE)
        if not os.path.exists(path):
            return
        kept = []
        with io.open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    e, _, _ = line.partition("\t")
                    if int(e) <= self.start_epoch:
                        kept.append(line)
        with io.open(path, "w", encoding="utf-8") as f:
            f.writelines(kept)

    # -- the loop ------------------------------------------------------------

    def run(self) -> ModelParams:
        cfg = self.cfg
        g = self.g
        if self.out_dir is not None:
            os.makedirs(self.out_dir, exist_ok=True)
        self._trim_loss_log()
        anchors = g.triples_array(Split.TRAIN)
        T = len(anchors)
        builder = _BatchBuilder(g, anchors, cfg.n, self.kern)
        n_workers = min(cfg.threads, 1 if T == 0 else T)
        pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
        worker_grads = [_zero_grads(self.params, cfg.mode)
                        for _ in range(n_workers)]
        try:
            for epoch in range(self.start_epoch + 1, cfg.epochs + 1):
                rng_s, rng_d = _epoch_rngs(cfg.seed, epoch)
                perm = rng_s.permutation(T)
                ce_sum = 0.0
                for lo in range(0, T, cfg.batch):
                    idx = perm[lo:lo + cfg.batch]
                    arrays = builder.batch(idx, rng_s)
                    keep = None
                    if cfg.mode is not ScoreMode.TRANSE and cfg.dropout > 0.0:
                        keep = draw_keep_mask(rng_d, len(idx), cfg.d, cfg.dropout)
                    ce_sum += self._step(arrays, keep, len(idx) / T,
                                         worker_grads, pool, n_workers)
                epoch_loss = ce_sum + cfg.lambda_ * sq_norm(self.params)
                self._append_loss(epoch, epoch_loss)
                self._checkpoint_cadence(epoch, final=False)
            self._checkpoint_cadence(max(cfg.epochs, self.start_epoch), final=True)
        finally:
            if pool is not None:
                pool.shutdown()
        return self.params

    def _step(self, arrays, keep, fraction, worker_grads, pool, n_workers) -> float:
        heads, rels, bag_ptr, tails, labels = arrays
        B = len(heads)
        slices = _chunk_slices(B, n_workers) if n_workers > 1 else [(0, B)]
        for gr in worker_grads[:len(slices)]:
            for t in gr.tensors().values():
                t.fill(0.0)

        def part(w, a, b):
            sub = (heads[a:b], rels[a:b],
                   bag_ptr[a:b + 1] - bag_ptr[a], tails[bag_ptr[a]:bag_ptr[b]],
                   labels[bag_ptr[a]:bag_ptr[b]])
            k = keep[a:b] if keep is not None else None
            return _run_kernel(self.kern, self.params, self.cfg.mode, sub, k,
                               worker_grads[w], self.cfg.margin)

        if len(slices) == 1:
            ce = part(0, 0, B)
        else:
            futures = [pool.submit(part, w, a, b)
                       for w, (a, b) in enumerate(slices)]
            ce = (0.0, 0.0)
            for fu in futures:  # fixed order keeps sums deterministic
                c = fu.result()
                ce = (ce[0] + c[0], ce[1] + c[1])
        total = worker_grads[0]
        for gr in worker_grads[1:len(slices)]:
            for name, t in total.tensors().items():
                t += gr.tensors()[name]
        _apply_batch_reg(total, self.params, self.cfg.lambda_, fraction, arrays)
        adam_step(self.params, total, self.adam, self.cfg.lr)
        return ce[1]


def train(g: KnowledgeGraph, cfg: TrainConfig, ent_dict=None, rel_dict=None,
          out_dir=None, resume_from=None):
    """Run the loop; returns (params, loss_log) where loss_log pairs each
    epoch with its dropout-free loss under the params seen that epoch."""
    tr = Trainer(g, cfg, ent_dict=ent_dict, rel_dict=rel_dict, out_dir=out_dir)
    if resume_from is not None:
        tr.resume(resume_from)
    params = tr.run()
    return params, tr.loss_log
