"""Training loop, data-parallel workers, and the cross-validation harness.

A training step draws a class-balanced global batch (an emotion cycle makes
any contiguous shard of >= 2 items span >= 2 emotions), applies the epoch's
mixed-view augmentation plan, encodes 3 views + sampled prompts per item,
mines pairs, and backpropagates the joint loss. With workers > 1 the global
batch is sharded by rank; per-shard gradients are averaged by a TCP
all-reduce with a fixed rank-order reduction, and every worker applies the
identical optimizer update, so replicas stay in lockstep. A serial reference
(`serial_reference`) runs the same shard loop in one process and is the
oracle for distributed equivalence.
"""

from __future__ import annotations

import json
import math
import os
import socket
import struct
import tempfile
import threading
import time
from dataclasses import dataclass, replace

import numpy as np

from . import mixaug
from .affectloss import loss_backward, loss_forward, mine_pairs
from .datagen import EMOTIONS, FaceSequence
from .dynimg import RankPoolConfig, dynamic_multiview
from .encoders import (ALPHA_MAX, ALPHA_MIN, EngineConfig, GradAccumulator,
                       ModelParams, backward, encode_image_batch,
                       encode_text_batch, init_params, save_checkpoint)
from .errors import (DivergenceError, InvalidInputError, ProtocolError,
                     WorkerConnectionError)
from .prompts import class_prompt_set, tokenize
from .rng import key64, stream
from .views import render_multiview

N_FOLDS = 10


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    workers: int = 1
    tau: float = 0.0                  # 0 = exact hinge
    engine: str = "patch-mlp-16"
    d: int = 64
    resolution: tuple[int, int] = (64, 64)
    image_width: int = 64
    text_width: int = 64
    similarity: str = "cosine"
    n_text: int = 2                   # prompts sampled per item per step
    prompts_per_class: int = 8
    use_mixaug: bool = True
    single_view: bool = False
    input_mode: str = "static-apex"   # or "dynamic"
    off_axis_degrees: float = 30.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2:
            raise InvalidInputError("epochs >= 1 and batch_size >= 2 required")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidInputError(f"optimizer {self.optimizer!r} not in ('sgd', 'adam')")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        if self.batch_size % self.workers:
            raise InvalidInputError("batch_size must divide evenly across workers")
        if self.workers > 1 and self.batch_size // self.workers < 2:
            raise InvalidInputError("each worker shard needs >= 2 samples for pair mining")
        if self.n_text > self.prompts_per_class:
            raise InvalidInputError("n_text cannot exceed prompts_per_class")
        if self.input_mode not in ("static-apex", "dynamic"):
            raise InvalidInputError(f"input_mode {self.input_mode!r}")

    def engine_config(self) -> EngineConfig:
        return EngineConfig(engine=self.engine, d=self.d, image_size=self.resolution,
                            image_width=self.image_width, text_width=self.text_width)


@dataclass
class FoldSplit:
    folds: list[set[int]]

    def __post_init__(self):
        all_ids: list[int] = []
        for f in self.folds:
            all_ids.extend(f)
        if len(all_ids) != len(set(all_ids)):
            raise ProtocolError("folds are not disjoint")

    def subjects(self) -> set[int]:
        out: set[int] = set()
        for f in self.folds:
            out |= f
        return out


def make_folds(corpus: list[FaceSequence], seed: int) -> FoldSplit:
    """Seeded shuffle of subject ids dealt round-robin into 10 folds."""
    subjects = sorted({seq.subject.subject_id for seq in corpus})
    if len(subjects) < N_FOLDS:
        raise ProtocolError(f"need >= {N_FOLDS} subjects for {N_FOLDS}-fold splits, got {len(subjects)}")
    order = stream(seed, 0xF01D).permutation(len(subjects))
    shuffled = [subjects[i] for i in order]
    folds = [set(shuffled[i::N_FOLDS]) for i in range(N_FOLDS)]
    return FoldSplit(folds=folds)


@dataclass
class TrainSample:
    """Clean (unaugmented) per-view pixel arrays plus labels."""

    pixels: dict[str, np.ndarray]
    emotion: str
    subject_id: int
    uid: int


def build_samples(corpus: list[FaceSequence], cfg: TrainConfig) -> list[TrainSample]:
    """Render the corpus once; augmentation is applied per step, not here."""
    samples = []
    for uid, seq in enumerate(corpus):
        if cfg.input_mode == "dynamic":
            mv = dynamic_multiview(seq, RankPoolConfig(method="approximate"),
                                   cfg.resolution, cfg.off_axis_degrees)
        else:
            mv = render_multiview(seq, seq.n_frames - 1, cfg.resolution, cfg.off_axis_degrees)
        samples.append(TrainSample(
            pixels={v.view.name: v.pixels for v in mv.images},
            emotion=seq.emotion,
            subject_id=seq.subject.subject_id,
            uid=uid,
        ))
    return samples


class _PromptCache:
    """Per-emotion prompt sets and token sequences, fixed for a run."""

    def __init__(self, cfg: TrainConfig):
        self.tokens = {}
        for emotion in EMOTIONS:
            texts = class_prompt_set(emotion, cfg.prompts_per_class, seed=cfg.seed)
            self.tokens[emotion] = [tokenize(t) for t in texts]


def _emotion_cycle(seed: int) -> list[str]:
    perm = stream(seed, 0xCCE).permutation(len(EMOTIONS))
    return [EMOTIONS[i] for i in perm]


def _batch_indices(samples, pools, cycle, cfg: TrainConfig, step: int) -> list[int]:
    picks = []
    g = stream(cfg.seed, 0xBA7C, step)
    for pos in range(cfg.batch_size):
        emotion = cycle[(step * cfg.batch_size + pos) % len(cycle)]
        pool = pools[emotion]
        picks.append(pool[int(g.integers(len(pool)))])
    return picks


def _view_names(cfg: TrainConfig) -> tuple[str, ...]:
    return ("frontal",) if cfg.single_view else ("frontal", "left", "right")


def _shard_gradients(params: ModelParams, samples, idxs, plans, prompt_cache,
                     cfg: TrainConfig, step: int, shard_rank: int):
    """Gradients and loss breakdown for one shard of the global batch."""
    view_names = _view_names(cfg)
    images, ops, items_meta = [], [], []
    for idx in idxs:
        s = samples[idx]
        for vname in view_names:
            images.append(s.pixels[vname])
            if cfg.use_mixaug and plans is not None:
                ops.append(plans[idx].op_for(vname))
            items_meta.append((s.emotion, vname, s.uid))
    image_stack = np.stack(images)
    if ops:
        image_stack = mixaug.apply_batch(image_stack, ops)

    token_seqs, text_meta = [], []
    for idx in idxs:
        s = samples[idx]
        bank = prompt_cache.tokens[s.emotion]
        g = stream(cfg.seed, 0x9E7, step, s.uid)
        chosen = g.choice(len(bank), size=cfg.n_text, replace=False)
        for c in chosen:
            token_seqs.append(bank[int(c)])
            text_meta.append((s.emotion, "text", s.uid))

    Z_img, img_cache = encode_image_batch(image_stack, params)
    Z_txt, txt_cache = encode_text_batch(token_seqs, params)

    items = [(Z_img[i], *items_meta[i]) for i in range(len(items_meta))]
    items += [(Z_txt[i], *text_meta[i]) for i in range(len(text_meta))]

    pairs = mine_pairs(items, seed=key64(cfg.seed, 0x313E, step, shard_rank))
    bd = loss_forward(pairs, params.alpha, kind=cfg.similarity, tau=cfg.tau)
    dZ, dalpha = loss_backward(pairs, params.alpha, kind=cfg.similarity, tau=cfg.tau)

    n_img = len(items_meta)
    grads = backward(dZ[:n_img], img_cache, dZ[n_img:], txt_cache, params)
    grads.alpha = dalpha
    return grads, bd


class Optimizer:
    """SGD or Adam (b1=0.9, b2=0.999, eps=1e-8) over arrays + alpha, with the
    alpha clamp applied after every step."""

    B1, B2, EPS = 0.9, 0.999, 1e-8

    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.kind = cfg.optimizer
        self.lr = cfg.lr
        self.t = 0
        if self.kind == "adam":
            self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
            self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
            self.scratch = {k: np.empty_like(v) for k, v in params.arrays.items()}
            self.m_alpha = 0.0
            self.v_alpha = 0.0

    def step(self, params: ModelParams, grads: GradAccumulator):
        self.t += 1
        if self.kind == "sgd":
            for k, g in grads.arrays.items():
                params.arrays[k] -= self.lr * g
            params.alpha -= self.lr * grads.alpha
        else:
            b1, b2, eps = self.B1, self.B2, self.EPS
            c1 = 1.0 - b1 ** self.t
            c2 = 1.0 - b2 ** self.t
            for k, g in grads.arrays.items():
                m, v, tmp = self.m[k], self.v[k], self.scratch[k]
                m *= b1
                m += (1 - b1) * g
                v *= b2
                np.multiply(g, g, out=tmp)
                tmp *= (1 - b2)
                v += tmp
                # tmp = lr * (m / c1) / (sqrt(v / c2) + eps)
                np.divide(v, c2, out=tmp)
                np.sqrt(tmp, out=tmp)
                tmp += eps
                np.divide(m, tmp, out=tmp)
                tmp *= self.lr / c1
                params.arrays[k] -= tmp
            self.m_alpha = b1 * self.m_alpha + (1 - b1) * grads.alpha
            self.v_alpha = b2 * self.v_alpha + (1 - b2) * grads.alpha ** 2
            params.alpha -= self.lr * (self.m_alpha / c1) / (math.sqrt(self.v_alpha / c2) + eps)
        params.alpha = float(min(max(params.alpha, ALPHA_MIN), ALPHA_MAX))


class MetricsLog:
    """Append-only JSONL sink; one object per step."""

    def __init__(self, path: str | None = None):
        self.path = path
        self.lines: list[dict] = []
        if path:
            open(path, "w").close()

    def append(self, record: dict):
        self.lines.append(record)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")


def _metrics_record(step: int, bd, alpha: float) -> dict:
    return {
        "step": step,
        "l_mc_pos": bd.l_mc_pos,
        "l_mc_neg": bd.l_mc_neg,
        "l_mt": bd.l_mt,
        "total": bd.total,
        "alpha": alpha,
    }


def steps_per_epoch(n_samples: int, cfg: TrainConfig) -> int:
    return max(1, math.ceil(n_samples / cfg.batch_size))


def train_on_samples(samples: list[TrainSample], cfg: TrainConfig,
                     metrics: MetricsLog | None = None) -> tuple[ModelParams, MetricsLog]:
    """Serial training loop (workers = 1 path)."""
    if not samples:
        raise InvalidInputError("no training samples")
    metrics = metrics or MetricsLog()
    params = init_params(cfg.engine_config(), cfg.seed)
    opt = Optimizer(params, cfg)
    prompt_cache = _PromptCache(cfg)
    pools = _pools(samples)
    cycle = _emotion_cycle(cfg.seed)
    spe = steps_per_epoch(len(samples), cfg)

    step = 0
    for epoch in range(cfg.epochs):
        plans = mixaug.plan_epoch(len(samples), cfg.seed, epoch) if cfg.use_mixaug else None
        for _ in range(spe):
            idxs = _batch_indices(samples, pools, cycle, cfg, step)
            grads, bd = _shard_gradients(params, samples, idxs, plans, prompt_cache,
                                         cfg, step, shard_rank=0)
            if not np.isfinite(bd.total):
                raise DivergenceError(step, bd.total)
            opt.step(params, grads)
            metrics.append(_metrics_record(step, bd, params.alpha))
            step += 1
    return params, metrics


def _pools(samples) -> dict[str, list[int]]:
    pools: dict[str, list[int]] = {e: [] for e in EMOTIONS}
    for i, s in enumerate(samples):
        pools[s.emotion].append(i)
    missing = [e for e, p in pools.items() if not p]
    if missing:
        raise ProtocolError(f"training split lacks emotions {missing}")
    return pools


def train(corpus: list[FaceSequence], cfg: TrainConfig,
          metrics_path: str | None = None, checkpoint_path: str | None = None):
    """Full entry point: renders the corpus, trains (serial or distributed),
    optionally writes the checkpoint + metrics log. Returns (params, metrics)."""
    samples = build_samples(corpus, cfg)
    metrics = MetricsLog(metrics_path)
    if cfg.workers == 1:
        params, metrics = train_on_samples(samples, cfg, metrics)
    else:
        params, metrics = train_distributed(samples, cfg, metrics)
    if checkpoint_path:
        save_checkpoint(params, checkpoint_path, meta={
            "seed": cfg.seed,
            "config": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in cfg.__dict__.items()},
            "n_train_samples": len(samples),
        })
    return params, metrics


# ---------------------------------------------------------------------------
# data-parallel workers: TCP rendezvous + fixed-order all-reduce
# ---------------------------------------------------------------------------

_SOCKET_TIMEOUT = 60.0


def allreduce_step(worker_grads: list[np.ndarray]) -> np.ndarray:
    """Mean of worker gradient vectors, summed in rank order (deterministic)."""
    if not worker_grads:
        raise InvalidInputError("no gradients to reduce")
    acc = worker_grads[0].copy()
    for g in worker_grads[1:]:
        if g.shape != acc.shape:
            raise InvalidInputError(f"gradient shape mismatch: {g.shape} vs {acc.shape}")
        acc += g
    return acc / float(len(worker_grads))


@dataclass
class WorkerTopology:
    n_workers: int
    rank: int
    host: str
    port: int


def _send_frame(sock: socket.socket, payload: bytes):
    sock.sendall(struct.pack("<Q", len(payload)) + payload)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed connection")
        buf += chunk
    return buf


def _recv_frame(sock: socket.socket) -> bytes:
    (length,) = struct.unpack("<Q", _recv_exact(sock, 8))
    return _recv_exact(sock, length)


def write_launch_file(path: str, host: str, port: int, n_workers: int):
    """Atomic publish of the rendezvous address chosen at launch."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump({"host": host, "port": port, "n_workers": n_workers}, f)
    os.replace(tmp, path)


def read_launch_file(path: str, timeout: float = 10.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        time.sleep(0.01)
    raise WorkerConnectionError(0, f"launch file {path} never appeared")


class _Hub:
    """Rank 0's side of the collective: gathers one frame per peer per step,
    reduces in rank order, broadcasts the mean."""

    def __init__(self, n_workers: int, launch_path: str):
        self.n_workers = n_workers
        self.server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.server.bind(("127.0.0.1", 0))  # OS-assigned free port
        self.server.listen(n_workers)
        self.server.settimeout(_SOCKET_TIMEOUT)
        host, port = self.server.getsockname()
        self.topology = WorkerTopology(n_workers=n_workers, rank=0, host=host, port=port)
        write_launch_file(launch_path, host, port, n_workers)
        self.peers: dict[int, socket.socket] = {}

    def accept_peers(self):
        for _ in range(self.n_workers - 1):
            conn, _ = self.server.accept()
            conn.settimeout(_SOCKET_TIMEOUT)
            (rank,) = struct.unpack("<I", _recv_exact(conn, 4))
            self.peers[rank] = conn

    def broadcast_params(self, params: ModelParams):
        blob = params.flat().tobytes()
        for rank in sorted(self.peers):
            _send_frame(self.peers[rank], blob)

    def reduce(self, own: np.ndarray) -> np.ndarray:
        by_rank = {0: own}
        for rank in sorted(self.peers):
            try:
                blob = _recv_frame(self.peers[rank])
            except (ConnectionError, socket.timeout, OSError) as e:
                self.close()
                raise WorkerConnectionError(rank, str(e)) from e
            by_rank[rank] = np.frombuffer(blob, dtype=np.float64)
        mean = allreduce_step([by_rank[r] for r in sorted(by_rank)])
        blob = mean.tobytes()
        for rank in sorted(self.peers):
            self.peers[rank].sendall(struct.pack("<Q", len(blob)) + blob)
        return mean

    def close(self):
        for conn in self.peers.values():
            try:
                conn.close()
            except OSError:
                pass
        self.server.close()


class _Spoke:
    """A nonzero rank: connects to the hub, sends gradients, receives means."""

    def __init__(self, rank: int, launch_path: str):
        info = read_launch_file(launch_path)
        self.rank = rank
        self.sock = socket.create_connection((info["host"], info["port"]), timeout=_SOCKET_TIMEOUT)
        self.sock.settimeout(_SOCKET_TIMEOUT)
        self.sock.sendall(struct.pack("<I", rank))

    def receive_params(self) -> np.ndarray:
        return np.frombuffer(_recv_frame(self.sock), dtype=np.float64)

    def exchange(self, own: np.ndarray) -> np.ndarray:
        try:
            _send_frame(self.sock, own.tobytes())
            return np.frombuffer(_recv_frame(self.sock), dtype=np.float64)
        except (ConnectionError, socket.timeout, OSError) as e:
            raise WorkerConnectionError(self.rank, str(e)) from e

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def _payload(grads: GradAccumulator, bd) -> np.ndarray:
    stats = np.array([bd.l_mc_pos, bd.l_mc_neg, bd.l_mt, bd.total,
                      float(bd.active_neg_pairs), float(bd.active_triplets)])
    return np.concatenate([grads.flat(), stats])


def train_distributed(samples: list[TrainSample], cfg: TrainConfig,
                      metrics: MetricsLog | None = None,
                      launch_dir: str | None = None,
                      fail_at: dict[int, int] | None = None):
    """Data-parallel training: cfg.workers threads, each owning a private
    replica, synchronized only at the per-step all-reduce barrier.

    fail_at maps rank -> step at which that worker deliberately drops its
    connection (test hook for the abort-on-disconnect contract).
    """
    if cfg.workers < 1:
        raise InvalidInputError("workers must be >= 1")
    metrics = metrics or MetricsLog()
    launch_dir = launch_dir or tempfile.mkdtemp(prefix="affectvlm-rdzv-")
    launch_path = os.path.join(launch_dir, "launch.json")
    fail_at = fail_at or {}

    prompt_cache = _PromptCache(cfg)
    pools = _pools(samples)
    cycle = _emotion_cycle(cfg.seed)
    spe = steps_per_epoch(len(samples), cfg)
    total_steps = cfg.epochs * spe
    shard = cfg.batch_size // cfg.workers

    results: dict[int, ModelParams] = {}
    errors: dict[int, BaseException] = {}
    hub_holder: dict[str, _Hub] = {}
    hub_ready = threading.Event()

    def run_worker(rank: int):
        hub = spoke = None
        try:
            params = init_params(cfg.engine_config(), cfg.seed)
            if rank == 0:
                hub = _Hub(cfg.workers, launch_path)
                hub_holder["hub"] = hub
                hub_ready.set()
                hub.accept_peers()
                hub.broadcast_params(params)
            else:
                hub_ready.wait(timeout=_SOCKET_TIMEOUT)
                spoke = _Spoke(rank, launch_path)
                params.load_flat(spoke.receive_params())

            opt = Optimizer(params, cfg)
            template = GradAccumulator(params)
            n_grad = template.flat().size

            plans = None
            plans_epoch = -1
            for step in range(total_steps):
                epoch = step // spe
                if cfg.use_mixaug and epoch != plans_epoch:
                    plans = mixaug.plan_epoch(len(samples), cfg.seed, epoch)
                    plans_epoch = epoch
                global_idxs = _batch_indices(samples, pools, cycle, cfg, step)
                idxs = global_idxs[rank * shard:(rank + 1) * shard]
                grads, bd = _shard_gradients(params, samples, idxs, plans,
                                             prompt_cache, cfg, step, shard_rank=rank)
                if not np.isfinite(bd.total):
                    raise DivergenceError(step, bd.total)

                if fail_at.get(rank) == step:
                    if spoke is not None:
                        spoke.close()
                    raise WorkerConnectionError(rank, "simulated connectivity loss")

                payload = _payload(grads, bd)
                if rank == 0:
                    mean = hub.reduce(payload)
                else:
                    mean = spoke.exchange(payload)

                grads.load_flat(mean[:n_grad])
                opt.step(params, grads)
                if rank == 0:
                    stats = mean[n_grad:]
                    record = {
                        "step": step,
                        "l_mc_pos": stats[0], "l_mc_neg": stats[1],
                        "l_mt": stats[2], "total": stats[3],
                        "alpha": params.alpha,
                    }
                    metrics.append(record)
            results[rank] = params
        except BaseException as e:  # joined and re-raised on the launcher thread
            errors[rank] = e
        finally:
            if hub is not None:
                hub.close()
            if spoke is not None:
                spoke.close()

    threads = [threading.Thread(target=run_worker, args=(r,), daemon=True)
               for r in range(cfg.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if errors:
        conn_errors = [e for e in errors.values() if isinstance(e, WorkerConnectionError)]
        if conn_errors:
            raise max(conn_errors, key=lambda e: e.rank)
        raise errors[min(errors)]
    return results[0], metrics


def serial_reference(samples: list[TrainSample], cfg: TrainConfig, n_shards: int,
                     metrics: MetricsLog | None = None):
    """One-process oracle for the distributed run: identical shard loop,
    identical fixed-order reduction, identical updates."""
    if cfg.batch_size % n_shards:
        raise InvalidInputError("batch_size must divide evenly across shards")
    metrics = metrics or MetricsLog()
    params = init_params(cfg.engine_config(), cfg.seed)
    opt = Optimizer(params, cfg)
    prompt_cache = _PromptCache(cfg)
    pools = _pools(samples)
    cycle = _emotion_cycle(cfg.seed)
    spe = steps_per_epoch(len(samples), cfg)
    shard = cfg.batch_size // n_shards
    acc = GradAccumulator(params)
    n_grad = acc.flat().size

    step = 0
    for epoch in range(cfg.epochs):
        plans = mixaug.plan_epoch(len(samples), cfg.seed, epoch) if cfg.use_mixaug else None
        for _ in range(spe):
            global_idxs = _batch_indices(samples, pools, cycle, cfg, step)
            payloads = []
            for rank in range(n_shards):
                idxs = global_idxs[rank * shard:(rank + 1) * shard]
                grads, bd = _shard_gradients(params, samples, idxs, plans,
                                             prompt_cache, cfg, step, shard_rank=rank)
                payloads.append(_payload(grads, bd))
            mean = allreduce_step(payloads)
            acc.load_flat(mean[:n_grad])
            if not np.isfinite(mean[n_grad + 3]):
                raise DivergenceError(step, mean[n_grad + 3])
            opt.step(params, acc)
            stats = mean[n_grad:]
            metrics.append({
                "step": step,
                "l_mc_pos": stats[0], "l_mc_neg": stats[1],
                "l_mt": stats[2], "total": stats[3],
                "alpha": params.alpha,
            })
            step += 1
    return params, metrics


# ---------------------------------------------------------------------------
# evaluation and cross-validation
# ---------------------------------------------------------------------------


def evaluate(params: ModelParams, test_samples: list[TrainSample], cfg: TrainConfig,
             train_subject_ids: set[int]):
    """Zero-shot accuracy + 6x6 confusion on clean (unaugmented) views."""
    from .serve import class_prototypes, classify_pixels

    test_subjects = {s.subject_id for s in test_samples}
    overlap = test_subjects & set(train_subject_ids)
    if overlap:
        raise ProtocolError(f"subject leakage between train and test: {sorted(overlap)}")

    protos = class_prototypes(params, cfg.prompts_per_class, cfg.seed)
    confusion = np.zeros((len(EMOTIONS), len(EMOTIONS)), dtype=np.int64)
    view_names = _view_names(cfg)
    for s in test_samples:
        pixel_views = {name: s.pixels[name] for name in view_names}
        result = classify_pixels(pixel_views, params, protos)
        confusion[EMOTIONS.index(s.emotion), EMOTIONS.index(result["predicted"])] += 1
    accuracy = float(np.trace(confusion)) / max(1, len(test_samples))
    return accuracy, confusion


def cross_validate(corpus: list[FaceSequence], cfg: TrainConfig,
                   params_override=None) -> dict:
    """10-fold subject-independent CV. params_override(fold_idx) -> ModelParams
    skips training (used for the random-baseline control)."""
    samples = build_samples(corpus, cfg)
    folds = make_folds(corpus, cfg.seed)
    fold_accs = []
    confusion = np.zeros((len(EMOTIONS), len(EMOTIONS)), dtype=np.int64)
    for i, test_subjects in enumerate(folds.folds):
        train_s = [s for s in samples if s.subject_id not in test_subjects]
        test_s = [s for s in samples if s.subject_id in test_subjects]
        train_subjects = {s.subject_id for s in train_s}
        if params_override is not None:
            params = params_override(i)
        else:
            params, _ = train_on_samples(train_s, cfg)
        acc, conf = evaluate(params, test_s, cfg, train_subjects)
        fold_accs.append(acc)
        confusion += conf
    return {
        "folds": fold_accs,
        "mean": float(np.mean(fold_accs)),
        "std": float(np.std(fold_accs)),
        "confusion": confusion.tolist(),
    }


ABLATION_VARIANTS = ("full", "no-mixaug", "no-prompt-augmentation", "single-view")


def ablation_config(cfg: TrainConfig, variant: str) -> TrainConfig:
    if variant == "full":
        return cfg
    if variant == "no-mixaug":
        return replace(cfg, use_mixaug=False)
    if variant == "no-prompt-augmentation":
        return replace(cfg, prompts_per_class=1, n_text=1)
    if variant == "single-view":
        return replace(cfg, single_view=True)
    raise InvalidInputError(f"unknown ablation variant {variant!r}")


def run_ablation(corpus: list[FaceSequence], cfg: TrainConfig,
                 full_report: dict | None = None) -> dict:
    """CV for {full, no-mixaug, no-prompt-augmentation, single-view}.

    Pass a precomputed full-model report to reuse it. Returns reports per
    variant plus a rendered comparison table."""
    reports = {}
    for variant in ABLATION_VARIANTS:
        if variant == "full" and full_report is not None:
            reports[variant] = full_report
        else:
            reports[variant] = cross_validate(corpus, ablation_config(cfg, variant))
    width = max(len(v) for v in ABLATION_VARIANTS)
    lines = [f"{'variant'.ljust(width)}  mean    std"]
    for variant in ABLATION_VARIANTS:
        r = reports[variant]
        lines.append(f"{variant.ljust(width)}  {r['mean']:.4f}  {r['std']:.4f}")
    reports["table"] = "\n".join(lines)
    return reports


def scaling_table(samples: list[TrainSample], cfg: TrainConfig,
                  worker_counts=(1, 2, 4), epochs: int = 1) -> dict:
    """steps/sec per worker count; informational only, no asserted speedups."""
    rows = {}
    for n in worker_counts:
        run_cfg = replace(cfg, workers=n, epochs=epochs)
        t0 = time.perf_counter()
        if n == 1:
            _, metrics = train_on_samples(samples, run_cfg)
        else:
            _, metrics = train_distributed(samples, run_cfg)
        dt = time.perf_counter() - t0
        rows[n] = len(metrics.lines) / dt if dt > 0 else float("inf")
    return rows
