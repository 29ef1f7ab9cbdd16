"""Image and text encoders mapping views and prompts into the shared space.

Small from-scratch towers with exact reverse-mode gradients, float64 end to
end. Image engines: patch-mlp-16 / patch-mlp-32 (linear patch projection,
mean over patches, 2-layer tanh perceptron, linear head) and tiny-conv (two
stride-2 conv blocks, global average pool, same head). Text: embedding-table
lookup, mean over tokens, 2-layer perceptron. All outputs are L2-normalized;
a (near-)zero pre-normalization vector maps to the fixed unit vector e1 with
zero gradient, so cosine similarity is always a plain dot product downstream.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ParseError, ShapeError, UsageError, VersionError
from .prompts import VOCAB_SIZE, TokenSeq
from .rng import stream

ENGINES = ("patch-mlp-16", "patch-mlp-32", "tiny-conv")
ALPHA_MIN, ALPHA_MAX = 0.05, 1.0
ALPHA_INIT = 0.2

CHECKPOINT_MAGIC = b"AVLMCKPT"
CHECKPOINT_VERSION = 1

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class EngineConfig:
    engine: str
    d: int = 64
    image_size: tuple[int, int] = (64, 64)
    image_width: int = 64
    text_width: int = 64
    conv_channels: tuple[int, int] = (8, 16)

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise InvalidInputError(f"engine {self.engine!r} not in {ENGINES}")
        if self.engine.startswith("patch-mlp"):
            p = self.patch_size
            H, W = self.image_size
            if H % p or W % p:
                raise ShapeError(f"multiple of {p}", self.image_size, "image_size")

    @property
    def patch_size(self) -> int:
        return int(self.engine.rsplit("-", 1)[1]) if self.engine.startswith("patch-mlp") else 0


@dataclass
class ModelParams:
    """All encoder weights plus the learnable margin alpha."""

    config: EngineConfig
    arrays: dict[str, np.ndarray]
    alpha: float = ALPHA_INIT

    @property
    def engine(self) -> str:
        return self.config.engine

    @property
    def d(self) -> int:
        return self.config.d

    def names(self) -> list[str]:
        return list(self.arrays.keys())

    def copy(self) -> "ModelParams":
        return ModelParams(config=self.config,
                           arrays={k: v.copy() for k, v in self.arrays.items()},
                           alpha=self.alpha)

    def validate(self):
        for name, a in self.arrays.items():
            if not np.isfinite(a).all():
                raise InvalidInputError(f"non-finite weights in {name}")
        if not (ALPHA_MIN <= self.alpha <= ALPHA_MAX):
            raise InvalidInputError(f"alpha {self.alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")

    def flat(self) -> np.ndarray:
        """Canonical-order float64 vector of all weights plus alpha (last)."""
        parts = [a.ravel() for a in self.arrays.values()]
        parts.append(np.array([self.alpha]))
        return np.concatenate(parts)

    def load_flat(self, vec: np.ndarray):
        off = 0
        for name, a in self.arrays.items():
            n = a.size
            self.arrays[name] = vec[off:off + n].reshape(a.shape).copy()
            off += n
        self.alpha = float(vec[off])


class GradAccumulator:
    """Per-parameter gradient buffers aligned with a ModelParams layout."""

    def __init__(self, params: ModelParams):
        self.arrays = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.alpha = 0.0

    def zero_(self):
        for a in self.arrays.values():
            a.fill(0.0)
        self.alpha = 0.0

    def add_(self, other: "GradAccumulator"):
        for k in self.arrays:
            self.arrays[k] += other.arrays[k]
        self.alpha += other.alpha

    def scale_(self, c: float):
        for a in self.arrays.values():
            a *= c
        self.alpha *= c

    def flat(self) -> np.ndarray:
        parts = [a.ravel() for a in self.arrays.values()]
        parts.append(np.array([self.alpha]))
        return np.concatenate(parts)

    def load_flat(self, vec: np.ndarray):
        off = 0
        for name, a in self.arrays.items():
            n = a.size
            self.arrays[name][...] = vec[off:off + n].reshape(a.shape)
            off += n
        self.alpha = float(vec[off])


def _uniform_init(g: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    return g.uniform(-s, s, size=shape)


def init_params(config: EngineConfig, seed: int) -> ModelParams:
    """Fresh weights: uniform(-s, s) with s = 1/sqrt(fan_in); biases zero."""
    arrays: dict[str, np.ndarray] = {}
    w = config.image_width
    tw = config.text_width
    d = config.d
    counter = iter(range(64))

    def make(name, shape, fan_in):
        arrays[name] = _uniform_init(stream(seed, 0xE0C, next(counter)), shape, fan_in)

    if config.engine.startswith("patch-mlp"):
        pd = config.patch_size ** 2
        make("img_patch_w", (pd, w), pd)
        arrays["img_patch_b"] = np.zeros(w)
        fc1_in = w
    else:
        c1, c2 = config.conv_channels
        make("img_conv1_w", (c1, 1, 3, 3), 9)
        arrays["img_conv1_b"] = np.zeros(c1)
        make("img_conv2_w", (c2, c1, 3, 3), c1 * 9)
        arrays["img_conv2_b"] = np.zeros(c2)
        fc1_in = c2

    make("img_fc1_w", (fc1_in, w), fc1_in)
    arrays["img_fc1_b"] = np.zeros(w)
    make("img_fc2_w", (w, w), w)
    arrays["img_fc2_b"] = np.zeros(w)
    make("img_head_w", (w, d), w)
    arrays["img_head_b"] = np.zeros(d)

    make("txt_table", (VOCAB_SIZE, tw), tw)
    make("txt_fc1_w", (tw, tw), tw)
    arrays["txt_fc1_b"] = np.zeros(tw)
    make("txt_fc2_w", (tw, d), tw)
    arrays["txt_fc2_b"] = np.zeros(d)

    return ModelParams(config=config, arrays=arrays, alpha=ALPHA_INIT)


def _normalize_rows(V: np.ndarray):
    norms = np.linalg.norm(V, axis=1)
    degenerate = norms <= _NORM_EPS
    safe = np.where(degenerate, 1.0, norms)
    Z = V / safe[:, None]
    if degenerate.any():
        Z[degenerate] = 0.0
        Z[degenerate, 0] = 1.0  # e1 convention for zero pre-norm vectors
    return Z, norms, degenerate


def _normalize_backward(dZ, Z, norms, degenerate):
    # d(v/||v||)/dv = (I - zz^T)/||v||; degenerate rows are constant -> zero grad
    inner = np.sum(dZ * Z, axis=1, keepdims=True)
    dV = (dZ - Z * inner) / np.where(degenerate, 1.0, norms)[:, None]
    dV[degenerate] = 0.0
    return dV


def _extract_patches(images: np.ndarray, p: int) -> np.ndarray:
    N, H, W = images.shape
    nh, nw = H // p, W // p
    pat = images.reshape(N, nh, p, nw, p).transpose(0, 1, 3, 2, 4)
    return pat.reshape(N, nh * nw, p * p)


def _im2col(x: np.ndarray, stride: int = 2):
    """x: (N, C, H, W), 3x3 kernel, pad 1. Returns cols (N, C*9, OH*OW) and dims."""
    N, C, H, W = x.shape
    OH = (H - 1) // stride + 1
    OW = (W - 1) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((N, C * 9, OH * OW))
    k = 0
    for di in range(3):
        for dj in range(3):
            patch = xp[:, :, di::stride, dj::stride][:, :, :OH, :OW]
            cols[:, k::9, :] = patch.reshape(N, C, OH * OW)
            k += 1
    return cols, (OH, OW)


def _col2im(dcols: np.ndarray, x_shape, stride: int = 2):
    N, C, H, W = x_shape
    OH = (H - 1) // stride + 1
    OW = (W - 1) // stride + 1
    dxp = np.zeros((N, C, H + 2, W + 2))
    k = 0
    for di in range(3):
        for dj in range(3):
            patch = dcols[:, k::9, :].reshape(N, C, OH, OW)
            dxp[:, :, di::stride, dj::stride][:, :, :OH, :OW] += patch
            k += 1
    return dxp[:, :, 1:-1, 1:-1]


def _conv_forward(x, w, b, stride: int = 2):
    N = x.shape[0]
    co = w.shape[0]
    cols, (OH, OW) = _im2col(x, stride)
    wm = w.reshape(co, -1)
    out = np.einsum("of,nfp->nop", wm, cols) + b[None, :, None]
    return out.reshape(N, co, OH, OW), cols


def _conv_backward(dout, cols, x_shape, w, stride: int = 2):
    N, co = dout.shape[0], dout.shape[1]
    dflat = dout.reshape(N, co, -1)
    dw = np.einsum("nop,nfp->of", dflat, cols).reshape(w.shape)
    db = dflat.sum(axis=(0, 2))
    dcols = np.einsum("of,nop->nfp", w.reshape(co, -1), dflat)
    dx = _col2im(dcols, x_shape, stride)
    return dx, dw, db


def _head_forward(feat, A, prefix):
    h1 = np.tanh(feat @ A[f"{prefix}_fc1_w"] + A[f"{prefix}_fc1_b"])
    h2 = np.tanh(h1 @ A[f"{prefix}_fc2_w"] + A[f"{prefix}_fc2_b"])
    V = h2 @ A[f"{prefix}_head_w"] + A[f"{prefix}_head_b"]
    return V, (feat, h1, h2)


def _head_backward(dV, cache, A, grads, prefix):
    feat, h1, h2 = cache
    grads.arrays[f"{prefix}_head_w"] += h2.T @ dV
    grads.arrays[f"{prefix}_head_b"] += dV.sum(axis=0)
    dh2 = (dV @ A[f"{prefix}_head_w"].T) * (1.0 - h2 ** 2)
    grads.arrays[f"{prefix}_fc2_w"] += h1.T @ dh2
    grads.arrays[f"{prefix}_fc2_b"] += dh2.sum(axis=0)
    dh1 = (dh2 @ A[f"{prefix}_fc2_w"].T) * (1.0 - h1 ** 2)
    grads.arrays[f"{prefix}_fc1_w"] += feat.T @ dh1
    grads.arrays[f"{prefix}_fc1_b"] += dh1.sum(axis=0)
    return dh1 @ A[f"{prefix}_fc1_w"].T


def encode_image_batch(images: np.ndarray, params: ModelParams):
    """images: (N, H, W) in [0, 1]. Returns (Z (N, d), cache)."""
    cfg = params.config
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    if images.shape[1:] != tuple(cfg.image_size):
        raise ShapeError(tuple(cfg.image_size), images.shape[1:], "image")
    A = params.arrays

    if cfg.engine.startswith("patch-mlp"):
        X = _extract_patches(images, cfg.patch_size)
        a0 = X @ A["img_patch_w"] + A["img_patch_b"]
        feat = a0.mean(axis=1)
        tower_cache = {"X": X, "n_patches": X.shape[1]}
    else:
        x0 = images[:, None, :, :]
        c1_pre, cols1 = _conv_forward(x0, A["img_conv1_w"], A["img_conv1_b"])
        c1 = np.tanh(c1_pre)
        c2_pre, cols2 = _conv_forward(c1, A["img_conv2_w"], A["img_conv2_b"])
        c2 = np.tanh(c2_pre)
        feat = c2.mean(axis=(2, 3))
        tower_cache = {"x0_shape": x0.shape, "cols1": cols1, "c1": c1,
                       "cols2": cols2, "c2": c2}

    V, head_cache = _head_forward(feat, A, "img")
    Z, norms, degenerate = _normalize_rows(V)
    cache = {"kind": "image", "tower": tower_cache, "head": head_cache,
             "Z": Z, "norms": norms, "degenerate": degenerate}
    return Z, cache


def encode_image(img, params: ModelParams) -> np.ndarray:
    """Single ViewImage (or raw (H, W) array) -> unit-norm embedding (d,)."""
    pixels = img.pixels if hasattr(img, "pixels") else np.asarray(img)
    Z, _ = encode_image_batch(pixels[None], params)
    return Z[0]


def encode_text_batch(token_seqs: list[TokenSeq], params: ModelParams):
    if not token_seqs:
        raise InvalidInputError("token_seqs must be nonempty")
    for ts in token_seqs:
        if len(ts) == 0:
            raise InvalidInputError("empty TokenSeq")
    A = params.arrays
    table = A["txt_table"]
    M = np.stack([table[list(ts.ids)].mean(axis=0) for ts in token_seqs])
    V, head_cache = _text_head_forward(M, A)
    Z, norms, degenerate = _normalize_rows(V)
    cache = {"kind": "text", "ids": [list(ts.ids) for ts in token_seqs],
             "head": head_cache, "Z": Z, "norms": norms, "degenerate": degenerate}
    return Z, cache


def _text_head_forward(M, A):
    h1 = np.tanh(M @ A["txt_fc1_w"] + A["txt_fc1_b"])
    V = h1 @ A["txt_fc2_w"] + A["txt_fc2_b"]
    return V, (M, h1)


def encode_text(tokens: TokenSeq, params: ModelParams) -> np.ndarray:
    Z, _ = encode_text_batch([tokens], params)
    return Z[0]


def backward(d_image_Z, image_cache, d_text_Z, text_cache, params: ModelParams) -> GradAccumulator:
    """Exact reverse-mode gradients for every parameter.

    Either side may be None when the loss touched only one modality; the
    matching cache must come from the forward pass that produced the
    embeddings the upstream gradients refer to.
    """
    grads = GradAccumulator(params)
    A = params.arrays

    if d_image_Z is not None:
        if image_cache is None or image_cache.get("kind") != "image":
            raise UsageError("backward: image gradients supplied without a cached image forward pass")
        dV = _normalize_backward(np.asarray(d_image_Z, dtype=np.float64),
                                 image_cache["Z"], image_cache["norms"], image_cache["degenerate"])
        dfeat = _head_backward(dV, image_cache["head"], A, grads, "img")
        tc = image_cache["tower"]
        if params.config.engine.startswith("patch-mlp"):
            X = tc["X"]
            da0 = np.repeat(dfeat[:, None, :], tc["n_patches"], axis=1) / tc["n_patches"]
            X2 = X.reshape(-1, X.shape[2])
            da2 = da0.reshape(-1, da0.shape[2])
            grads.arrays["img_patch_w"] += X2.T @ da2
            grads.arrays["img_patch_b"] += da2.sum(axis=0)
        else:
            c2 = tc["c2"]
            n_spatial = c2.shape[2] * c2.shape[3]
            dc2 = np.broadcast_to(dfeat[:, :, None, None] / n_spatial, c2.shape)
            dc2_pre = dc2 * (1.0 - c2 ** 2)
            dc1, dw2, db2 = _conv_backward(dc2_pre, tc["cols2"], tc["c1"].shape,
                                           A["img_conv2_w"])
            grads.arrays["img_conv2_w"] += dw2
            grads.arrays["img_conv2_b"] += db2
            dc1_pre = dc1 * (1.0 - tc["c1"] ** 2)
            _, dw1, db1 = _conv_backward(dc1_pre, tc["cols1"], tc["x0_shape"],
                                         A["img_conv1_w"])
            grads.arrays["img_conv1_w"] += dw1
            grads.arrays["img_conv1_b"] += db1

    if d_text_Z is not None:
        if text_cache is None or text_cache.get("kind") != "text":
            raise UsageError("backward: text gradients supplied without a cached text forward pass")
        dV = _normalize_backward(np.asarray(d_text_Z, dtype=np.float64),
                                 text_cache["Z"], text_cache["norms"], text_cache["degenerate"])
        M, h1 = text_cache["head"]
        grads.arrays["txt_fc2_w"] += h1.T @ dV
        grads.arrays["txt_fc2_b"] += dV.sum(axis=0)
        dh1 = (dV @ A["txt_fc2_w"].T) * (1.0 - h1 ** 2)
        grads.arrays["txt_fc1_w"] += M.T @ dh1
        grads.arrays["txt_fc1_b"] += dh1.sum(axis=0)
        dM = dh1 @ A["txt_fc1_w"].T
        dtable = grads.arrays["txt_table"]
        all_ids = np.concatenate([np.asarray(ids) for ids in text_cache["ids"]])
        all_rows = np.concatenate([
            np.broadcast_to(dM[row] / len(ids), (len(ids), dM.shape[1]))
            for row, ids in enumerate(text_cache["ids"])
        ])
        np.add.at(dtable, all_ids, all_rows)

    return grads


# ---------------------------------------------------------------------------
# checkpoint format: magic, version u32, engine u32, d u32, alpha f64,
# index table (name, offset, length), little-endian float32 blobs
# ---------------------------------------------------------------------------


def save_checkpoint(params: ModelParams, path: str, meta: dict | None = None) -> str:
    """Write the binary checkpoint plus a JSON sidecar; returns the model id."""
    params.validate()
    cfg = params.config
    blobs = []
    index = []
    offset = 0
    for name, arr in params.arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append((name, offset, len(blob)))
        blobs.append(blob)
        offset += len(blob)

    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<III", CHECKPOINT_VERSION, ENGINES.index(cfg.engine), cfg.d))
        f.write(struct.pack("<d", params.alpha))
        f.write(struct.pack("<I", len(index)))
        for name, off, length in index:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<QQ", off, length))
        for blob in blobs:
            f.write(blob)

    sidecar = {
        "engine": cfg.engine,
        "d": cfg.d,
        "image_size": list(cfg.image_size),
        "image_width": cfg.image_width,
        "text_width": cfg.text_width,
        "conv_channels": list(cfg.conv_channels),
    }
    sidecar.update(meta or {})
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True, indent=1)
    return checkpoint_id(path)


def checkpoint_id(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()[:16]


def load_checkpoint(path: str):
    """Returns (ModelParams, sidecar meta dict)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ParseError("bad checkpoint magic", 0)
    try:
        version, engine_idx, d = struct.unpack_from("<III", data, 8)
        if version != CHECKPOINT_VERSION:
            raise VersionError(version, [CHECKPOINT_VERSION])
        alpha = struct.unpack_from("<d", data, 20)[0]
        n_entries = struct.unpack_from("<I", data, 28)[0]
        pos = 32
        index = []
        for _ in range(n_entries):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            off, length = struct.unpack_from("<QQ", data, pos)
            pos += 16
            index.append((name, off, length))
    except struct.error as e:
        raise ParseError(f"truncated checkpoint header: {e}", len(data)) from e

    meta = {}
    sidecar_path = path + ".json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path, "r", encoding="utf-8") as f:
            meta = json.load(f)

    engine = ENGINES[engine_idx]
    cfg = EngineConfig(
        engine=engine,
        d=d,
        image_size=tuple(meta.get("image_size", (64, 64))),
        image_width=int(meta.get("image_width", 64)),
        text_width=int(meta.get("text_width", 64)),
        conv_channels=tuple(meta.get("conv_channels", (8, 16))),
    )
    template = init_params(cfg, seed=0)
    blob_base = pos
    arrays = {}
    for name, off, length in index:
        if name not in template.arrays:
            raise ParseError(f"unknown parameter {name!r} in checkpoint", blob_base + off)
        shape = template.arrays[name].shape
        start, end = blob_base + off, blob_base + off + length
        if end > len(data) or length != int(np.prod(shape)) * 4:
            raise ParseError(f"parameter {name!r}: expected {int(np.prod(shape)) * 4} bytes", start)
        arrays[name] = np.frombuffer(data[start:end], dtype="<f4").astype(np.float64).reshape(shape)
    missing = set(template.arrays) - set(arrays)
    if missing:
        raise ParseError(f"checkpoint missing parameters {sorted(missing)}", len(data))

    ordered = {name: arrays[name] for name in template.arrays}
    params = ModelParams(config=cfg, arrays=ordered, alpha=alpha)
    params.validate()
    return params, meta
