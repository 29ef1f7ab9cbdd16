"""Multiview contrastive + triplet loss with a learnable margin.

Over a batch of unit-norm embeddings tagged (emotion, view, sample):

    total = sum_{same-emotion pairs} (1 - sim(z_i, z_j))
          + sum_{diff-emotion pairs} max(0, sim(z_k, z_l) - alpha)
          + sum_{triplets} max(0, ||z_a - z_p||^2 - ||z_a - z_n||^2 + alpha)

Sums are not averaged. The hinge subgradient at the kink is 0, so gradients
vanish exactly for inactive terms, and d total / d alpha is the signed count
of active hinge terms (-1 per active negative pair, +1 per active triplet).
An optional softplus smoothing tau > 0 replaces max(0, x) with
tau * log(1 + exp(x / tau)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ProtocolError
from .rng import stream

SIMILARITY_KINDS = ("cosine", "negative-euclidean")


@dataclass
class LossBreakdown:
    l_mc_pos: float
    l_mc_neg: float
    l_mt: float
    total: float
    active_neg_pairs: int
    active_triplets: int

    def as_dict(self) -> dict:
        return {
            "l_mc_pos": self.l_mc_pos,
            "l_mc_neg": self.l_mc_neg,
            "l_mt": self.l_mt,
            "total": self.total,
            "active_neg_pairs": self.active_neg_pairs,
            "active_triplets": self.active_triplets,
        }


@dataclass
class BatchPairs:
    """Mined index sets over a stacked embedding batch."""

    Z: np.ndarray                 # (N, d)
    emotions: tuple[str, ...]
    views: tuple[str, ...]
    sample_ids: tuple[int, ...]
    positives: np.ndarray         # (P, 2) int indices, i < j
    negatives: np.ndarray         # (Q, 2)
    triplets: np.ndarray          # (R, 3) anchor, positive, negative


def similarity(a: np.ndarray, b: np.ndarray, kind: str = "cosine") -> float:
    if kind == "cosine":
        return float(a @ b)
    if kind == "negative-euclidean":
        return -float(np.linalg.norm(a - b))
    raise InvalidInputError(f"similarity kind {kind!r} not in {SIMILARITY_KINDS}")


def mine_pairs(batch: list[tuple], seed: int = 0) -> BatchPairs:
    """batch entries: (embedding, emotion, view, sample_id).

    Positives: same-emotion pairs with different view tags (cross-sample
    included; "text" counts as a view tag). Negatives: every different-emotion
    pair. Triplets: one per sample that has a frontal entry - anchor is the
    frontal embedding, positive a seeded-random same-emotion entry from
    another view, negative a seeded-random different-emotion entry.
    """
    if len(batch) < 2:
        raise ProtocolError("batch must contain at least 2 embeddings")
    Z = np.stack([np.asarray(e[0], dtype=np.float64) for e in batch])
    emotions = tuple(e[1] for e in batch)
    views = tuple(e[2] for e in batch)
    sample_ids = tuple(int(e[3]) for e in batch)
    if len(set(emotions)) < 2:
        raise ProtocolError(
            "single-emotion batch: the batch sampler must rebalance so every batch holds >= 2 emotions"
        )

    n = len(batch)
    _, emo_idx = np.unique(np.array(emotions), return_inverse=True)
    _, view_idx = np.unique(np.array(views), return_inverse=True)
    iu, ju = np.triu_indices(n, k=1)
    same_emotion = emo_idx[iu] == emo_idx[ju]
    same_view = view_idx[iu] == view_idx[ju]
    pos_mask = same_emotion & ~same_view
    neg_mask = ~same_emotion
    positives = np.stack([iu[pos_mask], ju[pos_mask]], axis=1)
    negatives = np.stack([iu[neg_mask], ju[neg_mask]], axis=1)

    g = stream(seed, 0x7121)
    triplets = []
    for sid in sorted(set(sample_ids)):
        anchor = next((i for i in range(n) if sample_ids[i] == sid and views[i] == "frontal"), None)
        if anchor is None:
            continue
        pos_cands = [i for i in range(n)
                     if emotions[i] == emotions[anchor] and views[i] != "frontal"]
        neg_cands = [i for i in range(n) if emotions[i] != emotions[anchor]]
        if not pos_cands or not neg_cands:
            continue
        p = pos_cands[int(g.integers(len(pos_cands)))]
        q = neg_cands[int(g.integers(len(neg_cands)))]
        triplets.append((anchor, p, q))

    return BatchPairs(
        Z=Z, emotions=emotions, views=views, sample_ids=sample_ids,
        positives=positives.astype(np.int64),
        negatives=negatives.astype(np.int64),
        triplets=np.array(triplets, dtype=np.int64).reshape(-1, 3),
    )


def _pair_sims(Z: np.ndarray, idx: np.ndarray, kind: str, gram: np.ndarray | None = None) -> np.ndarray:
    if idx.shape[0] == 0:
        return np.zeros(0)
    if kind == "cosine":
        if gram is not None:
            return gram[idx[:, 0], idx[:, 1]]
        a, b = Z[idx[:, 0]], Z[idx[:, 1]]
        return np.sum(a * b, axis=1)
    a, b = Z[idx[:, 0]], Z[idx[:, 1]]
    return -np.linalg.norm(a - b, axis=1)


def _softplus(x: np.ndarray, tau: float) -> np.ndarray:
    return tau * np.logaddexp(0.0, x / tau)


def loss_forward(pairs: BatchPairs, alpha: float, kind: str = "cosine",
                 tau: float = 0.0) -> LossBreakdown:
    """Evaluate the full objective; tau > 0 switches hinges to softplus."""
    if kind not in SIMILARITY_KINDS:
        raise InvalidInputError(f"similarity kind {kind!r} not in {SIMILARITY_KINDS}")
    if tau < 0:
        raise InvalidInputError("tau must be >= 0")
    Z = pairs.Z
    gram = Z @ Z.T if kind == "cosine" else None

    pos_sims = _pair_sims(Z, pairs.positives, kind, gram)
    l_mc_pos = float(np.sum(1.0 - pos_sims))

    neg_sims = _pair_sims(Z, pairs.negatives, kind, gram)
    neg_args = neg_sims - alpha
    active_neg = int(np.sum(neg_args > 0.0))

    trip_args = _triplet_args(pairs, alpha, gram)
    active_trip = int(np.sum(trip_args > 0.0))

    if tau > 0.0:
        l_mc_neg = float(np.sum(_softplus(neg_args, tau))) if neg_args.size else 0.0
        l_mt = float(np.sum(_softplus(trip_args, tau))) if trip_args.size else 0.0
    else:
        l_mc_neg = float(np.sum(np.maximum(neg_args, 0.0)))
        l_mt = float(np.sum(np.maximum(trip_args, 0.0)))

    return LossBreakdown(
        l_mc_pos=l_mc_pos, l_mc_neg=l_mc_neg, l_mt=l_mt,
        total=l_mc_pos + l_mc_neg + l_mt,
        active_neg_pairs=active_neg, active_triplets=active_trip,
    )


def _triplet_args(pairs: BatchPairs, alpha: float | None = None,
                  gram: np.ndarray | None = None) -> np.ndarray:
    """Hinge arguments ||a-p||^2 - ||a-n||^2 + alpha; alpha deferred when None.

    With a precomputed gram matrix the squared distances come from
    G[a,a] - 2 G[a,p] + G[p,p], which is exact for arbitrary (non-unit)
    vectors, unlike the 2 - 2 sim shortcut."""
    if pairs.triplets.shape[0] == 0:
        return np.zeros(0)
    Z = pairs.Z
    a = pairs.triplets[:, 0]
    p = pairs.triplets[:, 1]
    n = pairs.triplets[:, 2]
    if gram is not None:
        dg = np.diag(gram)
        d_ap = dg[a] - 2.0 * gram[a, p] + dg[p]
        d_an = dg[a] - 2.0 * gram[a, n] + dg[n]
    else:
        d_ap = np.sum((Z[a] - Z[p]) ** 2, axis=1)
        d_an = np.sum((Z[a] - Z[n]) ** 2, axis=1)
    return d_ap - d_an + (alpha if alpha is not None else 0.0)


def triplet_args_squared(pairs: BatchPairs, alpha: float) -> np.ndarray:
    return _triplet_args(pairs, alpha)


def triplet_args_from_similarity(pairs: BatchPairs, alpha: float) -> np.ndarray:
    """Same hinge arguments via ||a-b||^2 = 2 - 2 cos(a, b) (unit vectors)."""
    if pairs.triplets.shape[0] == 0:
        return np.zeros(0)
    Z = pairs.Z
    a = Z[pairs.triplets[:, 0]]
    p = Z[pairs.triplets[:, 1]]
    n = Z[pairs.triplets[:, 2]]
    sim_ap = np.sum(a * p, axis=1)
    sim_an = np.sum(a * n, axis=1)
    return (2.0 - 2.0 * sim_ap) - (2.0 - 2.0 * sim_an) + alpha


def _hinge_weight(args: np.ndarray, tau: float) -> np.ndarray:
    if tau > 0.0:
        return 1.0 / (1.0 + np.exp(-args / tau))
    return (args > 0.0).astype(np.float64)


def loss_backward(pairs: BatchPairs, alpha: float, kind: str = "cosine",
                  tau: float = 0.0):
    """Gradients w.r.t. every embedding and alpha. Returns (dZ, dalpha).

    For cosine, every pair/triplet contribution is linear in Z, so the whole
    gradient is one coefficient matrix M (N x N) applied to Z; M is assembled
    by scattering pair weights, which keeps the cost at O(pairs + N^2 d / N).
    """
    Z = pairs.Z
    dalpha = 0.0
    n = Z.shape[0]

    if kind == "cosine":
        gram = Z @ Z.T
        M = np.zeros((n, n))
        if pairs.positives.shape[0]:
            i, j = pairs.positives[:, 0], pairs.positives[:, 1]
            np.add.at(M, (i, j), -1.0)
            np.add.at(M, (j, i), -1.0)
        if pairs.negatives.shape[0]:
            k, l = pairs.negatives[:, 0], pairs.negatives[:, 1]
            w = _hinge_weight(gram[k, l] - alpha, tau)
            np.add.at(M, (k, l), w)
            np.add.at(M, (l, k), w)
            dalpha -= float(np.sum(w))
        if pairs.triplets.shape[0]:
            w = _hinge_weight(_triplet_args(pairs, alpha, gram), tau)
            a = pairs.triplets[:, 0]
            p = pairs.triplets[:, 1]
            q = pairs.triplets[:, 2]
            two_w = 2.0 * w
            np.add.at(M, (a, q), two_w)
            np.add.at(M, (a, p), -two_w)
            np.add.at(M, (p, p), two_w)
            np.add.at(M, (p, a), -two_w)
            np.add.at(M, (q, a), two_w)
            np.add.at(M, (q, q), -two_w)
            dalpha += float(np.sum(w))
        return M @ Z, dalpha

    # negative-euclidean: gradients are not linear in Z; per-pair accumulation
    dZ = np.zeros_like(Z)
    if pairs.positives.shape[0]:
        i, j = pairs.positives[:, 0], pairs.positives[:, 1]
        diff = Z[i] - Z[j]
        norm = np.linalg.norm(diff, axis=1, keepdims=True)
        unit = np.where(norm > 0, diff / np.where(norm > 0, norm, 1.0), 0.0)
        np.add.at(dZ, i, unit)
        np.add.at(dZ, j, -unit)
    if pairs.negatives.shape[0]:
        k, l = pairs.negatives[:, 0], pairs.negatives[:, 1]
        sims = _pair_sims(Z, pairs.negatives, kind)
        w = _hinge_weight(sims - alpha, tau)
        diff = Z[k] - Z[l]
        norm = np.linalg.norm(diff, axis=1, keepdims=True)
        unit = np.where(norm > 0, diff / np.where(norm > 0, norm, 1.0), 0.0)
        np.add.at(dZ, k, -w[:, None] * unit)
        np.add.at(dZ, l, w[:, None] * unit)
        dalpha -= float(np.sum(w))
    if pairs.triplets.shape[0]:
        args = _triplet_args(pairs, alpha)
        w = _hinge_weight(args, tau)
        a = pairs.triplets[:, 0]
        p = pairs.triplets[:, 1]
        q = pairs.triplets[:, 2]
        np.add.at(dZ, a, w[:, None] * 2.0 * (Z[q] - Z[p]))
        np.add.at(dZ, p, w[:, None] * 2.0 * (Z[p] - Z[a]))
        np.add.at(dZ, q, w[:, None] * 2.0 * (Z[a] - Z[q]))
        dalpha += float(np.sum(w))
    return dZ, dalpha


def smooth_variant(pairs: BatchPairs, alpha: float, tau: float,
                   kind: str = "cosine") -> LossBreakdown:
    """Softplus-smoothed objective; converges to the exact hinge as tau -> 0."""
    if tau <= 0:
        raise InvalidInputError("tau must be > 0")
    return loss_forward(pairs, alpha, kind=kind, tau=tau)
