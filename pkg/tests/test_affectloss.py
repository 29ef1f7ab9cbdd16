import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectvlm.affectloss import (BatchPairs, loss_backward, loss_forward,
                                  mine_pairs, similarity, smooth_variant,
                                  triplet_args_from_similarity,
                                  triplet_args_squared)
from affectvlm.errors import InvalidInputError, ProtocolError


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def e(i, d=4):
    v = np.zeros(d)
    v[i] = 1.0
    return v


def make_batch(rng, n_samples=4, d=8, emotions=("happy", "sad", "angry")):
    items = []
    for s in range(n_samples):
        emo = emotions[s % len(emotions)]
        for view in ("frontal", "left", "right"):
            items.append((unit(rng.standard_normal(d)), emo, view, s))
        items.append((unit(rng.standard_normal(d)), emo, "text", s))
    return items


# --- similarity -------------------------------------------------------------

def test_similarity_identity():
    z = unit([1.0, 2.0, -1.0])
    assert similarity(z, z, "cosine") == pytest.approx(1.0)


def test_similarity_orthonormal():
    assert similarity(e(0), e(1), "cosine") == 0.0
    assert similarity(e(0), e(1), "negative-euclidean") == pytest.approx(-np.sqrt(2.0))


def test_similarity_unknown_kind():
    with pytest.raises(InvalidInputError):
        similarity(e(0), e(1), "manhattan")


# --- mine_pairs -------------------------------------------------------------

def test_mine_pairs_counts_two_samples_three_views():
    items = []
    for s, emo in enumerate(("happy", "sad")):
        for view in ("frontal", "left", "right"):
            items.append((e(s * 3 + (0 if view == "frontal" else 1), 8), emo, view, s))
    p = mine_pairs(items, seed=3)
    assert p.positives.shape[0] == 6     # 2 * C(3,2)
    assert p.negatives.shape[0] == 9     # 3 * 3
    assert p.triplets.shape[0] == 2      # one per sample


def test_mine_pairs_deterministic(rng):
    items = make_batch(rng)
    a = mine_pairs(items, seed=42)
    b = mine_pairs(items, seed=42)
    assert np.array_equal(a.triplets, b.triplets)
    assert np.array_equal(a.positives, b.positives)


def test_mine_pairs_no_overlap_and_no_self_pairs(rng):
    items = make_batch(rng, n_samples=6)
    p = mine_pairs(items, seed=0)
    pos = {tuple(x) for x in p.positives}
    neg = {tuple(x) for x in p.negatives}
    assert not (pos & neg)
    assert all(i != j for i, j in pos | neg)
    for a, b_, c in p.triplets:
        assert a != b_ and a != c
        assert p.emotions[a] == p.emotions[b_]
        assert p.views[b_] != "frontal"
        assert p.emotions[a] != p.emotions[c]


def test_mine_pairs_positives_require_different_views(rng):
    items = make_batch(rng, n_samples=4, emotions=("happy",) * 1 + ("sad",))
    p = mine_pairs(items, seed=0)
    for i, j in p.positives:
        assert p.views[i] != p.views[j]
        assert p.emotions[i] == p.emotions[j]


def test_mine_pairs_single_emotion_rejected(rng):
    items = [(unit(rng.standard_normal(4)), "happy", v, s)
             for s in range(2) for v in ("frontal", "left")]
    with pytest.raises(ProtocolError):
        mine_pairs(items, seed=0)


# --- loss_forward -----------------------------------------------------------

def _pairs_from(Z, emotions, views, sample_ids, positives, negatives, triplets):
    return BatchPairs(Z=np.asarray(Z, dtype=np.float64), emotions=tuple(emotions),
                      views=tuple(views), sample_ids=tuple(sample_ids),
                      positives=np.array(positives, dtype=np.int64).reshape(-1, 2),
                      negatives=np.array(negatives, dtype=np.int64).reshape(-1, 2),
                      triplets=np.array(triplets, dtype=np.int64).reshape(-1, 3))


def hand_built_fixture():
    """One positive pair sim 0.5, one negative pair sim 0.9, one triplet
    a=e1, p=e2, n=e1; alpha=0.2. Hand-evaluated: 0.5 + 0.7 + 2.2 = 3.4."""
    z0 = e(0)
    z1 = unit([1.0, np.sqrt(3.0), 0.0, 0.0])          # cos(z0, z1) = 0.5
    z2 = unit([0.9, np.sqrt(1 - 0.81), 0.0, 0.0])     # cos(z0, z2) = 0.9
    z3 = e(1)
    Z = [z0, z1, z2, z3]
    return _pairs_from(
        Z, ["happy", "happy", "sad", "sad"], ["frontal", "left", "frontal", "left"],
        [0, 0, 1, 1], positives=[(0, 1)], negatives=[(0, 2)], triplets=[(0, 3, 0)])


def scalar_reference(pairs, alpha):
    """Independent scalar re-evaluation (plain python loops)."""
    Z = pairs.Z
    total_pos = sum(1.0 - float(Z[i] @ Z[j]) for i, j in pairs.positives)
    total_neg = sum(max(0.0, float(Z[k] @ Z[l]) - alpha) for k, l in pairs.negatives)
    total_mt = 0.0
    for a, p, n in pairs.triplets:
        d_ap = float(np.sum((Z[a] - Z[p]) ** 2))
        d_an = float(np.sum((Z[a] - Z[n]) ** 2))
        total_mt += max(0.0, d_ap - d_an + alpha)
    return total_pos, total_neg, total_mt


def test_loss_hand_evaluated_example():
    pairs = hand_built_fixture()
    bd = loss_forward(pairs, alpha=0.2)
    assert bd.l_mc_pos == pytest.approx(0.5, abs=1e-12)
    assert bd.l_mc_neg == pytest.approx(0.7, abs=1e-12)
    assert bd.l_mt == pytest.approx(2.2, abs=1e-12)
    assert bd.total == pytest.approx(3.4, abs=1e-12)
    ref = scalar_reference(pairs, 0.2)
    assert bd.l_mc_pos == pytest.approx(ref[0], abs=1e-12)
    assert bd.l_mc_neg == pytest.approx(ref[1], abs=1e-12)
    assert bd.l_mt == pytest.approx(ref[2], abs=1e-12)


def test_loss_floor_zero():
    z = e(2)
    pairs = _pairs_from(
        [z, z, e(0), e(0)], ["happy", "happy", "sad", "sad"],
        ["frontal", "left", "frontal", "left"], [0, 0, 1, 1],
        positives=[(0, 1)], negatives=[(0, 2)], triplets=[(0, 1, 2)])
    bd = loss_forward(pairs, alpha=0.5)
    # identical positives -> 0; negative sim 0 <= alpha -> 0; triplet 0-2+0.5 <= 0
    assert bd.total == 0.0
    assert bd.l_mc_pos == bd.l_mc_neg == bd.l_mt == 0.0
    assert bd.active_neg_pairs == 0 and bd.active_triplets == 0


def test_inactive_triplet_hinge():
    pairs = _pairs_from([e(0), e(0), e(1)], ["happy", "happy", "sad"],
                        ["frontal", "left", "frontal"], [0, 0, 1],
                        positives=[(0, 1)], negatives=[(0, 2)], triplets=[(0, 1, 2)])
    bd = loss_forward(pairs, alpha=0.5)
    assert bd.l_mt == 0.0  # max(0, 0 - 2 + 0.5)


def test_breakdown_total_is_sum(rng):
    pairs = mine_pairs(make_batch(rng), seed=1)
    bd = loss_forward(pairs, alpha=0.2)
    assert bd.total == pytest.approx(bd.l_mc_pos + bd.l_mc_neg + bd.l_mt, rel=1e-15)
    assert bd.l_mc_pos >= 0 and bd.l_mc_neg >= 0 and bd.l_mt >= 0


def test_matches_scalar_reference_random_batches(rng):
    for _ in range(5):
        pairs = mine_pairs(make_batch(rng, n_samples=5), seed=7)
        bd = loss_forward(pairs, alpha=0.3)
        ref = scalar_reference(pairs, 0.3)
        assert bd.l_mc_pos == pytest.approx(ref[0], abs=1e-10)
        assert bd.l_mc_neg == pytest.approx(ref[1], abs=1e-10)
        assert bd.l_mt == pytest.approx(ref[2], abs=1e-10)


def test_rotation_invariance(rng):
    pairs = mine_pairs(make_batch(rng, n_samples=5, d=6), seed=2)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    rotated = BatchPairs(Z=pairs.Z @ q.T, emotions=pairs.emotions, views=pairs.views,
                         sample_ids=pairs.sample_ids, positives=pairs.positives,
                         negatives=pairs.negatives, triplets=pairs.triplets)
    for kind in ("cosine", "negative-euclidean"):
        a = loss_forward(pairs, 0.25, kind=kind)
        b = loss_forward(rotated, 0.25, kind=kind)
        assert a.total == pytest.approx(b.total, abs=1e-9)


def test_triplet_distance_similarity_identity(rng):
    """||a-b||^2 route vs 2-2*cos route agree within 1e-12 on unit vectors."""
    for _ in range(10):
        pairs = mine_pairs(make_batch(rng, n_samples=5), seed=5)
        via_sq = triplet_args_squared(pairs, 0.3)
        via_sim = triplet_args_from_similarity(pairs, 0.3)
        assert np.allclose(via_sq, via_sim, atol=1e-12)


# --- loss_backward ----------------------------------------------------------

def test_alpha_gradient_counts_active_hinges():
    z0, z3 = e(0), e(1)
    z2 = unit([0.9, np.sqrt(0.19), 0.0, 0.0])
    pairs = _pairs_from(
        [z0, z0, z2, z2, z2, z3],
        ["happy", "happy", "sad", "sad", "sad", "sad"],
        ["frontal", "left", "frontal", "left", "right", "text"],
        [0, 0, 1, 1, 1, 1],
        positives=[(0, 1)],
        negatives=[(0, 2), (0, 3), (0, 4), (1, 5)],  # sims: .9, .9, .9, 0
        triplets=[(0, 1, 5)])                        # arg: 0 - 2 + alpha < 0
    bd = loss_forward(pairs, alpha=0.2)
    assert bd.active_neg_pairs == 3 and bd.active_triplets == 0
    _, dalpha = loss_backward(pairs, alpha=0.2)
    assert dalpha == -3.0

    # now make the triplet active: n very close to a
    pairs2 = _pairs_from(
        [z0, z0, z2, unit([1.0, 0.05, 0, 0])],
        ["happy", "happy", "sad", "sad"],
        ["frontal", "left", "frontal", "left"], [0, 0, 1, 1],
        positives=[(0, 1)], negatives=[(0, 2), (0, 3), (1, 2)],
        triplets=[(0, 1, 3)])
    bd2 = loss_forward(pairs2, alpha=0.2)
    _, dalpha2 = loss_backward(pairs2, alpha=0.2)
    assert dalpha2 == -float(bd2.active_neg_pairs) + float(bd2.active_triplets)


def test_all_inactive_gives_zero_gradients():
    pairs = _pairs_from([e(0), e(0), e(1), e(1)],
                        ["happy", "happy", "sad", "sad"],
                        ["frontal", "left", "frontal", "left"], [0, 0, 1, 1],
                        positives=[], negatives=[(0, 2), (1, 3)], triplets=[(0, 1, 2)])
    bd = loss_forward(pairs, alpha=0.5)
    assert bd.active_neg_pairs == 0 and bd.active_triplets == 0
    dZ, dalpha = loss_backward(pairs, alpha=0.5)
    assert dalpha == 0.0
    assert not dZ.any()


@pytest.mark.parametrize("kind", ["cosine", "negative-euclidean"])
def test_embedding_and_alpha_gradients_match_fd(kind, rng):
    pairs = mine_pairs(make_batch(rng, n_samples=5, d=6), seed=9)
    alpha = 0.27

    def f(Z, a):
        p = BatchPairs(Z=Z, emotions=pairs.emotions, views=pairs.views,
                       sample_ids=pairs.sample_ids, positives=pairs.positives,
                       negatives=pairs.negatives, triplets=pairs.triplets)
        return loss_forward(p, a, kind=kind).total

    dZ, dalpha = loss_backward(pairs, alpha, kind=kind)
    h = 1e-5
    Z = pairs.Z
    for _ in range(120):
        i = int(rng.integers(Z.shape[0]))
        j = int(rng.integers(Z.shape[1]))
        Zp, Zm = Z.copy(), Z.copy()
        Zp[i, j] += h
        Zm[i, j] -= h
        fd = (f(Zp, alpha) - f(Zm, alpha)) / (2 * h)
        assert abs(dZ[i, j] - fd) <= 1e-4 * max(abs(fd), 1e-4), (kind, i, j)
    fd_a = (f(Z, alpha + h) - f(Z, alpha - h)) / (2 * h)
    assert abs(dalpha - fd_a) <= 1e-4 * max(abs(fd_a), 1e-4)


def test_doubling_upstream_linearity(rng):
    # gradients for 2x the pair sets equal 2x the gradients (sum structure)
    pairs = mine_pairs(make_batch(rng, n_samples=4, d=6), seed=3)
    doubled = BatchPairs(Z=pairs.Z, emotions=pairs.emotions, views=pairs.views,
                         sample_ids=pairs.sample_ids,
                         positives=np.concatenate([pairs.positives] * 2),
                         negatives=np.concatenate([pairs.negatives] * 2),
                         triplets=np.concatenate([pairs.triplets] * 2))
    dZ1, da1 = loss_backward(pairs, 0.2)
    dZ2, da2 = loss_backward(doubled, 0.2)
    assert np.allclose(dZ2, 2.0 * dZ1, atol=1e-12)
    assert da2 == pytest.approx(2.0 * da1, abs=1e-12)


# --- smooth variant ---------------------------------------------------------

def test_smooth_variant_converges_to_hinge(rng):
    for _ in range(20):
        pairs = mine_pairs(make_batch(rng, n_samples=4), seed=11)
        exact = loss_forward(pairs, 0.25)
        smooth = smooth_variant(pairs, 0.25, tau=1e-4)
        assert abs(smooth.total - exact.total) <= 1e-3


def test_smooth_at_kink_positive():
    # softplus(0) * tau = tau * ln 2 > 0
    z = e(0)
    zb = unit([0.2, np.sqrt(1 - 0.04), 0.0, 0.0])  # cos = 0.2 = alpha -> kink
    pairs = _pairs_from([z, z, zb], ["happy", "happy", "sad"],
                        ["frontal", "left", "frontal"], [0, 0, 1],
                        positives=[], negatives=[(0, 2)], triplets=[])
    smooth = smooth_variant(pairs, alpha=0.2, tau=0.1)
    assert smooth.l_mc_neg == pytest.approx(0.1 * np.log(2.0), abs=1e-9)


def test_smooth_dominates_hinge(rng):
    for tau in (0.01, 0.1, 0.5):
        pairs = mine_pairs(make_batch(rng, n_samples=4), seed=13)
        exact = loss_forward(pairs, 0.3)
        smooth = smooth_variant(pairs, 0.3, tau=tau)
        assert smooth.l_mc_neg >= exact.l_mc_neg - 1e-12
        assert smooth.l_mt >= exact.l_mt - 1e-12


def test_smooth_requires_positive_tau(rng):
    pairs = mine_pairs(make_batch(rng), seed=1)
    with pytest.raises(InvalidInputError):
        smooth_variant(pairs, 0.2, tau=0.0)
    with pytest.raises(InvalidInputError):
        loss_forward(pairs, 0.2, tau=-1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_nonnegativity_property(seed):
    g = np.random.default_rng(seed)
    pairs = mine_pairs(make_batch(g, n_samples=3), seed=seed)
    bd = loss_forward(pairs, alpha=float(g.uniform(0.05, 1.0)))
    assert bd.l_mc_pos >= 0.0 and bd.l_mc_neg >= 0.0 and bd.l_mt >= 0.0
