"""Rank pooling: collapse a frame sequence into one dynamic image.

The pooled vector u scores frames by temporal order: the pairwise-hinge
objective over running means

    E(u) = (lam/2) ||u||^2 + (2 / (T(T-1))) * sum_{q>t} max(0, 1 - u . (m_q - m_t))

is minimized either exactly (monotone subgradient descent from u = 0) or by
the closed-form approximation u = sum_t (2t - T - 1) * m_t. The result is
reshaped to the frame shape and min-max normalized into [0, 1]; constant
sequences pool to the all-zero image by convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .views import MultiviewSample, ViewImage, view_triple, project


@dataclass(frozen=True)
class RankPoolConfig:
    method: str = "approximate"
    lam: float = 1.0
    max_iters: int = 500
    step_size: float = 1e-2
    tol: float = 1e-8

    def __post_init__(self):
        if self.method not in ("exact", "approximate"):
            raise InvalidInputError(f"method {self.method!r} not in ('exact', 'approximate')")
        if self.lam <= 0:
            raise InvalidInputError("lam must be > 0")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")


def _flatten_normalize(frames: np.ndarray) -> np.ndarray:
    """(T, D) rows = L2-normalized flattened frames; zero-norm rows stay zero."""
    flat = frames.reshape(frames.shape[0], -1).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return flat / safe


def running_means(frames: np.ndarray, normalize_frames: bool = True) -> np.ndarray:
    """m_t = mean of the first t normalized frames, t = 1..T. Returns (T, D).

    normalize_frames=False skips the per-frame L2 normalization; the
    alpha-combination properties (linearity, shift invariance) hold there.
    """
    frames = np.asarray(frames)
    if frames.ndim < 2 or frames.shape[0] < 1:
        raise InvalidInputError(f"frames must be (T>=1, ...), got shape {frames.shape}")
    if normalize_frames:
        v = _flatten_normalize(frames)
    else:
        v = frames.reshape(frames.shape[0], -1).astype(np.float64)
    return np.cumsum(v, axis=0) / np.arange(1, v.shape[0] + 1)[:, None]


def _pair_diffs(means: np.ndarray) -> np.ndarray:
    """All m_q - m_t for q > t, ordered by (t, q)."""
    T = means.shape[0]
    rows = [means[q] - means[t] for t in range(T) for q in range(t + 1, T)]
    return np.stack(rows)


def _minmax01(u: np.ndarray) -> np.ndarray:
    # numerically-zero vectors (e.g. constant sequences) map to all-zeros
    if np.max(np.abs(u)) < 1e-12:
        return np.zeros_like(u)
    lo, hi = u.min(), u.max()
    if hi > lo:
        return (u - lo) / (hi - lo)
    return np.zeros_like(u)


def pool_objective(u: np.ndarray, diffs: np.ndarray, lam: float, coef: float) -> float:
    margins = 1.0 - diffs @ u
    return 0.5 * lam * float(u @ u) + coef * float(np.maximum(margins, 0.0).sum())


def rank_pool_exact(frames: np.ndarray, cfg: RankPoolConfig | None = None, return_info: bool = False):
    """Minimize E(u) by full-batch subgradient descent from u = 0.

    The hinge subgradient at the kink is 0. A step that would increase E is
    deterministically halved until it does not, so the objective trace is
    monotone non-increasing. Stops on |delta E| < tol or max_iters.
    """
    cfg = cfg or RankPoolConfig(method="exact")
    frames = np.asarray(frames)
    if frames.shape[0] < 2:
        raise InvalidInputError("rank_pool_exact needs at least 2 frames")
    shape = frames.shape[1:]
    means = running_means(frames)
    diffs = _pair_diffs(means)
    T = frames.shape[0]
    coef = 2.0 / (T * (T - 1))
    lam = cfg.lam

    u = np.zeros(diffs.shape[1])
    energy = pool_objective(u, diffs, lam, coef)
    trace = [energy]
    for _ in range(cfg.max_iters):
        margins = 1.0 - diffs @ u
        active = margins > 0.0
        grad = lam * u - coef * diffs[active].sum(axis=0)
        step = cfg.step_size
        trial = u - step * grad
        e_new = pool_objective(trial, diffs, lam, coef)
        while e_new > energy and step > 1e-18:
            step *= 0.5
            trial = u - step * grad
            e_new = pool_objective(trial, diffs, lam, coef)
        if e_new > energy:
            break
        delta = energy - e_new
        u, energy = trial, e_new
        trace.append(energy)
        if delta < cfg.tol:
            break

    image = _minmax01(u.reshape(shape))
    if return_info:
        return image, {"raw": u.reshape(shape), "objective": energy, "trace": trace}
    return image


def rank_pool_approx(frames: np.ndarray, return_info: bool = False,
                     normalize_frames: bool = True):
    """Closed-form pooling u = sum_t (2t - T - 1) * m_t (t is 1-based).

    Coefficients sum to 0, so constant sequences pool to the zero vector.
    A single frame pools to m_1 by convention (the lone depth image survives).
    """
    frames = np.asarray(frames)
    means = running_means(frames, normalize_frames)
    T = frames.shape[0]
    shape = frames.shape[1:]
    if T == 1:
        raw = means[0]
    else:
        alphas = 2.0 * np.arange(1, T + 1) - T - 1
        raw = alphas @ means
    raw = raw.reshape(shape)
    image = _minmax01(raw)
    if return_info:
        return image, {"raw": raw, "alphas": None if T == 1 else alphas}
    return image


def approx_coefficients(T: int) -> np.ndarray:
    """The alpha_t = 2t - T - 1 weights for a T-frame sequence."""
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    return 2.0 * np.arange(1, T + 1) - T - 1


def dynamic_multiview(seq, cfg: RankPoolConfig | None = None,
                      resolution: tuple[int, int] = (64, 64),
                      off_axis_degrees: float = 30.0) -> MultiviewSample:
    """Render every frame per view, rank-pool each view's stack independently."""
    cfg = cfg or RankPoolConfig()
    rendered = {}
    for view in view_triple(off_axis_degrees):
        stack = np.stack([project(seq.frames[t], view, resolution).pixels
                          for t in range(seq.n_frames)])
        if seq.n_frames == 1:
            pooled = rank_pool_approx(stack)  # m_1 convention
        elif cfg.method == "exact":
            pooled = rank_pool_exact(stack, cfg)
        else:
            pooled = rank_pool_approx(stack)
        rendered[view.name] = ViewImage(view=view, pixels=pooled, kind="dynamic")
    return MultiviewSample(frontal=rendered["frontal"], left=rendered["left"], right=rendered["right"])
