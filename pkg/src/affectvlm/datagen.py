"""Synthetic 3D/4D facial point-cloud corpus.

Stands in for license-restricted capture datasets: a parametric head (ellipsoid
base) deformed by fixed per-emotion displacement fields around eye/brow/mouth
landmark regions, ramped linearly from neutral (frame 0) to apex (last frame),
plus a smooth per-subject identity perturbation. Every random draw comes from
a counter-based stream keyed by (seed, subject, emotion, ...), so the corpus
is a pure function of its CorpusSpec.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidInputError, ParseError, ProtocolError, VersionError
from .rng import stream

EMOTIONS = ("happy", "sad", "angry", "disgust", "fear", "surprise")
AGE_GROUPS = ("young", "middle-aged", "older")
GENDERS = ("male", "female")
ETHNICITIES = ("Asian", "Black", "White", "Hispanic")

CORPUS_FORMAT_VERSION = 1
CORPUS_INDEX_NAME = "corpus.json"

# Base ellipsoid semi-axes (x, y, z); +z is the facial direction.
_BASE_AXES = np.array([0.72, 0.95, 0.78])

# Landmark anchor points on the front of the head, normalized head units.
_LM = {
    "mouth_center": (0.00, -0.45, 0.62),
    "mouth_left": (-0.28, -0.42, 0.55),
    "mouth_right": (0.28, -0.42, 0.55),
    "eye_left": (-0.30, 0.28, 0.60),
    "eye_right": (0.30, 0.28, 0.60),
    "brow_left": (-0.30, 0.48, 0.55),
    "brow_right": (0.30, 0.48, 0.55),
    "brow_inner_left": (-0.14, 0.46, 0.60),
    "brow_inner_right": (0.14, 0.46, 0.60),
    "cheek_left": (-0.42, -0.15, 0.50),
    "cheek_right": (0.42, -0.15, 0.50),
    "jaw": (0.00, -0.75, 0.45),
    "nose": (0.00, 0.02, 0.76),
    "forehead": (0.00, 0.65, 0.48),
}

# Per-emotion displacement bumps: (landmark, direction, amplitude, width).
# Patterns are chosen to be geometrically distinct per class, not realistic.
_EMOTION_FIELDS = {
    "happy": [
        ("mouth_left", (-0.3, 0.8, 0.5), 0.30, 0.22),
        ("mouth_right", (0.3, 0.8, 0.5), 0.30, 0.22),
        ("cheek_left", (0.0, 0.2, 1.0), 0.22, 0.26),
        ("cheek_right", (0.0, 0.2, 1.0), 0.22, 0.26),
        ("eye_left", (0.0, -1.0, 0.0), 0.10, 0.18),
        ("eye_right", (0.0, -1.0, 0.0), 0.10, 0.18),
    ],
    "sad": [
        ("mouth_left", (-0.2, -0.8, 0.3), 0.28, 0.22),
        ("mouth_right", (0.2, -0.8, 0.3), 0.28, 0.22),
        ("brow_inner_left", (0.0, 1.0, 0.3), 0.24, 0.18),
        ("brow_inner_right", (0.0, 1.0, 0.3), 0.24, 0.18),
        ("jaw", (0.0, -0.5, -0.3), 0.14, 0.28),
    ],
    "angry": [
        ("brow_left", (0.4, -0.8, 0.2), 0.30, 0.20),
        ("brow_right", (-0.4, -0.8, 0.2), 0.30, 0.20),
        ("mouth_center", (0.0, 0.0, -0.8), 0.22, 0.22),
        ("nose", (0.0, 0.6, -0.4), 0.16, 0.20),
        ("forehead", (0.0, -0.4, -0.5), 0.12, 0.30),
    ],
    "disgust": [
        ("nose", (0.0, 0.3, 0.95), 0.32, 0.26),
        ("mouth_center", (0.0, 0.6, -0.5), 0.22, 0.20),
        ("eye_left", (0.0, -0.8, -0.3), 0.14, 0.16),
        ("eye_right", (0.0, -0.8, -0.3), 0.14, 0.16),
        ("jaw", (0.0, 0.2, -0.5), 0.12, 0.24),
    ],
    "fear": [
        ("eye_left", (0.0, 0.0, 1.0), 0.30, 0.16),
        ("eye_right", (0.0, 0.0, 1.0), 0.30, 0.16),
        ("mouth_left", (-0.8, 0.0, 0.3), 0.24, 0.20),
        ("mouth_right", (0.8, 0.0, 0.3), 0.24, 0.20),
        ("cheek_left", (0.0, 0.0, -0.7), 0.16, 0.22),
        ("cheek_right", (0.0, 0.0, -0.7), 0.16, 0.22),
    ],
    "surprise": [
        ("brow_left", (0.0, 1.0, 0.35), 0.34, 0.22),
        ("brow_right", (0.0, 1.0, 0.35), 0.34, 0.22),
        ("jaw", (0.0, -1.0, 0.05), 0.38, 0.26),
        ("mouth_center", (0.0, 0.0, -0.5), 0.18, 0.20),
        ("forehead", (0.0, 0.2, 0.9), 0.12, 0.30),
    ],
}


@dataclass(frozen=True)
class SubjectMeta:
    subject_id: int
    age_group: str
    gender: str
    ethnicity: str

    def __post_init__(self):
        if self.age_group not in AGE_GROUPS:
            raise InvalidInputError(f"age_group {self.age_group!r} not in {AGE_GROUPS}")
        if self.gender not in GENDERS:
            raise InvalidInputError(f"gender {self.gender!r} not in {GENDERS}")
        if self.ethnicity not in ETHNICITIES:
            raise InvalidInputError(f"ethnicity {self.ethnicity!r} not in {ETHNICITIES}")


@dataclass
class FaceSequence:
    """One subject performing one emotion: frames is a (T, P, 3) float32 array."""

    subject: SubjectMeta
    emotion: str
    frames: np.ndarray

    def __post_init__(self):
        if self.emotion not in EMOTIONS:
            raise InvalidInputError(f"emotion {self.emotion!r} not in {EMOTIONS}")
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3 or self.frames.shape[0] < 1:
            raise InvalidInputError(f"frames must be (T>=1, P, 3), got {self.frames.shape}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_points(self) -> int:
        return self.frames.shape[1]

    def apex(self) -> np.ndarray:
        return self.frames[-1]

    def __eq__(self, other):
        return (
            isinstance(other, FaceSequence)
            and self.subject == other.subject
            and self.emotion == other.emotion
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


@dataclass(frozen=True)
class CorpusSpec:
    n_subjects: int
    frames_per_sequence: int = 8
    points_per_face: int = 2048
    seed: int = 0
    identity_scale: float = 0.1
    expression_scale: float = 1.0

    def __post_init__(self):
        if self.frames_per_sequence < 1:
            raise InvalidInputError("frames_per_sequence must be >= 1")
        if self.points_per_face < 1:
            raise InvalidInputError("points_per_face must be >= 1")
        if self.identity_scale < 0 or self.expression_scale < 0:
            raise InvalidInputError("scales must be nonnegative")


def _gauss_bumps(points, centers, dirs, amps, width):
    """Sum of Gaussian displacement bumps evaluated at `points` (N,3)."""
    disp = np.zeros_like(points)
    for c, d, a in zip(centers, dirs, amps):
        w = width if np.isscalar(width) else width
        dist2 = np.sum((points - c) ** 2, axis=1)
        disp += (a * np.exp(-dist2 / (2.0 * w * w)))[:, None] * d
    return disp


def _subject_meta(spec: CorpusSpec, subject_id: int) -> SubjectMeta:
    g = stream(spec.seed, subject_id, 0xA77)
    return SubjectMeta(
        subject_id=subject_id,
        age_group=AGE_GROUPS[int(g.integers(len(AGE_GROUPS)))],
        gender=GENDERS[int(g.integers(len(GENDERS)))],
        ethnicity=ETHNICITIES[int(g.integers(len(ETHNICITIES)))],
    )


def _subject_base(spec: CorpusSpec, subject_id: int):
    """Neutral head for one subject: ellipsoid sample + identity perturbation."""
    g = stream(spec.seed, subject_id, 0xBA5E)
    dirs = g.standard_normal((spec.points_per_face, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    axes_jitter = 1.0 + spec.identity_scale * g.uniform(-0.2, 0.2, size=3)
    pts = dirs * (_BASE_AXES * axes_jitter)

    # Smooth per-subject bump field, fully scaled by identity_scale.
    k = 6
    centers = g.standard_normal((k, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= _BASE_AXES
    bump_dirs = g.standard_normal((k, 3))
    bump_dirs /= np.linalg.norm(bump_dirs, axis=1, keepdims=True)
    amps = spec.identity_scale * g.uniform(0.1, 0.3, size=k)
    pts += _gauss_bumps(pts, centers, bump_dirs, amps, 0.35)
    return pts


def _emotion_field(spec: CorpusSpec, subject_id: int, emotion: str, base_pts):
    """Apex displacement for (subject, emotion); zero-centered random residual
    keyed by (seed, subject, emotion) keeps sequences distinct across subjects."""
    centers, dirs, amps, widths = [], [], [], []
    for lm, d, a, w in _EMOTION_FIELDS[emotion]:
        centers.append(np.array(_LM[lm]))
        d = np.asarray(d, dtype=float)
        dirs.append(d / np.linalg.norm(d))
        amps.append(a)
        widths.append(w)

    disp = np.zeros_like(base_pts)
    for c, d, a, w in zip(centers, dirs, amps, widths):
        dist2 = np.sum((base_pts - c) ** 2, axis=1)
        disp += (a * np.exp(-dist2 / (2.0 * w * w)))[:, None] * d

    g = stream(spec.seed, subject_id, EMOTIONS.index(emotion))
    rcenters = g.standard_normal((3, 3))
    rcenters /= np.linalg.norm(rcenters, axis=1, keepdims=True)
    rcenters *= _BASE_AXES
    rdirs = g.standard_normal((3, 3))
    rdirs /= np.linalg.norm(rdirs, axis=1, keepdims=True)
    ramps = g.uniform(0.02, 0.06, size=3)
    disp += _gauss_bumps(base_pts, rcenters, rdirs, ramps, 0.30)
    return disp


def generate_sequence(spec: CorpusSpec, subject_id: int, emotion: str) -> FaceSequence:
    """Build a single (subject, emotion) sequence; pure function of its keys."""
    base = _subject_base(spec, subject_id)
    disp = spec.expression_scale * _emotion_field(spec, subject_id, emotion, base)
    T = spec.frames_per_sequence
    frames = np.empty((T, spec.points_per_face, 3), dtype=np.float32)
    for t in range(T):
        ramp = 0.0 if T == 1 else t / (T - 1)
        frames[t] = (base + ramp * disp).astype(np.float32)
    np.clip(frames, -1.0, 1.0, out=frames)
    return FaceSequence(subject=_subject_meta(spec, subject_id), emotion=emotion, frames=frames)


def generate_corpus(spec: CorpusSpec) -> list[FaceSequence]:
    """All n_subjects x 6 sequences, ordered by (subject_id, emotion index)."""
    if spec.n_subjects < 10:
        raise ProtocolError(
            f"n_subjects must be >= 10 for subject-independent 10-fold splits, got {spec.n_subjects}"
        )
    corpus = []
    for sid in range(spec.n_subjects):
        for emotion in EMOTIONS:
            corpus.append(generate_sequence(spec, sid, emotion))
    return corpus


def _seq_filename(seq: FaceSequence) -> str:
    return f"seq_{seq.subject.subject_id:04d}_{seq.emotion}.f32"


def save_corpus(corpus: list[FaceSequence], path: str, spec: CorpusSpec | None = None) -> None:
    """Write a corpus directory: corpus.json index + one raw float32 file per sequence."""
    os.makedirs(path, exist_ok=True)
    index = {
        "format_version": CORPUS_FORMAT_VERSION,
        "spec": asdict(spec) if spec is not None else None,
        "sequences": [],
    }
    for seq in corpus:
        fname = _seq_filename(seq)
        index["sequences"].append(
            {
                "file": fname,
                "subject": asdict(seq.subject),
                "emotion": seq.emotion,
                "frames": int(seq.n_frames),
                "points": int(seq.n_points),
            }
        )
        blob = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
        with open(os.path.join(path, fname), "wb") as f:
            f.write(blob)
    with open(os.path.join(path, CORPUS_INDEX_NAME), "w", encoding="utf-8") as f:
        json.dump(index, f, sort_keys=True, separators=(",", ":"))


def load_corpus(path: str) -> list[FaceSequence]:
    index_path = os.path.join(path, CORPUS_INDEX_NAME)
    try:
        with open(index_path, "rb") as f:
            raw = f.read()
    except FileNotFoundError:
        raise ParseError(f"missing {CORPUS_INDEX_NAME} in {path}", 0)
    try:
        index = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed corpus index: {e.msg}", e.pos) from e

    version = index.get("format_version")
    if version != CORPUS_FORMAT_VERSION:
        raise VersionError(version, [CORPUS_FORMAT_VERSION])

    corpus = []
    for entry in index["sequences"]:
        T, P = int(entry["frames"]), int(entry["points"])
        fpath = os.path.join(path, entry["file"])
        with open(fpath, "rb") as f:
            blob = f.read()
        expected = T * P * 3 * 4
        if len(blob) != expected:
            raise ParseError(
                f"{entry['file']}: expected {expected} bytes of frame data, got {len(blob)}",
                len(blob),
            )
        frames = np.frombuffer(blob, dtype="<f4").reshape(T, P, 3).copy()
        corpus.append(
            FaceSequence(subject=SubjectMeta(**entry["subject"]), emotion=entry["emotion"], frames=frames)
        )
    return corpus


def load_corpus_spec(path: str) -> CorpusSpec | None:
    """Spec echoed into the corpus index at save time, if any."""
    with open(os.path.join(path, CORPUS_INDEX_NAME), "r", encoding="utf-8") as f:
        index = json.load(f)
    spec = index.get("spec")
    return CorpusSpec(**spec) if spec else None
