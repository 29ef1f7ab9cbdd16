import json
import os

import numpy as np
import pytest

from affectvlm.datagen import (AGE_GROUPS, EMOTIONS, ETHNICITIES, GENDERS,
                               CorpusSpec, FaceSequence, SubjectMeta,
                               generate_corpus, generate_sequence, load_corpus,
                               load_corpus_spec, save_corpus)
from affectvlm.errors import InvalidInputError, ParseError, ProtocolError, VersionError


def test_corpus_counts(small_spec, small_corpus):
    assert len(small_corpus) == small_spec.n_subjects * 6
    for seq in small_corpus:
        assert seq.frames.shape == (small_spec.frames_per_sequence,
                                    small_spec.points_per_face, 3)
        assert seq.frames.dtype == np.float32


def test_example_spec_shape():
    spec = CorpusSpec(n_subjects=10, frames_per_sequence=8, points_per_face=2048, seed=7)
    corpus = generate_corpus(spec)
    assert len(corpus) == 60
    assert all(s.frames.shape == (8, 2048, 3) for s in corpus)


def test_determinism_bit_identical(small_spec, small_corpus):
    again = generate_corpus(small_spec)
    assert all(a == b for a, b in zip(small_corpus, again))


def test_expression_scale_zero_collapses_emotions():
    spec = CorpusSpec(n_subjects=10, frames_per_sequence=2, points_per_face=128,
                      seed=3, expression_scale=0.0)
    by_subject = {}
    for seq in generate_corpus(spec):
        by_subject.setdefault(seq.subject.subject_id, []).append(seq.frames)
    for frames in by_subject.values():
        assert all(np.array_equal(frames[0], f) for f in frames[1:])


def test_rejects_too_few_subjects():
    with pytest.raises(ProtocolError):
        generate_corpus(CorpusSpec(n_subjects=9))


def test_coordinates_bounded(small_corpus):
    for seq in small_corpus:
        assert np.all(seq.frames >= -1.0) and np.all(seq.frames <= 1.0)


def test_neutral_frame_and_monotone_ramp(small_spec):
    seq = generate_sequence(small_spec, 0, "happy")
    neutral = generate_sequence(
        CorpusSpec(**{**small_spec.__dict__, "expression_scale": 0.0}), 0, "happy")
    # frame 0 carries zero deformation amplitude
    assert np.array_equal(seq.frames[0], neutral.frames[0])
    amp = [np.linalg.norm(seq.frames[t] - seq.frames[0]) for t in range(seq.n_frames)]
    assert amp[0] == 0.0
    assert all(amp[t + 1] >= amp[t] - 1e-6 for t in range(len(amp) - 1))


def test_metadata_from_closed_sets(small_corpus):
    for seq in small_corpus:
        assert seq.subject.age_group in AGE_GROUPS
        assert seq.subject.gender in GENDERS
        assert seq.subject.ethnicity in ETHNICITIES
    with pytest.raises(InvalidInputError):
        SubjectMeta(0, "ancient", "male", "Asian")


def test_subject_ids_cover_range(small_spec, small_corpus):
    assert {s.subject.subject_id for s in small_corpus} == set(range(small_spec.n_subjects))


def test_separability_nearest_centroid():
    """Raw frontal apex projections must be above-chance separable."""
    from affectvlm.views import render_multiview

    spec = CorpusSpec(n_subjects=12, frames_per_sequence=2, points_per_face=1024,
                      seed=7, identity_scale=0.08, expression_scale=1.0)
    X, y, subj = [], [], []
    for seq in generate_corpus(spec):
        mv = render_multiview(seq, seq.n_frames - 1, (32, 32))
        X.append(mv.frontal.pixels.ravel())
        y.append(seq.emotion)
        subj.append(seq.subject.subject_id)
    X, y, subj = np.array(X), np.array(y), np.array(subj)
    train = subj % 2 == 0
    cents = np.stack([X[train & (y == e)].mean(axis=0) for e in EMOTIONS])
    pred = [EMOTIONS[int(np.argmin(((cents - x) ** 2).sum(axis=1)))] for x in X[~train]]
    acc = float(np.mean([p == t for p, t in zip(pred, y[~train])]))
    assert acc > 0.5  # chance is 1/6


def test_roundtrip_exact(tmp_path, small_spec, small_corpus):
    path = str(tmp_path / "corpus")
    save_corpus(small_corpus, path, small_spec)
    loaded = load_corpus(path)
    assert len(loaded) == len(small_corpus)
    assert all(a == b for a, b in zip(small_corpus, loaded))
    assert load_corpus_spec(path) == small_spec


def test_save_twice_identical_bytes(tmp_path, small_spec, small_corpus):
    p1, p2 = str(tmp_path / "c1"), str(tmp_path / "c2")
    save_corpus(small_corpus, p1, small_spec)
    save_corpus(small_corpus, p2, small_spec)
    for name in sorted(os.listdir(p1)):
        with open(os.path.join(p1, name), "rb") as f1, open(os.path.join(p2, name), "rb") as f2:
            assert f1.read() == f2.read()


def test_empty_corpus_roundtrip(tmp_path):
    path = str(tmp_path / "empty")
    save_corpus([], path)
    assert load_corpus(path) == []


def test_truncated_frame_file_names_offset(tmp_path, small_spec, small_corpus):
    path = str(tmp_path / "corpus")
    save_corpus(small_corpus[:1], path, small_spec)
    fname = [n for n in os.listdir(path) if n.endswith(".f32")][0]
    full = os.path.join(path, fname)
    blob = open(full, "rb").read()
    with open(full, "wb") as f:
        f.write(blob[:-7])
    with pytest.raises(ParseError) as exc:
        load_corpus(path)
    assert exc.value.offset == len(blob) - 7


def test_malformed_index_is_parse_error(tmp_path):
    path = tmp_path / "corpus"
    path.mkdir()
    (path / "corpus.json").write_text('{"format_version": 1, "sequences": [')
    with pytest.raises(ParseError):
        load_corpus(str(path))


def test_version_mismatch(tmp_path, small_spec, small_corpus):
    path = str(tmp_path / "corpus")
    save_corpus(small_corpus[:1], path, small_spec)
    index = json.load(open(os.path.join(path, "corpus.json")))
    index["format_version"] = 99
    json.dump(index, open(os.path.join(path, "corpus.json"), "w"))
    with pytest.raises(VersionError):
        load_corpus(str(path))


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        CorpusSpec(n_subjects=10, frames_per_sequence=0)
    with pytest.raises(InvalidInputError):
        CorpusSpec(n_subjects=10, identity_scale=-0.1)
    with pytest.raises(InvalidInputError):
        FaceSequence(SubjectMeta(0, "young", "male", "Asian"), "bored",
                     np.zeros((1, 4, 3), dtype=np.float32))
