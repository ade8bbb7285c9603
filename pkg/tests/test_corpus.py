import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intonarank.corpus import (
    CORPUS_SHIFT,
    EMOTIONS,
    KMeansIntonationLabeler,
    ManifestEntry,
    SynthSpec,
    f0_contour,
    generate_clip,
    generate_corpus,
    kmeans_label,
    read_manifest,
    write_manifest,
)
from intonarank.exceptions import DegenerateClusterError
from intonarank.features import estimate_f0, extract_features, terminal_f0


class TestGenerateClip:
    def test_rise_reaches_shifted_endpoint(self):
        clip = generate_clip(SynthSpec(1.0, 220.0, "rise", 6.0, 40.0, seed=1))
        measured = terminal_f0(estimate_f0(clip), clip.duration)
        assert measured == pytest.approx(220 * 2 ** 0.5, abs=5.0)

    def test_flat_contour_has_no_slope(self):
        clip = generate_clip(SynthSpec(1.0, 220.0, "rise", 0.0, 40.0, seed=1))
        slope = extract_features(clip)[3]
        assert abs(slope) <= 10.0

    def test_deterministic(self):
        spec = SynthSpec(1.2, 180.0, "fall", 4.0, 20.0, seed=9)
        assert np.array_equal(generate_clip(spec).samples, generate_clip(spec).samples)

    def test_contour_ground_truth(self):
        spec = SynthSpec(2.0, 200.0, "fall", 12.0, 30.0, seed=0)
        f0 = f0_contour(spec)
        n_flat = 32000 - int(round(0.52 * 16000))
        assert np.all(f0[:n_flat + 1] == 200.0)
        # last sample sits one period before the window end
        assert f0[-1] == pytest.approx(200.0 * 2 ** (-(1 - 1 / 8320)), rel=1e-12)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(duration=0.2), dict(duration=11.0), dict(base_f0=79.0),
            dict(base_f0=401.0), dict(terminal_shift=-1.0), dict(terminal_shift=13.0),
            dict(contour="flat"),
        ],
    )
    def test_spec_invariants(self, kw):
        base = dict(duration=1.0, base_f0=200.0, contour="rise",
                    terminal_shift=2.0, snr=30.0, seed=0)
        base.update(kw)
        with pytest.raises(ValueError):
            SynthSpec(**base)

    @settings(max_examples=25, deadline=None)
    @given(
        duration=st.floats(0.3, 1.5),
        base_f0=st.floats(80.0, 400.0),
        contour=st.sampled_from(["fall", "rise"]),
        shift=st.floats(0.0, 12.0),
        snr=st.floats(-5.0, 60.0),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_output_obeys_clip_invariants(self, duration, base_f0, contour, shift, snr, seed):
        clip = generate_clip(SynthSpec(duration, base_f0, contour, shift, snr, seed))
        assert np.all(np.isfinite(clip.samples))
        assert np.max(np.abs(clip.samples)) <= 1.0
        assert len(clip) == int(round(duration * 16000))


class TestCorpus:
    def test_counts_and_ranges(self, tmp_path):
        entries = generate_corpus(5, 7, seed=3, out_dir=tmp_path)
        assert len(entries) == 12
        assert sum(e.intonation == "question" for e in entries) == 7
        assert all(CORPUS_SHIFT[0] <= e.terminal_shift <= CORPUS_SHIFT[1] for e in entries)
        assert all(e.emotion in EMOTIONS for e in entries)
        assert all((tmp_path / e.path).exists() for e in entries)
        assert read_manifest(tmp_path / "manifest.jsonl") == entries

    def test_same_seed_byte_identical(self, tmp_path):
        generate_corpus(3, 3, seed=5, out_dir=tmp_path / "a")
        generate_corpus(3, 3, seed=5, out_dir=tmp_path / "b")
        for name in ["manifest.jsonl", "clip_00000.wav", "clip_00005.wav"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_keys(self, tmp_path):
        generate_corpus(1, 1, seed=0, out_dir=tmp_path)
        line = (tmp_path / "manifest.jsonl").read_text().splitlines()[0]
        assert set(json.loads(line)) == {"path", "speaker", "emotion", "intonation", "terminal_shift"}

    def test_zero_count_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_corpus(0, 3, seed=0, out_dir=tmp_path)

    @settings(max_examples=30)
    @given(
        path=st.text(min_size=1, max_size=20),
        speaker=st.text(max_size=10),
        emotion=st.sampled_from(EMOTIONS),
        intonation=st.sampled_from(["statement", "question", "unlabeled"]),
        shift=st.one_of(st.none(), st.floats(0, 12)),
    )
    def test_manifest_round_trip(self, tmp_path_factory, path, speaker, emotion, intonation, shift):
        entry = ManifestEntry(path, speaker, emotion, intonation, shift)
        out = tmp_path_factory.mktemp("m") / "m.jsonl"
        write_manifest([entry, entry], out)
        assert read_manifest(out) == [entry, entry]

    def test_manifest_entry_validation(self):
        with pytest.raises(ValueError):
            ManifestEntry("", "s", "sad", "question")
        with pytest.raises(ValueError):
            ManifestEntry("a.wav", "s", "bored", "question")


class TestKMeansLabel:
    def test_separable_clouds(self):
        rng = np.random.default_rng(0)
        X = rng.normal(0, 5, (40, 8))
        X[:20, 3] += 200
        X[20:, 3] -= 200
        labels = kmeans_label(X, seed=1)
        assert labels[:20] == ["question"] * 20
        assert labels[20:] == ["statement"] * 20

    def test_corpus_agreement(self, corpus_100_100):
        X, y, _ = corpus_100_100
        agree = np.mean(np.asarray(kmeans_label(X, seed=0)) == y)
        assert agree >= 0.95

    def test_identical_vectors_degenerate(self):
        with pytest.raises(DegenerateClusterError):
            kmeans_label(np.ones((10, 8)), seed=0)

    def test_input_errors(self):
        with pytest.raises(ValueError):
            kmeans_label([np.zeros(8)], seed=0)
        with pytest.raises(ValueError):
            kmeans_label([np.zeros(8), np.zeros(7)], seed=0)

    def test_objective_non_increasing(self, corpus_100_100):
        X, _, _ = corpus_100_100
        for seed in range(5):
            hist = np.array(KMeansIntonationLabeler(random_state=seed).fit(X).objective_history_)
            assert np.all(np.diff(hist) <= 1e-9 * hist[:-1])

    @settings(max_examples=20, deadline=None)
    @given(perm_seed=st.integers(0, 10**6), seed=st.integers(0, 100))
    def test_permutation_equivariant(self, corpus_100_100, perm_seed, seed):
        X, _, _ = corpus_100_100
        perm = np.random.default_rng(perm_seed).permutation(len(X))
        base = np.asarray(kmeans_label(X, seed))
        assert np.array_equal(np.asarray(kmeans_label(X[perm], seed)), base[perm])

    def test_predict_matches_fit_labels(self, corpus_100_100):
        X, _, _ = corpus_100_100
        est = KMeansIntonationLabeler(random_state=2).fit(X)
        assert np.array_equal(est.predict(X), est.labels_)
