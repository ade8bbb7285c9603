"""Synthetic intonation corpus, JSONL manifests and k-means auto-labeling."""

import json
import os
import tempfile
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix
from .audio import AudioClip, wav_write
from .exceptions import DegenerateClusterError
from .features import FINAL_WINDOW_SECONDS, SLOPE_INDEX, STD_FLOOR

EMOTIONS = ("neutral", "sad", "happy", "angry", "surprise")
INTONATION_LABELS = ("statement", "question", "unlabeled")
CONTOURS = ("fall", "rise")

# partial amplitudes: fundamental, 2nd at -6 dB, 3rd at -12 dB
PARTIAL_GAINS = (1.0, 10 ** (-6 / 20), 10 ** (-12 / 20))
PEAK_LEVEL = 0.5

# generate_corpus sampling ranges
CORPUS_SAMPLE_RATE = 16000
CORPUS_BASE_F0 = (150.0, 250.0)
CORPUS_DURATION = (1.0, 2.5)
CORPUS_SHIFT = (2.0, 8.0)
CORPUS_SNR_DB = 30.0
N_SPEAKERS = 10


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic harmonic-tone utterance."""

    duration: float
    base_f0: float
    contour: str
    terminal_shift: float
    snr: float
    seed: int
    sample_rate: int = CORPUS_SAMPLE_RATE

    def __post_init__(self):
        if not 0.3 <= self.duration <= 10.0:
            raise ValueError("duration must lie in [0.3, 10] s")
        if not 80.0 <= self.base_f0 <= 400.0:
            raise ValueError("base_f0 must lie in [80, 400] Hz")
        if self.contour not in CONTOURS:
            raise ValueError(f"contour must be one of {CONTOURS}")
        if not 0.0 <= self.terminal_shift <= 12.0:
            raise ValueError("terminal_shift must lie in [0, 12] semitones")
        if np.isnan(self.snr):
            raise ValueError("snr must be a number")


def f0_contour(spec):
    """Ground-truth instantaneous F0 (Hz) per sample for ``spec``."""
    n = int(round(spec.duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    T = n / spec.sample_rate
    width = min(FINAL_WINDOW_SECONDS, T)
    t0 = T - width
    sign = 1.0 if spec.contour == "rise" else -1.0
    progress = np.clip((t - t0) / width, 0.0, 1.0)
    semitones = sign * spec.terminal_shift * progress
    return spec.base_f0 * 2.0 ** (semitones / 12.0)


def generate_clip(spec):
    """Render ``spec`` as a three-partial tone plus Gaussian noise.

    F0 is flat at ``base_f0`` until the final 0.52 s, then moves linearly
    in semitones to ``base_f0 * 2**(+-shift/12)`` at the last sample.
    """
    f0 = f0_contour(spec)
    phase = 2.0 * np.pi * np.concatenate(([0.0], np.cumsum(f0[:-1]))) / spec.sample_rate
    clean = sum(g * np.sin((k + 1) * phase) for k, g in enumerate(PARTIAL_GAINS))
    clean *= PEAK_LEVEL / sum(PARTIAL_GAINS)
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(clean.shape[0])
    if np.isfinite(spec.snr):
        power = np.mean(clean**2)
        clean = clean + noise * np.sqrt(power / 10.0 ** (spec.snr / 10.0))
    return AudioClip(np.clip(clean, -1.0, 1.0), spec.sample_rate)


@dataclass
class ManifestEntry:
    path: str
    speaker: str
    emotion: str
    intonation: str
    terminal_shift: Optional[float] = None

    def __post_init__(self):
        if not self.path:
            raise ValueError("manifest path must be nonempty")
        if self.emotion not in EMOTIONS:
            raise ValueError(f"emotion must be one of {EMOTIONS}")
        if self.intonation not in INTONATION_LABELS:
            raise ValueError(f"intonation must be one of {INTONATION_LABELS}")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(
            path=d["path"],
            speaker=d["speaker"],
            emotion=d["emotion"],
            intonation=d["intonation"],
            terminal_shift=d.get("terminal_shift"),
        )


def write_manifest(entries, path):
    text = "".join(e.to_json() + "\n" for e in entries)
    atomic_write_text(path, text)


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return [ManifestEntry.from_json(line) for line in fh if line.strip()]


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sample_specs(n_statement, n_question, seed):
    """Draw the per-clip synthesis parameters of a corpus.

    Returns a list of ``(SynthSpec, speaker, emotion, intonation)`` in
    shuffled order.
    """
    if n_statement < 1 or n_question < 1:
        raise ValueError("corpus needs at least one statement and one question")
    rng = np.random.default_rng(seed)
    intonations = ["statement"] * n_statement + ["question"] * n_question
    order = rng.permutation(len(intonations))
    out = []
    for i in order:
        intonation = intonations[i]
        spec = SynthSpec(
            duration=float(rng.uniform(*CORPUS_DURATION)),
            base_f0=float(rng.uniform(*CORPUS_BASE_F0)),
            contour="rise" if intonation == "question" else "fall",
            terminal_shift=float(rng.uniform(*CORPUS_SHIFT)),
            snr=CORPUS_SNR_DB,
            seed=int(rng.integers(2**31 - 1)),
        )
        speaker = f"spk{int(rng.integers(N_SPEAKERS)) + 1:02d}"
        emotion = EMOTIONS[int(rng.integers(len(EMOTIONS)))]
        out.append((spec, speaker, emotion, intonation))
    return out


def generate_corpus(n_statement, n_question, seed, out_dir):
    """Render a labeled corpus into ``out_dir`` and write ``manifest.jsonl``.

    Statements fall and questions rise, each by a terminal shift drawn
    uniformly from [2, 8] semitones. Emotion labels carry no acoustic effect.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, (spec, speaker, emotion, intonation) in enumerate(
        sample_specs(n_statement, n_question, seed)
    ):
        name = f"clip_{i:05d}.wav"
        wav_write(generate_clip(spec), os.path.join(out_dir, name))
        entries.append(
            ManifestEntry(name, speaker, emotion, intonation, spec.terminal_shift)
        )
    write_manifest(entries, os.path.join(out_dir, "manifest.jsonl"))
    return entries


def _kmeans_pp_init(X, rng):
    n = X.shape[0]
    first = X[int(rng.integers(n))]
    d2 = np.sum((X - first) ** 2, axis=1)
    total = d2.sum()
    if total <= 0:
        raise DegenerateClusterError("all feature vectors are identical")
    second = X[int(rng.choice(n, p=d2 / total))]
    return np.vstack([first, second])


def _lloyd(X, centers, max_iter):
    labels = None
    history = []
    for it in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        if np.bincount(labels, minlength=2).min() == 0:
            raise DegenerateClusterError("k-means produced an empty cluster")
        centers = np.vstack([X[labels == k].mean(axis=0) for k in range(2)])
        history.append(float(((X - centers[labels]) ** 2).sum()))
    return centers, labels, history, it + 1


class KMeansIntonationLabeler(ClusterMixin, BaseEstimator):
    """Two-cluster k-means that names its clusters statement / question.

    Lloyd iterations from a seeded k-means++ start, stopping once the
    assignments repeat or after ``max_iter`` rounds. The cluster whose
    members have the larger mean terminal slope is the question cluster.

    By default the raw feature values are clustered: the F0 features share
    Hz-based units and dominate, while z-scoring would give the nearly
    constant energy features the same weight as the pitch cues.

    Rows are clustered in lexicographic order, so permuting the input
    permutes the labels the same way.

    Parameters
    ----------
    max_iter : int, default=100
    random_state : int, default=0
    slope_index : int
        Column holding the terminal-slope feature.
    standardize : bool, default=False
        Z-score columns before clustering.
    """

    def __init__(self, max_iter=100, random_state=0, slope_index=SLOPE_INDEX,
                 standardize=False):
        self.max_iter = max_iter
        self.random_state = random_state
        self.slope_index = slope_index
        self.standardize = standardize

    def fit(self, X, y=None):
        X = as_matrix(X, min_samples=2)
        if self.standardize:
            mean = X.mean(axis=0)
            std = np.maximum(X.std(axis=0), STD_FLOOR)
        else:
            mean, std = np.zeros(X.shape[1]), np.ones(X.shape[1])
        Z = (X - mean) / std
        order = np.lexsort(Z.T[::-1])
        rng = np.random.default_rng(self.random_state)
        centers = _kmeans_pp_init(Z[order], rng)
        centers, sorted_labels, history, n_iter = _lloyd(Z[order], centers, self.max_iter)
        cluster = np.empty_like(sorted_labels)
        cluster[order] = sorted_labels

        slopes = [X[cluster == k, self.slope_index].mean() for k in range(2)]
        if slopes[0] == slopes[1]:
            raise DegenerateClusterError("clusters share the same mean terminal slope")
        question = int(np.argmax(slopes))

        self.mean_, self.std_ = mean, std
        self.cluster_centers_ = centers
        self.question_cluster_ = question
        self.objective_history_ = history
        self.n_iter_ = n_iter
        self.labels_ = self._name(cluster)
        self.n_features_in_ = X.shape[1]
        return self

    def _name(self, cluster):
        return np.where(cluster == self.question_cluster_, "question", "statement")

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        Z = (as_matrix(X, n_features=self.n_features_in_) - self.mean_) / self.std_
        d2 = ((Z[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return self._name(np.argmin(d2, axis=1))


def kmeans_label(features, seed):
    """Label feature vectors as ``"statement"`` or ``"question"``."""
    try:
        X = np.asarray([np.asarray(f, dtype=np.float64) for f in features])
    except ValueError as exc:
        raise ValueError("feature vectors differ in dimension") from exc
    if X.ndim != 2:
        raise ValueError("feature vectors differ in dimension")
    if X.shape[0] < 2:
        raise ValueError("k-means labeling needs at least two feature vectors")
    return list(KMeansIntonationLabeler(random_state=seed).fit(X).labels_)
