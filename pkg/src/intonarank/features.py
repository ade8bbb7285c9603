"""Final-syllable window, pitch tracking and prosody features.

The final syllable is approximated by the last 0.52 s of a clip (mean
English final-syllable length 0.37 s plus one standard deviation 0.15 s).
Eight interpretable features are computed on that window; they feed the
relative-attribute ranker and the k-means intonation labeler.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix
from .audio import AudioClip
from .exceptions import ClipTooShortError

FINAL_WINDOW_SECONDS = 0.52
FRAME_SECONDS = 0.025
HOP_SECONDS = 0.010
F0_MIN = 60.0
F0_MAX = 500.0
VOICING_THRESHOLD = 0.5
# first-dip threshold on the cumulative-mean-normalised difference
YIN_DIP_THRESHOLD = 0.1
ENDPOINT_FRAMES = 3
STD_FLOOR = 1e-8
ENERGY_FLOOR = 1e-12

FEATURE_NAMES = (
    "window_duration",
    "mean_f0",
    "endpoint_f0",
    "terminal_slope",
    "f0_range",
    "voiced_ratio",
    "mean_log_energy",
    "energy_slope",
)
N_FEATURES = len(FEATURE_NAMES)
SLOPE_INDEX = FEATURE_NAMES.index("terminal_slope")


@dataclass(frozen=True)
class FinalSyllableWindow:
    start: float
    end: float

    @property
    def width(self):
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class PitchTrack:
    """Per-frame F0 estimates.

    ``f0`` holds 0.0 for unvoiced frames. ``times`` are frame centres in
    seconds relative to the start of the analysed signal.
    """

    hop: float
    f0: np.ndarray
    confidence: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        if not self.hop > 0:
            raise ValueError("hop must be positive")
        f0 = np.asarray(self.f0, dtype=np.float64)
        conf = np.asarray(self.confidence, dtype=np.float64)
        if f0.shape != conf.shape:
            raise ValueError("f0 and confidence must have equal length")
        voiced = f0 > 0
        if np.any((f0[voiced] < F0_MIN) | (f0[voiced] > F0_MAX)):
            raise ValueError("voiced f0 outside [60, 500] Hz")
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=np.float64))

    def __len__(self):
        return self.f0.shape[0]

    @property
    def voiced(self):
        return self.f0 > 0

    @property
    def voiced_ratio(self):
        return float(np.mean(self.voiced)) if len(self) else 0.0

    @classmethod
    def from_f0(cls, f0, hop=HOP_SECONDS, confidence=None):
        """Build a track from an f0 sequence (0 or NaN meaning unvoiced)."""
        f0 = np.nan_to_num(np.asarray(f0, dtype=np.float64), nan=0.0)
        if confidence is None:
            confidence = (f0 > 0).astype(np.float64)
        times = (np.arange(f0.size) * hop) + FRAME_SECONDS / 2
        return cls(hop, f0, confidence, times)


def final_window(clip):
    """Return the final-syllable window ``[max(0, T - 0.52), T]``."""
    end = clip.duration
    n_win = min(len(clip), int(round(FINAL_WINDOW_SECONDS * clip.sample_rate)))
    start = (len(clip) - n_win) / clip.sample_rate
    return FinalSyllableWindow(start=start, end=end)


def frame_signal(x, frame_length, hop_length):
    """Slice ``x`` into frames laid out backward from the last sample.

    Anchoring the grid to the end guarantees the final frame covers the
    utterance end; any remainder shorter than a hop is dropped at the start.
    """
    n = x.shape[0]
    if n < frame_length:
        raise ClipTooShortError("signal shorter than one analysis frame")
    n_frames = (n - frame_length) // hop_length + 1
    offset = n - frame_length - (n_frames - 1) * hop_length
    starts = offset + hop_length * np.arange(n_frames)
    idx = starts[:, None] + np.arange(frame_length)[None, :]
    return x[idx], starts


def _cmnd(frames, tau_max):
    """Cumulative-mean-normalised difference, lag 0..tau_max, per frame.

    The squared difference at each lag is averaged over the overlap so
    long lags are not favoured by their shorter sums.
    """
    n_frames, n = frames.shape
    d = np.zeros((n_frames, tau_max + 1))
    for tau in range(1, tau_max + 1):
        diff = frames[:, : n - tau] - frames[:, tau:]
        d[:, tau] = np.einsum("ij,ij->i", diff, diff) / (n - tau)
    cum = np.cumsum(d[:, 1:], axis=1)
    out = np.ones_like(d)
    taus = np.arange(1, tau_max + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = d[:, 1:] * taus / cum
    out[:, 1:] = np.where(cum > 0, ratio, 1.0)
    return out


def _pick_lag(row, tau_min, tau_max):
    below = np.flatnonzero(row[tau_min : tau_max + 1] < YIN_DIP_THRESHOLD)
    if below.size:
        tau = tau_min + below[0]
        while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
            tau += 1
    else:
        tau = tau_min + int(np.argmin(row[tau_min : tau_max + 1]))
    # parabolic refinement
    if tau_min < tau < tau_max:
        a, b, c = row[tau - 1], row[tau], row[tau + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom > 0 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
        value = b - 0.25 * (a - c) * shift
    else:
        shift, value = 0.0, row[tau]
    return tau + shift, value


def estimate_f0(clip, fmin=F0_MIN, fmax=F0_MAX,
                frame_seconds=FRAME_SECONDS, hop_seconds=HOP_SECONDS):
    """Track F0 with a YIN-style difference function.

    Parameters
    ----------
    clip : AudioClip
    fmin, fmax : float
        Search range in Hz.

    Returns
    -------
    PitchTrack
        25 ms windows every 10 ms. Frames whose confidence
        ``1 - cmnd(best lag)`` is below 0.5 are unvoiced.
    """
    sr = clip.sample_rate
    frame_length = int(round(frame_seconds * sr))
    hop_length = int(round(hop_seconds * sr))
    frames, starts = frame_signal(clip.samples, frame_length, hop_length)
    tau_min = max(2, int(np.floor(sr / fmax)))
    tau_max = min(frame_length - 2, int(np.ceil(sr / fmin)))
    cmnd = _cmnd(frames, tau_max)

    f0 = np.zeros(len(frames))
    conf = np.zeros(len(frames))
    silent = np.max(np.abs(frames), axis=1) == 0
    for i, row in enumerate(cmnd):
        if silent[i]:
            continue
        lag, value = _pick_lag(row, tau_min, tau_max)
        c = float(np.clip(1.0 - value, 0.0, 1.0))
        conf[i] = c
        freq = sr / lag
        if c >= VOICING_THRESHOLD and fmin <= freq <= fmax:
            f0[i] = freq
    times = (starts + frame_length / 2) / sr
    return PitchTrack(hop=hop_length / sr, f0=f0, confidence=conf, times=times)


def terminal_f0(track, duration, span=0.05):
    """Median voiced F0 over frames whose window lies in the last ``span`` s.

    Returns 0.0 when none of those frames is voiced.
    """
    earliest_centre = duration - span + FRAME_SECONDS / 2
    sel = (track.times >= earliest_centre - 1e-9) & track.voiced
    return float(np.median(track.f0[sel])) if np.any(sel) else 0.0


def _ols_slope(t, y):
    t = t - t.mean()
    denom = np.dot(t, t)
    return float(np.dot(t, y - y.mean()) / denom) if denom > 0 else 0.0


def frame_log_energy(clip, frame_seconds=FRAME_SECONDS, hop_seconds=HOP_SECONDS):
    """Per-frame mean-square energy in dB, on the same grid as :func:`estimate_f0`."""
    sr = clip.sample_rate
    frames, _ = frame_signal(
        clip.samples, int(round(frame_seconds * sr)), int(round(hop_seconds * sr))
    )
    return 10.0 * np.log10(np.mean(frames**2, axis=1) + ENERGY_FLOOR)


def features_from_track(track, log_energy, window_duration):
    """Assemble the 8-element prosody vector from a track and energy contour."""
    voiced = track.voiced
    t = track.times
    energy_slope = _ols_slope(t, log_energy) if len(t) >= 2 else 0.0
    if np.count_nonzero(voiced) >= 2:
        fv = track.f0[voiced]
        tv = t[voiced]
        mean_f0 = float(fv.mean())
        endpoint_f0 = float(fv[-ENDPOINT_FRAMES:].mean())
        slope = _ols_slope(tv, fv)
        f0_range = float(fv.max() - fv.min())
    else:
        mean_f0 = endpoint_f0 = slope = f0_range = 0.0
    return np.array(
        [
            window_duration,
            mean_f0,
            endpoint_f0,
            slope,
            f0_range,
            track.voiced_ratio,
            float(np.mean(log_energy)),
            energy_slope,
        ]
    )


def extract_features(clip):
    """Prosody feature vector of the clip's final-syllable window.

    Order follows :data:`FEATURE_NAMES`. With fewer than two voiced frames
    the four F0-derived entries are 0.
    """
    win = final_window(clip)
    n_win = int(round(win.width * clip.sample_rate))
    sub = AudioClip(clip.samples[len(clip) - n_win :], clip.sample_rate)
    track = estimate_f0(sub)
    energy = frame_log_energy(sub)
    return features_from_track(track, energy, n_win / clip.sample_rate)


class ProsodyFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping clips to prosody feature rows."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return np.vstack([extract_features(clip) for clip in X])

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_NAMES, dtype=object)


class Standardizer(TransformerMixin, BaseEstimator):
    """Per-feature z-scoring with a floor on the standard deviation.

    Parameters
    ----------
    std_floor : float, default=1e-8
        Lower bound applied to each fitted standard deviation, so constant
        features map to 0 rather than dividing by zero.
    """

    def __init__(self, std_floor=STD_FLOOR):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        X = as_matrix(X, min_samples=2)
        self.mean_ = X.mean(axis=0)
        self.std_ = np.maximum(X.std(axis=0), self.std_floor)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = as_matrix(X, n_features=self.n_features_in_)
        return (X - self.mean_) / self.std_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=np.float64) * self.std_ + self.mean_

    @classmethod
    def from_params(cls, mean, std, std_floor=STD_FLOOR):
        s = cls(std_floor=std_floor)
        s.mean_ = np.asarray(mean, dtype=np.float64)
        s.std_ = np.maximum(np.asarray(std, dtype=np.float64), std_floor)
        s.n_features_in_ = s.mean_.shape[0]
        return s


def standardize_fit(vectors):
    """Fit a :class:`Standardizer` on a list of feature vectors."""
    if len(vectors) == 0:
        raise ValueError("cannot standardise an empty feature set")
    return Standardizer().fit(vectors)


def standardize_apply(standardizer, v):
    """Z-score one vector (1-D in, 1-D out) or a matrix of rows."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return standardizer.transform(v[None, :])[0]
    return standardizer.transform(v)
