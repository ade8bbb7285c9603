"""Objective synthesis-quality measures: MCD, F0 frame error, duration MSE."""

import numpy as np
from scipy.fft import dct, rfft
from scipy.signal import get_window

from ._validation import as_vector
from .exceptions import ClipTooShortError

N_MELS = 40
N_CEPSTRA = 13
LOG_FLOOR = 1e-10
FFE_TOLERANCE = 0.2
MCD_CONST = 10.0 / np.log(10.0) * np.sqrt(2.0)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(sample_rate, n_fft, n_mels=N_MELS, fmin=0.0, fmax=None):
    """Triangular HTK-style mel filters, shape ``(n_mels, n_fft // 2 + 1)``."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.linspace(0, sample_rate / 2, n_fft // 2 + 1)
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bins - lower) / (centre - lower)
    down = (upper - bins) / (upper - centre)
    return np.maximum(0.0, np.minimum(up, down))


def mel_cepstra(clip, frame_seconds=0.025, hop_seconds=0.010, n_mels=N_MELS,
                n_cepstra=N_CEPSTRA):
    """Mel-cepstral coefficients c1..c13 per frame.

    Hann-windowed STFT frames (25 ms / 10 ms, starting at sample 0), power
    spectrum through a 40-band mel filterbank spanning 0 Hz to Nyquist,
    natural log floored at 1e-10, orthonormal DCT-II; c0 is dropped.
    """
    sr = clip.sample_rate
    win = int(round(frame_seconds * sr))
    hop = int(round(hop_seconds * sr))
    x = clip.samples
    if x.shape[0] < win:
        raise ClipTooShortError("clip shorter than one analysis frame")
    n_frames = (x.shape[0] - win) // hop + 1
    idx = hop * np.arange(n_frames)[:, None] + np.arange(win)[None, :]
    frames = x[idx] * get_window("hann", win)
    n_fft = int(2 ** np.ceil(np.log2(win)))
    power = np.abs(rfft(frames, n=n_fft, axis=1)) ** 2
    mel = power @ mel_filterbank(sr, n_fft, n_mels).T
    logmel = np.log(np.maximum(mel, LOG_FLOOR))
    return dct(logmel, type=2, norm="ortho", axis=1)[:, 1 : n_cepstra + 1]


def mcd(ref, syn):
    """Mean frame-wise mel cepstral distortion in dB.

    Frames are paired index by index and the longer input is truncated.
    """
    ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
    syn = np.atleast_2d(np.asarray(syn, dtype=np.float64))
    if ref.size == 0 or syn.size == 0:
        raise ValueError("mel-cepstra must be nonempty")
    if ref.shape[1] != syn.shape[1]:
        raise ValueError("cepstral orders differ")
    n = min(ref.shape[0], syn.shape[0])
    diff = ref[:n] - syn[:n]
    return float(np.mean(MCD_CONST * np.sqrt(np.sum(diff**2, axis=1))))


def _f0_of(track):
    return np.asarray(getattr(track, "f0", track), dtype=np.float64)


def ffe(ref, syn):
    """F0 frame error of ``syn`` against ``ref``.

    A frame is wrong when the voicing decisions differ, or both are voiced
    and the pitch deviates by more than 20 % of the reference pitch. The
    longer track is truncated.
    """
    if hasattr(ref, "hop") and hasattr(syn, "hop") and not np.isclose(ref.hop, syn.hop):
        raise ValueError(f"pitch tracks have different hops ({ref.hop} vs {syn.hop})")
    r, s = _f0_of(ref), _f0_of(syn)
    n = min(r.size, s.size)
    if n == 0:
        raise ValueError("pitch tracks must be nonempty")
    r, s = r[:n], s[:n]
    rv, sv = r > 0, s > 0
    voicing_error = rv != sv
    both = rv & sv
    pitch_error = both & (np.abs(s - r) > FFE_TOLERANCE * np.where(both, r, 1.0))
    return float(np.mean(voicing_error | pitch_error))


def duration_mse(ref_durations, syn_durations):
    ref = as_vector(ref_durations, "ref_durations")
    syn = as_vector(syn_durations, "syn_durations")
    if ref.shape != syn.shape:
        raise ValueError("duration lists differ in length")
    if ref.size == 0:
        raise ValueError("duration lists must be nonempty")
    return float(np.mean((ref - syn) ** 2))
