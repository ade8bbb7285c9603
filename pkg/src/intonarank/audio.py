"""Mono PCM16 audio container and WAV reader/writer."""

import os
import tempfile
import wave
from dataclasses import dataclass

import numpy as np

from .exceptions import ClipTooShortError, WavFormatError

FRAME_SECONDS = 0.025
MIN_SAMPLE_RATE = 8000


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform with samples in [-1, 1].

    Parameters
    ----------
    samples : array_like
        Amplitude values.
    sample_rate : int
        Sampling rate in Hz, at least 8000.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("samples must be 1-D")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        if x.size and np.max(np.abs(x)) > 1.0:
            raise ValueError("samples must lie within [-1, 1]")
        sr = int(self.sample_rate)
        if sr != self.sample_rate or sr < MIN_SAMPLE_RATE:
            raise ValueError(f"sample_rate must be an integer >= {MIN_SAMPLE_RATE}")
        if x.size < int(round(FRAME_SECONDS * sr)):
            raise ClipTooShortError(
                f"clip has {x.size} samples, shorter than one 25 ms frame"
            )
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", sr)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate

    def crop(self, start, end):
        """Return the clip restricted to ``[start, end)`` seconds."""
        i0 = int(round(start * self.sample_rate))
        i1 = int(round(end * self.sample_rate))
        return AudioClip(self.samples[i0:i1], self.sample_rate)

    def scaled(self, gain):
        return AudioClip(self.samples * gain, self.sample_rate)

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(
            self.samples, other.samples
        )

    __hash__ = None


def to_pcm16(samples):
    """Quantise [-1, 1] floats to int16 (+1.0 maps to 32767)."""
    return np.round(np.asarray(samples) * 32767.0).astype("<i2")


def wav_read(path):
    """Read a 16-bit PCM mono WAV file into an :class:`AudioClip`."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with wave.open(os.fspath(path), "rb") as w:
            n_channels = w.getnchannels()
            width = w.getsampwidth()
            sr = w.getframerate()
            n = w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if n_channels != 1:
        raise WavFormatError(f"{path}: expected mono, got {n_channels} channels")
    if width != 2:
        raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if len(raw) != 2 * n:
        raise WavFormatError(f"{path}: data chunk truncated")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    # -32768 would land just outside [-1, 1]
    return AudioClip(np.clip(data / 32767.0, -1.0, 1.0), sr)


def wav_write(clip, path):
    """Write ``clip`` as a 16-bit PCM mono WAV, atomically."""
    if not isinstance(clip, AudioClip):
        clip = AudioClip(*clip)
    pcm = to_pcm16(clip.samples)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".wav.tmp")
    try:
        with os.fdopen(fd, "wb") as fh, wave.open(fh, "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(clip.sample_rate)
            w.writeframes(pcm.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
