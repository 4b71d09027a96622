"""WAV I/O and short-time framing utilities."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class AudioError(Exception):
    pass


class AudioTooShort(AudioError):
    pass


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray  # float in [-1, 1], mono
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate < 16000:
            raise AudioError(f"sample rate {self.sample_rate} < 16000")
        if self.samples.ndim != 1 or len(self.samples) == 0:
            raise AudioError("samples must be a non-empty 1-D array")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def slice(self, t_start: float, t_end: float) -> "AudioBuffer":
        a = max(0, int(round(t_start * self.sample_rate)))
        b = min(len(self.samples), int(round(t_end * self.sample_rate)))
        if b <= a:
            raise AudioTooShort(f"empty slice [{t_start}, {t_end}]")
        return AudioBuffer(self.samples[a:b], self.sample_rate)


def read_wav(path: str | Path, channel: int = 0) -> AudioBuffer:
    """Read a PCM-16 RIFF WAV file, selecting one channel."""
    with wave.open(str(path), "rb") as fh:
        n_ch = fh.getnchannels()
        sr = fh.getframerate()
        if fh.getsampwidth() != 2:
            raise AudioError(f"{path}: only 16-bit PCM supported")
        raw = fh.readframes(fh.getnframes())
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_ch > 1:
        data = data.reshape(-1, n_ch)[:, channel]
    return AudioBuffer(data, sr)


def write_wav(path: str | Path, buf: AudioBuffer) -> None:
    samples = np.clip(buf.samples, -1.0, 1.0)
    pcm = np.round(samples * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(buf.sample_rate)
        fh.writeframes(pcm.tobytes())


def frame_signal(x: np.ndarray, n_win: int, hop: int) -> np.ndarray:
    """Stack overlapping frames as rows; trailing partial frame dropped."""
    if len(x) < n_win:
        raise AudioTooShort(f"{len(x)} samples < window of {n_win}")
    n_frames = 1 + (len(x) - n_win) // hop
    idx = np.arange(n_win)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def frame_times(n_frames: int, sr: int, n_win: int, hop: int) -> np.ndarray:
    """Center time of each frame in seconds."""
    return (np.arange(n_frames) * hop + n_win / 2) / sr
