"""Minimal mono PCM WAV input (8- and 16-bit)."""

from __future__ import annotations

import wave

import numpy as np


def read_wav(path, target_rate: int | None = None) -> tuple:
    """Return ``(samples in [-1, 1], sample_rate)``.

    Resampling to ``target_rate`` is nearest-neighbour: fine for the feature
    resolution used here, audibly poor for anything else.
    """
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {w.getnchannels()} channels")
        width = w.getsampwidth()
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    if width == 1:
        x = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raise ValueError(f"{path}: only 8- and 16-bit PCM supported, got {8 * width}-bit")
    if target_rate and target_rate != rate:
        n_out = int(len(x) * target_rate / rate)
        idx = np.minimum(np.rint(np.arange(n_out) * rate / target_rate).astype(np.int64), len(x) - 1)
        x, rate = x[idx], target_rate
    return x, rate


def write_wav(path, samples, sample_rate: int) -> None:
    pcm = np.clip(np.rint(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())
