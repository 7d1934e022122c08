"""STFT, mel, chroma and MFCC features computed directly from samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SR = 16000
DEFAULT_WINDOW = 512
DEFAULT_HOP = 256
DEFAULT_MELS = 64
DEFAULT_MFCC = 20
CHROMA_FMIN = 30.0
A4 = 440.0
LOG_FLOOR = 1e-10
PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


@dataclass(frozen=True)
class Spectrogram:
    frames: np.ndarray  # complex, time x (window/2 + 1)
    sample_rate: int
    window: int
    hop: int

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)

    @property
    def power(self) -> np.ndarray:
        return self.magnitude ** 2

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.window // 2 + 1) * self.sample_rate / self.window


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    for i in range(n):
        rev[i] = int(format(i, f"0{bits}b")[::-1], 2) if bits else 0
    a = x[..., rev].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(a.shape[:-1] + (n // size, size))
        even = a[..., :half].copy()
        odd = a[..., half:] * tw
        a[..., :half] = even + odd
        a[..., half:] = even - odd
        a = a.reshape(a.shape[:-2] + (n,))
        size *= 2
    return a


def hann(window: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window) / window)


def frame_signal(signal: np.ndarray, window: int, hop: int) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if len(signal) < window:
        raise ValueError(f"signal of {len(signal)} samples is shorter than the {window}-sample window")
    n_frames = 1 + (len(signal) - window) // hop
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return signal[idx]


def stft(signal, sample_rate: int = DEFAULT_SR, window: int = DEFAULT_WINDOW, hop: int = DEFAULT_HOP) -> Spectrogram:
    if not _is_pow2(window):
        raise ValueError(f"window must be a power of two, got {window}")
    if not 0 < hop <= window:
        raise ValueError(f"hop must be in (0, window], got {hop}")
    frames = frame_signal(signal, window, hop) * hann(window)
    spec = fft_radix2(frames)[:, : window // 2 + 1]
    return Spectrogram(spec, int(sample_rate), window, hop)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, window: int, sample_rate: int, fmin: float = 0.0, fmax=None) -> np.ndarray:
    """Triangular HTK-scale filters, shape n_mels x (window/2 + 1), peak height 1."""
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(window // 2 + 1) * sample_rate / window
    fb = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_spectrogram(spec: Spectrogram, n_mels: int = DEFAULT_MELS) -> np.ndarray:
    fb = mel_filterbank(n_mels, spec.window, spec.sample_rate)
    return spec.power @ fb.T


def pitch_class(freq, a4: float = A4):
    """Pitch class index (0 = C) of a frequency in Hz."""
    return (np.rint(12.0 * np.log2(np.asarray(freq, dtype=np.float64) / a4)).astype(np.int64) + 9) % 12


def chroma(spec: Spectrogram, fmin: float = CHROMA_FMIN, a4: float = A4) -> np.ndarray:
    freqs = spec.frequencies
    keep = (freqs >= fmin) & (freqs > 0)
    assign = np.zeros((len(freqs), 12))
    assign[np.nonzero(keep)[0], pitch_class(freqs[keep], a4)] = 1.0
    return spec.magnitude @ assign


def dct_matrix(n_coeffs: int, n_mels: int) -> np.ndarray:
    n = np.arange(n_coeffs)[:, None]
    m = np.arange(n_mels)[None, :]
    return np.cos(np.pi * n / n_mels * (m + 0.5))


def mfcc(mel: np.ndarray, n_coeffs: int = DEFAULT_MFCC) -> np.ndarray:
    """Unnormalized type-II DCT of the floored log-mel rows."""
    mel = np.atleast_2d(np.asarray(mel, dtype=np.float64))
    if n_coeffs > mel.shape[1]:
        raise ValueError(f"n_coeffs {n_coeffs} exceeds {mel.shape[1]} mel bands")
    return np.log(np.maximum(mel, LOG_FLOOR)) @ dct_matrix(n_coeffs, mel.shape[1]).T


def audio_features(signal, sample_rate: int = DEFAULT_SR, window: int = DEFAULT_WINDOW, hop: int = DEFAULT_HOP,
                   n_mels: int = DEFAULT_MELS, n_mfcc: int = DEFAULT_MFCC) -> tuple:
    """Frame-wise [chroma | mel | mfcc] matrix and its column names."""
    spec = stft(signal, sample_rate, window, hop)
    mel = mel_spectrogram(spec, n_mels)
    mat = np.hstack([chroma(spec), mel, mfcc(mel, n_mfcc)])
    names = ([f"chroma_{p}" for p in PITCH_CLASSES] + [f"mel_{i}" for i in range(n_mels)]
             + [f"mfcc_{i}" for i in range(n_mfcc)])
    return mat, names
