"""80-dim log-Mel spectrogram frontend.

Hann-windowed power spectra, triangular filterbank on the HTK mel scale
(2595*log10(1 + f/700)) spanning 0 Hz to Nyquist, natural log with an
energy floor. Frame count is 1 + floor((N - window) / hop).
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError, InvalidInputError


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate: int, n_fft: int, n_mels: int = 80
) -> tuple[np.ndarray, np.ndarray]:
    """Triangular mel filterbank over rfft bins.

    Returns (weights, center_freqs) where weights has shape
    (n_mels, n_fft//2 + 1) and center_freqs holds each triangle's peak
    frequency in Hz.
    """
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2)
    hz_points = np.asarray(mel_to_hz(mel_points))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)

    weights = np.zeros((n_mels, bin_freqs.size))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - left) / max(center - left, 1e-12)
        falling = (right - bin_freqs) / max(right - center, 1e-12)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
    return weights, hz_points[1:-1]


def log_mel(
    samples: np.ndarray,
    sample_rate: int,
    window_ms: float = 25.0,
    hop_ms: float = 10.0,
    n_mels: int = 80,
    floor: float = 1e-10,
) -> np.ndarray:
    """Compute a (T, n_mels) log-Mel matrix from a mono signal."""
    if sample_rate < 8000:
        raise InvalidInputError(f"sample_rate must be >= 8000, got {sample_rate}")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected 1-D signal, got shape {x.shape}")
    win = int(round(window_ms * sample_rate / 1000.0))
    hop = int(round(hop_ms * sample_rate / 1000.0))
    if x.size < win:
        raise DegenerateInputError(
            f"signal of {x.size} samples shorter than one {win}-sample window"
        )

    n_frames = 1 + (x.size - win) // hop
    n_fft = 1
    while n_fft < win:
        n_fft *= 2

    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hanning(win)[None, :]
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    weights, _ = mel_filterbank(sample_rate, n_fft, n_mels)
    energies = power @ weights.T
    return np.log(np.maximum(energies, floor))
