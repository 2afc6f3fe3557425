"""Deterministic audio featurization: resampling, frame windows, MFCC.

The featurizer is a pure function of (samples, config): pre-emphasis, Hann
STFT over a fixed number of hops, power spectrum, triangular mel filterbank,
log with an additive floor, then an orthonormal DCT-II keeping the first
``n_mfcc`` coefficients.
"""

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np
import scipy.io.wavfile

DEFAULT_SAMPLE_RATE = 44100
DEFAULT_FPS = 25
DEFAULT_WINDOW_SECONDS = 0.2
DEFAULT_N_MFCC = 20
DEFAULT_N_FFT_FRAMES = 16
DEFAULT_MEL_BANDS = 40
DEFAULT_LOG_FLOOR = 1e-10
DEFAULT_PRE_EMPHASIS = 0.97


@dataclass
class AudioTrack:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("audio track must be mono (1-D samples)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass
class FeatureConfig:
    sample_rate: int = DEFAULT_SAMPLE_RATE
    window_seconds: float = DEFAULT_WINDOW_SECONDS
    fps: float = DEFAULT_FPS
    n_mfcc: int = DEFAULT_N_MFCC
    n_fft_frames: int = DEFAULT_N_FFT_FRAMES
    mel_bands: int = DEFAULT_MEL_BANDS
    log_floor: float = DEFAULT_LOG_FLOOR
    pre_emphasis: float = DEFAULT_PRE_EMPHASIS
    causal: bool = False

    def __post_init__(self):
        if self.window_seconds * self.sample_rate < self.n_fft_frames:
            raise ValueError("window too short for the requested hop count")
        if self.n_mfcc > self.mel_bands:
            raise ValueError("n_mfcc cannot exceed mel_bands")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def window_length(self):
        return int(round(self.window_seconds * self.sample_rate))

    @property
    def hop_length(self):
        return self.window_length // self.n_fft_frames

    @property
    def frame_length(self):
        return 2 * self.hop_length

    @property
    def n_fft(self):
        n = 1
        while n < self.frame_length:
            n *= 2
        return n

    @property
    def config_id(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class MfccFeature:
    values: np.ndarray
    config_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("mfcc values must be a (time, coefficient) matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite mfcc values")


def load_wav(path):
    """Read a mono PCM WAV (16-bit int or 32-bit float) as an AudioTrack."""
    rate, data = scipy.io.wavfile.read(path)
    if data.ndim != 1:
        raise ValueError("expected mono WAV")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return AudioTrack(samples, int(rate))


def save_wav(path, track):
    scipy.io.wavfile.write(path, track.sample_rate, track.samples.astype(np.float32))


def resample(track, target_rate):
    """Linear-interpolation resampling; duration preserved within one sample."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if track.samples.size == 0:
        raise ValueError("empty audio")
    if track.sample_rate == target_rate:
        return AudioTrack(track.samples.copy(), target_rate)
    ratio = target_rate / track.sample_rate
    n_out = int(round(track.samples.size * ratio))
    src_pos = np.arange(n_out) * (track.sample_rate / target_rate)
    out = np.interp(src_pos, np.arange(track.samples.size), track.samples)
    return AudioTrack(out, target_rate)


def window_for_frame(track, frame_index, cfg):
    """Zero-padded audio window for one video frame.

    Centered on the frame timestamp by default; in causal mode the window
    ends at the frame timestamp (for live streaming).
    """
    if frame_index < 0:
        raise ValueError("frame_index must be non-negative")
    length = cfg.window_length
    center = int(round(frame_index / cfg.fps * cfg.sample_rate))
    start = center - length if cfg.causal else center - length // 2
    out = np.zeros(length, dtype=np.float64)
    lo = max(start, 0)
    hi = min(start + length, track.samples.size)
    if hi > lo:
        out[lo - start : hi - start] = track.samples[lo:hi]
    return AudioTrack(out, cfg.sample_rate)


def mel_scale(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def mel_inverse(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_filterbank(cfg):
    """Triangular filters over rfft bins, (mel_bands, n_fft//2 + 1)."""
    n_bins = cfg.n_fft // 2 + 1
    freqs = np.arange(n_bins) * (cfg.sample_rate / cfg.n_fft)
    edges = mel_inverse(np.linspace(0.0, mel_scale(cfg.sample_rate / 2.0), cfg.mel_bands + 2))
    bank = np.zeros((cfg.mel_bands, n_bins))
    for m in range(cfg.mel_bands):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def dct_matrix(n_in, n_out):
    """Orthonormal DCT-II basis, (n_out, n_in)."""
    n = np.arange(n_in)
    k = np.arange(n_out).reshape(-1, 1)
    mat = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in))
    mat *= np.sqrt(2.0 / n_in)
    mat[0] *= np.sqrt(0.5)
    return mat


def hann_window(length):
    # symmetric Hann, matching np.hanning
    n = np.arange(length)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / (length - 1)))


def extract_mfcc(window, cfg):
    """MFCC matrix of shape (n_fft_frames, n_mfcc) for one frame window."""
    x = np.asarray(window.samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite audio")
    if x.size != cfg.window_length:
        raise ValueError(f"window length {x.size} does not match config ({cfg.window_length})")

    emphasized = np.empty_like(x)
    emphasized[0] = x[0]
    emphasized[1:] = x[1:] - cfg.pre_emphasis * x[:-1]

    hop, flen = cfg.hop_length, cfg.frame_length
    padded = np.zeros((cfg.n_fft_frames - 1) * hop + flen, dtype=np.float64)
    padded[: emphasized.size] = emphasized
    idx = np.arange(flen) + hop * np.arange(cfg.n_fft_frames).reshape(-1, 1)
    frames = padded[idx] * hann_window(flen)

    spectrum = np.fft.rfft(frames, n=cfg.n_fft, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    mel_power = power @ mel_filterbank(cfg).T
    log_mel = np.log(mel_power + cfg.log_floor)
    coeffs = log_mel @ dct_matrix(cfg.mel_bands, cfg.n_mfcc).T
    return MfccFeature(coeffs, cfg.config_id)
