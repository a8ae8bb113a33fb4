"""
WAV input and MFCC extraction.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import soundfile as sf
from scipy.fft import dct, rfft
from scipy.signal import get_window

from .errors import ConfigurationError, FormatError, InputError
from .features import FeatureArchive, FeatureSequence, add_deltas, normalize
from .serialization import serializable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Signal:
    rate: int
    samples: np.ndarray


@serializable
@dataclass(frozen=True)
class MfccConfig:
    window_s: float = 0.025
    hop_s: float = 0.010
    n_mels: int = 24
    n_ceps: int = 13
    preemphasis: float = 0.97
    log_floor: float = 1e-10
    window: str = "hamming"

    def __post_init__(self):
        if self.window_s <= 0 or self.hop_s <= 0:
            raise ConfigurationError("Window and hop durations must be positive.")
        if not 1 <= self.n_ceps <= self.n_mels:
            raise ConfigurationError(
                f"Expected 1 <= n_ceps <= n_mels, received n_ceps={self.n_ceps}, n_mels={self.n_mels}."
            )


def _check_data_chunk(path):
    """
    Walks the RIFF chunks and verifies the data chunk holds the bytes its header declares.
    """
    with open(path, "rb") as fo:
        header = fo.read(12)
        if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
            raise FormatError(path, "header", "not a RIFF/WAVE file")
        while len(chunk := fo.read(8)) == 8:
            name, size = chunk[:4], struct.unpack("<I", chunk[4:])[0]
            if name == b"data":
                if len(fo.read(size)) < size:
                    raise FormatError(path, "data", "truncated data chunk")
                return
            fo.seek(size + (size % 2), 1)
    raise FormatError(path, "data", "missing data chunk")


def read_wav(path: Union[str, Path]) -> Signal:
    """
    Reads a mono 16-bit PCM WAV file. Samples are scaled by ``1/32768`` to ``[-1, 1)``.
    """
    try:
        info = sf.info(str(path))
    except RuntimeError as err:
        raise FormatError(path, "header", str(err))
    if info.format != "WAV":
        raise FormatError(path, "format", f"expected WAV, found {info.format}")
    if info.subtype != "PCM_16":
        raise FormatError(path, "bit depth", f"expected 16-bit PCM, found {info.subtype}")
    if info.channels != 1:
        raise FormatError(path, "channels", f"expected mono, found {info.channels} channels")
    _check_data_chunk(path)

    samples, rate = sf.read(str(path), dtype="int16", always_2d=False)
    return Signal(int(rate), samples.astype(np.float64) / 32768.0)


def hz_to_mel(freq):
    return 2595.0 * np.log10(1.0 + np.asarray(freq) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, rate: int) -> np.ndarray:
    """
    Triangular filters equally spaced on the mel scale between 0 Hz and Nyquist, as an ``(n_fft // 2 + 1, n_mels)`` matrix.
    """
    bin_freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(rate / 2.0), n_mels + 2))
    left, center, right = edges[:-2], edges[1:-1], edges[2:]
    rising = (bin_freqs[:, None] - left) / (center - left)
    falling = (right - bin_freqs[:, None]) / (right - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_count(n_samples: int, window: int, hop: int) -> int:
    return 1 + (n_samples - window) // hop


def compute_mfcc(
    signal: Signal,
    config: MfccConfig = MfccConfig(),
    utterance_id: str = "",
    speaker_id: str = "",
) -> FeatureSequence:
    window = int(round(config.window_s * signal.rate))
    hop = int(round(config.hop_s * signal.rate))
    samples = np.asarray(signal.samples, dtype=np.float64)
    if len(samples) < window:
        raise InputError(
            f"Signal of {len(samples)} samples is shorter than one {window}-sample window."
        )

    emphasized = np.concatenate(
        [samples[:1], samples[1:] - config.preemphasis * samples[:-1]]
    )
    n_frames = frame_count(len(samples), window, hop)
    frames = np.lib.stride_tricks.sliding_window_view(emphasized, window)[::hop][:n_frames]

    n_fft = 1 << (window - 1).bit_length()
    tapered = frames * get_window(config.window, window, fftbins=False)
    power = np.abs(rfft(tapered, n=n_fft, axis=1)) ** 2
    mel_energies = power @ mel_filterbank(config.n_mels, n_fft, signal.rate)
    log_mel = np.log(np.maximum(mel_energies, config.log_floor))
    ceps = dct(log_mel, type=2, norm="ortho", axis=1)[:, : config.n_ceps]

    return FeatureSequence(utterance_id, speaker_id, ceps, frame_period=config.hop_s)


def speaker_from_name(stem: str) -> str:
    """
    Speaker id of a ``<speaker>_<utterance>.wav`` file.
    """
    return stem.split("_", 1)[0]


def features_from_wav_dir(
    wav_dir: Union[str, Path],
    config: MfccConfig = MfccConfig(),
    deltas: bool = False,
    normalize_mode: str = "none",
    speaker_of: Optional[Callable[[str], str]] = None,
) -> FeatureArchive:
    """
    MFCC archive of every ``*.wav`` file in ``wav_dir``, sorted by file name. Utterance ids are the file stems.
    """
    speaker_of = speaker_of or speaker_from_name
    paths = sorted(Path(wav_dir).glob("*.wav"))
    if not paths:
        raise InputError(f"No *.wav files found in {wav_dir}.")
    archive = FeatureArchive()
    for path in paths:
        seq = compute_mfcc(read_wav(path), config, path.stem, speaker_of(path.stem))
        archive.add(add_deltas(seq) if deltas else seq)
    logger.info("Extracted features of %d files from %s.", len(archive), wav_dir)
    return normalize(archive, normalize_mode)
