"""Transmit baseband synthesis and the IQ file format.

The transmit signal is a repeating frame: a band-limited training sequence
followed by OFDM symbols carrying random QPSK payload. Only two properties of
the waveform matter downstream: it occupies the configured bandwidth, and its
autocorrelation is sharply peaked at lag zero so that cross-correlation
processing can discriminate delays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError

FORMAT_VERSION = 1

# Fraction of the nominal bandwidth kept as internal guard so that subcarrier
# mainlobes do not spill past +-bandwidth/2 (keeps out-of-band power >=30 dB
# down together with the per-block edge taper).
GUARD_FRACTION = 0.15


@dataclass
class FrameLayout:
    """Sample layout of one transmit frame."""

    training_len: int = 64
    payload_len: int = 1280
    n_subcarriers: int = 64
    cp_len: int = 16

    def __post_init__(self):
        for name in ("training_len", "payload_len", "n_subcarriers", "cp_len"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"frame field {name} must be positive")

    @property
    def symbol_len(self) -> int:
        return self.n_subcarriers + self.cp_len

    @property
    def frame_len(self) -> int:
        return self.training_len + self.payload_len


@dataclass
class TransmitConfig:
    sample_rate_hz: float
    duration_s: float
    bandwidth_hz: float
    frame: FrameLayout = field(default_factory=FrameLayout)
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ConfigurationError("sample rate and duration must be positive")
        if not 0 < self.bandwidth_hz <= self.sample_rate_hz:
            raise ConfigurationError(
                f"bandwidth {self.bandwidth_hz} Hz must be in (0, fs={self.sample_rate_hz}]"
            )
        n = self.duration_s * self.sample_rate_hz
        if abs(n - round(n)) > 1e-6 or round(n) < 1:
            raise ConfigurationError(
                f"duration*sample_rate = {n} is not a positive integer sample count"
            )

    @property
    def n_samples(self) -> int:
        return round(self.duration_s * self.sample_rate_hz)


@dataclass
class BasebandBuffer:
    """Uniformly sampled complex baseband signal."""

    samples: np.ndarray
    sample_rate_hz: float
    epoch_s: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.size < 1:
            raise ConfigurationError("baseband buffer must hold at least one sample")
        if self.sample_rate_hz <= 0:
            raise ConfigurationError("sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


def _edge_taper(n: int, ramp: int) -> np.ndarray:
    """Raised-cosine ramps on both ends of an n-sample block."""
    w = np.ones(n)
    ramp = min(ramp, n // 2)
    if ramp > 0:
        r = np.sin(np.pi / 2 * (np.arange(ramp) + 0.5) / ramp) ** 2
        w[:ramp] = r
        w[-ramp:] = r[::-1]
    return w


def _active_bins(n_fft: int, sample_rate_hz: float, bandwidth_hz: float) -> np.ndarray:
    """FFT bin indices inside the occupied band (DC excluded)."""
    spacing = sample_rate_hz / n_fft
    k_max = int(np.floor((bandwidth_hz / 2) * (1.0 - GUARD_FRACTION) / spacing))
    k_max = min(k_max, n_fft // 2 - 1)
    if k_max < 1:
        raise ConfigurationError(
            "bandwidth too narrow for the configured subcarrier count"
        )
    return np.concatenate([np.arange(1, k_max + 1), np.arange(n_fft - k_max, n_fft)])


def gen_transmit_signal(cfg: TransmitConfig) -> BasebandBuffer:
    """Generate the transmit baseband signal.

    Deterministic in cfg.rng_seed. The result has exactly unit average power
    and its spectrum is confined to +-bandwidth/2.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    fs = cfg.sample_rate_hz
    lay = cfg.frame
    n_total = cfg.n_samples

    # Training block: constant-magnitude random-phase spectrum over the active
    # band; its flat in-band spectrum gives the lag-zero correlation peak.
    t_bins = _active_bins(lay.training_len, fs, cfg.bandwidth_hz)
    spec = np.zeros(lay.training_len, dtype=np.complex128)
    spec[t_bins] = np.exp(2j * np.pi * rng.random(t_bins.size))
    training = np.fft.ifft(spec) * _edge_taper(lay.training_len, lay.cp_len)

    bins = _active_bins(lay.n_subcarriers, fs, cfg.bandwidth_hz)
    n_sym = int(np.ceil(lay.payload_len / lay.symbol_len))
    n_frames = int(np.ceil(n_total / lay.frame_len))

    bits_i = rng.integers(0, 2, size=(n_frames * n_sym, bins.size))
    bits_q = rng.integers(0, 2, size=(n_frames * n_sym, bins.size))
    qpsk = ((2 * bits_i - 1) + 1j * (2 * bits_q - 1)) / np.sqrt(2)

    spectra = np.zeros((n_frames * n_sym, lay.n_subcarriers), dtype=np.complex128)
    spectra[:, bins] = qpsk
    bodies = np.fft.ifft(spectra, axis=1)
    symbols = np.concatenate([bodies[:, -lay.cp_len:], bodies], axis=1)
    symbols *= _edge_taper(lay.symbol_len, lay.cp_len)

    payload = symbols.reshape(n_frames, n_sym * lay.symbol_len)[:, : lay.payload_len]
    frames = np.concatenate([np.tile(training, (n_frames, 1)), payload], axis=1)
    samples = frames.reshape(-1)[:n_total]

    samples = samples / np.sqrt(np.mean(np.abs(samples) ** 2))
    return BasebandBuffer(samples=samples, sample_rate_hz=fs, epoch_s=0.0)


def gen_test_tone(fs: float, duration_s: float, freq_hz: float) -> BasebandBuffer:
    """Unit-magnitude complex tone exp(j*2*pi*f*n/fs); test stimulus."""
    if fs <= 0 or duration_s <= 0:
        raise ConfigurationError("sample rate and duration must be positive")
    if abs(freq_hz) >= fs / 2:
        raise ConfigurationError(
            f"tone at {freq_hz} Hz aliases at sample rate {fs} Hz"
        )
    n = round(duration_s * fs)
    samples = np.exp(2j * np.pi * freq_hz * np.arange(n) / fs)
    return BasebandBuffer(samples=samples, sample_rate_hz=fs, epoch_s=0.0)


# ---------------------------------------------------------------------------
# IQ file format: little-endian interleaved float32 I/Q pairs plus a JSON
# sidecar carrying {sample_rate_hz, epoch_s, role, fc_hz, ...}.
# ---------------------------------------------------------------------------

def sidecar_path(iq_path: str | Path) -> Path:
    return Path(iq_path).with_suffix(".json")


def write_iq(buf: BasebandBuffer, iq_path: str | Path, role: str,
             fc_hz: float, extra: dict | None = None) -> None:
    iq_path = Path(iq_path)
    interleaved = np.empty(2 * buf.samples.size, dtype="<f4")
    interleaved[0::2] = buf.samples.real
    interleaved[1::2] = buf.samples.imag
    iq_path.write_bytes(interleaved.tobytes())
    meta = {
        "format_version": FORMAT_VERSION,
        "sample_rate_hz": buf.sample_rate_hz,
        "epoch_s": buf.epoch_s,
        "role": role,
        "fc_hz": fc_hz,
    }
    if extra:
        meta.update(extra)
    sidecar_path(iq_path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_iq(iq_path: str | Path) -> tuple[BasebandBuffer, dict]:
    """Load an IQ file and its sidecar. Raises ParseError on malformed input."""
    iq_path = Path(iq_path)
    if not iq_path.exists():
        raise ParseError(f"IQ file not found: {iq_path}")
    side = sidecar_path(iq_path)
    if not side.exists():
        raise ParseError(f"sidecar not found for {iq_path}: expected {side}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"sidecar {side} is not valid JSON: {e}") from e
    for fld in ("sample_rate_hz", "epoch_s", "role", "fc_hz"):
        if fld not in meta:
            raise ParseError(f"sidecar {side} missing required field '{fld}'")

    raw = iq_path.read_bytes()
    if len(raw) == 0 or len(raw) % 8 != 0:
        raise ParseError(
            f"truncated IQ file {iq_path}: {len(raw)} bytes is not a positive "
            f"multiple of 8 (first incomplete pair at byte offset {len(raw) - len(raw) % 8})"
        )
    interleaved = np.frombuffer(raw, dtype="<f4")
    samples = interleaved[0::2].astype(np.float64) + 1j * interleaved[1::2].astype(np.float64)
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0])
        raise ParseError(f"IQ file {iq_path} holds a non-finite sample at index {bad}")
    buf = BasebandBuffer(samples=samples, sample_rate_hz=float(meta["sample_rate_hz"]),
                         epoch_s=float(meta["epoch_s"]))
    return buf, meta
