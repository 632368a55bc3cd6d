"""Sliding-window cross-ambiguity Doppler estimation and detection.

Each sensing instance correlates one surveillance window against delayed,
Doppler-shifted copies of the reference: a target echo carrying the phase
history exp(-j*2*pi*f*t) peaks at the grid frequency f. An adaptive threshold
built from neighboring Doppler cells gates the detection, and the strongest
qualifying cell is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clutter import ClutterConfig, ls_clutter_cancel
from .errors import ConfigurationError, ContractError, ParseError
from .waveform import FORMAT_VERSION, BasebandBuffer


@dataclass
class SensingConfig:
    window_len_samples: int
    hop_samples: int
    doppler_max_hz: float = 100.0
    doppler_oversample: int = 1
    delay_search_samples: int = 0
    gamma: float = 3.0
    half_train_cells: int = 25

    def __post_init__(self):
        if self.window_len_samples < 1 or self.hop_samples < 1:
            raise ConfigurationError("window and hop lengths must be positive")
        if self.hop_samples > self.window_len_samples:
            raise ConfigurationError("hop must not exceed the window length")
        if self.doppler_oversample < 1:
            raise ConfigurationError("doppler_oversample must be >= 1")
        if self.delay_search_samples < 0:
            raise ConfigurationError("delay search range must be >= 0")
        if self.gamma <= 1:
            raise ConfigurationError("detector gamma must be > 1")
        if self.half_train_cells < 1:
            raise ConfigurationError("half_train_cells must be >= 1")

    def doppler_resolution_hz(self, fs: float) -> float:
        """Nominal resolution 1/(Ts*Nw)."""
        return fs / self.window_len_samples


def default_sensing_config(fs: float, window_s: float = 0.1, hop_s: float = 0.01,
                           **kwargs) -> SensingConfig:
    return SensingConfig(window_len_samples=round(window_s * fs),
                         hop_samples=round(hop_s * fs), **kwargs)


def doppler_grid(cfg: SensingConfig, fs: float) -> np.ndarray:
    """Symmetric frequency grid with step resolution/oversample."""
    df = cfg.doppler_resolution_hz(fs)
    if cfg.doppler_max_hz < df * (1 - 1e-12):
        raise ConfigurationError(
            f"doppler_max {cfg.doppler_max_hz} Hz is below the resolution {df} Hz"
        )
    step = df / cfg.doppler_oversample
    half = int(math.floor(cfg.doppler_max_hz / step + 1e-9))
    return np.arange(-half, half + 1) * step


@dataclass
class CafMap:
    """Cross-ambiguity magnitudes over (sensing instance, Doppler bin)."""

    sensing_times_s: np.ndarray
    doppler_bins_hz: np.ndarray
    magnitudes: np.ndarray
    best_delay_samples: np.ndarray
    window_len_samples: int
    hop_samples: int
    sample_rate_hz: float

    def __post_init__(self):
        k, b = len(self.sensing_times_s), len(self.doppler_bins_hz)
        if self.magnitudes.shape != (k, b):
            raise ContractError(
                f"magnitude matrix {self.magnitudes.shape} does not match "
                f"{k} instances x {b} bins"
            )
        if np.any(self.magnitudes < 0) or not np.all(np.isfinite(self.magnitudes)):
            raise ContractError("CAF magnitudes must be finite and nonnegative")


@dataclass
class DopplerTrack:
    """Per-instance detected Doppler; NaN marks a missing detection."""

    sensing_times_s: np.ndarray
    doppler_hz: np.ndarray

    def __post_init__(self):
        self.sensing_times_s = np.asarray(self.sensing_times_s, dtype=np.float64)
        self.doppler_hz = np.asarray(self.doppler_hz, dtype=np.float64)
        if self.sensing_times_s.shape != self.doppler_hz.shape:
            raise ContractError("track times and values must match in length")
        if self.sensing_times_s.size > 1 and np.any(np.diff(self.sensing_times_s) <= 0):
            raise ContractError("track times must be strictly increasing")


def compute_caf_window(surv_win: np.ndarray, ref_hist: np.ndarray,
                       cfg: SensingConfig, fs: float):
    """CAF magnitudes of one window over the Doppler grid.

    ref_hist carries delay_search_samples of history ahead of the window, so
    ref_hist[delay_search_samples:] is sample-aligned with surv_win. For each
    candidate delay tau the product z[n] = surv[n] * conj(ref[n - tau]) is
    formed and its correlation against exp(-j*2*pi*f*n*Ts) is evaluated at
    every grid frequency via a zero-padded FFT, which reproduces the direct
    per-bin sum exactly. Returns the per-frequency maximum over tau and the
    delay at the global peak.
    """
    n_w = cfg.window_len_samples
    if surv_win.size != n_w or ref_hist.size != n_w + cfg.delay_search_samples:
        raise ContractError("window and reference history sizes do not match config")
    grid = doppler_grid(cfg, fs)
    half = grid.size // 2
    m_fft = n_w * cfg.doppler_oversample
    bin_idx = (-np.arange(-half, half + 1)) % m_fft

    rows = np.empty((cfg.delay_search_samples + 1, grid.size))
    for tau in range(cfg.delay_search_samples + 1):
        start = cfg.delay_search_samples - tau
        z = surv_win * np.conj(ref_hist[start:start + n_w])
        spectrum = np.fft.fft(z, n=m_fft)
        rows[tau] = np.abs(spectrum[bin_idx])
    row = rows.max(axis=0)
    best_delay = int(np.unravel_index(np.argmax(rows), rows.shape)[0])
    return row, best_delay


def caf_direct(surv_win: np.ndarray, ref_hist: np.ndarray,
               cfg: SensingConfig, fs: float, k: int = 0):
    """Literal per-bin evaluation of the window CAF; the test oracle.

    Correlates against the delayed, Doppler-shifted reference sample by
    sample, using absolute sample indices n = k*hop + 0..Nw-1 for the phase
    term (the per-window index offset only rotates each bin by a unit-modulus
    factor, so magnitudes agree with the accelerated path).
    """
    n_w = cfg.window_len_samples
    grid = doppler_grid(cfg, fs)
    n_abs = k * cfg.hop_samples + np.arange(n_w)
    rows = np.empty((cfg.delay_search_samples + 1, grid.size))
    for tau in range(cfg.delay_search_samples + 1):
        start = cfg.delay_search_samples - tau
        z = surv_win * np.conj(ref_hist[start:start + n_w])
        for i, f in enumerate(grid):
            shifted = np.exp(-2j * np.pi * f * n_abs / fs)
            rows[tau, i] = np.abs(np.sum(z * np.conj(shifted)))
    row = rows.max(axis=0)
    best_delay = int(np.unravel_index(np.argmax(rows), rows.shape)[0])
    return row, best_delay


def num_windows(n_samples: int, cfg: SensingConfig) -> int:
    if n_samples < cfg.window_len_samples:
        raise ContractError(
            f"buffer of {n_samples} samples is shorter than one "
            f"{cfg.window_len_samples}-sample window"
        )
    return (n_samples - cfg.window_len_samples) // cfg.hop_samples + 1


def caf_spectrogram(surv: BasebandBuffer, ref: BasebandBuffer, cfg: SensingConfig,
                    clutter_cfg: ClutterConfig | None = None) -> CafMap:
    """Sliding-window CAF over a whole capture.

    When clutter_cfg is given, least-squares clutter cancellation runs on each
    window before correlation; pass None if the surveillance buffer is already
    cancelled.
    """
    if surv.sample_rate_hz != ref.sample_rate_hz:
        raise ContractError("surveillance and reference sample rates differ")
    if surv.samples.size != ref.samples.size:
        raise ContractError("surveillance and reference buffers differ in length")
    fs = surv.sample_rate_hz
    n_w, hop, d = cfg.window_len_samples, cfg.hop_samples, cfg.delay_search_samples
    k_count = num_windows(surv.samples.size, cfg)
    grid = doppler_grid(cfg, fs)

    mags = np.empty((k_count, grid.size))
    delays = np.empty(k_count, dtype=np.int64)
    for k in range(k_count):
        lo = k * hop
        surv_win = surv.samples[lo:lo + n_w]
        ref_win = ref.samples[lo:lo + n_w]
        if clutter_cfg is not None:
            surv_win = ls_clutter_cancel(surv_win, ref_win, clutter_cfg)
        hist_lo = lo - d
        if hist_lo >= 0:
            ref_hist = ref.samples[hist_lo:lo + n_w]
        else:  # only possible at k=0 with a delay search wider than the epoch
            ref_hist = np.concatenate(
                [np.zeros(-hist_lo, dtype=np.complex128), ref.samples[:lo + n_w]])
        mags[k], delays[k] = compute_caf_window(surv_win, ref_hist, cfg, fs)

    times = surv.epoch_s + np.arange(k_count) * hop / fs
    return CafMap(sensing_times_s=times, doppler_bins_hz=grid, magnitudes=mags,
                  best_delay_samples=delays, window_len_samples=n_w,
                  hop_samples=hop, sample_rate_hz=fs)


def detection_threshold(row: np.ndarray, cfg: SensingConfig) -> np.ndarray:
    """Adaptive threshold beta per cell: gamma times the mean of training
    cells spaced one resolution step apart, p = -W..W, the cell under test
    included; neighborhoods truncated at the grid edge are renormalized by
    the actual cell count."""
    row = np.asarray(row, dtype=np.float64)
    n = row.size
    stride = cfg.doppler_oversample  # training cells sit one resolution apart
    sums = np.zeros(n)
    counts = np.zeros(n)
    for p in range(-cfg.half_train_cells, cfg.half_train_cells + 1):
        off = p * stride
        lo, hi = max(0, -off), min(n, n - off)
        if lo >= hi:
            continue
        sums[lo:hi] += row[lo + off:hi + off]
        counts[lo:hi] += 1
    return cfg.gamma * sums / counts


def detect_doppler(row: np.ndarray, bins_hz: np.ndarray, cfg: SensingConfig) -> float:
    """Pick the strongest Doppler cell that clears its adaptive threshold.

    Returns the frequency of that cell, or NaN when no cell qualifies.
    Scaling the row by any positive factor leaves the outcome unchanged.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.size < 2:
        raise ContractError("detection needs at least two Doppler cells")
    if row.size != len(bins_hz):
        raise ContractError("row and frequency grid lengths differ")
    beta = detection_threshold(row, cfg)
    qualifying = np.flatnonzero(row >= beta)
    if qualifying.size == 0:
        return math.nan
    best = qualifying[np.argmax(row[qualifying])]
    return float(bins_hz[best])


def doppler_track_from_caf(caf: CafMap, cfg: SensingConfig) -> DopplerTrack:
    """Run detection on every CAF row.

    Estimates are timestamped at the window centers: a window's Doppler
    estimate reflects the motion over the whole integration interval, so the
    center is the self-consistent attribution (the raw CAF rows keep their
    window-start stamps).
    """
    values = np.array([detect_doppler(r, caf.doppler_bins_hz, cfg)
                       for r in caf.magnitudes])
    center_shift = caf.window_len_samples / caf.sample_rate_hz / 2
    return DopplerTrack(sensing_times_s=caf.sensing_times_s + center_shift,
                        doppler_hz=values)


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------

_DB_FLOOR = 1e-300


def caf_to_csv(caf: CafMap, path: str | Path) -> None:
    """Long-format rows (time_s, doppler_hz, magnitude_db)."""
    with open(path, "w") as fh:
        fh.write(f"# format_version={FORMAT_VERSION}\n")
        fh.write("time_s,doppler_hz,magnitude_db\n")
        for k, t in enumerate(caf.sensing_times_s):
            for f, m in zip(caf.doppler_bins_hz, caf.magnitudes[k]):
                db = 20 * math.log10(max(m, _DB_FLOOR))
                fh.write(f"{t:.6f},{f:.3f},{db:.4f}\n")


def caf_from_csv(path: str | Path):
    """Read back (times, bins, magnitude_db matrix) from a CAF CSV."""
    times, bins, vals = _read_csv(path, ("time_s", "doppler_hz", "magnitude_db"))
    u_times = np.unique(times)
    u_bins = np.unique(bins)
    mat = np.full((u_times.size, u_bins.size), np.nan)
    ti = np.searchsorted(u_times, times)
    bi = np.searchsorted(u_bins, bins)
    mat[ti, bi] = vals
    return u_times, u_bins, mat


def track_to_csv(track: DopplerTrack, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# format_version={FORMAT_VERSION}\n")
        fh.write("time_s,doppler_hz\n")
        for t, f in zip(track.sensing_times_s, track.doppler_hz):
            fh.write(f"{t:.6f},{f:.6f}\n")


def track_from_csv(path: str | Path) -> DopplerTrack:
    times, values = _read_csv(path, ("time_s", "doppler_hz"))
    return DopplerTrack(sensing_times_s=times, doppler_hz=values)


def _read_csv(path: str | Path, expected_columns: tuple) -> list[np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"CSV artifact not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError(f"CSV {path} holds no data")
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != expected_columns:
        raise ParseError(
            f"CSV {path} header {header} does not match expected {expected_columns}"
        )
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    except ValueError as e:
        raise ParseError(f"CSV {path} holds a non-numeric field: {e}") from e
    if data.ndim != 2 or data.shape[1] != len(expected_columns):
        raise ParseError(f"CSV {path} rows do not match the {len(expected_columns)}-column header")
    return [data[:, i] for i in range(data.shape[1])]
