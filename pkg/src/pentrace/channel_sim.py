"""Forward channel model for the two-receiver passive sensing geometry.

Reference channels carry a delayed copy of the transmit signal; surveillance
channels carry the target echo (delay and accumulated Doppler phase derived
from the ground-truth track) plus static clutter copies and noise. Receiver 1
sits at the origin, receiver 2 at a configured position, and the transmitter
(real, or the virtual mirror image in a reflected-illumination scene) on the
x axis at (d, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, DegenerateGeometryError
from .waveform import BasebandBuffer

SPEED_OF_LIGHT = 299_792_458.0

MAX_SYNC_OFFSET_S = 0.01   # receiver pair time-sync budget
MAX_TARGET_SPEED = 1.0     # handwriting-scale kinematic sanity bound, m/s


@dataclass
class Geometry:
    """Node placement. Receiver 1 is pinned at the origin."""

    tx_pos: tuple[float, float] = (2.5, 0.0)
    rx2_pos: tuple[float, float] = (1.0, 0.0)
    fc_hz: float = 60e9
    c_mps: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.fc_hz <= 0 or self.c_mps <= 0:
            raise ConfigurationError("carrier frequency and c must be positive")
        if tuple(self.rx2_pos) == (0.0, 0.0):
            raise ConfigurationError("receiver 2 must not sit on receiver 1")
        # tx colocated with rx1 is allowed: it is the monostatic limit and a
        # useful analytic test case.

    @property
    def rx1_pos(self) -> tuple[float, float]:
        return (0.0, 0.0)

    def rx_pos(self, rx: int) -> tuple[float, float]:
        if rx == 1:
            return self.rx1_pos
        if rx == 2:
            return tuple(self.rx2_pos)
        raise ContractError(f"receiver id must be 1 or 2, got {rx}")


@dataclass
class PathSpec:
    """One propagation path: complex gain and absolute delay."""

    gain: complex
    delay_s: float = 0.0

    def __post_init__(self):
        if self.delay_s < 0:
            raise ConfigurationError("path delay must be nonnegative")
        if not np.isfinite(self.gain):
            raise ConfigurationError("path gain must be finite")


@dataclass
class TargetTrack:
    """Ground-truth target positions sampled on the sensing-time grid."""

    times_s: np.ndarray
    positions_m: np.ndarray

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=np.float64)
        self.positions_m = np.asarray(self.positions_m, dtype=np.float64)
        if self.times_s.ndim != 1 or self.positions_m.shape != (self.times_s.size, 2):
            raise ConfigurationError("track needs times (N,) and positions (N, 2)")
        if self.times_s.size < 1:
            raise ConfigurationError("track must hold at least one sample")
        if not (np.all(np.isfinite(self.times_s)) and np.all(np.isfinite(self.positions_m))):
            raise ConfigurationError("track holds non-finite values")
        if self.times_s.size > 1:
            dt = np.diff(self.times_s)
            if np.any(dt <= 0):
                raise ConfigurationError("track times must be strictly increasing")
            speeds = np.linalg.norm(np.diff(self.positions_m, axis=0), axis=1) / dt
            if speeds.max(initial=0.0) > MAX_TARGET_SPEED * (1 + 1e-9):
                raise ConfigurationError(
                    f"track implies speed {speeds.max():.3f} m/s beyond the "
                    f"{MAX_TARGET_SPEED} m/s handwriting bound"
                )

    @property
    def duration_s(self) -> float:
        return float(self.times_s[-1] - self.times_s[0])


@dataclass
class ChannelScene:
    """Full channel description for one capture."""

    geometry: Geometry = field(default_factory=Geometry)
    reference_paths: dict = field(default_factory=lambda: {1: PathSpec(1.0), 2: PathSpec(1.0)})
    static_paths: dict = field(default_factory=lambda: {1: [], 2: []})
    target_gain: dict = field(default_factory=lambda: {1: 0.316 + 0j, 2: 0.316 + 0j})
    noise_power: dict = field(default_factory=lambda: {"reference": 1e-3, "surveillance": 1e-3})
    rx2_sync_offset_s: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if abs(self.rx2_sync_offset_s) > MAX_SYNC_OFFSET_S + 1e-12:
            raise ConfigurationError(
                f"|rx2_sync_offset_s| must be <= {MAX_SYNC_OFFSET_S} s"
            )
        for k, v in self.noise_power.items():
            if v < 0:
                raise ConfigurationError(f"noise power '{k}' must be >= 0")


def bistatic_truth(track: TargetTrack, geom: Geometry, rx: int):
    """Ground-truth bistatic range and Doppler along a track.

    Range is |p - tx| + |p - rx|; Doppler is -(fc/c) * d(range)/dt estimated
    by central finite differences on the range sequence (one-sided at the
    ends). This finite-difference route is deliberately independent of the
    closed-form motion model and serves as its oracle.
    """
    tx = np.asarray(geom.tx_pos, dtype=np.float64)
    rxp = np.asarray(geom.rx_pos(rx), dtype=np.float64)
    p = track.positions_m
    d_tx = np.linalg.norm(p - tx, axis=1)
    d_rx = np.linalg.norm(p - rxp, axis=1)
    if d_tx.min() == 0.0 or d_rx.min() == 0.0:
        raise DegenerateGeometryError("target coincides with a node position")
    ranges = d_tx + d_rx
    if track.times_s.size == 1:
        dopplers = np.zeros(1)
    else:
        dopplers = -(geom.fc_hz / geom.c_mps) * np.gradient(ranges, track.times_s)
    return ranges, dopplers


def _delayed(s: np.ndarray, delay_samples: int) -> np.ndarray:
    if delay_samples == 0:
        return s.copy()
    out = np.zeros_like(s)
    out[delay_samples:] = s[:-delay_samples]
    return out


def _content_shift(y: np.ndarray, shift: int) -> np.ndarray:
    """Advance (shift>0) or retard buffer content, zero-filling the gap."""
    if shift == 0:
        return y
    out = np.zeros_like(y)
    if shift > 0:
        out[:-shift] = y[shift:]
    else:
        out[-shift:] = y[:shift]
    return out


def _noise(rng: np.random.Generator, n: int, power: float) -> np.ndarray:
    if power == 0.0:
        return np.zeros(n, dtype=np.complex128)
    scale = np.sqrt(power / 2)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def _rx2_shift_samples(scene: ChannelScene, fs: float) -> int:
    # Positive offset: rx2's ADC started late while its clock still claims
    # epoch 0, so sample n holds the field at true time n*Ts + offset.
    return round(scene.rx2_sync_offset_s * fs)


def simulate_reference(scene: ChannelScene, s: BasebandBuffer, rx: int) -> BasebandBuffer:
    """Reference-channel capture: gain * delayed(s) + white noise."""
    path = scene.reference_paths[rx]
    fs = s.sample_rate_hz
    d = round(path.delay_s * fs)
    if d >= s.samples.size:
        raise ConfigurationError(
            f"reference delay {path.delay_s} s exceeds the {s.duration_s} s buffer"
        )
    clean = complex(path.gain) * _delayed(s.samples, d)
    if rx == 2:
        clean = _content_shift(clean, _rx2_shift_samples(scene, fs))
    rng = np.random.default_rng([scene.rng_seed, rx, 0])
    y = clean + _noise(rng, clean.size, scene.noise_power["reference"])
    return BasebandBuffer(samples=y, sample_rate_hz=fs, epoch_s=0.0)


def simulate_surveillance(scene: ChannelScene, s: BasebandBuffer,
                          track: TargetTrack, rx: int) -> BasebandBuffer:
    """Surveillance-channel capture: target echo + static clutter + noise.

    The echo is gain * s(t - tau(t)) * exp(j*theta(t)) with tau the bistatic
    delay quantized to integer samples and theta accumulated per sample as
    theta[n+1] = theta[n] - 2*pi*f_d(n*Ts)*Ts, where f_d is the ground-truth
    bistatic Doppler linearly interpolated between track samples. For constant
    f_d this reduces exactly to a multiplication by exp(-j*2*pi*f_d*t).
    """
    fs = s.sample_rate_hz
    n = s.samples.size
    geom = scene.geometry
    t = np.arange(n) / fs

    ranges_k, dopplers_k = bistatic_truth(track, geom, rx)
    range_n = np.interp(t, track.times_s, ranges_k)
    doppler_n = np.interp(t, track.times_s, dopplers_k)

    delay_n = np.round(range_n / geom.c_mps * fs).astype(np.int64)
    if delay_n.max() >= n:
        raise ConfigurationError("target bistatic delay exceeds the buffer")
    idx = np.arange(n) - delay_n
    echo_base = np.where(idx >= 0, s.samples[np.maximum(idx, 0)], 0.0)

    theta = np.empty(n)
    theta[0] = 0.0
    np.cumsum(-2 * np.pi * doppler_n[:-1] / fs, out=theta[1:])
    echo = complex(scene.target_gain[rx]) * echo_base * np.exp(1j * theta)

    clutter = np.zeros(n, dtype=np.complex128)
    for path in scene.static_paths[rx]:
        d = round(path.delay_s * fs)
        if d >= n:
            raise ConfigurationError(
                f"static path delay {path.delay_s} s exceeds the buffer"
            )
        clutter += complex(path.gain) * _delayed(s.samples, d)

    clean = echo + clutter
    if rx == 2:
        clean = _content_shift(clean, _rx2_shift_samples(scene, fs))
    rng = np.random.default_rng([scene.rng_seed, rx, 1])
    y = clean + _noise(rng, n, scene.noise_power["surveillance"])
    return BasebandBuffer(samples=y, sample_rate_hz=fs, epoch_s=0.0)


# ---------------------------------------------------------------------------
# Scene <-> JSON dictionaries (complex gains as [re, im] pairs)
# ---------------------------------------------------------------------------

def _gain_pair(g: complex) -> list[float]:
    g = complex(g)
    return [g.real, g.imag]


def _path_to_dict(p: PathSpec) -> dict:
    return {"gain": _gain_pair(p.gain), "delay_s": p.delay_s}


def _path_from_dict(d: dict) -> PathSpec:
    return PathSpec(gain=complex(d["gain"][0], d["gain"][1]), delay_s=float(d["delay_s"]))


def scene_to_dict(scene: ChannelScene) -> dict:
    g = scene.geometry
    return {
        "geometry": {
            "tx_pos": list(g.tx_pos),
            "rx2_pos": list(g.rx2_pos),
            "fc_hz": g.fc_hz,
            "c_mps": g.c_mps,
        },
        "reference_paths": {
            "rx1": _path_to_dict(scene.reference_paths[1]),
            "rx2": _path_to_dict(scene.reference_paths[2]),
        },
        "static_paths": {
            "rx1": [_path_to_dict(p) for p in scene.static_paths[1]],
            "rx2": [_path_to_dict(p) for p in scene.static_paths[2]],
        },
        "target_gain": {
            "rx1": _gain_pair(scene.target_gain[1]),
            "rx2": _gain_pair(scene.target_gain[2]),
        },
        "noise_power": dict(scene.noise_power),
        "rx2_sync_offset_s": scene.rx2_sync_offset_s,
        "rng_seed": scene.rng_seed,
    }


def scene_from_dict(d: dict) -> ChannelScene:
    try:
        geom = Geometry(
            tx_pos=tuple(d["geometry"]["tx_pos"]),
            rx2_pos=tuple(d["geometry"]["rx2_pos"]),
            fc_hz=float(d["geometry"]["fc_hz"]),
            c_mps=float(d["geometry"].get("c_mps", SPEED_OF_LIGHT)),
        )
        return ChannelScene(
            geometry=geom,
            reference_paths={
                1: _path_from_dict(d["reference_paths"]["rx1"]),
                2: _path_from_dict(d["reference_paths"]["rx2"]),
            },
            static_paths={
                1: [_path_from_dict(p) for p in d["static_paths"]["rx1"]],
                2: [_path_from_dict(p) for p in d["static_paths"]["rx2"]],
            },
            target_gain={
                1: complex(*d["target_gain"]["rx1"]),
                2: complex(*d["target_gain"]["rx2"]),
            },
            noise_power={k: float(v) for k, v in d["noise_power"].items()},
            rx2_sync_offset_s=float(d.get("rx2_sync_offset_s", 0.0)),
            rng_seed=int(d.get("rng_seed", 0)),
        )
    except (KeyError, TypeError, IndexError) as e:
        raise ConfigurationError(f"scenario channel section malformed: {e}") from e
