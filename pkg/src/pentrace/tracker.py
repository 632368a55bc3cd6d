"""Trajectory reconstruction from two synchronized Doppler tracks.

The bistatic Doppler seen by receiver i for a target at p moving with speed v
along direction theta is

    f_i = -(2 fc / c) * v * cos(theta - mu_i) * cos(delta_i),

with mu_i the bisector angle (phi_i + aod)/2 and delta_i the half bistatic
angle (phi_i - aod)/2 built from the arrival angle phi_i at the receiver and
the departure angle aod at the transmitter. Two receivers give a 2x2 linear
system in (v cos theta, v sin theta); integrating the solved velocities from
a triangulated initial point dead-reckons the pen trajectory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .caf_detect import DopplerTrack
from .channel_sim import Geometry
from .errors import (ContractError, DegenerateGeometryError, NoIntersectionError,
                     ParseError)
from .waveform import FORMAT_VERSION

# Below this relative determinant the two bisector directions are parallel
# and the velocity system is treated as degenerate.
DET_REL_TOL = 1e-10

FLAG_TRACKED = "tracked"
FLAG_HELD = "held"
FLAG_DEGENERATE = "degenerate"


@dataclass
class TrackerConfig:
    v_max_mps: float = 1.0          # speeds are clamped here (handwriting scale)
    median_prefilter: int = 0       # odd window length; 0 disables
    initial_heading_rad: float = 0.0


@dataclass
class InitialObservation:
    """Initial bearings of the target seen from the two receivers."""

    aoa_rx1_rad: float
    aoa_rx2_rad: float
    aoa_error_rad: float = 0.0


@dataclass
class FusedPairs:
    """Doppler pairs on a common sensing grid; NaN marks a missing side."""

    times_s: np.ndarray
    f1_hz: np.ndarray
    f2_hz: np.ndarray


@dataclass
class Trajectory:
    sensing_times_s: np.ndarray
    points_m: np.ndarray
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.sensing_times_s) != len(self.points_m) or \
                len(self.flags) != len(self.points_m):
            raise ContractError("trajectory fields must have equal lengths")


def angles_from_position(p, geom: Geometry):
    """Arrival angles at both receivers and the departure angle at the
    transmitter, as four-quadrant arctangents."""
    x, y = float(p[0]), float(p[1])
    for node in (geom.rx1_pos, geom.rx2_pos, geom.tx_pos):
        if x == node[0] and y == node[1]:
            raise DegenerateGeometryError(f"target coincides with node at {node}")
    phi1 = math.atan2(y, x)
    phi2 = math.atan2(y - geom.rx2_pos[1], x - geom.rx2_pos[0])
    aod = math.atan2(y - geom.tx_pos[1], x - geom.tx_pos[0])
    return phi1, phi2, aod


def _velocity_rows(p, geom: Geometry) -> np.ndarray:
    phi1, phi2, aod = angles_from_position(p, geom)
    scale = -2.0 * geom.fc_hz / geom.c_mps
    rows = np.empty((2, 2))
    for i, phi in enumerate((phi1, phi2)):
        mu = (phi + aod) / 2
        delta = (phi - aod) / 2
        g = scale * math.cos(delta)
        rows[i] = (g * math.cos(mu), g * math.sin(mu))
    return rows


def doppler_from_motion(p, v: float, theta: float, geom: Geometry):
    """Forward model: Doppler pair for a target state; oracle for the solver."""
    if v < 0:
        raise ContractError("speed must be nonnegative")
    rows = _velocity_rows(p, geom)
    f1, f2 = rows @ (v * math.cos(theta), v * math.sin(theta))
    return float(f1), float(f2)


def solve_velocity(f1: float, f2: float, p, geom: Geometry,
                   prev_heading: float = 0.0):
    """Invert the Doppler pair into (speed, direction) at position p.

    A (0, 0) pair carries no direction information; speed 0 is returned with
    the caller's previous heading. Raises DegenerateGeometryError when the
    bisector directions are parallel or the target sits on a tx-rx baseline
    (vanishing row).
    """
    rows = _velocity_rows(p, geom)
    norms = np.linalg.norm(rows, axis=1)
    det = rows[0, 0] * rows[1, 1] - rows[0, 1] * rows[1, 0]
    if norms.min() == 0.0 or abs(det) < DET_REL_TOL * norms[0] * norms[1]:
        raise DegenerateGeometryError(
            "velocity system is singular (parallel bisectors or target on a baseline)"
        )
    if f1 == 0.0 and f2 == 0.0:
        return 0.0, prev_heading
    vx = (f1 * rows[1, 1] - f2 * rows[0, 1]) / det
    vy = (rows[0, 0] * f2 - rows[1, 0] * f1) / det
    return float(math.hypot(vx, vy)), float(math.atan2(vy, vx))


def initial_position(obs: InitialObservation, geom: Geometry):
    """Triangulate the initial point from the two bearing rays.

    Solved as a 2x2 linear system in the ray parameters rather than through
    tangents, so vertical bearings are exact. The configured angle error is
    added to both bearings before solving. An intersection behind either
    receiver is returned with a warning.
    """
    a1 = obs.aoa_rx1_rad + obs.aoa_error_rad
    a2 = obs.aoa_rx2_rad + obs.aoa_error_rad
    u1 = np.array([math.cos(a1), math.sin(a1)])
    u2 = np.array([math.cos(a2), math.sin(a2)])
    rhs = np.asarray(geom.rx2_pos, dtype=np.float64)
    det = -u1[0] * u2[1] + u1[1] * u2[0]
    if abs(det) < 1e-12:
        raise NoIntersectionError("bearing rays are parallel; no triangulation point")
    t1 = (-rhs[0] * u2[1] + rhs[1] * u2[0]) / det
    t2 = (u1[0] * rhs[1] - u1[1] * rhs[0]) / det
    if t1 < 0 or t2 < 0:
        warnings.warn("triangulated point lies behind a receiver", stacklevel=2)
    p = t1 * u1
    return float(p[0]), float(p[1])


def step_position(p, v: float, theta: float, dt_s: float):
    """Dead-reckoning update p' = p + v*dt*(cos theta, sin theta)."""
    if dt_s <= 0:
        raise ContractError("time step must be positive")
    return (float(p[0] + v * dt_s * math.cos(theta)),
            float(p[1] + v * dt_s * math.sin(theta)))


def median_prefilter(track: DopplerTrack, window: int) -> DopplerTrack:
    """Moving-median smoothing of a Doppler track (NaN-propagating)."""
    if window <= 1:
        return track
    if window % 2 == 0:
        raise ContractError("median window must be odd")
    half = window // 2
    v = track.doppler_hz
    out = np.array([np.nanmedian(v[max(0, i - half):i + half + 1])
                    if np.isfinite(v[i]) else math.nan
                    for i in range(v.size)])
    return DopplerTrack(sensing_times_s=track.sensing_times_s, doppler_hz=out)


def align_tracks(t1: DopplerTrack, t2: DopplerTrack) -> FusedPairs:
    """Pair the two receivers' tracks on a common sensing grid.

    The grid is receiver 1's timestamps restricted to the overlapping span;
    each grid instant takes the nearest timestamp of each track within half a
    sensing interval, tolerating bounded clock offsets between the receivers.
    Instants where either side has no match, or a matched value is missing,
    are flagged missing.
    """
    period = float(np.median(np.diff(t1.sensing_times_s))) if t1.sensing_times_s.size > 1 else 0.0
    if period <= 0:
        raise ContractError("track 1 must hold at least two instants")
    half = period / 2 * (1 + 1e-9)
    lo = max(t1.sensing_times_s[0], t2.sensing_times_s[0]) - half
    hi = min(t1.sensing_times_s[-1], t2.sensing_times_s[-1]) + half
    keep = (t1.sensing_times_s >= lo) & (t1.sensing_times_s <= hi)
    if not np.any(keep):
        raise ContractError("doppler tracks do not overlap in time")
    grid = t1.sensing_times_s[keep]

    def nearest(track: DopplerTrack) -> np.ndarray:
        ts, vs = track.sensing_times_s, track.doppler_hz
        idx = np.clip(np.searchsorted(ts, grid), 1, ts.size - 1) if ts.size > 1 \
            else np.zeros(grid.size, dtype=int)
        if ts.size > 1:
            left = idx - 1
            idx = np.where(np.abs(grid - ts[left]) <= np.abs(grid - ts[idx]), left, idx)
        vals = vs[idx].astype(np.float64).copy()
        vals[np.abs(grid - ts[idx]) > half] = math.nan
        return vals

    return FusedPairs(times_s=grid, f1_hz=nearest(t1), f2_hz=nearest(t2))


def track_trajectory(pairs: FusedPairs, obs: InitialObservation, geom: Geometry,
                     cfg: TrackerConfig | None = None) -> Trajectory:
    """Dead-reckon the trajectory from fused Doppler pairs.

    Position 1 comes from the bearing triangulation; thereafter each pair is
    inverted into a velocity at the current estimate and integrated over one
    sensing interval. Missing pairs hold the position, degenerate solves hold
    and are flagged, and zero pairs set speed 0 while retaining the heading.
    """
    cfg = cfg or TrackerConfig()
    k_count = pairs.times_s.size
    if k_count < 1:
        raise ContractError("need at least one Doppler pair")
    dt = float(np.median(np.diff(pairs.times_s))) if k_count > 1 else 0.0

    p = initial_position(obs, geom)
    heading = cfg.initial_heading_rad
    points = np.empty((k_count, 2))
    points[0] = p
    flags = [FLAG_TRACKED]
    for k in range(k_count - 1):
        f1, f2 = float(pairs.f1_hz[k]), float(pairs.f2_hz[k])
        if math.isnan(f1) or math.isnan(f2):
            points[k + 1] = points[k]
            flags.append(FLAG_HELD)
            continue
        try:
            v, heading = solve_velocity(f1, f2, points[k], geom, prev_heading=heading)
        except DegenerateGeometryError:
            points[k + 1] = points[k]
            flags.append(FLAG_DEGENERATE)
            continue
        v = min(v, cfg.v_max_mps)
        points[k + 1] = step_position(points[k], v, heading, dt)
        flags.append(FLAG_TRACKED)
    return Trajectory(sensing_times_s=pairs.times_s.copy(), points_m=points,
                      flags=flags)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def trajectory_to_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# format_version={FORMAT_VERSION}\n")
        fh.write("time_s,x_m,y_m,flag\n")
        for t, (x, y), flag in zip(traj.sensing_times_s, traj.points_m, traj.flags):
            fh.write(f"{t:.6f},{x:.9f},{y:.9f},{flag}\n")


def trajectory_from_csv(path: str | Path) -> Trajectory:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"trajectory file not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines or tuple(lines[0].split(",")) != ("time_s", "x_m", "y_m", "flag"):
        raise ParseError(f"trajectory CSV {path} header is not time_s,x_m,y_m,flag")
    times, pts, flags = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise ParseError(f"trajectory CSV {path} row '{ln}' is not 4 columns")
        try:
            times.append(float(parts[0]))
            pts.append((float(parts[1]), float(parts[2])))
        except ValueError as e:
            raise ParseError(f"trajectory CSV {path} holds a non-numeric field: {e}") from e
        flags.append(parts[3])
    return Trajectory(sensing_times_s=np.array(times), points_m=np.array(pts), flags=flags)
