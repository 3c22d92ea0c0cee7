"""Binary snapshot container for velocity and pressure fields.

Layout: magic bytes ``FNSE``, then version and grid size as unsigned
32-bit little-endian integers, then box_length, alpha, time as IEEE-754
float64, followed by four C-order float64 arrays on the n^3 grid: the
three velocity components and the pressure. Everything is little-endian.
A file is exactly 36 + 4 * n^3 * 8 bytes, and a load -> save cycle
reproduces it bit for bit because the persistence form keeps the raw
arrays rather than re-deriving them through transforms.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import SnapshotFormatError
from .fields import VelocityState, _check_alpha, from_real
from .ioutil import atomic_write_bytes
from .solver import PressureField, Trajectory

MAGIC = b"FNSE"
VERSION = 1
_HEADER = struct.Struct("<4sIIddd")


@dataclass(frozen=True)
class Snapshot:
    """Raw real-space velocity and pressure at one instant.

    state() and pressure_field() build the spectral objects when analysis
    needs them; persistence never round-trips through a transform.
    """

    n_grid: int
    box_length: float
    alpha: float
    time: float
    velocity: np.ndarray   # (3, n, n, n)
    pressure: np.ndarray   # (n, n, n)

    def __post_init__(self):
        n = self.n_grid
        if self.velocity.shape != (3, n, n, n):
            raise SnapshotFormatError("velocity array does not match n_grid")
        if self.pressure.shape != (n, n, n):
            raise SnapshotFormatError("pressure array does not match n_grid")
        if not (np.all(np.isfinite(self.velocity))
                and np.all(np.isfinite(self.pressure))):
            raise SnapshotFormatError("snapshot contains non-finite values")
        if self.box_length <= 0.0:
            raise SnapshotFormatError("box_length must be positive")
        _check_alpha(self.alpha)

    def state(self) -> VelocityState:
        return from_real(self.velocity, self.box_length, self.alpha,
                         time=self.time)

    def pressure_field(self) -> PressureField:
        n = self.n_grid
        p_hat = np.fft.rfftn(self.pressure) / n**3
        return PressureField(n_grid=n, box_length=self.box_length,
                             time=self.time, p_hat=p_hat)


def snapshot_of(state: VelocityState, pressure: PressureField) -> Snapshot:
    """Freeze one trajectory entry into its persistence form."""
    return Snapshot(
        n_grid=state.n_grid,
        box_length=float(state.box_length),
        alpha=float(state.alpha),
        time=float(state.time),
        velocity=state.real_field(),
        pressure=pressure.real_field(),
    )


def save_snapshot(snap: Snapshot, path: str) -> None:
    header = _HEADER.pack(MAGIC, VERSION, snap.n_grid,
                          float(snap.box_length), float(snap.alpha),
                          float(snap.time))
    parts = [header]
    for i in range(3):
        parts.append(np.ascontiguousarray(snap.velocity[i],
                                          dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(snap.pressure, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_snapshot(path: str) -> Snapshot:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, version, n, box_length, alpha, time_ = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    if not 0 < n <= 4096:
        raise SnapshotFormatError(f"{path}: implausible grid size {n}")
    expected = _HEADER.size + 4 * n**3 * 8
    if len(blob) != expected:
        raise SnapshotFormatError(
            f"{path}: file is {len(blob)} bytes, expected {expected}")
    flat = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    arrays = flat.reshape(4, n, n, n).copy()
    return Snapshot(n_grid=int(n), box_length=float(box_length),
                    alpha=float(alpha), time=float(time_),
                    velocity=arrays[:3], pressure=arrays[3])


def save_trajectory(t: Trajectory, directory: str,
                    prefix: str = "snap") -> list[str]:
    """One .fnse file per snapshot, numbered in time order."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, (state, pressure) in enumerate(t.snapshots):
        path = os.path.join(directory, f"{prefix}_{i:04d}.fnse")
        save_snapshot(snapshot_of(state, pressure), path)
        paths.append(path)
    return paths


def load_trajectory(source) -> Trajectory:
    """Rebuild a trajectory from .fnse files.

    source is a directory (every .fnse inside, name-sorted) or an iterable
    of paths. Snapshots are re-ordered by their stored times and must agree
    on alpha and the grid.
    """
    if isinstance(source, (str, os.PathLike)):
        names = sorted(fn for fn in os.listdir(source)
                       if fn.endswith(".fnse"))
        if not names:
            raise SnapshotFormatError(f"no .fnse files in {source}")
        paths = [os.path.join(source, fn) for fn in names]
    else:
        paths = [str(p) for p in source]
        if not paths:
            raise SnapshotFormatError("no snapshot paths given")
    snaps = sorted((load_snapshot(p) for p in paths), key=lambda s: s.time)
    first = snaps[0]
    for s in snaps[1:]:
        if abs(s.alpha - first.alpha) > 1e-12:
            raise SnapshotFormatError("snapshots disagree on alpha")
        if s.n_grid != first.n_grid:
            raise SnapshotFormatError("snapshots disagree on the grid size")
        if abs(s.box_length - first.box_length) > 1e-12:
            raise SnapshotFormatError("snapshots disagree on the box length")
    times = np.array([s.time for s in snaps])
    if len(times) > 1:
        gaps = np.diff(times)
        if np.any(gaps <= 0.0):
            raise SnapshotFormatError("snapshot times collide")
        dt_output = float(np.median(gaps))
    else:
        dt_output = 1.0
    pairs = tuple((s.state(), s.pressure_field()) for s in snaps)
    return Trajectory(alpha=first.alpha, dt_output=dt_output, snapshots=pairs)
