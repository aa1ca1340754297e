"""Event and package types, stream file I/O and fixed-rate packaging.

Events are held as numpy structured arrays (``EVENT_DTYPE``) so that a whole
stream or package can be sliced and handed to the numba kernels without
copying. Timestamps are integer microseconds everywhere.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

EVENT_DTYPE = np.dtype([("ts", "<i8"), ("x", "<i4"), ("y", "<i4"), ("p", "i1")])

BINARY_MAGIC = b"EVST"
_HEADER = struct.Struct("<4sHHfI")
_RECORD_DTYPE = np.dtype([("ts", "<u8"), ("x", "<u2"), ("y", "<u2")])
_POLARITY_BIT = 0x8000


class Event(NamedTuple):
    x: int
    y: int
    ts: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int
    lam: float
    fov_h: float | None = None
    fov_v: float | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or not self.lam > 0:
            raise ValueError(f"invalid sensor geometry {self}")

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0

    @classmethod
    def from_fov(cls, width: int, height: int, fov_h_deg: float) -> "SensorGeometry":
        lam = (width / 2.0) / math.tan(math.radians(fov_h_deg) / 2.0)
        fov_v = 2.0 * math.degrees(math.atan((height / 2.0) / lam))
        return cls(width, height, lam, fov_h_deg, fov_v)


# DAVIS346 with the 68 deg lens used on the robot
DAVIS346 = SensorGeometry.from_fov(346, 260, 68.0)


@dataclass(frozen=True)
class EventPackage:
    events: np.ndarray
    seq: int
    t_emit: int
    t_start: int = 0

    def __len__(self):
        return len(self.events)


class StreamFormatError(ValueError):
    """Malformed stream file; ``index`` is the offending record (1-based), 0 for the header."""

    def __init__(self, message: str, index: int = 0):
        super().__init__(message)
        self.index = index


def make_events(xs, ys, ts, ps) -> np.ndarray:
    ev = np.empty(len(ts), dtype=EVENT_DTYPE)
    ev["x"], ev["y"], ev["ts"], ev["p"] = xs, ys, ts, ps
    return ev


def empty_events() -> np.ndarray:
    return np.empty(0, dtype=EVENT_DTYPE)


def as_event_array(events) -> np.ndarray:
    """Accept a structured array or any iterable of ``Event``-like tuples."""
    if isinstance(events, np.ndarray) and events.dtype == EVENT_DTYPE:
        return events
    events = list(events)
    if not events:
        return empty_events()
    xs, ys, ts, ps = zip(*[(e.x, e.y, e.ts, e.p) for e in events])
    return make_events(xs, ys, ts, ps)


def validate_events(events: np.ndarray, geometry: SensorGeometry) -> None:
    """Raise StreamFormatError on the first bad record (1-based index)."""
    if len(events) == 0:
        return
    x, y, ts, p = events["x"], events["y"], events["ts"], events["p"]
    bad = (x < 0) | (x >= geometry.width) | (y < 0) | (y >= geometry.height)
    if bad.any():
        i = int(np.argmax(bad))
        raise StreamFormatError(
            f"row {i + 1}: coordinate ({x[i]}, {y[i]}) outside "
            f"{geometry.width}x{geometry.height}", i + 1)
    bad = (p != 1) & (p != -1)
    if bad.any():
        i = int(np.argmax(bad))
        raise StreamFormatError(f"row {i + 1}: polarity {p[i]} not in {{1, -1}}", i + 1)
    bad = ts < 0
    if bad.any():
        i = int(np.argmax(bad))
        raise StreamFormatError(f"row {i + 1}: negative timestamp {ts[i]}", i + 1)
    regress = np.diff(ts) < 0
    if regress.any():
        i = int(np.argmax(regress)) + 1
        raise StreamFormatError(
            f"row {i + 1}: timestamp {ts[i]} regresses below {ts[i - 1]}", i + 1)


def _read_csv(path: Path) -> tuple[SensorGeometry, np.ndarray]:
    with open(path, "r") as fh:
        header = fh.readline()
        try:
            w, h, lam = header.strip().split(",")
            geometry = SensorGeometry(int(w), int(h), float(lam))
        except ValueError as exc:
            raise StreamFormatError(f"malformed header {header.strip()!r}: {exc}", 0) from None
        rows = []
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ts, x, y, p = (int(v) for v in line.split(","))
            except ValueError:
                raise StreamFormatError(f"row {i}: malformed record {line!r}", i) from None
            rows.append((ts, x, y, p))
    if rows:
        arr = np.array(rows, dtype=np.int64)
        events = make_events(arr[:, 1], arr[:, 2], arr[:, 0], arr[:, 3])
    else:
        events = empty_events()
    validate_events(events, geometry)
    return geometry, events


def _read_binary(path: Path) -> tuple[SensorGeometry, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise StreamFormatError("truncated header", 0)
    magic, w, h, lam, _ = _HEADER.unpack_from(raw, 0)
    try:
        geometry = SensorGeometry(w, h, float(lam))
    except ValueError as exc:
        raise StreamFormatError(f"malformed header: {exc}", 0) from None
    body = raw[_HEADER.size:]
    if len(body) % _RECORD_DTYPE.itemsize:
        n = len(body) // _RECORD_DTYPE.itemsize
        raise StreamFormatError(f"row {n + 1}: truncated record", n + 1)
    rec = np.frombuffer(body, dtype=_RECORD_DTYPE)
    if (rec["ts"] > np.iinfo(np.int64).max).any():
        i = int(np.argmax(rec["ts"] > np.iinfo(np.int64).max))
        raise StreamFormatError(f"row {i + 1}: timestamp overflow", i + 1)
    pol = np.where(rec["y"] & _POLARITY_BIT, 1, -1)
    events = make_events(rec["x"], rec["y"] & ~np.uint16(_POLARITY_BIT), rec["ts"].astype(np.int64), pol)
    validate_events(events, geometry)
    return geometry, events


def read_stream(path: Union[str, Path]) -> tuple[SensorGeometry, np.ndarray]:
    """Read a CSV or binary (``EVST``) stream; format is sniffed from the magic."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == BINARY_MAGIC:
        return _read_binary(path)
    return _read_csv(path)


def write_stream(path: Union[str, Path], geometry: SensorGeometry, events,
                 fmt: str | None = None) -> None:
    """Write events; ``fmt`` is "csv" or "bin" (default: by suffix, ``.csv`` -> csv)."""
    path = Path(path)
    events = as_event_array(events)
    if len(events) > 1 and (np.diff(events["ts"]) < 0).any():
        i = int(np.argmax(np.diff(events["ts"]) < 0)) + 1
        raise ValueError(f"events not sorted by timestamp at index {i}")
    validate_events(events, geometry)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "bin"
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"{geometry.width},{geometry.height},{geometry.lam!r}\n")
            body = np.column_stack([events["ts"], events["x"], events["y"], events["p"]])
            np.savetxt(fh, body, fmt="%d", delimiter=",")
    elif fmt == "bin":
        if geometry.width > 0xFFFF or geometry.height > _POLARITY_BIT:
            raise ValueError("geometry does not fit the binary format")
        rec = np.empty(len(events), dtype=_RECORD_DTYPE)
        rec["ts"] = events["ts"]
        rec["x"] = events["x"]
        rec["y"] = events["y"].astype(np.uint16) | np.where(events["p"] > 0, _POLARITY_BIT, 0).astype(np.uint16)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BINARY_MAGIC, geometry.width, geometry.height, geometry.lam, 0))
            fh.write(rec.tobytes())
    else:
        raise ValueError(f"unknown stream format {fmt!r}")


Feedback = Union[None, float, Sequence[float], Callable[[int], float]]


def _feedback_fn(load_feedback: Feedback) -> Callable[[int], float]:
    if load_feedback is None:
        return lambda seq: 0.0
    if callable(load_feedback):
        return load_feedback
    if np.isscalar(load_feedback):
        value = float(load_feedback)
        return lambda seq: value
    trace = list(load_feedback)
    if not trace:
        return lambda seq: 0.0
    return lambda seq: float(trace[min(seq, len(trace) - 1)])


def package_stream(events, target_rate: float = 250.0,
                   load_feedback: Feedback = None) -> list[EventPackage]:
    """Partition a stream into packages on stream-time windows of ``1/target_rate`` s.

    ``load_feedback`` is the processing time (us) of the package just emitted:
    a scalar, a per-package trace (last value repeats) or a callable of seq.
    While it exceeds the package period the next window is twice as long.
    Windows are anchored at the first event timestamp.
    """
    if not target_rate > 0:
        raise ValueError("target_rate must be positive")
    events = as_event_array(events)
    if len(events) == 0:
        return []
    feedback = _feedback_fn(load_feedback)
    period = max(1, int(round(1e6 / target_rate)))
    ts = events["ts"]
    t_start = int(ts[0])
    t_last = int(ts[-1])
    packages = []
    lo = 0
    spacing = period
    seq = 0
    while lo < len(events):
        t_end = t_start + spacing
        hi = int(np.searchsorted(ts, t_end, side="left"))
        packages.append(EventPackage(events[lo:hi], seq, t_end, t_start))
        lo = hi
        spacing = 2 * period if feedback(seq) > period else period
        seq += 1
        t_start = t_end
        if t_start > t_last:
            break
    return packages


def concat_packages(packages: Sequence[EventPackage]) -> np.ndarray:
    if not packages:
        return empty_events()
    return np.concatenate([p.events for p in sorted(packages, key=lambda p: p.seq)])
