"""CSV writers/readers for runs and a plain-text summary table."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .pipeline import PackageResult
from .sim.simulator import GT_DTYPE, LABEL_BG, LABEL_NOISE

GT_HEADER = ["t_us", "obj_id", "cx", "cy", "xmin", "ymin", "xmax", "ymax", "z", "visible",
             "dir_rad", "isv", "truncated"]
CLUSTER_HEADER = ["seq", "cluster_id", "cx", "cy", "vx", "vy", "eta", "L"]
COMMAND_HEADER = ["seq", "risk", "psi", "theta", "psi_star", "theta_star", "delta_e", "delta_r"]
DEBUG_HEADER = ["ts_us", "x", "y", "p", "label", "corner"]


def fmt(v) -> str:
    """Fixed float formatting so reruns are byte-identical."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.6f}"


def _write(path, header, rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_ground_truth(path, gt: np.ndarray) -> None:
    _write(path, GT_HEADER, (tuple(r) for r in gt.tolist()))


def read_ground_truth(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != GT_HEADER:
        raise ValueError(f"{path}: not a ground-truth CSV (expected header {','.join(GT_HEADER)})")
    out = np.zeros(len(rows) - 1, dtype=GT_DTYPE)
    for i, r in enumerate(rows[1:]):
        out[i] = (int(r[0]), int(r[1]), float(r[2]), float(r[3]), int(r[4]), int(r[5]),
                  int(r[6]), int(r[7]), float(r[8]), r[9] == "1", float(r[10]), r[11] == "1",
                  r[12] == "1")
    return out


def label_name(label: int) -> str:
    if label == LABEL_BG:
        return "bg"
    if label == LABEL_NOISE:
        return "noise"
    return str(int(label))


def write_labels(path, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("event_index,label\n")
        for i, lab in enumerate(labels.tolist()):
            fh.write(f"{i},{label_name(lab)}\n")


def write_cluster_trace(path, results: Sequence[PackageResult]) -> None:
    _write(path, CLUSTER_HEADER,
           ((r.seq, e.cluster_id, e.cx, e.cy, e.vx, e.vy, e.eta, e.L)
            for r in results for e in r.estimates))


def command_rows(results: Sequence[PackageResult]):
    nan = math.nan
    for r in results:
        a = r.assessments[r.target] if r.target >= 0 else None
        yield (r.seq, int(r.risk), a.psi if a else nan, a.theta if a else nan,
               a.psi_star if a else nan, a.theta_star if a else nan,
               r.command.delta_e, r.command.delta_r)


def write_command_log(path, rows: Iterable[Sequence]) -> None:
    _write(path, COMMAND_HEADER, rows)


def write_debug_dump(path, events: np.ndarray, results: Sequence[PackageResult]) -> None:
    """Per-event filter label (static/dynamic) and corner flag; needs ``keep_frontend`` results."""
    labels = np.concatenate([r.frontend.labels for r in results]) if results else np.zeros(0)
    corners = np.concatenate([r.frontend.corners for r in results]) if results else np.zeros(0)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(DEBUG_HEADER) + "\n")
        for (ts, x, y, p), lab, c in zip(events.tolist(), labels.tolist(), corners.tolist()):
            fh.write(f"{ts},{x},{y},{p},{'dynamic' if lab else 'static'},{int(c)}\n")


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM of a count image, scaled to its maximum."""
    img = np.asarray(image, dtype=float)
    top = img.max() if img.size else 0.0
    data = np.zeros(img.shape, np.uint8) if top <= 0 else np.round(255 * img / top).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


def format_table(rows: Sequence[tuple[str, object]], title: str = "") -> str:
    """Two-column plain-text table."""
    cells = [(k, "n/a" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v)))
             for k, v in rows]
    kw = max([len(k) for k, _ in cells] + [len("metric")])
    vw = max([len(v) for _, v in cells] + [len("value")])
    lines = [title] if title else []
    lines.append(f"{'metric':<{kw}}  {'value':>{vw}}")
    lines.append(f"{'-' * kw}  {'-' * vw}")
    lines += [f"{k:<{kw}}  {v:>{vw}}" for k, v in cells]
    return "\n".join(lines) + "\n"


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    _write(Path(path), header, rows)
