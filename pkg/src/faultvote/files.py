"""CSV interchange formats for training data and measurements.

Floats are written with ``repr`` so a file round-trips bit-exactly and reruns
with the same seed produce byte-identical output.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .gp import TrainingSet

TRAINING_COLUMNS = ["freq_index", "omega", "alpha_location", "alpha_severity", "delta_y"]
MEASUREMENT_COLUMNS = ["freq_index", "omega", "delta_y_measured"]


class CSVParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class AlignmentError(ValueError):
    """Surfaces, measurements and sweep disagree."""


def _f(x) -> str:
    return repr(float(x))


def write_training_csv(data, path) -> None:
    """Write a :class:`~faultvote.structure.TrainingData` as long-format CSV."""
    omegas = data.sweep.frequencies
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAINING_COLUMNS)
        for j, omega in enumerate(omegas):
            for loc, sev, dy in zip(data.locations, data.severities, data.delta_y[j]):
                w.writerow([j, _f(omega), int(loc), _f(sev), _f(dy)])


def _read_rows(path, columns):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError(path, 1, "file is empty") from None
        if [h.strip() for h in header] != columns:
            raise CSVParseError(path, 1, f"expected header {columns}, found {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise CSVParseError(path, line_no, f"expected {len(columns)} fields, found {len(row)}")
            try:
                yield line_no, [int(row[0])] + [float(v) for v in row[1:]]
            except ValueError as exc:
                raise CSVParseError(path, line_no, str(exc)) from None


def read_training_csv(path, n_segments: int | None = None, severity_max: float | None = None):
    """Return ``(omegas, training_sets)`` ordered by frequency index.

    Kernel input bounds are ``[1, n_segments] x [0, severity_max]`` when both
    are given, otherwise they are taken from the data.
    """
    groups: dict[int, list] = {}
    omegas: dict[int, float] = {}
    for line_no, (j, omega, loc, sev, dy) in _read_rows(path, TRAINING_COLUMNS):
        if j in omegas and omegas[j] != omega:
            raise CSVParseError(path, line_no, f"frequency index {j} has two omegas")
        omegas[j] = omega
        groups.setdefault(j, []).append((loc, sev, dy))
    if not groups:
        raise CSVParseError(path, 2, "no data rows")
    idx = sorted(groups)
    if idx != list(range(len(idx))):
        raise CSVParseError(path, 2, f"frequency indices must be 0..{len(idx) - 1}, found {idx}")
    counts = {j: len(groups[j]) for j in idx}
    if len(set(counts.values())) != 1:
        raise CSVParseError(path, 2, f"unequal sample counts per frequency: {counts}")
    bounds = None
    if n_segments is not None and severity_max is not None:
        bounds = np.array([[1.0, float(n_segments)], [0.0, float(severity_max)]])
    sets = []
    for j in idx:
        arr = np.array(groups[j], dtype=float)
        sets.append(TrainingSet(arr[:, :2], arr[:, 2], frequency_index=j, bounds=bounds))
    return np.array([omegas[j] for j in idx]), sets


def write_measurement_csv(omegas, delta_y, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_COLUMNS)
        for j, (omega, dy) in enumerate(zip(omegas, delta_y)):
            w.writerow([j, _f(omega), _f(dy)])


def read_measurement_csv(path):
    """Return ``(omegas, delta_y)`` ordered by frequency index."""
    rows = {}
    for line_no, (j, omega, dy) in _read_rows(path, MEASUREMENT_COLUMNS):
        if j in rows:
            raise CSVParseError(path, line_no, f"duplicate frequency index {j}")
        rows[j] = (omega, dy)
    if not rows:
        raise CSVParseError(path, 2, "no data rows")
    idx = sorted(rows)
    if idx != list(range(len(idx))):
        raise CSVParseError(path, 2, f"frequency indices must be 0..{len(idx) - 1}, found {idx}")
    arr = np.array([rows[j] for j in idx])
    return arr[:, 0], arr[:, 1]


def check_alignment(sweep_omegas, surface_omegas, measured_omegas, rtol: float = 1e-9) -> None:
    """Raise :class:`AlignmentError` unless all three frequency lists agree."""
    a = np.asarray(sweep_omegas, dtype=float)
    b = np.asarray(surface_omegas, dtype=float)
    c = np.asarray(measured_omegas, dtype=float)
    if not (a.size == b.size == c.size):
        raise AlignmentError(f"sweep has {a.size} frequencies, {b.size} surfaces, "
                             f"{c.size} measurements")
    offenders = []
    for j in range(a.size):
        ref = a[j]
        for name, other in (("surface", b[j]), ("measurement", c[j])):
            if abs(other - ref) > rtol * abs(ref):
                offenders.append(f"{name} {j}: omega {other!r} vs sweep {ref!r}")
    if offenders:
        raise AlignmentError("frequency mismatch: " + "; ".join(offenders))
