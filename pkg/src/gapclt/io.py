"""CSV and key-value sidecar helpers used by every exporter."""
import csv
import os

import numpy as np


def fmt(x):
    # 17 significant digits round-trip float64 exactly
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def write_matrix_csv(path, M, labels=None):
    """Write a square or rectangular matrix with a channel-index header."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if labels is None:
        labels = [f"c{j + 1}" for j in range(M.shape[1])]
    write_csv(path, ["channel"] + list(labels),
              ([labels[i] if i < len(labels) else f"c{i + 1}"] + list(M[i])
               for i in range(M.shape[0])))


def read_matrix_csv(path):
    """Inverse of :func:`write_matrix_csv`; returns ``(matrix, labels)``."""
    from .exceptions import FormatError
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    labels = rows[0][1:]
    body = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(labels) + 1:
            raise FormatError(f"{path}: row {lineno} has {len(r) - 1} values, "
                              f"expected {len(labels)}")
        try:
            body.append([float(v) for v in r[1:]])
        except ValueError as exc:
            raise FormatError(f"{path}: row {lineno}: {exc}") from None
    return np.array(body, dtype=float).reshape(len(body), len(labels)), labels


def write_metadata(path, items):
    """Write ``key = value`` lines in insertion order."""
    with open(path, "w") as fh:
        for k, v in items.items():
            if isinstance(v, (float, np.floating)):
                v = fmt(v)
            fh.write(f"{k} = {v}\n")


def read_metadata(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                out[k.strip()] = v.strip()
    return out


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
