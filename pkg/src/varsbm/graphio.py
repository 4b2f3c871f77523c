"""Text formats for graphs, masks, labels and dense matrices.

Edge lists hold one ``i<TAB>j`` pair per line with 1-based node ids; any run
of whitespace is accepted as the separator.  Blank lines and lines starting
with ``#`` are skipped, duplicate and reversed pairs are ignored.  A mask file
lists the *observed* pairs in the same format, or holds the single line ``*``
for a fully observed graph.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .errors import DataError
from .netcore import as_adjacency, as_labels, full_mask

FULL_MASK_TOKEN = "*"


def _read_pairs(path) -> Tuple[List[Tuple[int, int]], List[str]]:
    pairs = []
    content = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            content.append(line)
            if line == FULL_MASK_TOKEN:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"expected two node ids, got {line!r}", path, lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"node ids must be integers, got {line!r}", path, lineno)
            if i < 1 or j < 1:
                raise DataError("node ids are 1-based", path, lineno)
            if i == j:
                raise DataError(f"self-loop on node {i}", path, lineno)
            pairs.append((i, j, lineno))
    return pairs, content


def _pairs_to_matrix(pairs, n, path) -> np.ndarray:
    m = np.zeros((n, n), dtype=np.uint8)
    for i, j, lineno in pairs:
        if i > n or j > n:
            raise DataError(f"node id {max(i, j)} exceeds n={n}", path, lineno)
        m[i - 1, j - 1] = 1
        m[j - 1, i - 1] = 1
    return m


def read_edge_list(path, n: Optional[int] = None) -> np.ndarray:
    """Load an undirected graph; ``n`` defaults to the largest node id."""
    pairs, content = _read_pairs(path)
    if FULL_MASK_TOKEN in content:
        raise DataError("'*' is only valid in mask files", path)
    if n is None:
        if not pairs:
            raise DataError("empty edge list and no node count given", path)
        n = max(max(i, j) for i, j, _ in pairs)
    return _pairs_to_matrix(pairs, n, path)


def read_mask(path, n: int) -> np.ndarray:
    pairs, content = _read_pairs(path)
    if FULL_MASK_TOKEN in content:
        if len(content) != 1:
            raise DataError("'*' must be the only line of a mask file", path)
        return full_mask(n)
    return _pairs_to_matrix(pairs, n, path)


def write_edge_list(path, a) -> None:
    a = as_adjacency(a)
    rows, cols = np.nonzero(np.triu(a, k=1))
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in zip(rows, cols):
            fh.write(f"{i + 1}\t{j + 1}\n")


def write_mask(path, x, star_if_full: bool = True) -> None:
    x = as_adjacency(x, name="sampling mask")
    if star_if_full and np.array_equal(x, full_mask(x.shape[0])):
        Path(path).write_text(FULL_MASK_TOKEN + "\n", encoding="utf-8")
        return
    write_edge_list(path, x)


def write_matrix_csv(path, m) -> None:
    m = np.asarray(m, dtype=float)
    # repr-precision keeps the dump lossless
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in m:
            writer.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError("non-numeric matrix entry", path, lineno)
    if not rows or any(len(r) != len(rows) for r in rows):
        raise DataError("matrix CSV must be square and non-empty", path)
    return np.array(rows, dtype=float)


def write_labels_csv(path, z) -> None:
    z = as_labels(z)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "community"])
        for i, c in enumerate(z, start=1):
            writer.writerow([i, int(c) + 1])


def read_labels_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        entries = []
        for lineno, row in enumerate(reader, start=2):
            try:
                entries.append((int(row["node"]), int(row["community"])))
            except (KeyError, TypeError, ValueError):
                raise DataError("labels CSV needs integer node,community columns", path, lineno)
    entries.sort()
    if [i for i, _ in entries] != list(range(1, len(entries) + 1)):
        raise DataError("labels CSV must list nodes 1..n exactly once", path)
    return np.array([c - 1 for _, c in entries], dtype=np.int64)


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory: {exc}", path)
    if not os.access(p, os.W_OK):
        raise DataError("output directory is not writable", path)
    return p
