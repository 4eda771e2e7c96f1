"""Reading and writing datasets.

* dense vectors: CSV, one point per row, numeric, no header by default;
* categorical tuples: CSV of tokens, compared by string equality;
* graphs: whitespace edge list ``u v [w]`` (``w`` defaults to 1, negative
  weights are replaced by their absolute value); only the largest connected
  component is kept.
"""

from __future__ import annotations

import csv

import numpy as np
from scipy.sparse.csgraph import connected_components

from .metrics import (
    CATEGORICAL,
    DENSE,
    GRAPH,
    CategoricalDataset,
    DataError,
    GraphDataset,
    VectorDataset,
    _symmetric_adjacency,
)

FORMATS = {"csv": DENSE, "categorical": CATEGORICAL, "edgelist": GRAPH}


def _open(path):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _csv_rows(path, header):
    with _open(path) as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, [c.strip() for c in row]


def load_vectors(path, header: bool = False) -> VectorDataset:
    rows = []
    width = None
    for lineno, row in _csv_rows(path, header):
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DataError(f"{path}: row {lineno}: non-numeric value") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DataError(f"{path}: row {lineno}: expected {width} values, got {len(vals)}")
        if not all(np.isfinite(vals)):
            raise DataError(f"{path}: row {lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return VectorDataset(np.array(rows, dtype=np.float64))


def load_categorical(path, header: bool = False) -> CategoricalDataset:
    rows = []
    width = None
    for lineno, row in _csv_rows(path, header):
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}: row {lineno}: expected {width} tokens, got {len(row)}")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return CategoricalDataset(rows)


def load_graph(path, **kw) -> GraphDataset:
    us, vs, ws = [], [], []
    with _open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line[0] in "#%":
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise DataError(f"{path}: row {lineno}: expected 'u v [w]'")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = abs(float(parts[2])) if len(parts) == 3 else 1.0
            except ValueError:
                raise DataError(f"{path}: row {lineno}: malformed edge") from None
            if u < 0 or v < 0:
                raise DataError(f"{path}: row {lineno}: node ids must be non-negative")
            if not np.isfinite(w) or (w == 0.0 and u != v):
                raise DataError(f"{path}: row {lineno}: edge weight must be non-zero and finite")
            us.append(u)
            vs.append(v)
            ws.append(w)
    if not us:
        raise DataError(f"{path}: no edges")
    labels = np.unique(np.array(us + vs, dtype=np.int64))
    pos = {int(lab): i for i, lab in enumerate(labels)}
    adj = _symmetric_adjacency([pos[u] for u in us], [pos[v] for v in vs], ws, labels.size)
    return largest_component(adj, labels, **kw)


def largest_component(adj, labels, **kw) -> GraphDataset:
    """Restrict a graph to its largest connected component (ties: smallest label)."""
    _, comp = connected_components(adj, directed=False)
    sizes = np.bincount(comp)
    best = int(np.flatnonzero(sizes == sizes.max())[0])  # components are numbered by first node
    keep = np.flatnonzero(comp == best)
    sub = adj[keep][:, keep].tocsr()
    return GraphDataset(sub, labels[keep], **kw)


def load_dataset(path, fmt: str = "csv", header: bool = False):
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {sorted(FORMATS)}")
    if fmt == "csv":
        return load_vectors(path, header)
    if fmt == "categorical":
        return load_categorical(path, header)
    return load_graph(path)


def save_vectors(path, points) -> None:
    """Write one point per row with round-trip exact float formatting."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    with open(path, "w", newline="") as fh:
        for row in pts:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
