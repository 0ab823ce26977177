"""Readers for benchmark data formats and covariate normalization.

* IDX (the MNIST container): big-endian magic ``0x00000801`` for unsigned
  byte labels and ``0x00000803`` for unsigned byte images; pixels are
  scaled to ``[0, 1]``.
* libsvm text: ``label idx:val idx:val ...`` with 1-based, strictly
  increasing indices.
* CSV count tables such as ``corps,year,count``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidArgument
from .glm.model import Dataset
from .tensor import STREAM_DATA, RandomSource

IDX_LABELS = 0x00000801
IDX_IMAGES = 0x00000803


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX file of unsigned bytes.

    Label files give a float vector of class ids; image files give an
    ``(count, rows, cols)`` array scaled by ``1/255``.

    >>> parse_idx(struct.pack(">IIII", 0x803, 1, 2, 2) + bytes([0, 255, 0, 255])).ravel().tolist()
    [0.0, 1.0, 0.0, 1.0]
    """
    if len(data) < 8:
        raise FormatError("IDX data shorter than its header")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == IDX_LABELS:
        (count,) = struct.unpack_from(">I", data, 4)
        dims, off = (count,), 8
    elif magic == IDX_IMAGES:
        if len(data) < 16:
            raise FormatError("IDX image header truncated")
        count, rows, cols = struct.unpack_from(">III", data, 4)
        dims, off = (count, rows, cols), 16
    else:
        raise FormatError(f"bad IDX magic 0x{magic:08x}")
    size = int(np.prod(dims))
    if len(data) - off != size:
        raise FormatError(f"IDX payload has {len(data) - off} bytes, header implies {size}")
    arr = np.frombuffer(data, dtype=np.uint8, count=size, offset=off).astype(np.float64).reshape(dims)
    return arr / 255.0 if magic == IDX_IMAGES else arr


def write_idx(arr: np.ndarray, images: bool) -> bytes:
    """Encode unsigned bytes as IDX (images are given already in ``0..255``)."""
    a = np.asarray(arr)
    if images:
        if a.ndim != 3:
            raise InvalidArgument("image IDX needs a (count, rows, cols) array")
        head = struct.pack(">IIII", IDX_IMAGES, *a.shape)
    else:
        head = struct.pack(">II", IDX_LABELS, a.shape[0])
    return head + a.astype(np.uint8).tobytes()


@dataclass
class RawRecord:
    label: float
    features: np.ndarray


def parse_libsvm(text: str, width: int | None = None) -> list:
    """Parse libsvm lines into dense records of a common width."""
    parsed = []
    max_idx = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            label = float(fields[0])
        except ValueError:
            raise FormatError(f"line {lineno}: bad label {fields[0]!r}") from None
        idxs, vals = [], []
        prev = 0
        for tok in fields[1:]:
            k, sep, v = tok.partition(":")
            try:
                ki, vf = int(k), float(v)
            except ValueError:
                raise FormatError(f"line {lineno}: bad feature {tok!r}") from None
            if not sep or ki < 1:
                raise FormatError(f"line {lineno}: bad feature {tok!r}")
            if ki <= prev:
                raise FormatError(f"line {lineno}: feature indices must increase ({prev} then {ki})")
            prev = ki
            idxs.append(ki)
            vals.append(vf)
        max_idx = max(max_idx, prev)
        parsed.append((label, idxs, vals))
    if width is None:
        width = max_idx
    elif max_idx > width:
        raise FormatError(f"feature index {max_idx} exceeds width {width}")
    out = []
    for label, idxs, vals in parsed:
        x = np.zeros(width)
        x[np.asarray(idxs, dtype=int) - 1] = vals
        out.append(RawRecord(label, x))
    return out


def format_libsvm(records) -> str:
    """Inverse of :func:`parse_libsvm` (zeros omitted, values in ``repr`` form)."""
    lines = []
    for r in records:
        label = int(r.label) if float(r.label).is_integer() else r.label
        feats = [f"{i + 1}:{v!r}" for i, v in enumerate(r.features.tolist()) if v != 0]
        lines.append(" ".join([str(label), *feats]))
    return "\n".join(lines) + ("\n" if lines else "")


def records_to_dataset(records) -> Dataset:
    if not records:
        raise FormatError("no records")
    return Dataset(np.vstack([r.features for r in records]), np.array([r.label for r in records]))


def normalize_covariates(data: Dataset, integer_columns) -> Dataset:
    """Center the masked columns, then divide each by its max absolute value.

    Centering comes first, so the scale is taken after the mean is removed;
    a column that is constant ends up all zeros.  Unmasked (one-hot)
    columns pass through.
    """
    mask = np.asarray(integer_columns, dtype=bool)
    if mask.shape != (data.n,):
        raise InvalidArgument(f"mask needs {data.n} entries, got {mask.shape}")
    A = data.A.copy()
    cols = A[:, mask]
    cols = cols - cols.mean(axis=0)
    scale = np.max(np.abs(cols), axis=0) if cols.size else np.zeros(0)
    scale[scale == 0] = 1.0
    A[:, mask] = cols / scale
    return Dataset(A, data.t.copy())


def parse_csv_counts(text: str, covariates: int = 3, base_year: int = 1875) -> Dataset:
    """Count table (``group, year, count``) to a Poisson design matrix.

    Covariate sets: ``0`` none (the model is the bias alone); ``1`` one-hot
    group; ``2`` the quadratic in the year, columns ``(1, y - base_year,
    (y - base_year)**2)``; ``3`` one-hot group followed by the quadratic.
    Rows follow the file order; groups are ordered naturally (``"2"``
    before ``"10"``).
    """
    if covariates not in (0, 1, 2, 3):
        raise InvalidArgument("covariate set must be 0, 1, 2 or 3")
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise FormatError("empty CSV") from None
    if len(header) != 3:
        raise FormatError(f"expected 3 columns (group, year, count), got {header}")
    groups, years, counts = [], [], []
    for lineno, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise FormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
        g, y, c = (v.strip() for v in row)
        try:
            yi, cf = int(y), float(c)
        except ValueError:
            raise FormatError(f"line {lineno}: bad year or count in {row}") from None
        if cf < 0 or not cf.is_integer():
            raise FormatError(f"line {lineno}: count must be a nonnegative integer, got {c!r}")
        groups.append(g)
        years.append(yi)
        counts.append(cf)
    levels = sorted(set(groups), key=lambda s: (len(s), s))
    onehot = np.zeros((len(groups), len(levels)))
    onehot[np.arange(len(groups)), [levels.index(g) for g in groups]] = 1.0
    dy = np.asarray(years, dtype=np.float64) - base_year
    const = np.ones((len(groups), 1))
    poly = np.column_stack([dy, dy * dy]) if groups else np.zeros((0, 2))
    blocks = {
        0: [np.zeros((len(groups), 0))],
        1: [onehot],
        2: [const, poly],
        3: [onehot, const, poly],
    }[covariates]
    return Dataset(np.hstack(blocks), np.asarray(counts))


def train_test_split(data: Dataset, n_train: int, seed: int = 0) -> tuple:
    """Random permutation; the first ``n_train`` rows train, the rest test."""
    if not 0 <= n_train <= data.m:
        raise InvalidArgument(f"n_train must lie in [0, {data.m}]")
    perm = RandomSource(seed, STREAM_DATA).permutation(data.m)
    tr, te = perm[:n_train], perm[n_train:]
    return Dataset(data.A[tr], data.t[tr]), Dataset(data.A[te], data.t[te])


def load_dataset(path, fmt: str, labels_path=None, **kw) -> Dataset:
    """Read a dataset from disk; IDX needs an image file and a label file."""
    if fmt == "idx":
        if labels_path is None:
            raise InvalidArgument("IDX input needs --labels")
        with open(path, "rb") as fh:
            images = parse_idx(fh.read())
        with open(labels_path, "rb") as fh:
            labels = parse_idx(fh.read())
        if images.ndim != 3 or labels.ndim != 1:
            raise FormatError("expected an image file and a label file")
        return Dataset(images.reshape(images.shape[0], -1), labels)
    with open(path) as fh:
        text = fh.read()
    if fmt == "libsvm":
        return records_to_dataset(parse_libsvm(text))
    if fmt == "csv":
        return parse_csv_counts(text, **kw)
    raise InvalidArgument(f"unknown format {fmt!r}")
