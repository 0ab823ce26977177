"""Beaver triples: dealing, single-use consumption and the on-disk store.

Triple file layout (little-endian)::

    b"FPT1"  u8 kind  u64 count  u64 gamma-bits
    count x [ per component: u8 rank, u64 dims[rank], f64 payload ]

Kinds: 1 matrix product ``(P, R, PR)``, 2 square ``(P, P^2)``,
3 elementwise product ``(P, R, P*R)``, 4 full linear convolution
``(P, R, conv(P, R))``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import (
    FormatError,
    InvalidArgument,
    ProtocolDesync,
    ReuseError,
    ShapeError,
    TriplesExhausted,
)
from .tensor import STREAM_DEALER, RandomSource, uniform

MATMUL = 1
SQUARE = 2
HADAMARD = 3
CONV = 4

KIND_NAMES = {MATMUL: "mul", SQUARE: "square", HADAMARD: "hadamard", CONV: "conv"}
KIND_BY_NAME = {v: k for k, v in KIND_NAMES.items()}

MAGIC = b"FPT1"
_HEADER = struct.Struct("<4sBQQ")


def input_shapes_ok(kind: int, shapes: tuple) -> bool:
    if kind == SQUARE:
        return len(shapes) == 1
    if len(shapes) != 2:
        return False
    a, b = shapes
    if kind == MATMUL:
        return len(a) == 2 and len(b) == 2 and a[1] == b[0]
    if kind == HADAMARD:
        return tuple(a) == tuple(b)
    if kind == CONV:
        return len(a) == 1 and len(b) == 1 and a[0] > 0 and b[0] > 0
    return False


def _product(kind: int, p, r):
    if kind == MATMUL:
        return p @ r
    if kind == HADAMARD:
        return p * r
    if kind == CONV:
        return np.convolve(p, r)
    raise InvalidArgument(f"kind {kind} has no product")


def _output_shape(kind: int, a: tuple, b: tuple) -> tuple:
    if kind == MATMUL:
        return (a[0], b[1])
    if kind == HADAMARD:
        return tuple(a)
    return (a[0] + b[0] - 1,)


class BeaverTriple:
    """One party's shares of a triple; usable exactly once.

    ``components`` holds ``(P-share, R-share, PR-share)`` for product kinds
    and ``(P-share, P^2-share)`` for squaring.
    """

    __slots__ = ("kind", "components", "gamma", "consumed")

    def __init__(self, kind: int, components, gamma: float):
        self.kind = kind
        self.components = tuple(np.asarray(c, dtype=np.float64) for c in components)
        self.gamma = float(gamma)
        self.consumed = False

    def __repr__(self):
        dims = [c.shape for c in self.components]
        return f"BeaverTriple({KIND_NAMES[self.kind]}, dims={dims}, consumed={self.consumed})"

    @property
    def input_shapes(self) -> tuple:
        if self.kind == SQUARE:
            return (self.components[0].shape,)
        return (self.components[0].shape, self.components[1].shape)

    def consume(self):
        if self.consumed:
            raise ReuseError("Beaver triple already consumed")
        self.consumed = True
        return self.components

    def rescaled(self, s: float) -> "BeaverTriple":
        """Squaring triple for mask width ``s * gamma``.

        ``(sP, s^2 P^2)`` with shares scaled likewise has exactly the law of
        a triple dealt at width ``s * gamma``; for powers of two the scaling
        is exact in binary floating point.
        """
        if self.kind != SQUARE:
            raise InvalidArgument("only squaring triples are rescaled")
        if self.consumed:
            raise ReuseError("Beaver triple already consumed")
        self.consumed = True
        p, p2 = self.components
        return BeaverTriple(SQUARE, (p * s, p2 * (s * s)), self.gamma * s)


class Dealer:
    """Trusted dealer drawing triples from one random stream per kind.

    Separate streams make the triples of each kind depend only on the order
    of requests of that kind, which lets a recorded request sequence be
    replayed into files that match an in-process run exactly.
    """

    def __init__(self, gamma: float, seed: int, n_parties: int = 2):
        if not gamma > 0:
            raise InvalidArgument("gamma must be positive")
        if n_parties < 2:
            raise InvalidArgument("need at least two parties")
        self.gamma = float(gamma)
        self.n_parties = n_parties
        self._rngs = {k: RandomSource(seed, STREAM_DEALER + k) for k in KIND_NAMES}
        self._layouts = {}

    def deal(self, kind: int, shapes, inject=None) -> list:
        """Deal one triple; returns the per-party :class:`BeaverTriple` list.

        ``inject`` optionally fixes the plaintext noise as a dict with keys
        among ``P R Q S T`` (each ``Q``/``S``/``T`` a list with one entry per
        party 1..n-1).  Intended for tests.
        """
        shapes = tuple(tuple(int(d) for d in s) for s in shapes)
        if not input_shapes_ok(kind, shapes):
            raise ShapeError(f"invalid input dims {shapes} for {KIND_NAMES.get(kind, kind)} triple")
        layout, total = self._layout(kind, shapes)
        flat = self._rngs[kind].random(total) * 2.0 - 1.0
        # one draw per triple; pieces are carved off in layout order
        draws = {"P": [], "R": [], "Q": [], "S": [], "T": []}
        for name, shp, width, start, stop in layout:
            draws[name].append(flat[start:stop].reshape(shp) * width)
        for name, vals in (inject or {}).items():
            for i in range(len(draws[name])):
                v = vals if name in ("P", "R") else vals[i]
                draws[name][i] = np.broadcast_to(np.asarray(v, dtype=np.float64), draws[name][i].shape).copy()

        p, qs, ts = draws["P"][0], draws["Q"], draws["T"]
        if kind == SQUARE:
            first = (p - sum(qs), p * p - sum(ts))
            rest = list(zip(qs, ts))
        else:
            r = draws["R"][0]
            ss = draws["S"]
            first = (p - sum(qs), r - sum(ss), _product(kind, p, r) - sum(ts))
            rest = list(zip(qs, ss, ts))
        return [BeaverTriple(kind, comps, self.gamma) for comps in [first, *rest]]

    def _layout(self, kind: int, shapes: tuple):
        key = (kind, shapes)
        hit = self._layouts.get(key)
        if hit is not None:
            return hit
        g, g2, n = self.gamma, self.gamma**2, self.n_parties
        if kind == SQUARE:
            parts = [("P", shapes[0], g)] + [
                (nm, shapes[0], w) for _ in range(n - 1) for nm, w in (("Q", g), ("T", g2))
            ]
        else:
            out_shape = _output_shape(kind, *shapes)
            parts = [("P", shapes[0], g), ("R", shapes[1], g)] + [
                (nm, shp, w) for _ in range(n - 1)
                for nm, shp, w in (("Q", shapes[0], g), ("S", shapes[1], g), ("T", out_shape, g2))
            ]
        layout, off = [], 0
        for name, shp, width in parts:
            size = math.prod(shp)
            layout.append((name, shp, width, off, off + size))
            off += size
        self._layouts[key] = (layout, off)
        return layout, off


def deal_triples(kind, count: int, gamma: float, rng_seed: int, shapes, n_parties: int = 2) -> list:
    """Deal ``count`` triples of one kind; returns one :class:`TripleStore` per party."""
    if isinstance(kind, str):
        kind = KIND_BY_NAME[kind]
    if count < 0:
        raise InvalidArgument("count must be nonnegative")
    dealer = Dealer(gamma, rng_seed, n_parties)
    stores = [TripleStore(kind, gamma) for _ in range(n_parties)]
    for _ in range(count):
        for store, t in zip(stores, dealer.deal(kind, shapes)):
            store.append(t)
    return stores


class TripleStore:
    """Sequentially consumed triples of a single kind for one party.

    Backed either by an in-memory list or by a triple file that is read
    lazily as triples are taken.
    """

    def __init__(self, kind: int, gamma: float, triples=None):
        self.kind = kind
        self.gamma = float(gamma)
        self._items = list(triples or [])
        self._reader = None
        self._count = len(self._items)
        self.consumed = 0

    @classmethod
    def open(cls, path) -> "TripleStore":
        reader = TripleFileReader(path)
        store = cls(reader.kind, reader.gamma)
        store._reader = reader
        store._count = reader.count
        return store

    def __len__(self):
        return self._count

    @property
    def remaining(self) -> int:
        return self._count - self.consumed

    def append(self, triple: BeaverTriple):
        if self._reader is not None:
            raise InvalidArgument("file-backed stores are read-only")
        if triple.kind != self.kind:
            raise InvalidArgument("triple kind does not match store")
        self._items.append(triple)
        self._count += 1

    def take(self, shapes=None) -> BeaverTriple:
        if self.consumed >= self._count:
            raise TriplesExhausted(
                f"{KIND_NAMES[self.kind]} store exhausted after {self.consumed} triples"
            )
        if self._reader is not None:
            triple = self._reader.read_next()
        else:
            triple = self._items[self.consumed]
            self._items[self.consumed] = None
        self.consumed += 1
        if shapes is not None and triple.input_shapes != tuple(tuple(s) for s in shapes):
            raise ShapeError(
                f"next {KIND_NAMES[self.kind]} triple has dims {triple.input_shapes}, "
                f"requested {tuple(shapes)}"
            )
        return triple

    def save(self, path):
        if self._reader is not None:
            raise InvalidArgument("store is already file-backed")
        with TripleFileWriter(path, self.kind, self.gamma, self._count - self.consumed) as w:
            for t in self._items[self.consumed:]:
                w.write(t)

    def close(self):
        if self._reader is not None:
            self._reader.close()


class TripleBank:
    """A party's triple stores keyed by kind; the interface private arithmetic uses."""

    def __init__(self, stores=()):
        self.stores = {s.kind: s for s in stores}

    @classmethod
    def open_dir(cls, directory) -> "TripleBank":
        stores = []
        for kind, name in KIND_NAMES.items():
            path = Path(directory) / f"{name}.fpt"
            if path.exists():
                stores.append(TripleStore.open(path))
        return cls(stores)

    @property
    def gamma(self) -> float:
        gammas = {s.gamma for s in self.stores.values()}
        if len(gammas) != 1:
            raise InvalidArgument(f"triple stores disagree on gamma: {sorted(gammas)}")
        return gammas.pop()

    def take(self, kind: int, shapes) -> BeaverTriple:
        store = self.stores.get(kind)
        if store is None:
            raise TriplesExhausted(f"no {KIND_NAMES[kind]} triples available")
        return store.take(shapes)

    def close(self):
        for s in self.stores.values():
            s.close()


class DealerFeed:
    """In-process dealer shared by simulated parties.

    A triple is dealt when the first party asks for it and handed to the
    others in the same position of their request sequence.
    """

    def __init__(self, dealer: Dealer, record: bool = False):
        self.dealer = dealer
        self._pending = {k: [] for k in KIND_NAMES}  # kind -> list of [shapes, triples, taken]
        self._base = {k: 0 for k in KIND_NAMES}
        self._next = {k: [0] * dealer.n_parties for k in KIND_NAMES}
        self.log = [] if record else None

    def for_party(self, party: int) -> "_FeedView":
        return _FeedView(self, party)

    def take(self, party: int, kind: int, shapes) -> BeaverTriple:
        shapes = tuple(tuple(int(d) for d in s) for s in shapes)
        idx = self._next[kind][party]
        pos = idx - self._base[kind]
        queue = self._pending[kind]
        if pos == len(queue):
            queue.append([shapes, self.dealer.deal(kind, shapes), 0])
            if self.log is not None:
                self.log.append((kind, shapes))
        entry = queue[pos]
        if entry[0] != shapes:
            raise ProtocolDesync(
                f"party {party} requested {KIND_NAMES[kind]} triple {shapes}, "
                f"peers requested {entry[0]}"
            )
        self._next[kind][party] = idx + 1
        triple = entry[1][party]
        entry[1][party] = None
        entry[2] += 1
        while queue and queue[0][2] == self.dealer.n_parties:
            queue.pop(0)
            self._base[kind] += 1
        return triple


class _FeedView:
    __slots__ = ("feed", "party")

    def __init__(self, feed, party):
        self.feed = feed
        self.party = party

    @property
    def gamma(self) -> float:
        return self.feed.dealer.gamma

    def take(self, kind, shapes):
        return self.feed.take(self.party, kind, shapes)


# --------------------------------------------------------------------------
# file I/O


class TripleFileWriter:
    def __init__(self, path, kind: int, gamma: float, count: int):
        self.path = Path(path)
        self.kind = kind
        self.count = count
        self.written = 0
        self._fh: BinaryIO = open(self.path, "wb")
        gamma_bits = struct.unpack("<Q", struct.pack("<d", float(gamma)))[0]
        self._fh.write(_HEADER.pack(MAGIC, kind, count, gamma_bits))

    def write(self, triple: BeaverTriple):
        if triple.kind != self.kind:
            raise InvalidArgument("triple kind does not match file")
        if self.written >= self.count:
            raise InvalidArgument("more triples written than declared in header")
        parts = []
        for c in triple.components:
            parts.append(struct.pack(f"<B{c.ndim}Q", c.ndim, *c.shape))
            parts.append(np.ascontiguousarray(c, dtype="<f8").tobytes())
        self._fh.write(b"".join(parts))
        self.written += 1

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        if self.written != self.count:
            raise FormatError(f"{self.path}: header declares {self.count} triples, wrote {self.written}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, *exc):
        if exc_type is not None:
            self._fh.close()
            self._fh = None
            return False
        self.close()
        return False


class TripleFileReader:
    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        head = self._fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{self.path}: truncated header")
        magic, kind, count, gamma_bits = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{self.path}: bad magic {magic!r}")
        if kind not in KIND_NAMES:
            raise FormatError(f"{self.path}: unknown triple kind {kind}")
        self.kind = kind
        self.count = count
        self.gamma = struct.unpack("<d", struct.pack("<Q", gamma_bits))[0]
        self.n_components = 2 if kind == SQUARE else 3

    def _read(self, n: int) -> bytes:
        b = self._fh.read(n)
        if len(b) != n:
            raise FormatError(f"{self.path}: truncated triple record")
        return b

    def read_next(self) -> BeaverTriple:
        comps = []
        for _ in range(self.n_components):
            (rank,) = struct.unpack("<B", self._read(1))
            dims = struct.unpack(f"<{rank}Q", self._read(8 * rank))
            size = math.prod(dims)
            data = np.frombuffer(self._read(8 * size), dtype="<f8").astype(np.float64)
            comps.append(data.reshape(dims))
        return BeaverTriple(self.kind, comps, self.gamma)

    def read_all(self) -> list:
        return [self.read_next() for _ in range(self.count)]

    def close(self):
        self._fh.close()


def read_triple_file(path) -> TripleStore:
    """Load a whole triple file into an in-memory store."""
    reader = TripleFileReader(path)
    try:
        return TripleStore(reader.kind, reader.gamma, reader.read_all())
    finally:
        reader.close()
