import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from fpmpc.errors import FormatError, InvalidArgument, ProtocolDesync, ReuseError, ShapeError, TriplesExhausted
from fpmpc.tensor import RandomSource
from fpmpc.triples import (
    CONV, HADAMARD, MATMUL, SQUARE, BeaverTriple, Dealer, DealerFeed, TripleBank, TripleFileReader,
    TripleStore, deal_triples, read_triple_file,
)

G = 1e5
EPS = np.finfo(float).eps


def _sum(triples):
    return [sum(t.components[i] for t in triples) for i in range(len(triples[0].components))]


def test_square_injected_zero():
    parts = Dealer(G, 0).deal(SQUARE, [(1,)], inject={"P": 0.0, "Q": [0.0], "T": [0.0]})
    for t in parts:
        for c in t.components:
            assert_array_equal(c, [0.0])


def test_two_party_layout_matches_replayed_stream():
    # P, R, then Q, S, T for party 1, carved from one uniform draw
    seed, shapes = 5, ((2, 3), (3, 4))
    p0, p1 = Dealer(G, seed).deal(MATMUL, shapes)
    u = RandomSource(seed, 16 + MATMUL).random(6 + 12 + 6 + 12 + 8) * 2 - 1
    P, R = u[:6].reshape(2, 3) * G, u[6:18].reshape(3, 4) * G
    Q, S, T = u[18:24].reshape(2, 3) * G, u[24:36].reshape(3, 4) * G, u[36:].reshape(2, 4) * (G * G)
    assert_array_equal(p1.components[0], Q)
    assert_array_equal(p1.components[1], S)
    assert_array_equal(p1.components[2], T)
    assert_array_equal(p0.components[0], P - Q)
    assert_array_equal(p0.components[1], R - S)
    assert_array_equal(p0.components[2], P @ R - T)


def test_widths_at_default_gamma():
    parts = Dealer(G, 1).deal(SQUARE, [(2000,)])
    q, t = parts[1].components
    assert np.all(np.abs(q) <= G)
    assert np.all(np.abs(t) <= G * G)
    assert np.max(np.abs(t)) > 0.9 * G * G


@pytest.mark.parametrize("kind,shapes", [
    (MATMUL, ((4, 3), (3, 2))),
    (HADAMARD, ((5,), (5,))),
    (CONV, ((4,), (6,))),
])
@pytest.mark.parametrize("n", [2, 3])
def test_share_sums_reconstruct_products(kind, shapes, n):
    parts = Dealer(G, 9, n).deal(kind, shapes)
    p, r, pr = _sum(parts)
    ref = {MATMUL: np.matmul, HADAMARD: np.multiply, CONV: np.convolve}[kind](p, r)
    inner = {MATMUL: 3, HADAMARD: 1, CONV: 4}[kind]
    assert np.max(np.abs(ref - pr)) <= 4 * inner * n * G * G * EPS


def test_square_sums():
    p, p2 = _sum(Dealer(G, 3).deal(SQUARE, [(3, 3)]))
    assert np.max(np.abs(p * p - p2)) <= 4 * G * G * EPS


def test_invalid_dims():
    d = Dealer(G, 0)
    with pytest.raises(ShapeError):
        d.deal(MATMUL, [(2, 3), (2, 3)])
    with pytest.raises(ShapeError):
        d.deal(HADAMARD, [(2,), (3,)])
    with pytest.raises(ShapeError):
        d.deal(SQUARE, [(2,), (2,)])


def test_dealer_is_deterministic_and_kinds_are_independent():
    a = Dealer(G, 4)
    b = Dealer(G, 4)
    a.deal(SQUARE, [(3,)])  # extra square draw must not shift the mul stream
    ta, tb = a.deal(MATMUL, [(1, 1), (1, 1)]), b.deal(MATMUL, [(1, 1), (1, 1)])
    assert_array_equal(ta[0].components[2], tb[0].components[2])


def test_single_use():
    t = Dealer(G, 0).deal(SQUARE, [(1,)])[0]
    t.consume()
    with pytest.raises(ReuseError):
        t.consume()
    with pytest.raises(ReuseError):
        t.rescaled(0.5)


def test_rescaled_is_exact_for_powers_of_two():
    t = Dealer(G, 0).deal(SQUARE, [(4,)])[1]
    p, p2 = t.components
    s = t.rescaled(2.0 ** -7)
    assert_array_equal(s.components[0], p * 2.0 ** -7)
    assert_array_equal(s.components[1], p2 * 2.0 ** -14)
    assert s.gamma == G * 2.0 ** -7


def test_store_exhaustion_and_shape_check():
    (s0, s1) = deal_triples("square", 2, G, 0, [(3,)])
    s0.take([(3,)])
    with pytest.raises(ShapeError):
        s0.take([(4,)])
    with pytest.raises(TriplesExhausted):
        s0.take()
    assert s1.remaining == 2


def test_file_round_trip(tmp_path):
    stores = deal_triples("mul", 3, G, 2, [(2, 2), (2, 1)])
    stores[0].save(tmp_path / "mul.fpt")
    back = read_triple_file(tmp_path / "mul.fpt")
    fresh = deal_triples("mul", 3, G, 2, [(2, 2), (2, 1)])[0]
    assert back.kind == MATMUL and back.gamma == G and len(back) == 3
    for _ in range(3):
        a, b = back.take(), fresh.take()
        for x, y in zip(a.components, b.components):
            assert_array_equal(x, y)


def test_file_layout(tmp_path):
    stores = deal_triples("square", 1, 8.0, 0, [(2,)])
    stores[1].save(tmp_path / "s.fpt")
    raw = (tmp_path / "s.fpt").read_bytes()
    magic, kind, count, gbits = struct.unpack_from("<4sBQQ", raw)
    assert (magic, kind, count) == (b"FPT1", SQUARE, 1)
    assert struct.unpack("<d", struct.pack("<Q", gbits))[0] == 8.0
    off = 21
    rank, dim = struct.unpack_from("<BQ", raw, off)
    assert (rank, dim) == (1, 2)
    q = np.frombuffer(raw, "<f8", 2, off + 9)
    assert_array_equal(q, stores[1]._items[0].components[0])


def test_empty_file(tmp_path):
    deal_triples("mul", 0, G, 0, [(1, 1), (1, 1)])[0].save(tmp_path / "e.fpt")
    assert len((tmp_path / "e.fpt").read_bytes()) == 21
    store = TripleStore.open(tmp_path / "e.fpt")
    assert len(store) == 0
    with pytest.raises(TriplesExhausted):
        store.take()
    store.close()


def test_corrupt_files(tmp_path):
    p = tmp_path / "bad.fpt"
    p.write_bytes(b"NOPE" + bytes(17))
    with pytest.raises(FormatError):
        TripleFileReader(p)
    deal_triples("square", 2, G, 0, [(2,)])[0].save(p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FormatError):
        read_triple_file(p)


def test_bank_and_gamma(tmp_path):
    for name in ("mul", "square"):
        for i, s in enumerate(deal_triples(name, 1, G, 0, [(1, 1), (1, 1)] if name == "mul" else [(1,)])):
            (tmp_path / f"party{i}").mkdir(exist_ok=True)
            s.save(tmp_path / f"party{i}" / f"{name}.fpt")
    bank = TripleBank.open_dir(tmp_path / "party0")
    assert bank.gamma == G
    bank.take(SQUARE, [(1,)])
    with pytest.raises(TriplesExhausted):
        bank.take(HADAMARD, [(1,), (1,)])
    bank.close()
    mixed = TripleBank([TripleStore(MATMUL, 1e5), TripleStore(SQUARE, 1e3)])
    with pytest.raises(InvalidArgument):
        mixed.gamma


def test_feed_hands_out_matching_pieces():
    feed = DealerFeed(Dealer(G, 3, 3), record=True)
    got = [feed.take(p, MATMUL, [(2, 2), (2, 2)]) for p in (2, 0, 1)]
    p, r, pr = (sum(t.components[i] for t in got) for i in range(3))
    assert np.max(np.abs(p @ r - pr)) <= 24 * G * G * EPS
    assert feed.log == [(MATMUL, ((2, 2), (2, 2)))]
    feed.take(0, MATMUL, [(2, 2), (2, 2)])
    with pytest.raises(ProtocolDesync):
        feed.take(1, MATMUL, [(3, 3), (3, 3)])


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32))
def test_mul_reconstruction_property(a, b, c, seed):
    parts = Dealer(G, seed).deal(MATMUL, [(a, b), (b, c)])
    p, r, pr = _sum(parts)
    assert np.max(np.abs(p @ r - pr)) <= 4 * b * G * G * EPS * 2


def test_triple_repr_mentions_kind():
    assert "square" in repr(BeaverTriple(SQUARE, [np.zeros(1), np.zeros(1)], G))
