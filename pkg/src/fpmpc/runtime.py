"""Party contexts, the all-reduce rendezvous, and two transports.

Protocol code is written once as ``async def`` functions of a
:class:`PartyContext`.  The only suspension point is
``await ctx.all_reduce(tensor)``, which yields an :class:`AllReduceRequest`
to whichever driver is running the coroutine:

* :func:`run_parties_simulated` steps ``n`` party coroutines in lockstep in
  one thread and performs the sums itself;
* :func:`run_party_tcp` runs a single party and fulfils each request over
  TCP with the framing below.

Both drivers sum contributions in ascending party order, so a run yields
bit-identical outputs on either transport.

Wire frame (little-endian)::

    u32 length-of-rest  u8 msg-type  u64 tag  u32 seq  u8 rank  u64 dims[rank]  f64 payload

msg-type 1 is an all-reduce contribution, 2 an all-reduce result and 3 the
connection hello (tag carries the sender's party id, no payload).
"""

from __future__ import annotations

import logging
import socket
import struct
import time
import types
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InvalidArgument, PeerUnreachable, ProtocolDesync
from .leakage import LeakageLedger

log = logging.getLogger(__name__)

MSG_CONTRIB = 1
MSG_RESULT = 2
MSG_HELLO = 3

DEFAULT_TIMEOUT = 30.0

_FRAME_HEAD = struct.Struct("<BQIB")
_LEN = struct.Struct("<I")


@dataclass
class AllReduceRequest:
    data: np.ndarray
    tag: int


@types.coroutine
def _suspend(request: AllReduceRequest):
    result = yield request
    return result


@dataclass
class PartyContext:
    """Everything one party needs while executing a protocol."""

    party_id: int
    n_parties: int
    triples: Any = None
    ledger: LeakageLedger = field(default_factory=LeakageLedger)
    rng: Any = None
    session: int = 0
    _tag: int = 0

    def __post_init__(self):
        if not 0 <= self.party_id < self.n_parties:
            raise InvalidArgument(f"party id {self.party_id} outside [0, {self.n_parties})")

    def next_tag(self) -> int:
        self._tag += 1
        return self._tag

    def all_reduce(self, local: np.ndarray, tag: int | None = None):
        """Awaitable entrywise sum of every party's ``local`` tensor."""
        if tag is None:
            tag = self.next_tag()
        return _suspend(AllReduceRequest(np.asarray(local, dtype=np.float64), tag))


def run_sync(coro):
    """Run a coroutine that must not communicate (public-mode arithmetic)."""
    try:
        req = coro.send(None)
    except StopIteration as stop:
        return stop.value
    coro.close()
    raise ProtocolDesync(f"public computation attempted an all-reduce ({req.tag})")


@dataclass
class ChannelStats:
    rounds: int = 0
    values: int = 0


def run_parties_simulated(
    program: Callable[[PartyContext], Any],
    n: int,
    contexts: Sequence[PartyContext] | None = None,
    stats: ChannelStats | None = None,
) -> list:
    """Execute ``program(ctx)`` for ``n`` parties over an in-memory channel.

    Returns the per-party return values, indexed by party id.
    """
    if contexts is None:
        contexts = [PartyContext(i, n) for i in range(n)]
    if len(contexts) != n:
        raise InvalidArgument("need one context per party")
    coros = [program(ctx) for ctx in contexts]
    outputs = [None] * n
    values: list = [None] * n
    try:
        while True:
            reqs = []
            finished = 0
            for i, coro in enumerate(coros):
                try:
                    reqs.append(coro.send(values[i]))
                except StopIteration as stop:
                    outputs[i] = stop.value
                    reqs.append(None)
                    finished += 1
            if finished == n:
                return outputs
            if finished:
                raise ProtocolDesync("some parties finished while others wait in an all-reduce")
            first = reqs[0]
            total = first.data.copy()
            for i in range(1, n):
                r = reqs[i]
                if r.tag != first.tag:
                    raise ProtocolDesync(f"all-reduce tags differ: {first.tag} vs {r.tag} (party {i})")
                if r.data.shape != first.data.shape:
                    raise ProtocolDesync(
                        f"all-reduce dims differ: {first.data.shape} vs {r.data.shape} (party {i})"
                    )
                total = total + r.data
            total.flags.writeable = False
            if stats is not None:
                stats.rounds += 1
                stats.values += total.size
            values = [total] * n
    finally:
        for coro in coros:
            coro.close()


# --------------------------------------------------------------------------
# TCP transport


def encode_frame(msg_type: int, tag: int, seq: int, data: np.ndarray | None) -> bytes:
    if data is None:
        body = _FRAME_HEAD.pack(msg_type, tag, seq, 0)
    else:
        data = np.asarray(data, dtype=np.float64)
        body = (
            _FRAME_HEAD.pack(msg_type, tag, seq, data.ndim)
            + struct.pack(f"<{data.ndim}Q", *data.shape)
            + np.ascontiguousarray(data, dtype="<f8").tobytes()
        )
    return _LEN.pack(len(body)) + body


def decode_frame(body: bytes):
    """Parse a frame body (without the length prefix) into ``(type, tag, seq, array)``."""
    if len(body) < _FRAME_HEAD.size:
        raise ProtocolDesync("short frame")
    msg_type, tag, seq, rank = _FRAME_HEAD.unpack_from(body, 0)
    off = _FRAME_HEAD.size
    dims = struct.unpack_from(f"<{rank}Q", body, off)
    off += 8 * rank
    size = int(np.prod(dims)) if rank else 0
    if msg_type == MSG_HELLO:
        return msg_type, tag, seq, None
    if rank == 0:
        size = 1 if len(body) - off == 8 else 0
    if len(body) - off != 8 * size:
        raise ProtocolDesync(f"frame payload length {len(body) - off} does not match dims {dims}")
    data = np.frombuffer(body, dtype="<f8", count=size, offset=off).astype(np.float64)
    return msg_type, tag, seq, data.reshape(dims)


class TcpChannel:
    """Framed, sequence-checked connection to one peer."""

    def __init__(self, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT):
        self.sock = sock
        self.sock.settimeout(timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.send_seq = 0
        self.recv_seq = 0

    def send(self, msg_type: int, tag: int, data=None):
        self.send_seq += 1
        try:
            self.sock.sendall(encode_frame(msg_type, tag, self.send_seq, data))
        except socket.timeout as exc:
            raise PeerUnreachable("timed out sending to peer") from exc
        except OSError as exc:
            raise PeerUnreachable(f"send failed: {exc}") from exc

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except socket.timeout as exc:
                raise PeerUnreachable("timed out waiting for peer") from exc
            except OSError as exc:
                raise PeerUnreachable(f"receive failed: {exc}") from exc
            if not chunk:
                raise PeerUnreachable("peer closed the connection")
            buf += chunk
        return bytes(buf)

    def recv(self, expect_type: int, expect_tag: int | None = None):
        (length,) = _LEN.unpack(self._recv_exact(_LEN.size))
        msg_type, tag, seq, data = decode_frame(self._recv_exact(length))
        self.recv_seq += 1
        if seq != self.recv_seq:
            raise ProtocolDesync(f"sequence number {seq}, expected {self.recv_seq}")
        if msg_type != expect_type:
            raise ProtocolDesync(f"message type {msg_type}, expected {expect_type}")
        if expect_tag is not None and tag != expect_tag:
            raise ProtocolDesync(f"all-reduce tag {tag}, expected {expect_tag}")
        return tag, data

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def parse_address(addr: str) -> tuple:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise InvalidArgument(f"bad address {addr!r}; expected host:port")
    return host, int(port)


class TcpTransport:
    """Star topology around party 0; plain exchange when there are two parties."""

    def __init__(self, party_id: int, channels: dict, n_parties: int):
        self.party_id = party_id
        self.channels = channels
        self.n_parties = n_parties

    @classmethod
    def serve(cls, address: str, n_parties: int, timeout: float = DEFAULT_TIMEOUT) -> "TcpTransport":
        """Party 0: listen and accept one connection from every other party."""
        host, port = parse_address(address)
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(n_parties)
        srv.settimeout(timeout)
        channels = {}
        try:
            while len(channels) < n_parties - 1:
                try:
                    conn, _ = srv.accept()
                except socket.timeout as exc:
                    raise PeerUnreachable(
                        f"only {len(channels)} of {n_parties - 1} peers connected"
                    ) from exc
                ch = TcpChannel(conn, timeout)
                peer, _ = ch.recv(MSG_HELLO)
                if not 0 < peer < n_parties or peer in channels:
                    ch.close()
                    raise ProtocolDesync(f"unexpected hello from party {peer}")
                channels[peer] = ch
        finally:
            srv.close()
        return cls(0, channels, n_parties)

    @classmethod
    def connect(
        cls, party_id: int, hub_address: str, n_parties: int, timeout: float = DEFAULT_TIMEOUT
    ) -> "TcpTransport":
        """Parties 1..n-1: connect to party 0, retrying until ``timeout``."""
        host, port = parse_address(hub_address)
        deadline = time.monotonic() + timeout
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=timeout)
                break
            except OSError as exc:
                if time.monotonic() > deadline:
                    raise PeerUnreachable(f"cannot reach party 0 at {hub_address}: {exc}") from exc
                time.sleep(0.05)
        ch = TcpChannel(sock, timeout)
        ch.send(MSG_HELLO, party_id)
        return cls(party_id, {0: ch}, n_parties)

    @classmethod
    def open(cls, party_id: int, peers: Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        n = len(peers)
        if n < 2:
            raise InvalidArgument("need at least two peer addresses")
        if party_id == 0:
            return cls.serve(peers[0], n, timeout)
        return cls.connect(party_id, peers[0], n, timeout)

    def all_reduce(self, data: np.ndarray, tag: int) -> np.ndarray:
        if self.n_parties == 2:
            ch = self.channels[1 - self.party_id]
            # lower id speaks first so large frames cannot deadlock on full buffers
            if self.party_id == 0:
                ch.send(MSG_CONTRIB, tag, data)
                _, other = ch.recv(MSG_CONTRIB, tag)
                contribs = (data, other)
            else:
                _, other = ch.recv(MSG_CONTRIB, tag)
                ch.send(MSG_CONTRIB, tag, data)
                contribs = (other, data)
            if contribs[1].shape != contribs[0].shape:
                raise ProtocolDesync(f"all-reduce dims differ: {contribs[0].shape} vs {contribs[1].shape}")
            return contribs[0] + contribs[1]
        if self.party_id == 0:
            total = np.asarray(data, dtype=np.float64).copy()
            for p in range(1, self.n_parties):
                _, other = self.channels[p].recv(MSG_CONTRIB, tag)
                if other.shape != total.shape:
                    raise ProtocolDesync(f"all-reduce dims differ at party {p}")
                total = total + other
            for p in range(1, self.n_parties):
                self.channels[p].send(MSG_RESULT, tag, total)
            return total
        ch = self.channels[0]
        ch.send(MSG_CONTRIB, tag, data)
        _, total = ch.recv(MSG_RESULT, tag)
        return total

    def close(self):
        for ch in self.channels.values():
            ch.close()


def run_party_tcp(program: Callable[[PartyContext], Any], ctx: PartyContext, transport: TcpTransport):
    """Drive one party's coroutine, fulfilling each all-reduce over TCP."""
    coro = program(ctx)
    value = None
    rounds = 0
    try:
        while True:
            try:
                req = coro.send(value)
            except StopIteration as stop:
                log.debug("party %d finished after %d all-reduce rounds", ctx.party_id, rounds)
                return stop.value
            value = transport.all_reduce(req.data, req.tag)
            value.flags.writeable = False
            rounds += 1
    finally:
        coro.close()
