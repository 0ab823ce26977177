"""Shared helpers for running small protocols on the simulated channel."""

import socket
from dataclasses import dataclass, field

import numpy as np

from fpmpc.runtime import PartyContext, run_parties_simulated
from fpmpc.sharing import NoiseSpec, SecretTensor, reconstruct, share_n, share_two
from fpmpc.tensor import RandomSource


@dataclass
class RecordingContext(PartyContext):
    """Party context that keeps every all-reduce result it receives."""

    seen: list = field(default_factory=list)

    async def all_reduce(self, local, tag=None):
        v = await super().all_reduce(local, tag)
        self.seen.append(np.array(v))
        return v


def share(x, n=2, gamma=1e5, seed=0, mask=None):
    x = np.asarray(x, dtype=np.float64)
    beta = max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    if mask is not None:
        return list(share_two(x, NoiseSpec(gamma, beta), RandomSource(seed), mask=mask))
    if n == 2:
        return list(share_two(x, NoiseSpec(gamma, beta), RandomSource(seed)))
    return share_n(x, n, NoiseSpec(gamma, beta), RandomSource(seed), 0)


def run(n, body, recording=False):
    """Run ``await body(ctx)`` for every party; returns (outputs, contexts)."""
    cls = RecordingContext if recording else PartyContext
    ctxs = [cls(i, n) for i in range(n)]

    async def program(ctx):
        return await body(ctx)

    return run_parties_simulated(program, n, ctxs), ctxs


def open_(outputs):
    return reconstruct([o for o in outputs if isinstance(o, SecretTensor)])


def free_ports(k):
    """``k`` loopback addresses whose ports were free a moment ago."""
    socks = [socket.socket() for _ in range(k)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return [f"127.0.0.1:{p}" for p in ports]


# criterion number -> "criterion N: PASS|FAIL ..." line, printed at the end of the run
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed
