"""The exponential proof: per-segment prefix-tree conditionals and leaf phases.

Segment ``i`` describes the claimed state after gate ``i``. It stores
``2**n - 1`` probability entries, one per prefix ``w`` with ``|w| < n`` in heap
order (node ``2**k - 1 + w`` for a length-``k`` prefix), each holding
``Pr[next bit = 1 | w]`` as an unsigned integer over ``2**b``; and ``2**n``
phase entries, a fixed-point complex number per leaf ``x``.

Every bit pattern decodes to a normalized state: probabilities are clamped to
``[0, 2**b]``, the 0-branch is always the complement of the stored 1-branch,
and phases are renormalized (near-zero phases decode to 1).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .quantum import NORM_ATOL, StateVector

MAGIC = b"QPCP"
VERSION = 1
HEADER = struct.Struct("<4sIHIHH")
DEFAULT_BITS = 96

PROB = "prob"
PHASE = "phase"


class ProofFormatError(ValueError):
    pass


class ProofUnavailable(RuntimeError):
    """The backing answer source cannot serve a read."""


def prob_bytes(b: int) -> int:
    return (b + 1 + 7) // 8


def phase_component_bytes(b: int) -> int:
    return (b + 3 + 7) // 8


def entry_width_bits(b: int) -> int:
    """Width of the fixed entry alphabet (the wider of the two entry kinds)."""
    return max(8 * prob_bytes(b), 16 * phase_component_bytes(b))


def segment_size(n: int) -> int:
    return (1 << (n + 1)) - 1


def proof_length(n: int, m: int) -> int:
    return (m + 1) * segment_size(n)


def file_size(n: int, m: int, b: int) -> int:
    per_segment = ((1 << n) - 1) * prob_bytes(b) + (1 << n) * 2 * phase_component_bytes(b)
    return HEADER.size + (m + 1) * per_segment


def prob_node(k: int, w: int) -> int:
    """Heap index of the length-``k`` prefix ``w``."""
    return (1 << k) - 1 + w


def node_prefix(node: int) -> tuple[int, int]:
    k = (node + 1).bit_length() - 1
    return k, node - ((1 << k) - 1)


@dataclass(frozen=True)
class ProofAddress:
    segment: int
    kind: str
    index: int  # heap node for PROB, leaf string for PHASE

    @classmethod
    def prob(cls, segment: int, k: int, w: int) -> "ProofAddress":
        return cls(segment, PROB, prob_node(k, w))

    @classmethod
    def phase(cls, segment: int, x: int) -> "ProofAddress":
        return cls(segment, PHASE, x)

    def flat(self, n: int) -> int:
        off = self.index if self.kind == PROB else (1 << n) - 1 + self.index
        return self.segment * segment_size(n) + off

    @classmethod
    def from_flat(cls, flat: int, n: int, m: int) -> "ProofAddress":
        if not 0 <= flat < proof_length(n, m):
            raise IndexError(f"flat index {flat} out of range")
        seg, off = divmod(flat, segment_size(n))
        nprob = (1 << n) - 1
        if off < nprob:
            return cls(seg, PROB, off)
        return cls(seg, PHASE, off - nprob)

    def validate(self, n: int, m: int) -> None:
        if not 0 <= self.segment <= m:
            raise IndexError(f"segment {self.segment} out of range 0..{m}")
        limit = (1 << n) - 1 if self.kind == PROB else 1 << n
        if self.kind not in (PROB, PHASE) or not 0 <= self.index < limit:
            raise IndexError(f"bad address {self}")


# -- fixed-point entries -----------------------------------------------------

def encode_prob(p: float, b: int) -> int:
    return int(min(max(round(math.ldexp(p, b)), 0), 1 << b))


def decode_prob(raw: int, b: int) -> tuple[float, float]:
    """(p0, p1) for a stored 1-branch entry, clamped to [0, 2**b]."""
    r = min(raw, 1 << b)
    return math.ldexp(float((1 << b) - r), -b), math.ldexp(float(r), -b)


def encode_phase(z: complex, b: int) -> tuple[int, int]:
    lim = 1 << (b + 1)
    re = min(max(round(math.ldexp(z.real, b)), -lim), lim - 1)
    im = min(max(round(math.ldexp(z.imag, b)), -lim), lim - 1)
    return int(re), int(im)


def decode_phase(re: int, im: int, b: int) -> complex:
    # |(re, im)| / 2**b < 2**(-b/2)  <=>  re**2 + im**2 < 2**b
    if re * re + im * im < (1 << b):
        return complex(1.0, 0.0)
    fr, fi = float(re), float(im)
    mag = math.hypot(fr, fi)
    return complex(fr / mag, fi / mag)


def pack_phase(re: int, im: int, b: int) -> int:
    w = 8 * phase_component_bytes(b)
    mask = (1 << w) - 1
    return ((re & mask) << w) | (im & mask)


def unpack_phase(value: int, b: int) -> tuple[int, int]:
    w = 8 * phase_component_bytes(b)
    mask = (1 << w) - 1
    return _signed(value >> w, w), _signed(value & mask, w)


def _signed(u: int, w: int) -> int:
    return u - (1 << w) if u >> (w - 1) else u


def entry_in_range(kind: str, value: int, b: int) -> bool:
    width = 8 * prob_bytes(b) if kind == PROB else 16 * phase_component_bytes(b)
    return isinstance(value, int) and 0 <= value < (1 << width)


# -- the proof object ----------------------------------------------------------

@dataclass(frozen=True)
class PcpProof:
    n: int
    m: int
    b: int
    probs: tuple  # (m+1) tuples of 2**n - 1 raw ints
    phase_re: tuple  # (m+1) tuples of 2**n signed raw ints
    phase_im: tuple

    def __post_init__(self):
        if len(self.probs) != self.m + 1 or len(self.phase_re) != self.m + 1 \
                or len(self.phase_im) != self.m + 1:
            raise ProofFormatError("segment count does not match m")
        for i in range(self.m + 1):
            if len(self.probs[i]) != (1 << self.n) - 1:
                raise ProofFormatError(f"segment {i}: wrong number of probability entries")
            if len(self.phase_re[i]) != 1 << self.n or len(self.phase_im[i]) != 1 << self.n:
                raise ProofFormatError(f"segment {i}: wrong number of phase entries")

    @property
    def length(self) -> int:
        return proof_length(self.n, self.m)

    def entry(self, addr: ProofAddress) -> int:
        if addr.kind == PROB:
            return self.probs[addr.segment][addr.index]
        return self.packed_phases[addr.segment][addr.index]

    def entry_at(self, flat: int) -> int:
        return self.entry(ProofAddress.from_flat(flat, self.n, self.m))

    @cached_property
    def packed_phases(self) -> tuple:
        return tuple(
            tuple(pack_phase(r, i, self.b) for r, i in zip(res, ims))
            for res, ims in zip(self.phase_re, self.phase_im)
        )

    @cached_property
    def _decoded(self) -> tuple:
        return tuple(_decode_segment(self, i) for i in range(self.m + 1))

    def replace_segment(self, i: int, other: "PcpProof", j: int | None = None) -> "PcpProof":
        """Copy of this proof with segment ``i`` taken from ``other``'s segment ``j``."""
        j = i if j is None else j
        probs, pre, pim = list(self.probs), list(self.phase_re), list(self.phase_im)
        probs[i], pre[i], pim[i] = other.probs[j], other.phase_re[j], other.phase_im[j]
        return PcpProof(self.n, self.m, self.b, tuple(probs), tuple(pre), tuple(pim))


def _segment_conditionals(state: StateVector, b: int) -> tuple:
    n = state.n
    probs = state.probabilities()
    raws = []
    for k in range(n):
        parent = probs.reshape(1 << k, -1).sum(axis=1)
        child = probs.reshape(1 << (k + 1), -1).sum(axis=1)[1::2]
        ratio = np.divide(child, parent, out=np.zeros_like(parent), where=parent > 0)
        scaled = np.rint(np.ldexp(np.clip(ratio, 0.0, 1.0), b))
        raws.extend(int(v) for v in scaled)
    return tuple(raws)


def _segment_phases(state: StateVector, b: int) -> tuple[tuple, tuple]:
    a = state.amplitudes
    mag = np.abs(a)
    unit = np.where(mag > 0, a / np.where(mag > 0, mag, 1.0), 1.0 + 0j)
    res, ims = [], []
    for z in unit:
        r, i = encode_phase(complex(z), b)
        res.append(r)
        ims.append(i)
    return tuple(res), tuple(ims)


def build_honest_proof(states, b: int = DEFAULT_BITS, executor=None) -> PcpProof:
    """Encode a computation history ``states[0..m]`` as a proof with ``b`` fraction bits."""
    if b < 16:
        raise ValueError("need at least 16 fraction bits")
    states = list(states)
    if not states:
        raise ValueError("need at least one state")
    n = states[0].n
    for i, s in enumerate(states):
        if s.n != n:
            raise ValueError(f"state {i} has n={s.n}, expected {n}")
        if abs(s.norm() - 1) > NORM_ATOL:
            raise ValueError(f"state {i} is not normalized (norm {s.norm():.12f})")

    def segment(s):
        return _segment_conditionals(s, b), _segment_phases(s, b)

    segs = list(executor.map(segment, states)) if executor is not None else [segment(s) for s in states]
    return PcpProof(
        n, len(states) - 1, b,
        tuple(p for p, _ in segs),
        tuple(ph[0] for _, ph in segs),
        tuple(ph[1] for _, ph in segs),
    )


def _decode_segment(proof: PcpProof, i: int):
    """Float tables for segment ``i``: (p0 per node, p1 per node, phase per leaf, amplitudes)."""
    n, b = proof.n, proof.b
    p0 = np.empty((1 << n) - 1)
    p1 = np.empty((1 << n) - 1)
    for node, raw in enumerate(proof.probs[i]):
        p0[node], p1[node] = decode_prob(raw, b)
    phases = np.array(
        [decode_phase(r, im, b) for r, im in zip(proof.phase_re[i], proof.phase_im[i])],
        dtype=complex,
    )
    xs = np.arange(1 << n)
    prod = np.ones(1 << n)
    # same multiplication order as the per-string amplitude routine
    for k in range(n):
        node = (1 << k) - 1 + (xs >> (n - k))
        bit = (xs >> (n - 1 - k)) & 1
        prod = prod * np.where(bit == 1, p1[node], p0[node])
    s = np.sqrt(prod)
    amps = phases.real * s + 1j * (phases.imag * s)
    return p0, p1, phases, amps


def decode_state(proof: PcpProof, i: int) -> StateVector:
    if not 0 <= i <= proof.m:
        raise IndexError(f"segment {i} out of range 0..{proof.m}")
    return StateVector(proof.n, proof._decoded[i][3])


def random_proof(n: int, m: int, b: int, rng: np.random.Generator) -> PcpProof:
    """Uniformly random bit pattern over the full stored entry widths."""
    wp, wph = 8 * prob_bytes(b), 8 * phase_component_bytes(b)

    def uint(width, count):
        words = rng.integers(0, 1 << 32, size=(count, (width + 31) // 32), dtype=np.uint64)
        out = []
        for row in words:
            v = 0
            for wd in row:
                v = (v << 32) | int(wd)
            out.append(v & ((1 << width) - 1))
        return out

    probs, res, ims = [], [], []
    for _ in range(m + 1):
        probs.append(tuple(uint(wp, (1 << n) - 1)))
        res.append(tuple(_signed(u, wph) for u in uint(wph, 1 << n)))
        ims.append(tuple(_signed(u, wph) for u in uint(wph, 1 << n)))
    return PcpProof(n, m, b, tuple(probs), tuple(res), tuple(ims))


# -- query access ----------------------------------------------------------------

class BudgetExceeded(RuntimeError):
    pass


class AnswerFeed:
    """Remote backing: serves a prover's answer list in order, whatever is asked."""

    def __init__(self, answers, b: int):
        self.answers = list(answers)
        self.b = b
        self.pos = 0

    def __call__(self, addr: ProofAddress) -> int:
        if self.pos >= len(self.answers):
            raise ProofUnavailable(f"answer list exhausted after {self.pos} entries")
        value = self.answers[self.pos]
        self.pos += 1
        if not entry_in_range(addr.kind, value, self.b):
            raise ProofUnavailable(f"malformed {addr.kind} entry at position {self.pos - 1}")
        return value


class ProofAccess:
    """Metered, traced read access to a proof (in memory or remote)."""

    def __init__(self, backing, n: int | None = None, m: int | None = None,
                 b: int | None = None, max_queries: int | None = None):
        if isinstance(backing, PcpProof):
            n, m, b = backing.n, backing.m, backing.b
            self._read = backing.entry
        else:
            if n is None or m is None or b is None:
                raise ValueError("remote backing needs explicit (n, m, b)")
            self._read = backing
        self.backing = backing
        self.n, self.m, self.b = n, m, b
        self.trace: list[tuple[ProofAddress, int]] = []
        self.proof_query_count = 0
        self.max_queries = max_queries

    def read(self, addr: ProofAddress) -> int:
        addr.validate(self.n, self.m)
        if self.max_queries is not None and self.proof_query_count >= self.max_queries:
            raise BudgetExceeded(f"proof query budget {self.max_queries} exhausted")
        value = self._read(addr)
        self.proof_query_count += 1
        self.trace.append((addr, value))
        return value

    def read_prob(self, segment: int, k: int, w: int) -> tuple[float, float]:
        return decode_prob(self.read(ProofAddress.prob(segment, k, w)), self.b)

    def read_phase(self, segment: int, x: int) -> complex:
        value = self.read(ProofAddress.phase(segment, x))
        return decode_phase(*unpack_phase(value, self.b), self.b)


read = ProofAccess.read


# -- binary file format ------------------------------------------------------------

def serialize(proof: PcpProof) -> bytes:
    n, m, b = proof.n, proof.m, proof.b
    pb, cb = prob_bytes(b), phase_component_bytes(b)
    out = bytearray(HEADER.pack(MAGIC, VERSION, n, m, b, 0))
    for i in range(m + 1):
        for raw in proof.probs[i]:
            out += raw.to_bytes(pb, "little", signed=False)
        for re, im in zip(proof.phase_re[i], proof.phase_im[i]):
            out += re.to_bytes(cb, "little", signed=True)
            out += im.to_bytes(cb, "little", signed=True)
    return bytes(out)


def deserialize(data: bytes) -> PcpProof:
    if len(data) < HEADER.size:
        raise ProofFormatError("truncated header")
    magic, version, n, m, b, reserved = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ProofFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProofFormatError(f"unsupported version {version}")
    if reserved != 0:
        raise ProofFormatError("reserved header field must be zero")
    if n < 1 or b < 16:
        raise ProofFormatError(f"bad parameters n={n}, b={b}")
    expected = file_size(n, m, b)
    if len(data) < expected:
        raise ProofFormatError(f"truncated proof: {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise ProofFormatError(f"{len(data) - expected} trailing bytes")
    pb, cb = prob_bytes(b), phase_component_bytes(b)
    pos = HEADER.size
    probs, res, ims = [], [], []
    for _ in range(m + 1):
        seg = []
        for _ in range((1 << n) - 1):
            seg.append(int.from_bytes(data[pos:pos + pb], "little", signed=False))
            pos += pb
        r, im = [], []
        for _ in range(1 << n):
            r.append(int.from_bytes(data[pos:pos + cb], "little", signed=True))
            im.append(int.from_bytes(data[pos + cb:pos + 2 * cb], "little", signed=True))
            pos += 2 * cb
        probs.append(tuple(seg))
        res.append(tuple(r))
        ims.append(tuple(im))
    return PcpProof(n, m, b, tuple(probs), tuple(res), tuple(ims))


def write_proof(proof: PcpProof, path) -> int:
    data = serialize(proof)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def read_proof(path) -> PcpProof:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
