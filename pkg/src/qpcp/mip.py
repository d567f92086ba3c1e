"""Two-prover, two-round compilation of the adaptive PCP (clause/variable game).

Prover 1 receives the verifier's seed ``R`` and answers the whole sequence of
proof entries the PCP verifier will read; the verifier replays the PCP run on
those answers, then challenges Prover 2 on one queried location and checks the
two answers agree entry-for-entry.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .proof import (
    AnswerFeed,
    PcpProof,
    ProofAccess,
    ProofAddress,
    ProofUnavailable,
    entry_in_range,
    entry_width_bits,
    prob_bytes,
    proof_length,
    unpack_phase,
    PROB,
)
from .quantum import Circuit
from .verifier import ACC, REJ, VerifierConfig, exact_budget, verify

SEED_BITS = 128
SIMULATION = "Simulation"
CONSISTENCY = "Consistency"


@dataclass(frozen=True)
class ProverStrategy:
    role: str  # "P1": seed -> answers; "P2": flat location -> entry
    answer: Callable


@dataclass(frozen=True)
class MipConfig:
    t: int
    pcp_config: VerifierConfig
    b: int = 96

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("need at least one round")


@dataclass
class MipTranscript:
    R: int
    a: list
    locations: list
    j: Optional[int]
    i_j: Optional[int]
    b_answer: Optional[int]
    verdict: str
    reject_stage: Optional[str]
    communication_bits: int = 0
    oracle_queries: int = 0
    pcp_reason: Optional[str] = None

    def to_json(self) -> dict:
        hx = lambda v: None if v is None else format(v, "x")
        return {
            "R": format(self.R, "032x"),
            "a": [hx(v) for v in self.a],
            "locations": self.locations,
            "j": self.j,
            "i_j": self.i_j,
            "b_answer": hx(self.b_answer),
            "verdict": self.verdict,
            "reject_stage": self.reject_stage,
            "communication_bits": self.communication_bits,
            "oracle_queries": self.oracle_queries,
            "pcp_reason": self.pcp_reason,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MipTranscript":
        unhx = lambda v: None if v is None else int(v, 16)
        return cls(
            int(data["R"], 16), [unhx(v) for v in data["a"]], list(data["locations"]),
            data["j"], data["i_j"], unhx(data["b_answer"]), data["verdict"],
            data["reject_stage"], data.get("communication_bits", 0),
            data.get("oracle_queries", 0), data.get("pcp_reason"),
        )


def answer_length(circuit: Circuit, config: MipConfig) -> int:
    """q_pi: proof reads of an accepting PCP run, the fixed length of P1's message."""
    return exact_budget(circuit, config.pcp_config.t, config.b).max_proof_queries


def pcp_config_for_seed(circuit: Circuit, config: MipConfig, R: int) -> VerifierConfig:
    base = config.pcp_config
    return replace(base, rng_seed=R, budgets=exact_budget(circuit, base.t, config.b))


def round_bits(circuit: Circuit, config: MipConfig, reached_p2: bool) -> int:
    w = entry_width_bits(config.b)
    bits = SEED_BITS + answer_length(circuit, config) * w
    if reached_p2:
        bits += math.ceil(math.log2(proof_length(circuit.n, circuit.m))) + w
    return bits


def _draw_seed(rng: np.random.Generator) -> int:
    hi, lo = (int(v) for v in rng.integers(0, 1 << 64, size=2, dtype=np.uint64))
    return (hi << 64) | lo


def run_round(circuit: Circuit, p1: ProverStrategy, p2: ProverStrategy, config: MipConfig,
              rng: np.random.Generator, challenge: Optional[int] = None) -> MipTranscript:
    q = answer_length(circuit, config)
    R = _draw_seed(rng)
    a = list(p1.answer(R))[:q]
    access = ProofAccess(AnswerFeed(a, config.b), circuit.n, circuit.m, config.b)
    try:
        verdict = verify(access, circuit, pcp_config_for_seed(circuit, config, R))
        stage_reason = verdict.reason
        simulated_ok = verdict.outcome == ACC
        oracle_q = verdict.oracle_queries
    except ProofUnavailable as exc:
        simulated_ok, stage_reason, oracle_q = False, f"ProofUnavailable: {exc}", 0
    locations = [addr.flat(circuit.n) for addr, _ in access.trace]
    if not simulated_ok:
        return MipTranscript(R, a, locations, None, None, None, REJ, SIMULATION,
                             round_bits(circuit, config, False), oracle_q, stage_reason)
    assert len(locations) == q, "accepting PCP runs read exactly q_pi entries"
    j = int(rng.integers(q)) if challenge is None else challenge
    i_j = locations[j]
    b_answer = p2.answer(i_j)
    ok = b_answer == a[j]
    return MipTranscript(R, a, locations, j, i_j, b_answer, ACC if ok else REJ,
                         None if ok else CONSISTENCY, round_bits(circuit, config, True), oracle_q)


@dataclass
class ProtocolResult:
    accepted: bool
    transcripts: list = field(repr=False)
    rounds_run: int
    communication_bits: int
    oracle_queries: int


def run_protocol(circuit: Circuit, p1: ProverStrategy, p2: ProverStrategy, config: MipConfig,
                 rng: np.random.Generator, stop_on_reject: bool = True) -> ProtocolResult:
    """``config.t`` sequential rounds with fresh randomness; accept iff every round accepts."""
    transcripts = []
    for _ in range(config.t):
        tr = run_round(circuit, p1, p2, config, rng)
        transcripts.append(tr)
        if tr.verdict == REJ and stop_on_reject:
            break
    return ProtocolResult(
        all(tr.verdict == ACC for tr in transcripts) and len(transcripts) == config.t,
        transcripts,
        len(transcripts),
        sum(tr.communication_bits for tr in transcripts),
        sum(tr.oracle_queries for tr in transcripts),
    )


# -- strategies ------------------------------------------------------------------

def proof_p2(proof: PcpProof) -> ProverStrategy:
    return ProverStrategy("P2", proof.entry_at)


def constant_p2(value: int = 0) -> ProverStrategy:
    return ProverStrategy("P2", lambda _loc: value)


def proof_answers(proof: PcpProof, circuit: Circuit, config: MipConfig, R: int) -> list:
    """Entries the PCP verifier reads from ``proof`` on seed ``R``, zero padded to q_pi."""
    private = circuit.with_fresh_oracles()  # prover-side oracle use is not metered
    access = ProofAccess(proof)
    verify(access, private, pcp_config_for_seed(private, config, R))
    values = [v for _, v in access.trace]
    return values + [0] * (answer_length(circuit, config) - len(values))


def honest_p1(proof: PcpProof, circuit: Circuit, config: MipConfig) -> ProverStrategy:
    return ProverStrategy("P1", lambda R: proof_answers(proof, circuit, config, R))


def deviating_p1(proof: PcpProof, circuit: Circuit, config: MipConfig, position: int,
                 value: Optional[int] = None) -> ProverStrategy:
    """Answers from ``proof`` except entry ``position``, replaced by ``value`` (default: low bit flipped)."""

    def answer(R):
        a = proof_answers(proof, circuit, config, R)
        a[position] = a[position] ^ 1 if value is None else value
        return a

    return ProverStrategy("P1", answer)


def random_p2(n: int, m: int, b: int, seed: int) -> ProverStrategy:
    """Deterministic pseudo-random answers, a fixed function of the location."""
    def answer(loc):
        addr = ProofAddress.from_flat(loc, n, m)
        gen = np.random.Philox(key=(seed << 32 | loc) % (1 << 128))
        words = gen.random_raw(4)
        v = 0
        for wd in words:
            v = (v << 64) | int(wd)
        width = entry_width_bits(b)
        v &= (1 << width) - 1
        if addr.kind == PROB:
            v &= (1 << (8 * prob_bytes(b))) - 1
        return v

    return ProverStrategy("P2", answer)


def extract_proof(p2: ProverStrategy, n: int, m: int, b: int) -> PcpProof:
    """The proof implied by Prover 2's answers at every location."""
    probs, res, ims = [], [], []
    for i in range(m + 1):
        seg_p, seg_r, seg_i = [], [], []
        for flat in range(i * ((1 << (n + 1)) - 1), (i + 1) * ((1 << (n + 1)) - 1)):
            addr = ProofAddress.from_flat(flat, n, m)
            v = p2.answer(flat)
            if not entry_in_range(addr.kind, v, b):
                raise ValueError(f"prover 2 answered out of range at location {flat}")
            if addr.kind == PROB:
                seg_p.append(v)
            else:
                r, im = unpack_phase(v, b)
                seg_r.append(r)
                seg_i.append(im)
        probs.append(tuple(seg_p))
        res.append(tuple(seg_r))
        ims.append(tuple(seg_i))
    return PcpProof(n, m, b, tuple(probs), tuple(res), tuple(ims))


def write_transcripts(transcripts, fh) -> None:
    for tr in transcripts:
        fh.write(json.dumps(tr.to_json(), sort_keys=True))
        fh.write("\n")


def read_transcripts(fh) -> list:
    return [MipTranscript.from_json(json.loads(line)) for line in fh if line.strip()]
