"""Proof tampering strategies and seeded Monte-Carlo experiment drivers."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Union

import numpy as np
from scipy.stats import binomtest

from . import forrelation
from .mip import (
    MipConfig,
    answer_length,
    deviating_p1,
    honest_p1,
    proof_p2,
    run_protocol,
)
from .proof import (
    DEFAULT_BITS,
    PcpProof,
    build_honest_proof,
    decode_state,
    encode_phase,
    decode_phase,
)
from .quantum import (
    Circuit,
    Single,
    StateVector,
    Two,
    apply_gate,
    bits_to_int,
    circuit_from_dict,
    inner_product,
    load_circuit,
    random_circuit,
    simulate,
)
from .verifier import VerifierConfig, default_eps, exact_budget, run_verifier


# -- tamper specifications -----------------------------------------------------

@dataclass(frozen=True)
class InitialStateLie:
    x: int = 0
    phase: Optional[complex] = -1.0
    prob_edits: tuple = ()  # (node, raw) pairs on segment 0


@dataclass(frozen=True)
class PhaseCorruption:
    i: int
    x: int
    angle: float


@dataclass(frozen=True)
class ProbCorruption:
    i: int
    k: int  # prefix length
    w: int  # prefix value
    raw: int


@dataclass(frozen=True)
class StateSubstitution:
    i: int
    delta: float
    seed: int = 0


@dataclass(frozen=True)
class FinalSegmentForgery:
    state: Optional[StateVector] = None


@dataclass(frozen=True)
class SegmentReplacement:
    i: int
    state: StateVector


@dataclass(frozen=True)
class HistoryForgery:
    """Segments i..m rewritten as a consistent run ending in an accepting state."""
    i: int
    state: Optional[StateVector] = None


@dataclass(frozen=True)
class P1Deviation:
    position: int
    value: Optional[int] = None


TamperSpec = Union[InitialStateLie, PhaseCorruption, ProbCorruption, StateSubstitution,
                   FinalSegmentForgery, SegmentReplacement, HistoryForgery, P1Deviation]

_VARIANTS = {cls.__name__: cls for cls in (
    InitialStateLie, PhaseCorruption, ProbCorruption, StateSubstitution,
    FinalSegmentForgery, SegmentReplacement, HistoryForgery, P1Deviation)}


def tamper_from_dict(data: Optional[dict]) -> Optional[TamperSpec]:
    if data is None:
        return None
    data = dict(data)
    name = data.pop("variant")
    if name not in _VARIANTS:
        raise ValueError(f"unknown tamper variant {name!r}")
    for key in ("state",):
        if data.get(key) is not None:
            amps = np.asarray(data[key], dtype=float)
            z = amps[:, 0] + 1j * amps[:, 1]
            data[key] = StateVector(int(z.size).bit_length() - 1, z)
    if "phase" in data and data["phase"] is not None:
        ph = data["phase"]
        data["phase"] = complex(*ph) if isinstance(ph, (list, tuple)) else complex(ph)
    if "prob_edits" in data:
        data["prob_edits"] = tuple(tuple(e) for e in data["prob_edits"])
    return _VARIANTS[name](**data)


def tamper_to_dict(spec: Optional[TamperSpec]) -> Optional[dict]:
    if spec is None:
        return None
    out = {"variant": type(spec).__name__}
    for f in fields(spec):
        key, value = f.name, getattr(spec, f.name)
        if isinstance(value, StateVector):
            value = [[float(z.real), float(z.imag)] for z in value.amplitudes]
        elif isinstance(value, complex):
            value = [value.real, value.imag]
        out[key] = value
    return out


# -- tampering ---------------------------------------------------------------------

def _with_entries(proof: PcpProof, i: int, probs=None, phases=None) -> PcpProof:
    pr = [list(s) for s in proof.probs]
    re = [list(s) for s in proof.phase_re]
    im = [list(s) for s in proof.phase_im]
    for node, raw in probs or ():
        pr[i][node] = raw
    for x, (r, j) in phases or ():
        re[i][x], im[i][x] = r, j
    return PcpProof(proof.n, proof.m, proof.b, tuple(map(tuple, pr)),
                    tuple(map(tuple, re)), tuple(map(tuple, im)))


def _encode_segment(state: StateVector, b: int) -> PcpProof:
    return build_honest_proof([state], b)


def accepting_state(circuit: Circuit) -> StateVector:
    """Basis state spelling the acceptance prefix followed by zeros."""
    prefix = circuit.acceptance.prefix
    x = bits_to_int(prefix) << (circuit.n - len(prefix))
    return StateVector.basis(circuit.n, x)


def inverse_gate(gate):
    if isinstance(gate, Single):
        return Single(gate.q, gate.U.conj().T)
    if isinstance(gate, Two):
        return Two(gate.q, gate.s, gate.U.conj().T)
    return gate  # phase oracles are involutions


def substitute(v: StateVector, delta: float, rng: np.random.Generator) -> StateVector:
    """State psi with <psi|v> = 1 - delta: rotate ``v`` toward a random orthogonal state."""
    if not 0 <= delta <= 2:
        raise ValueError("delta must lie in [0, 2]")
    if delta == 0:
        return v
    z = rng.normal(size=len(v)) + 1j * rng.normal(size=len(v))
    z = z - np.vdot(v.amplitudes, z) * v.amplitudes
    z /= np.linalg.norm(z)
    theta = math.acos(1 - delta)
    return StateVector(v.n, math.cos(theta) * v.amplitudes + math.sin(theta) * z)


def gate_gap(proof: PcpProof, circuit: Circuit, i: int) -> float:
    """|1 - <psi_i | G_i psi_{i-1}>| for the decoded claimed states."""
    prev = decode_state(proof, i - 1)
    target = apply_gate(prev, circuit.gates[i - 1], circuit.oracles)
    return abs(1 - inner_product(decode_state(proof, i), target))


def apply_tamper(proof: PcpProof, spec: TamperSpec, circuit: Optional[Circuit] = None) -> PcpProof:
    n, m, b = proof.n, proof.m, proof.b

    def need_circuit():
        if circuit is None:
            raise ValueError(f"{type(spec).__name__} needs the circuit")
        return circuit

    def check_segment(i, lo=0):
        if not lo <= i <= m:
            raise IndexError(f"segment {i} out of range {lo}..{m}")

    if isinstance(spec, InitialStateLie):
        if not 0 <= spec.x < 1 << n:
            raise IndexError(f"leaf {spec.x} out of range")
        phases = [] if spec.phase is None else [(spec.x, encode_phase(complex(spec.phase), b))]
        for node, _ in spec.prob_edits:
            if not 0 <= node < (1 << n) - 1:
                raise IndexError(f"node {node} out of range")
        return _with_entries(proof, 0, spec.prob_edits, phases)
    if isinstance(spec, PhaseCorruption):
        check_segment(spec.i)
        if not 0 <= spec.x < 1 << n:
            raise IndexError(f"leaf {spec.x} out of range")
        if math.remainder(spec.angle, 2 * math.pi) == 0:
            return proof
        g = decode_phase(proof.phase_re[spec.i][spec.x], proof.phase_im[spec.i][spec.x], b)
        rotated = g * complex(math.cos(spec.angle), math.sin(spec.angle))
        return _with_entries(proof, spec.i, phases=[(spec.x, encode_phase(rotated, b))])
    if isinstance(spec, ProbCorruption):
        check_segment(spec.i)
        if not (0 <= spec.k < n and 0 <= spec.w < 1 << spec.k):
            raise IndexError(f"prefix (k={spec.k}, w={spec.w}) out of range")
        return _with_entries(proof, spec.i, probs=[((1 << spec.k) - 1 + spec.w, spec.raw)])
    if isinstance(spec, StateSubstitution):
        check_segment(spec.i, 1)
        c = need_circuit()
        target = apply_gate(decode_state(proof, spec.i - 1), c.gates[spec.i - 1], c.oracles)
        psi = substitute(target, spec.delta, np.random.default_rng(spec.seed))
        return proof.replace_segment(spec.i, _encode_segment(psi, b), 0)
    if isinstance(spec, FinalSegmentForgery):
        state = spec.state if spec.state is not None else accepting_state(need_circuit())
        return proof.replace_segment(m, _encode_segment(state, b), 0)
    if isinstance(spec, SegmentReplacement):
        check_segment(spec.i)
        return proof.replace_segment(spec.i, _encode_segment(spec.state, b), 0)
    if isinstance(spec, HistoryForgery):
        check_segment(spec.i, 1)
        c = need_circuit()
        state = spec.state if spec.state is not None else accepting_state(c)
        out = proof
        for k in range(m, spec.i - 1, -1):
            out = out.replace_segment(k, _encode_segment(state, b), 0)
            if k > spec.i:
                state = apply_gate(state, inverse_gate(c.gates[k - 1]), c.oracles)
        return out
    if isinstance(spec, P1Deviation):
        raise TypeError("P1Deviation acts on the MIP prover, not on the proof")
    raise TypeError(f"not a tamper spec: {spec!r}")


def plant_drift(proof: PcpProof, circuit: Circuit, delta: float,
                rng: np.random.Generator) -> PcpProof:
    """Rewrite every segment i >= 1 so that gate i has gap exactly ``delta`` (up to encoding)."""
    out = proof
    for i in range(1, proof.m + 1):
        target = apply_gate(decode_state(out, i - 1), circuit.gates[i - 1], circuit.oracles)
        out = out.replace_segment(i, _encode_segment(substitute(target, delta, rng), proof.b), 0)
    return out


# -- statistics --------------------------------------------------------------------------

def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def pcp_soundness_bound(delta: float, t: int) -> float:
    """Acceptance bound for one round of t checks against a gap-delta gate."""
    return (1 - delta**2 / 10) ** t


def mip_round_bound(s: float, q: int) -> float:
    return 1 - (1 - s) / q


def mip_repeated_bound(s: float, q: int, t: int) -> float:
    return mip_round_bound(s, q) ** t


@dataclass
class ExperimentReport:
    trials: int
    accept_count: int
    bound: Optional[float] = None
    bound_kind: str = "none"
    seeds: tuple = field(default=(), repr=False)
    outcomes: tuple = field(default=(), repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def accept_rate(self) -> float:
        return self.accept_count / self.trials if self.trials else float("nan")

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.accept_count, self.trials)

    @property
    def consistent(self) -> Optional[bool]:
        if self.bound is None:
            return None
        if self.bound_kind == "completeness":
            return self.accept_count == self.trials
        lo, hi = self.wilson
        return self.accept_rate <= self.bound + 3 * (hi - lo) / 2

    def merge(self, other: "ExperimentReport") -> "ExperimentReport":
        if (self.bound, self.bound_kind) != (other.bound, other.bound_kind):
            raise ValueError("cannot merge reports against different bounds")
        pairs = sorted(zip(self.seeds + other.seeds, self.outcomes + other.outcomes))
        return ExperimentReport(
            self.trials + other.trials, self.accept_count + other.accept_count,
            self.bound, self.bound_kind,
            tuple(s for s, _ in pairs), tuple(o for _, o in pairs), {**other.meta, **self.meta},
        )

    def to_json(self) -> dict:
        lo, hi = self.wilson
        return {
            "trials": self.trials,
            "accept_count": self.accept_count,
            "accept_rate": self.accept_rate,
            "wilson_low": lo,
            "wilson_high": hi,
            "bound": self.bound,
            "bound_kind": self.bound_kind,
            "consistent": self.consistent,
            **self.meta,
        }

    CSV_FIELDS = ("protocol", "tamper", "trials", "accept_count", "accept_rate", "wilson_low",
                  "wilson_high", "bound", "bound_kind", "consistent", "t", "b", "seed")

    def csv_row(self) -> dict:
        row = self.to_json()
        return {k: row.get(k, "") for k in self.CSV_FIELDS}


def trial_seeds(rng: np.random.Generator, trials: int) -> list[int]:
    words = rng.integers(0, 1 << 64, size=(trials, 2), dtype=np.uint64)
    return [(int(hi) << 64) | int(lo) for hi, lo in words]


def run_experiment(circuit: Circuit, target, protocol: str, config, trials: int,
                   rng: np.random.Generator, bound: Optional[float] = None,
                   bound_kind: str = "none", engine: str = "fast",
                   workers: int = 1) -> ExperimentReport:
    """Seeded independent trials of the PCP verifier or the repeated MIP protocol.

    ``target`` is a PcpProof for ``protocol="pcp"`` and a (P1, P2) pair for "mip";
    ``config`` is a VerifierConfig or MipConfig respectively.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if protocol not in ("pcp", "mip"):
        raise ValueError(f"unknown protocol {protocol!r}")
    seeds = trial_seeds(rng, trials)

    def one(seed):
        if protocol == "pcp":
            return run_verifier(target, circuit, replace(config, rng_seed=seed), engine).accepted
        p1, p2 = target
        return run_protocol(circuit, p1, p2, config, np.random.default_rng(seed)).accepted

    if workers > 1:
        # seeds are fixed up front, so results do not depend on scheduling
        with ThreadPoolExecutor(workers) as ex:
            outcomes = list(ex.map(one, seeds))
    else:
        outcomes = [one(seed) for seed in seeds]
    return ExperimentReport(trials, sum(outcomes), bound, bound_kind,
                            tuple(seeds), tuple(outcomes))


def acceptance_rate(proof: PcpProof, circuit: Circuit, config: VerifierConfig, trials: int,
                    rng: np.random.Generator) -> float:
    rep = run_experiment(circuit, proof, "pcp", config, trials, rng)
    return rep.accept_rate


# -- config-file experiments ----------------------------------------------------------------

def _resolve_circuit(spec, base_dir: str, rng: np.random.Generator) -> Circuit:
    if isinstance(spec, str):
        path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
        return load_circuit(path)
    if "forrelation" in spec:
        f = spec["forrelation"]
        if "instance" in f:
            path = f["instance"]
            path = path if os.path.isabs(path) else os.path.join(base_dir, path)
            return forrelation.load_instance(path).circuit()
        return forrelation.gen_instance(int(f["n"]), f.get("label", "yes"), rng).circuit()
    if "random" in spec:
        r = spec["random"]
        return random_circuit(int(r["n"]), int(r["m"]), rng)
    return circuit_from_dict(spec)


def run_config(cfg: dict, base_dir: str = ".") -> ExperimentReport:
    protocol = cfg.get("protocol", "pcp").lower()
    trials = int(cfg.get("trials", 100))
    t = int(cfg.get("t", 100))
    b = int(cfg.get("b", DEFAULT_BITS))
    seed = int(str(cfg.get("seed", "0")), 16) if isinstance(cfg.get("seed"), str) else int(cfg.get("seed", 0))
    workers = int(cfg.get("workers", 1))
    rng = np.random.default_rng(seed)
    circuit = _resolve_circuit(cfg["circuit"], base_dir, rng)
    eps = float(cfg["eps"]) if "eps" in cfg else default_eps(circuit.n, b)
    honest = build_honest_proof(simulate(circuit), b)
    tamper = tamper_from_dict(cfg.get("tamper"))
    pcp_config = VerifierConfig(t, eps, 0, exact_budget(circuit, t, b))
    meta = {"protocol": protocol, "tamper": type(tamper).__name__ if tamper else "none",
            "t": t, "b": b, "seed": seed}

    if protocol == "pcp":
        if isinstance(tamper, P1Deviation):
            raise ValueError("P1Deviation only applies to the mip protocol")
        proof = honest if tamper is None else apply_tamper(honest, tamper, circuit)
        bound, kind = None, "none"
        if tamper is None:
            bound, kind = 1.0, "completeness"
        elif isinstance(tamper, StateSubstitution):
            delta = gate_gap(proof, circuit, tamper.i)
            meta["achieved_delta"] = delta
            bound, kind = pcp_soundness_bound(delta, t), "pcp_soundness"
        report = run_experiment(circuit, proof, "pcp", pcp_config, trials, rng, bound, kind,
                                cfg.get("engine", "fast"), workers)
    elif protocol == "mip":
        rounds = int(cfg.get("rounds", 1))
        mcfg = MipConfig(rounds, pcp_config, b)
        q = answer_length(circuit, mcfg)
        if isinstance(tamper, P1Deviation):
            p1 = deviating_p1(honest, circuit, mcfg, tamper.position, tamper.value)
            p2 = proof_p2(honest)
            bound, kind = None, "none"
        elif tamper is None:
            p1, p2 = honest_p1(honest, circuit, mcfg), proof_p2(honest)
            bound, kind = 1.0, "completeness"
        else:
            extracted = apply_tamper(honest, tamper, circuit)
            p1, p2 = honest_p1(honest, circuit, mcfg), proof_p2(extracted)
            s_trials = int(cfg.get("s_trials", 200))
            s = acceptance_rate(extracted, circuit, pcp_config, s_trials, rng)
            meta["s_estimate"] = s
            bound, kind = mip_repeated_bound(s, q, rounds), "mip_repeated"
        meta["q_pi"] = q
        meta["rounds"] = rounds
        report = run_experiment(circuit, (p1, p2), "mip", mcfg, trials, rng, bound, kind,
                                workers=workers)
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    report.meta.update(meta)
    return report


def report_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=ExperimentReport.CSV_FIELDS)
    writer.writeheader()
    for rep in reports:
        writer.writerow(rep.csv_row())
    return buf.getvalue()


def load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
