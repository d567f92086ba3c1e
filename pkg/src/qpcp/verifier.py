"""Adaptive PCP verifier over the exponential proof.

``verify`` is the reference implementation: every proof entry goes through a
``ProofAccess`` (metered and traced), so it runs unchanged against remote
answer sources. ``verify_fast`` is a vectorized engine for in-memory proofs
that consumes the same coin stream and returns the same verdict; it exists
for Monte-Carlo experiments and is cross-checked against ``verify``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .proof import (
    BudgetExceeded,
    PcpProof,
    ProofAccess,
    ProofAddress,
    decode_prob,
)
from .quantum import Circuit, OracleGate, Single, bit_of, bits_to_int, flip

ACC = "acc"
REJ = "rej"

INITIAL_STATE_MISMATCH = "InitialStateMismatch"
FINAL_PROBABILITY_LOW = "FinalProbabilityLow"
PROPAGATION_MISMATCH = "PropagationMismatch"
BUDGET_EXCEEDED = "BudgetExceeded"

_WORD = 64
_MASK64 = (1 << 64) - 1


class CoinSource:
    """Counter-based coin stream keyed by a 128-bit seed.

    A ``k``-bit draw consumes ``ceil(k/64)`` Philox words, low limb first;
    ``bits_used`` counts logical bits.
    """

    def __init__(self, seed: int):
        if not 0 <= seed < 1 << 128:
            raise ValueError("seed must be a 128-bit non-negative integer")
        self.seed = seed
        self._gen = np.random.Philox(key=seed)
        self.bits_used = 0

    def bits(self, k: int) -> int:
        words = self._gen.random_raw((k + _WORD - 1) // _WORD)
        value = 0
        for j, w in enumerate(words):
            value |= int(w) << (_WORD * j)
        self.bits_used += k
        return value & ((1 << k) - 1)

    def words(self, count: int) -> np.ndarray:
        return self._gen.random_raw(count)


@dataclass(frozen=True)
class QueryBudget:
    max_proof_queries: Optional[int] = None
    max_oracle_queries: Optional[int] = None
    max_random_bits: Optional[int] = None


def gate_cost(gate) -> int:
    """Amplitude computations needed by the local check of ``gate``."""
    if isinstance(gate, OracleGate):
        return 1
    return 2 if isinstance(gate, Single) else 4


def iteration_queries(gate, n: int) -> int:
    # sample (n) + claimed amplitude (n+1) + local check
    return n + (n + 1) + gate_cost(gate) * (n + 1)


def exact_budget(circuit: Circuit, t: int, b: int) -> QueryBudget:
    """Counters of an accepting run; rejecting runs stay below them."""
    n = circuit.n
    ell = len(circuit.acceptance.prefix)
    proof = (n + 1) + ell + t * sum(iteration_queries(g, n) for g in circuit.gates)
    oracle = t * sum(isinstance(g, OracleGate) for g in circuit.gates)
    bits = t * circuit.m * n * (b + 1)
    return QueryBudget(proof, oracle, bits)


def default_eps(n: int, b: int) -> float:
    return (n + 4) * 2.0 ** (-b / 2 + 3)


def default_t(m: int) -> int:
    delta = 1 / (10 * max(m, 1))
    return math.ceil(40 / delta**2)


@dataclass(frozen=True)
class VerifierConfig:
    t: int
    eps_check: float
    rng_seed: int = 0
    budgets: Optional[QueryBudget] = None

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("t must be positive")
        if not self.eps_check > 0:
            raise ValueError("eps_check must be positive")
        if not 0 <= self.rng_seed < 1 << 128:
            raise ValueError("rng_seed must be a 128-bit value")

    @classmethod
    def for_circuit(cls, circuit: Circuit, b: int, t: int | None = None,
                    eps: float | None = None, seed: int = 0) -> "VerifierConfig":
        t = default_t(circuit.m) if t is None else t
        eps = default_eps(circuit.n, b) if eps is None else eps
        return cls(t, eps, seed, exact_budget(circuit, t, b))


@dataclass
class Verdict:
    outcome: str
    reason: Optional[str] = None
    gate_index: Optional[int] = None
    x: Optional[int] = None
    discrepancy: Optional[float] = None
    proof_queries: int = 0
    oracle_queries: int = 0
    random_bits: int = 0
    seed: int = 0
    trace: Optional[list] = field(default=None, repr=False)

    @property
    def accepted(self) -> bool:
        return self.outcome == ACC

    def to_json(self) -> dict:
        out = {"outcome": self.outcome, "reason": self.reason}
        if self.gate_index is not None:
            out["gate_index"] = self.gate_index
        if self.x is not None:
            out["x"] = self.x
        if self.discrepancy is not None:
            out["discrepancy"] = self.discrepancy
        out.update(
            proof_queries=self.proof_queries,
            oracle_queries=self.oracle_queries,
            random_bits=self.random_bits,
            seed=f"{self.seed:032x}",
        )
        return out

    def same_decision(self, other: "Verdict", rel: float = 1e-9) -> bool:
        keys = ("outcome", "reason", "gate_index", "x", "proof_queries",
                "oracle_queries", "random_bits", "seed")
        if any(getattr(self, k) != getattr(other, k) for k in keys):
            return False
        if (self.discrepancy is None) != (other.discrepancy is None):
            return False
        return self.discrepancy is None or math.isclose(self.discrepancy, other.discrepancy, rel_tol=rel)


class OracleMeter:
    """Verifier-side oracle access: counts queries and enforces the budget."""

    def __init__(self, oracles: dict, limit: Optional[int] = None):
        self.oracles = oracles
        self.count = 0
        self.limit = limit

    def query(self, oracle_id: str, x: int) -> int:
        if self.limit is not None and self.count >= self.limit:
            raise BudgetExceeded(f"oracle query budget {self.limit} exhausted")
        self.count += 1
        return self.oracles[oracle_id].query(x)


# -- amplitude reads, sampling, local checks ---------------------------------

def compute_amplitude(access: ProofAccess, i: int, x: int) -> complex:
    n = access.n
    prod = 1.0
    for k in range(n):
        p0, p1 = access.read_prob(i, k, x >> (n - k))
        prod *= p1 if bit_of(x, k, n) else p0
    s = math.sqrt(prod)
    g = access.read_phase(i, x)
    return complex(g.real * s, g.imag * s)


def bernoulli(raw: int, b: int, coins: CoinSource) -> int:
    """Exact draw of 1 with probability min(raw, 2**b) / 2**b from b+1 coins."""
    u = coins.bits(b + 1)
    if raw >= 1 << b:
        return 1
    return int(u < 2 * raw)


def sample_input(access: ProofAccess, i: int, coins: CoinSource) -> int:
    w = 0
    for k in range(access.n):
        raw = access.read(ProofAddress.prob(i, k, w))
        w = (w << 1) | bernoulli(raw, access.b, coins)
    return w


def combine_local(gate, x: int, n: int, amp, fbit: int = 0) -> complex:
    """<x|G|phi> from the amplitudes it depends on; ``amp(y)`` yields phi_y."""
    if isinstance(gate, OracleGate):
        a = amp(x)
        return -a if fbit else a
    if isinstance(gate, Single):
        q, U = gate.q, gate.U
        xq = bit_of(x, q, n)
        return complex(U[xq, xq]) * amp(x) + complex(U[xq, 1 - xq]) * amp(flip(x, q, n))
    q, s, U = gate.q, gate.s, gate.U
    xq, xs = bit_of(x, q, n), bit_of(x, s, n)
    row = 2 * xq + xs
    xq_, xs_ = 1 - xq, 1 - xs
    return (
        complex(U[row, 2 * xq + xs]) * amp(x)
        + complex(U[row, 2 * xq_ + xs]) * amp(flip(x, q, n))
        + complex(U[row, 2 * xq + xs_]) * amp(flip(x, s, n))
        + complex(U[row, 2 * xq_ + xs_]) * amp(flip(flip(x, q, n), s, n))
    )


def local_check_amplitude(access: ProofAccess, oracles, i: int, x: int, gate) -> complex:
    if i < 1:
        raise ValueError("local checks start at gate 1")
    meter = oracles if isinstance(oracles, OracleMeter) else OracleMeter(oracles)
    n = access.n
    if isinstance(gate, OracleGate):
        a = compute_amplitude(access, i - 1, x)
        fbit = meter.query(gate.oracle_id, x)
        return combine_local(gate, x, n, lambda _y: a, fbit)
    return combine_local(gate, x, n, lambda y: compute_amplitude(access, i - 1, y))


def final_probability(access: ProofAccess, prefix: str) -> float:
    """Product of stored conditionals along ``prefix`` on the last segment."""
    prod = 1.0
    for k, c in enumerate(prefix):
        p0, p1 = access.read_prob(access.m, k, bits_to_int(prefix[:k]))
        prod *= p1 if c == "1" else p0
    return prod


# -- the verifier ----------------------------------------------------------------

def verify(access: ProofAccess, circuit: Circuit, config: VerifierConfig) -> Verdict:
    if (access.n, access.m) != (circuit.n, circuit.m):
        raise ValueError(
            f"proof has (n, m) = ({access.n}, {access.m}), circuit has ({circuit.n}, {circuit.m})"
        )
    budgets = config.budgets or QueryBudget()
    access.max_queries = budgets.max_proof_queries
    meter = OracleMeter(circuit.oracles, budgets.max_oracle_queries)
    coins = CoinSource(config.rng_seed)
    n, m, eps = circuit.n, circuit.m, config.eps_check
    bit_cost = n * (access.b + 1)

    def verdict(outcome, reason=None, **kw):
        return Verdict(
            outcome, reason,
            proof_queries=access.proof_query_count,
            oracle_queries=meter.count,
            random_bits=coins.bits_used,
            seed=config.rng_seed,
            trace=access.trace,
            **kw,
        )

    def final_check():
        p = final_probability(access, circuit.acceptance.prefix)
        return p >= circuit.acceptance.threshold - eps

    try:
        a0 = compute_amplitude(access, 0, 0)
        if abs(a0 - 1) > eps:
            return verdict(REJ, INITIAL_STATE_MISMATCH, gate_index=0, x=0, discrepancy=abs(a0 - 1))
        if m == 0 and not final_check():
            return verdict(REJ, FINAL_PROBABILITY_LOW, gate_index=0)
        for i, gate in enumerate(circuit.gates, 1):
            if i == m and not final_check():
                return verdict(REJ, FINAL_PROBABILITY_LOW, gate_index=m)
            for _ in range(config.t):
                if budgets.max_random_bits is not None \
                        and coins.bits_used + bit_cost > budgets.max_random_bits:
                    raise BudgetExceeded("random bit budget exhausted")
                x = sample_input(access, i, coins)
                alpha = compute_amplitude(access, i, x)
                eta = local_check_amplitude(access, meter, i, x, gate)
                gap = abs(eta - alpha)
                if gap >= eps:
                    return verdict(REJ, PROPAGATION_MISMATCH, gate_index=i, x=x, discrepancy=gap)
    except BudgetExceeded:
        return verdict(REJ, BUDGET_EXCEEDED)
    return verdict(ACC)


# -- vectorized engine ----------------------------------------------------------------

class _FastTables:
    """Per-proof arrays: Bernoulli thresholds as 64-bit limbs and decoded amplitudes."""

    def __init__(self, proof: PcpProof):
        b = proof.b
        self.limbs = (b + 1 + _WORD - 1) // _WORD
        self.top_mask = np.uint64((1 << ((b + 1) - _WORD * (self.limbs - 1))) - 1)
        self.thresh, self.always = [], []
        for seg in proof.probs:
            lim = np.zeros((len(seg), self.limbs), dtype=np.uint64)
            always = np.zeros(len(seg), dtype=bool)
            for node, raw in enumerate(seg):
                if raw >= 1 << b:
                    always[node] = True
                    continue
                twice = 2 * raw
                for j in range(self.limbs):
                    lim[node, j] = (twice >> (_WORD * j)) & _MASK64
            self.thresh.append(lim)
            self.always.append(always)
        self.amps = [proof._decoded[i][3] for i in range(proof.m + 1)]


def _fast_tables(proof: PcpProof) -> _FastTables:
    tables = proof.__dict__.get("_fast_tables")
    if tables is None:
        tables = _FastTables(proof)
        proof.__dict__["_fast_tables"] = tables
    return tables


def _sample_batch(tab: _FastTables, i: int, n: int, t: int, coins: CoinSource) -> np.ndarray:
    r = tab.limbs
    words = coins.words(t * n * r).reshape(t, n, r)
    words[:, :, r - 1] &= tab.top_mask
    thresh, always = tab.thresh[i], tab.always[i]
    w = np.zeros(t, dtype=np.int64)
    for k in range(n):
        node = (1 << k) - 1 + w
        T = thresh[node]
        U = words[:, k, :]
        less = np.zeros(t, dtype=bool)
        equal = np.ones(t, dtype=bool)
        for j in range(r - 1, -1, -1):
            less |= equal & (U[:, j] < T[:, j])
            equal &= U[:, j] == T[:, j]
        bit = always[node] | less
        w = 2 * w + bit
    return w


def _eta_batch(gate, xs: np.ndarray, n: int, prev: np.ndarray, fbits) -> np.ndarray:
    if isinstance(gate, OracleGate):
        return np.where(fbits == 1, -prev[xs], prev[xs])
    if isinstance(gate, Single):
        sh = n - 1 - gate.q
        xq = (xs >> sh) & 1
        U = gate.U
        return U[xq, xq] * prev[xs] + U[xq, 1 - xq] * prev[xs ^ (1 << sh)]
    shq, shs = n - 1 - gate.q, n - 1 - gate.s
    xq, xs_ = (xs >> shq) & 1, (xs >> shs) & 1
    row = 2 * xq + xs_
    U = gate.U
    return (
        U[row, 2 * xq + xs_] * prev[xs]
        + U[row, 2 * (1 - xq) + xs_] * prev[xs ^ (1 << shq)]
        + U[row, 2 * xq + 1 - xs_] * prev[xs ^ (1 << shs)]
        + U[row, 2 * (1 - xq) + 1 - xs_] * prev[xs ^ (1 << shq) ^ (1 << shs)]
    )


def verify_fast(proof: PcpProof, circuit: Circuit, config: VerifierConfig) -> Verdict:
    """Same verdict and counters as ``verify`` on an in-memory proof; no trace."""
    if (proof.n, proof.m) != (circuit.n, circuit.m):
        raise ValueError("proof and circuit dimensions differ")
    n, m, b, t, eps = circuit.n, circuit.m, proof.b, config.t, config.eps_check
    budgets = config.budgets or QueryBudget()
    worst = exact_budget(circuit, t, b)
    for have, cap in zip(
        (worst.max_proof_queries, worst.max_oracle_queries, worst.max_random_bits),
        (budgets.max_proof_queries, budgets.max_oracle_queries, budgets.max_random_bits),
    ):
        if cap is not None and have > cap:
            # the budget may bite mid-run; only the reference engine stops at the exact read
            return verify(ProofAccess(proof), circuit, config)

    tab = _fast_tables(proof)
    coins = CoinSource(config.rng_seed)
    counts = {"proof_queries": 0, "oracle_queries": 0}
    ell = len(circuit.acceptance.prefix)

    def verdict(outcome, reason=None, **kw):
        return Verdict(outcome, reason, random_bits=coins.bits_used,
                       seed=config.rng_seed, **counts, **kw)

    def final_check():
        counts["proof_queries"] += ell
        prefix = circuit.acceptance.prefix
        prod = 1.0
        for k, c in enumerate(prefix):
            p0, p1 = decode_prob(proof.probs[m][(1 << k) - 1 + bits_to_int(prefix[:k])], b)
            prod *= p1 if c == "1" else p0
        return prod >= circuit.acceptance.threshold - eps

    a0 = complex(tab.amps[0][0])
    counts["proof_queries"] += n + 1
    if abs(a0 - 1) > eps:
        return verdict(REJ, INITIAL_STATE_MISMATCH, gate_index=0, x=0, discrepancy=abs(a0 - 1))
    if m == 0 and not final_check():
        return verdict(REJ, FINAL_PROBABILITY_LOW, gate_index=0)
    for i, gate in enumerate(circuit.gates, 1):
        if i == m and not final_check():
            return verdict(REJ, FINAL_PROBABILITY_LOW, gate_index=m)
        xs = _sample_batch(tab, i, n, t, coins)
        fbits = None
        if isinstance(gate, OracleGate):
            fbits = circuit.oracles[gate.oracle_id].table[xs]
        alpha = tab.amps[i][xs]
        eta = _eta_batch(gate, xs, n, tab.amps[i - 1], fbits)
        bad = np.flatnonzero(np.abs(eta - alpha) >= eps)
        done = t if bad.size == 0 else int(bad[0]) + 1
        # coins were drawn for the whole batch; account only for executed iterations
        coins.bits_used += done * n * (b + 1)
        counts["proof_queries"] += done * iteration_queries(gate, n)
        if fbits is not None:
            circuit.oracles[gate.oracle_id].query_many(xs[:done])
            counts["oracle_queries"] += done
        if bad.size:
            x = int(xs[bad[0]])
            prev = tab.amps[i - 1]
            fb = int(fbits[bad[0]]) if fbits is not None else 0
            eta_x = combine_local(gate, x, n, lambda y: complex(prev[y]), fb)
            gap = abs(eta_x - complex(tab.amps[i][x]))
            return verdict(REJ, PROPAGATION_MISMATCH, gate_index=i, x=x, discrepancy=gap)
    return verdict(ACC)


def sample_inputs(proof: PcpProof, i: int, count: int, seed: int = 0) -> np.ndarray:
    """``count`` draws of the input sampler on segment ``i``.

    Consumes the coin stream exactly as ``count`` calls of ``sample_input`` would.
    """
    if not 0 <= i <= proof.m:
        raise ValueError(f"segment {i} out of range 0..{proof.m}")
    return _sample_batch(_fast_tables(proof), i, proof.n, count, CoinSource(seed))


def propagation_gaps(proof: PcpProof, circuit: Circuit, i: int, samples: int,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sampled strings x ~ segment ``i`` and their local-check gaps |eta - alpha|.

    Unmetered; used to measure per-sample detection rates of a planted error.
    """
    if not 1 <= i <= proof.m:
        raise ValueError(f"gate index {i} out of range 1..{proof.m}")
    tab = _fast_tables(proof)
    gate = circuit.gates[i - 1]
    xs = _sample_batch(tab, i, proof.n, samples, CoinSource(seed))
    fbits = circuit.oracles[gate.oracle_id].table[xs] if isinstance(gate, OracleGate) else None
    eta = _eta_batch(gate, xs, proof.n, tab.amps[i - 1], fbits)
    return xs, np.abs(eta - tab.amps[i][xs])


def run_verifier(proof: PcpProof, circuit: Circuit, config: VerifierConfig,
                 engine: str = "fast") -> Verdict:
    if engine == "fast":
        return verify_fast(proof, circuit, config)
    if engine == "reference":
        return verify(ProofAccess(proof), circuit, config)
    raise ValueError(f"unknown engine {engine!r}")


def with_seed(config: VerifierConfig, seed: int) -> VerifierConfig:
    return replace(config, rng_seed=seed)


# -- inner-product estimator ----------------------------------------------------------

@dataclass(frozen=True)
class EstimatorResult:
    gamma_hat: complex
    k: int


def estimate_inner_product(sampler, amp_psi, amp_phi, k: int, rng) -> EstimatorResult:
    """Mean of phi_X / psi_X over ``k`` draws X ~ |psi|^2 (ratio 0 where psi_X = 0).

    ``sampler(rng, k)`` returns k basis strings; ``amp_psi`` and ``amp_phi`` map
    an array of strings to amplitudes.
    """
    if k < 1:
        raise ValueError("k must be positive")
    xs = np.asarray(sampler(rng, k))
    psi = np.asarray(amp_psi(xs), dtype=complex)
    phi = np.asarray(amp_phi(xs), dtype=complex)
    ratio = np.divide(phi, psi, out=np.zeros_like(phi), where=psi != 0)
    return EstimatorResult(complex(ratio.mean()), k)


def state_sampler(psi):
    """Sampler drawing basis strings of a StateVector by inverse CDF."""
    cdf = np.cumsum(psi.probabilities())
    cdf /= cdf[-1]

    def sample(rng, k):
        return np.minimum(np.searchsorted(cdf, rng.random(k), side="right"), cdf.size - 1)

    return sample


def estimate_many(psi, phi, k: int, runs: int, rng) -> np.ndarray:
    """``runs`` independent estimator values, vectorized."""
    xs = state_sampler(psi)(rng, k * runs).reshape(runs, k)
    a, c = psi.amplitudes[xs], phi.amplitudes[xs]
    ratio = np.divide(c, a, out=np.zeros_like(c), where=a != 0)
    return ratio.mean(axis=1)


def proof_sampler(access: ProofAccess, i: int, coins: CoinSource):
    """Sampler backed by the proof's own input-sampling routine."""
    def sample(_rng, k):
        return np.array([sample_input(access, i, coins) for _ in range(k)])
    return sample

