import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpcp.adversary import (
    FinalSegmentForgery,
    InitialStateLie,
    PhaseCorruption,
    StateSubstitution,
    apply_tamper,
)
from qpcp.proof import ProofAccess, build_honest_proof, decode_state, random_proof
from qpcp.quantum import (
    AcceptancePredicate,
    Circuit,
    StateVector,
    apply_gate,
    random_circuit,
    random_state,
    simulate,
)
from qpcp.verifier import (
    ACC,
    BUDGET_EXCEEDED,
    FINAL_PROBABILITY_LOW,
    INITIAL_STATE_MISMATCH,
    PROPAGATION_MISMATCH,
    REJ,
    CoinSource,
    QueryBudget,
    VerifierConfig,
    bernoulli,
    compute_amplitude,
    default_eps,
    default_t,
    estimate_inner_product,
    estimate_many,
    exact_budget,
    local_check_amplitude,
    proof_sampler,
    run_verifier,
    sample_input,
    sample_inputs,
    state_sampler,
    verify,
    verify_fast,
)


def config(circuit, t=20, seed=1, b=96):
    return VerifierConfig.for_circuit(circuit, b, t=t, seed=seed)


def test_defaults():
    assert default_t(10) == math.ceil(40 * 100**2)
    assert default_eps(4, 96) == 8 * 2.0**-45


def test_coin_source_limbs_and_accounting():
    a, b = CoinSource(9), CoinSource(9)
    v = a.bits(97)
    w = b.words(2)
    assert v == int(w[0]) | ((int(w[1]) & ((1 << 33) - 1)) << 64)
    assert a.bits_used == 97
    assert 0 <= CoinSource(3).bits(5) < 32


def test_bernoulli_edges():
    coins = CoinSource(4)
    assert all(bernoulli(0, 16, coins) == 0 for _ in range(200))
    assert all(bernoulli(1 << 16, 16, coins) == 1 for _ in range(200))
    assert all(bernoulli((1 << 16) + 7, 16, coins) == 1 for _ in range(200))
    draws = [bernoulli(1 << 15, 16, coins) for _ in range(4000)]
    assert abs(np.mean(draws) - 0.5) < 0.05


def test_honest_accepts_with_exact_counts(small_circuit, honest):
    cfg = config(small_circuit, t=30)
    for engine in ("reference", "fast"):
        v = run_verifier(honest, small_circuit, cfg, engine)
        assert v.outcome == ACC, v
        budget = cfg.budgets
        assert v.proof_queries == budget.max_proof_queries
        assert v.oracle_queries == budget.max_oracle_queries
        assert v.random_bits == budget.max_random_bits


def test_oracle_queries_hit_the_real_oracle(small_circuit, honest):
    before = sum(f.query_count for f in small_circuit.oracles.values())
    v = verify(ProofAccess(honest), small_circuit, config(small_circuit, t=5))
    after = sum(f.query_count for f in small_circuit.oracles.values())
    assert after - before == v.oracle_queries


def test_deterministic_for_seed(small_circuit, rng):
    proof = random_proof(3, 6, 96, rng)
    cfg = config(small_circuit, seed=77)
    a = verify(ProofAccess(proof), small_circuit, cfg)
    b = verify(ProofAccess(proof), small_circuit, cfg)
    assert a.to_json() == b.to_json()


@given(st.integers(1, 4), st.integers(1, 8), st.integers(0, 2**32 - 1),
       st.sampled_from(["honest", "random", "phase", "subst"]))
def test_engines_agree(n, m, seed, kind):
    rng = np.random.default_rng(seed)
    c = random_circuit(n, m, rng)
    proof = build_honest_proof(simulate(c))
    if kind == "random":
        proof = random_proof(n, m, 96, rng)
    elif kind == "phase":
        proof = apply_tamper(proof, PhaseCorruption(int(rng.integers(m + 1)),
                                                    int(rng.integers(1 << n)), 0.3))
    elif kind == "subst":
        proof = apply_tamper(proof, StateSubstitution(int(rng.integers(1, m + 1)), 0.05, seed), c)
    cfg = config(c, t=15, seed=seed)
    ref = verify(ProofAccess(proof), c, cfg)
    fast = verify_fast(proof, c, cfg)
    assert ref.same_decision(fast)
    assert (ref.proof_queries, ref.oracle_queries, ref.random_bits) == \
        (fast.proof_queries, fast.oracle_queries, fast.random_bits)


def test_initial_state_lie_rejected_at_step_one(small_circuit, honest):
    bad = apply_tamper(honest, InitialStateLie())
    v = verify(ProofAccess(bad), small_circuit, config(small_circuit))
    assert (v.outcome, v.reason, v.gate_index) == (REJ, INITIAL_STATE_MISMATCH, 0)
    assert v.proof_queries == small_circuit.n + 1
    assert v.random_bits == 0


def test_low_final_probability_rejected(small_circuit, honest):
    # demand the prefix the honest state mostly avoids
    other = "1" if small_circuit.acceptance.prefix == "0" else "0"
    c = Circuit(small_circuit.n, small_circuit.gates, small_circuit.oracles,
                AcceptancePredicate(other, 0.99))
    v = verify_fast(honest, c, config(c))
    assert (v.outcome, v.reason, v.gate_index) == (REJ, FINAL_PROBABILITY_LOW, c.m)


def test_forged_final_segment_caught_by_propagation(small_circuit, honest):
    bad = apply_tamper(honest, FinalSegmentForgery(), small_circuit)
    v = verify_fast(bad, small_circuit, config(small_circuit, t=200))
    assert v.outcome == REJ and v.reason == PROPAGATION_MISMATCH and v.gate_index == small_circuit.m


def test_zero_gate_circuit():
    c = Circuit(2, [], {}, AcceptancePredicate("0", 0.5))
    proof = build_honest_proof([StateVector.basis(2)])
    v = verify(ProofAccess(proof), c, config(c))
    assert v.outcome == ACC and v.proof_queries == exact_budget(c, 20, 96).max_proof_queries


def test_budget_exceeded_rejects(small_circuit, honest):
    cfg = replace(config(small_circuit), budgets=QueryBudget(max_proof_queries=50))
    for engine in ("reference", "fast"):
        v = run_verifier(honest, small_circuit, cfg, engine)
        assert (v.outcome, v.reason) == (REJ, BUDGET_EXCEEDED)
        assert v.proof_queries == 50


def test_random_bit_budget_respected(small_circuit, honest):
    n, b = small_circuit.n, 96
    cfg = replace(config(small_circuit), budgets=QueryBudget(max_random_bits=3 * n * (b + 1)))
    v = verify(ProofAccess(honest), small_circuit, cfg)
    assert v.reason == BUDGET_EXCEEDED and v.random_bits == 3 * n * (b + 1)


def test_config_validation():
    with pytest.raises(ValueError):
        VerifierConfig(0, 1e-9)
    with pytest.raises(ValueError):
        VerifierConfig(1, 0.0)
    with pytest.raises(ValueError):
        VerifierConfig(1, 1e-9, rng_seed=1 << 128)


def test_verdict_json_seed_is_hex(small_circuit, honest):
    v = verify_fast(honest, small_circuit, config(small_circuit, seed=255))
    assert v.to_json()["seed"] == "0" * 30 + "ff"


def test_batch_sampler_matches_reference(rng):
    proof = random_proof(3, 2, 96, rng)
    coins = CoinSource(11)
    acc = ProofAccess(proof)
    ref = [sample_input(acc, 1, coins) for _ in range(200)]
    assert ref == list(sample_inputs(proof, 1, 200, 11))


def test_compute_amplitude_reads_n_plus_one(honest):
    acc = ProofAccess(honest)
    a = compute_amplitude(acc, 2, 5)
    assert acc.proof_query_count == honest.n + 1
    assert a == decode_state(honest, 2)[5]


def test_local_check_on_decoded_state(small_circuit, rng):
    proof = random_proof(3, small_circuit.m, 96, rng)
    for i, gate in enumerate(small_circuit.gates, 1):
        want = apply_gate(decode_state(proof, i - 1), gate, small_circuit.oracles)
        for x in range(8):
            got = local_check_amplitude(ProofAccess(proof), small_circuit.oracles, i, x, gate)
            assert abs(got - want[x]) <= 1e-13


# -- estimator ------------------------------------------------------------------

def test_estimator_exact_when_states_equal(rng):
    psi = random_state(3, rng)
    est = estimate_inner_product(state_sampler(psi), lambda xs: psi.amplitudes[xs],
                                 lambda xs: psi.amplitudes[xs], 50, rng)
    assert est.gamma_hat == pytest.approx(1)


def test_estimator_mean_close_to_inner_product(rng):
    psi, phi = random_state(3, rng), random_state(3, rng)
    vals = estimate_many(psi, phi, 20, 4000, rng)
    gamma = np.vdot(psi.amplitudes, phi.amplitudes)
    se = vals.std() / math.sqrt(vals.size)
    assert abs(vals.mean() - gamma) < 5 * se * math.sqrt(2)


def test_estimator_with_proof_sampler(rng):
    c = random_circuit(2, 3, rng)
    proof = build_honest_proof(simulate(c))
    psi = decode_state(proof, 1)
    est = estimate_inner_product(proof_sampler(ProofAccess(proof), 1, CoinSource(3)),
                                 lambda xs: psi.amplitudes[xs], lambda xs: psi.amplitudes[xs], 30, rng)
    assert est.gamma_hat == pytest.approx(1)
    with pytest.raises(ValueError):
        estimate_inner_product(state_sampler(psi), None, None, 0, rng)
