import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpcp.proof import (
    HEADER,
    PHASE,
    PROB,
    AnswerFeed,
    BudgetExceeded,
    ProofAccess,
    ProofAddress,
    ProofFormatError,
    ProofUnavailable,
    build_honest_proof,
    decode_phase,
    decode_prob,
    decode_state,
    deserialize,
    encode_phase,
    encode_prob,
    entry_in_range,
    entry_width_bits,
    file_size,
    node_prefix,
    pack_phase,
    prob_node,
    proof_length,
    random_proof,
    read_proof,
    serialize,
    unpack_phase,
    write_proof,
)
from qpcp.quantum import inner_product, random_circuit, random_state, simulate

bits = st.sampled_from([16, 24, 33, 64, 96])


@given(st.integers(1, 6), st.integers(0, 5), st.data())
def test_flat_index_is_a_bijection(n, m, data):
    flat = data.draw(st.integers(0, proof_length(n, m) - 1))
    addr = ProofAddress.from_flat(flat, n, m)
    addr.validate(n, m)
    assert addr.flat(n) == flat


def test_flat_layout_small():
    n, m = 2, 1
    addrs = [ProofAddress.from_flat(f, n, m) for f in range(proof_length(n, m))]
    assert [a.kind for a in addrs[:7]] == [PROB] * 3 + [PHASE] * 4
    assert addrs[7] == ProofAddress(1, PROB, 0)
    assert len(set(addrs)) == proof_length(n, m) == 14


def test_node_helpers_inverse():
    for k in range(6):
        for w in range(1 << k):
            assert node_prefix(prob_node(k, w)) == (k, w)


def test_out_of_range_address():
    with pytest.raises(IndexError):
        ProofAddress.from_flat(proof_length(2, 1), 2, 1)
    with pytest.raises(IndexError):
        ProofAddress.phase(0, 4).validate(2, 0)


@given(st.floats(0, 1), bits)
def test_prob_round_trip(p, b):
    raw = encode_prob(p, b)
    p0, p1 = decode_prob(raw, b)
    assert abs(p1 - p) <= 2.0 ** -(b + 1) + 1e-16
    assert p0 + p1 == pytest.approx(1)


def test_prob_clamps_on_read():
    b = 16
    assert decode_prob((1 << b) + 123, b) == (0.0, 1.0)


@given(st.floats(-math.pi, math.pi), bits)
def test_phase_round_trip(theta, b):
    z = complex(math.cos(theta), math.sin(theta))
    re, im = encode_phase(z, b)
    g = decode_phase(re, im, b)
    assert abs(g) == pytest.approx(1)
    assert abs(g - z) <= 2.0 ** (-b + 2)
    assert unpack_phase(pack_phase(re, im, b), b) == (re, im)


def test_small_phase_decodes_to_one():
    b = 32
    assert decode_phase(0, 0, b) == 1
    assert decode_phase(1 << 15, 0, b) == 1  # |z|^2 = 2^30 < 2^32
    assert decode_phase(-(1 << 16), 0, b) == -1


def test_entry_width():
    assert entry_width_bits(96) == 2 * 8 * 13
    assert entry_in_range(PROB, (1 << 104) - 1, 96)
    assert not entry_in_range(PROB, 1 << 104, 96)
    assert not entry_in_range(PHASE, -1, 96)


@given(st.integers(1, 4), st.integers(0, 3), bits, st.integers(0, 2**32 - 1))
def test_serialization_round_trip(n, m, b, seed):
    proof = random_proof(n, m, b, np.random.default_rng(seed))
    data = serialize(proof)
    assert len(data) == file_size(n, m, b)
    assert deserialize(data) == proof


def test_file_round_trip(tmp_path, honest):
    path = tmp_path / "p.qpcp"
    assert write_proof(honest, path) == path.stat().st_size
    assert read_proof(path) == honest


@pytest.mark.parametrize("mutate, message", [
    (lambda d: b"XXXX" + d[4:], "magic"),
    (lambda d: d[:4] + (2).to_bytes(4, "little") + d[8:], "version"),
    (lambda d: d[:16] + b"\x01\x00" + d[18:], "reserved"),
    (lambda d: d[:-1], "truncated"),
    (lambda d: d + b"\x00", "trailing"),
    (lambda d: d[:10], "truncated"),
])
def test_malformed_files_rejected(honest, mutate, message):
    with pytest.raises(ProofFormatError, match=message):
        deserialize(mutate(serialize(honest)))


def test_header_layout(honest):
    magic, version, n, m, b, reserved = HEADER.unpack_from(serialize(honest))
    assert (magic, version, n, m, b, reserved) == (b"QPCP", 1, 3, 6, 96, 0)


@given(st.integers(1, 4), st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_random_bit_patterns_decode_to_unit_vectors(n, m, seed):
    proof = random_proof(n, m, 24, np.random.default_rng(seed))
    for i in range(m + 1):
        assert decode_state(proof, i).norm() == pytest.approx(1, abs=1e-9)


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_honest_encoding_fidelity(n, seed):
    b = 96
    psi = random_state(n, np.random.default_rng(seed))
    dec = decode_state(build_honest_proof([psi], b), 0)
    # the fixed-point error (n+2) 2^(-b+2) is far below double precision
    tol = max((n + 2) * 2.0 ** (-b + 2), 1e-12)
    assert abs(1 - abs(inner_product(dec, psi))) <= tol
    np.testing.assert_allclose(dec.amplitudes, psi.amplitudes, atol=1e-12)


def test_build_honest_rejects_bad_input(rng):
    psi = random_state(2, rng)
    with pytest.raises(ValueError):
        build_honest_proof([psi], b=8)
    with pytest.raises(ValueError):
        build_honest_proof([psi, random_state(3, rng)])


def test_threaded_build_is_identical():
    from concurrent.futures import ThreadPoolExecutor
    states = simulate(random_circuit(3, 5, np.random.default_rng(3)))
    with ThreadPoolExecutor(3) as ex:
        assert build_honest_proof(states, executor=ex) == build_honest_proof(states)


def test_access_counts_and_traces(honest):
    acc = ProofAccess(honest)
    acc.read_prob(0, 0, 0)
    acc.read_phase(2, 5)
    assert acc.proof_query_count == 2
    assert [a for a, _ in acc.trace] == [ProofAddress.prob(0, 0, 0), ProofAddress.phase(2, 5)]
    acc.max_queries = 2
    with pytest.raises(BudgetExceeded):
        acc.read(ProofAddress.phase(0, 0))


def test_answer_feed_serves_in_order_and_validates():
    feed = AnswerFeed([5, 1 << 300], 96)
    acc = ProofAccess(feed, 2, 1, 96)
    assert acc.read(ProofAddress.prob(0, 0, 0)) == 5
    with pytest.raises(ProofUnavailable, match="malformed"):
        acc.read(ProofAddress.phase(0, 0))
    with pytest.raises(ProofUnavailable, match="exhausted"):
        acc.read(ProofAddress.phase(0, 0))


def test_replace_segment(honest, rng):
    other = random_proof(3, 2, 96, rng)
    out = honest.replace_segment(4, other, 1)
    assert out.probs[4] == other.probs[1]
    assert out.probs[3] == honest.probs[3]
