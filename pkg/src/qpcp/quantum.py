"""Dense statevector simulation with classical phase-oracle gates.

Basis strings are integers in [0, 2**n) with qubit 0 as the most significant
bit, so measurement strings read qubit 0 first.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from math import sqrt
from typing import Union

import numpy as np

UNITARY_ATOL = 1e-12
NORM_ATOL = 1e-9

H = np.array([[1, 1], [1, -1]], dtype=complex) / sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
T = np.diag([1, np.exp(1j * np.pi / 4)]).astype(complex)
I2 = np.eye(2, dtype=complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class CircuitError(ValueError):
    pass


def bit_of(x: int, q: int, n: int) -> int:
    """Value of qubit ``q`` in basis string ``x``."""
    return (x >> (n - 1 - q)) & 1


def flip(x: int, q: int, n: int) -> int:
    return x ^ (1 << (n - 1 - q))


def bits_to_int(bits) -> int:
    out = 0
    for b in bits:
        if b not in (0, 1, "0", "1"):
            raise ValueError(f"not a bit: {b!r}")
        out = (out << 1) | int(b)
    return out


def int_to_bits(x: int, n: int) -> str:
    return format(x, f"0{n}b") if n else ""


class BooleanOracle:
    """Truth table of f: {0,1}^n -> {0,1} with a metered query path.

    ``query`` is the verifier's access and increments ``query_count``;
    ``table`` and ``peek`` are free (simulation and honest provers).
    """

    def __init__(self, truth_table, n: int | None = None):
        table = np.asarray(truth_table, dtype=np.uint8).ravel()
        if n is None:
            n = int(table.size).bit_length() - 1
        if table.size != 1 << n:
            raise CircuitError(f"truth table has {table.size} entries, expected 2**{n}")
        if np.any(table > 1):
            raise CircuitError("truth table entries must be 0 or 1")
        table.setflags(write=False)
        self.n = n
        self.table = table
        self.query_count = 0
        self._lock = threading.Lock()

    def query(self, x: int) -> int:
        with self._lock:
            self.query_count += 1
        return int(self.table[x])

    def query_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        with self._lock:
            self.query_count += int(xs.size)
        return self.table[xs]

    def peek(self, x: int) -> int:
        return int(self.table[x])

    def clone(self) -> "BooleanOracle":
        return BooleanOracle(self.table.copy(), self.n)

    def signs(self) -> np.ndarray:
        return 1.0 - 2.0 * self.table

    def to_hex(self) -> str:
        return truth_table_to_hex(self.table)

    @classmethod
    def from_hex(cls, text: str, n: int) -> "BooleanOracle":
        return cls(truth_table_from_hex(text, n), n)

    def __eq__(self, other):
        return isinstance(other, BooleanOracle) and np.array_equal(self.table, other.table)

    def __repr__(self):
        return f"BooleanOracle(n={self.n}, hex={self.to_hex()!r})"


def truth_table_to_hex(table) -> str:
    # bit for x=0 first, MSB-first packing, zero padded to whole bytes
    return np.packbits(np.asarray(table, dtype=np.uint8)).tobytes().hex()


def truth_table_from_hex(text: str, n: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    need = max(1, ((1 << n) + 7) // 8)
    if raw.size != need:
        raise CircuitError(f"truth table hex has {raw.size} bytes, expected {need}")
    bits = np.unpackbits(raw)
    if np.any(bits[1 << n:]):
        raise CircuitError("nonzero padding bits in truth table")
    return bits[: 1 << n].copy()


@dataclass(frozen=True, eq=False)
class Single:
    q: int
    U: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "U", _as_unitary(self.U, 2))


@dataclass(frozen=True, eq=False)
class Two:
    q: int
    s: int
    U: np.ndarray

    def __post_init__(self):
        if self.q == self.s:
            raise CircuitError("two-qubit gate needs distinct qubits")
        object.__setattr__(self, "U", _as_unitary(self.U, 4))


@dataclass(frozen=True)
class OracleGate:
    oracle_id: str


Gate = Union[Single, Two, OracleGate]


def _as_unitary(U, dim: int) -> np.ndarray:
    U = np.array(U, dtype=complex)
    if U.shape != (dim, dim):
        raise CircuitError(f"expected a {dim}x{dim} matrix, got shape {U.shape}")
    err = np.max(np.abs(U.conj().T @ U - np.eye(dim)))
    if err > UNITARY_ATOL:
        raise CircuitError(f"matrix is not unitary (max deviation {err:.3g})")
    U.setflags(write=False)
    return U


def gate_qubits(gate: Gate) -> tuple[int, ...]:
    if isinstance(gate, Single):
        return (gate.q,)
    if isinstance(gate, Two):
        return (gate.q, gate.s)
    return ()


@dataclass(frozen=True)
class AcceptancePredicate:
    """Accept when the measured string starts with ``prefix``."""

    prefix: str = "0"
    threshold: float = 2 / 3

    def __post_init__(self):
        if any(c not in "01" for c in self.prefix):
            raise CircuitError(f"bad prefix {self.prefix!r}")
        if not 0 < self.threshold <= 1:
            raise CircuitError("threshold must lie in (0, 1]")


@dataclass
class Circuit:
    n: int
    gates: list
    oracles: dict = field(default_factory=dict)
    acceptance: AcceptancePredicate = field(default_factory=AcceptancePredicate)

    def __post_init__(self):
        if self.n < 1:
            raise CircuitError("need at least one qubit")
        if len(self.acceptance.prefix) > self.n:
            raise CircuitError("acceptance prefix longer than the register")
        for oid, orc in self.oracles.items():
            if orc.n != self.n:
                raise CircuitError(f"oracle {oid!r} acts on {orc.n} bits, circuit has {self.n}")
        for k, g in enumerate(self.gates, 1):
            _check_gate(g, self.n, self.oracles, k)

    @property
    def m(self) -> int:
        return len(self.gates)

    def with_fresh_oracles(self) -> "Circuit":
        """Copy whose oracles have independent query counters."""
        return Circuit(
            self.n,
            list(self.gates),
            {k: o.clone() for k, o in self.oracles.items()},
            self.acceptance,
        )


def _check_gate(gate, n, oracles, position=None):
    where = f"gate {position}: " if position else ""
    if isinstance(gate, OracleGate):
        if gate.oracle_id not in oracles:
            raise CircuitError(f"{where}unknown oracle id {gate.oracle_id!r}")
        return
    if not isinstance(gate, (Single, Two)):
        raise CircuitError(f"{where}not a gate: {gate!r}")
    for q in gate_qubits(gate):
        if not 0 <= q < n:
            raise CircuitError(f"{where}qubit index {q} out of range for n={n}")


@dataclass(frozen=True, eq=False)
class StateVector:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).ravel()
        if amps.size != 1 << self.n:
            raise ValueError(f"{amps.size} amplitudes for n={self.n}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n: int, x: int = 0) -> "StateVector":
        a = np.zeros(1 << n, dtype=complex)
        a[x] = 1.0
        return cls(n, a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __getitem__(self, x: int) -> complex:
        return complex(self.amplitudes[x])

    def __len__(self):
        return self.amplitudes.size


def apply_gate(state: StateVector, gate: Gate, oracles: dict | None = None) -> StateVector:
    n = state.n
    _check_gate(gate, n, oracles or {})
    if isinstance(gate, OracleGate):
        signs = oracles[gate.oracle_id].signs()
        return StateVector(n, state.amplitudes * signs)
    psi = state.amplitudes.reshape([2] * n)
    if isinstance(gate, Single):
        out = np.tensordot(gate.U, psi, axes=([1], [gate.q]))
        out = np.moveaxis(out, 0, gate.q)
    else:
        U = gate.U.reshape(2, 2, 2, 2)
        out = np.tensordot(U, psi, axes=([2, 3], [gate.q, gate.s]))
        out = np.moveaxis(out, [0, 1], [gate.q, gate.s])
    return StateVector(n, out.reshape(-1))


def simulate(circuit: Circuit) -> list[StateVector]:
    states = [StateVector.basis(circuit.n)]
    for g in circuit.gates:
        states.append(apply_gate(states[-1], g, circuit.oracles))
    return states


def acceptance_probability(state: StateVector, pred: AcceptancePredicate) -> float:
    ell = len(pred.prefix)
    if ell > state.n:
        raise CircuitError("acceptance prefix longer than the register")
    if ell == 0:
        return 1.0
    block = 1 << (state.n - ell)
    start = bits_to_int(pred.prefix) * block
    p = state.probabilities()[start:start + block].sum()
    return float(min(p, 1.0))


def inner_product(u: StateVector, v: StateVector) -> complex:
    """<u|v>, conjugate-linear in ``u``."""
    if u.n != v.n:
        raise ValueError(f"dimension mismatch: n={u.n} vs n={v.n}")
    return complex(np.vdot(u.amplitudes, v.amplitudes))


def random_state(n: int, rng: np.random.Generator) -> StateVector:
    z = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(n, z / np.linalg.norm(z))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    # Haar measure via QR with phase correction
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_circuit(n: int, m: int, rng: np.random.Generator, n_oracles: int = 1,
                   acceptance: AcceptancePredicate | None = None) -> Circuit:
    """Random circuit over {H, T, CNOT, Haar 1q/2q, oracle gates}."""
    oracles = {
        f"f{k}": BooleanOracle(rng.integers(0, 2, size=1 << n), n) for k in range(n_oracles)
    }
    kinds = ["H", "T", "U1"]
    if n >= 2:
        kinds += ["CNOT", "U2"]
    if oracles:
        kinds.append("O")
    gates = []
    for _ in range(m):
        kind = kinds[rng.integers(len(kinds))]
        if kind in ("CNOT", "U2"):
            q, s = (int(v) for v in rng.choice(n, size=2, replace=False))
            gates.append(Two(q, s, CNOT if kind == "CNOT" else random_unitary(4, rng)))
        elif kind == "O":
            gates.append(OracleGate(f"f{rng.integers(n_oracles)}"))
        else:
            q = int(rng.integers(n))
            U = {"H": H, "T": T}.get(kind)
            gates.append(Single(q, U if U is not None else random_unitary(2, rng)))
    if acceptance is None:
        # threshold low enough that the honest run always passes the final check
        final = StateVector.basis(n)
        for g in gates:
            final = apply_gate(final, g, oracles)
        p0 = acceptance_probability(final, AcceptancePredicate("0", 1.0))
        acceptance = AcceptancePredicate("0" if p0 >= 0.5 else "1", 0.25)
    return Circuit(n, gates, oracles, acceptance)


# -- circuit description files ------------------------------------------------

def _matrix_to_json(U: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in U.ravel()]


def _matrix_from_json(data, dim: int) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2 or arr.size != 2 * dim * dim:
        raise CircuitError(f"matrix must hold {dim * dim} [re, im] pairs")
    arr = arr.reshape(dim * dim, 2)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(dim, dim)


def circuit_to_dict(circuit: Circuit) -> dict:
    gates = []
    for g in circuit.gates:
        if isinstance(g, Single):
            gates.append({"type": "single", "q": g.q, "matrix": _matrix_to_json(g.U)})
        elif isinstance(g, Two):
            gates.append({"type": "two", "q": g.q, "s": g.s, "matrix": _matrix_to_json(g.U)})
        else:
            gates.append({"type": "oracle", "oracle_id": g.oracle_id})
    return {
        "n": circuit.n,
        "gates": gates,
        "oracles": {k: o.to_hex() for k, o in circuit.oracles.items()},
        "acceptance": {
            "prefix": circuit.acceptance.prefix,
            "threshold": circuit.acceptance.threshold,
        },
    }


def circuit_from_dict(data: dict) -> Circuit:
    try:
        n = int(data["n"])
        oracles = {k: BooleanOracle.from_hex(v, n) for k, v in data.get("oracles", {}).items()}
        gates = []
        for g in data["gates"]:
            kind = g["type"]
            if kind == "single":
                gates.append(Single(int(g["q"]), _matrix_from_json(g["matrix"], 2)))
            elif kind == "two":
                gates.append(Two(int(g["q"]), int(g["s"]), _matrix_from_json(g["matrix"], 4)))
            elif kind == "oracle":
                gates.append(OracleGate(str(g["oracle_id"])))
            else:
                raise CircuitError(f"unknown gate type {kind!r}")
        acc = data.get("acceptance", {})
        pred = AcceptancePredicate(str(acc.get("prefix", "0")), float(acc.get("threshold", 2 / 3)))
    except (KeyError, TypeError) as exc:
        raise CircuitError(f"malformed circuit description: {exc!r}") from exc
    return Circuit(n, gates, oracles, pred)


def load_circuit(path) -> Circuit:
    with open(path) as fh:
        return circuit_from_dict(json.load(fh))


def save_circuit(circuit: Circuit, path) -> None:
    with open(path, "w") as fh:
        json.dump(circuit_to_dict(circuit), fh, indent=1)
        fh.write("\n")
