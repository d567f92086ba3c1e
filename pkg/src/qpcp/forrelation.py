"""2-fold Forrelation: the forrelator, its 3n+2 gate circuit, and promise instances."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .quantum import (
    H,
    AcceptancePredicate,
    BooleanOracle,
    Circuit,
    OracleGate,
    Single,
)

YES = "yes"
NO = "no"
YES_THRESHOLD = 0.6
NO_THRESHOLD = 0.01
CIRCUIT_THRESHOLD = YES_THRESHOLD**2


class InstanceGenerationError(RuntimeError):
    pass


def fwht(values) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform: out[y] = sum_x (-1)^(x.y) values[x]."""
    a = np.array(values, dtype=float)
    size = a.size
    if size & (size - 1):
        raise ValueError("length must be a power of two")
    h = 1
    while h < size:
        a = a.reshape(-1, 2, h)
        a = np.stack((a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]), axis=1)
        h *= 2
    return a.reshape(size)


def _table(f):
    return f.table if isinstance(f, BooleanOracle) else np.asarray(f, dtype=np.uint8)


def forrelator(f1, f2, n: int) -> float:
    t1, t2 = _table(f1), _table(f2)
    if t1.size != 1 << n or t2.size != 1 << n:
        raise ValueError(f"truth tables must have 2**{n} entries")
    s1 = 1.0 - 2.0 * t1
    s2 = 1.0 - 2.0 * t2
    return float(s1 @ fwht(s2)) / 2 ** (1.5 * n)


def build_circuit(n: int, f1=None, f2=None) -> Circuit:
    """H on each qubit, O_f1, H on each qubit, O_f2, H on each qubit; accept on 0^n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    layer = [Single(q, H) for q in range(n)]
    gates = layer + [OracleGate("f1")] + layer + [OracleGate("f2")] + layer
    oracles = {}
    zero = np.zeros(1 << n, dtype=np.uint8)
    oracles["f1"] = f1 if isinstance(f1, BooleanOracle) else BooleanOracle(zero if f1 is None else f1, n)
    oracles["f2"] = f2 if isinstance(f2, BooleanOracle) else BooleanOracle(zero if f2 is None else f2, n)
    return Circuit(n, gates, oracles, AcceptancePredicate("0" * n, CIRCUIT_THRESHOLD))


@dataclass
class ForrelationInstance:
    n: int
    f1: BooleanOracle
    f2: BooleanOracle
    phi: float
    label: str
    attempts: int = 1

    def __post_init__(self):
        if self.label == YES and not self.phi >= YES_THRESHOLD:
            raise ValueError(f"YES instance with phi={self.phi}")
        if self.label == NO and not abs(self.phi) <= NO_THRESHOLD:
            raise ValueError(f"NO instance with phi={self.phi}")

    def circuit(self) -> Circuit:
        return build_circuit(self.n, self.f1, self.f2)

    def to_dict(self) -> dict:
        return {"n": self.n, "f1": self.f1.to_hex(), "f2": self.f2.to_hex(),
                "phi": self.phi, "label": self.label}

    @classmethod
    def from_dict(cls, data: dict) -> "ForrelationInstance":
        n = int(data["n"])
        f1 = BooleanOracle.from_hex(data["f1"], n)
        f2 = BooleanOracle.from_hex(data["f2"], n)
        phi = forrelator(f1, f2, n)
        if "phi" in data and abs(phi - float(data["phi"])) > 1e-9:
            raise ValueError(f"stored phi {data['phi']} disagrees with recomputed {phi}")
        return cls(n, f1, f2, phi, str(data["label"]).lower())


def sign_of_fourier(f1_table: np.ndarray) -> np.ndarray:
    """f2(y) = 1 exactly when the Fourier coefficient of (-1)^f1 at y is negative."""
    return (fwht(1.0 - 2.0 * f1_table) < 0).astype(np.uint8)


def gen_instance(n: int, label: str, rng: np.random.Generator,
                 max_attempts: int = 10_000) -> ForrelationInstance:
    label = label.lower()
    if label not in (YES, NO):
        raise ValueError(f"label must be yes or no, got {label!r}")
    if label == YES and n < 2:
        raise ValueError("YES instances need n >= 2")
    for attempt in range(1, max_attempts + 1):
        t1 = rng.integers(0, 2, size=1 << n, dtype=np.uint8)
        t2 = sign_of_fourier(t1) if label == YES else rng.integers(0, 2, size=1 << n, dtype=np.uint8)
        phi = forrelator(t1, t2, n)
        ok = phi >= YES_THRESHOLD if label == YES else abs(phi) <= NO_THRESHOLD
        if ok:
            return ForrelationInstance(n, BooleanOracle(t1, n), BooleanOracle(t2, n), phi, label, attempt)
    raise InstanceGenerationError(f"no {label.upper()} instance for n={n} after {max_attempts} attempts")


def save_instance(inst: ForrelationInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(inst.to_dict(), fh, indent=1)
        fh.write("\n")


def load_instance(path) -> ForrelationInstance:
    with open(path) as fh:
        return ForrelationInstance.from_dict(json.load(fh))
