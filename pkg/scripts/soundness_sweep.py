"""Detection rate of a planted state substitution as a function of its gap delta.

For each delta, prints the per-sample detection frequency at a random gate and
the full-verifier rejection rate, next to the floor delta^2/10 and the
repeated-check bound 1 - (1 - delta^2/10)^t.

    python3 scripts/soundness_sweep.py --n 4 --m 10 --t 400 --trials 500 -o sweep.csv
"""
import argparse
import csv
import sys

import numpy as np

from qpcp.adversary import StateSubstitution, apply_tamper, gate_gap, wilson_interval
from qpcp.proof import build_honest_proof
from qpcp.quantum import random_circuit, simulate
from qpcp.verifier import ACC, VerifierConfig, default_eps, propagation_gaps, run_verifier


def sweep(n, m, t, trials, deltas, seed):
    rng = np.random.default_rng(seed)
    circuit = random_circuit(n, m, rng)
    honest = build_honest_proof(simulate(circuit))
    eps = default_eps(n, honest.b)
    rows = []
    for delta in deltas:
        hits = total = rejected = 0
        for trial in range(trials):
            i = int(rng.integers(1, m + 1))
            proof = apply_tamper(honest, StateSubstitution(i, delta, trial), circuit)
            _, gaps = propagation_gaps(proof, circuit, i, 64, seed=int(rng.integers(2**63)))
            hits += int((gaps >= eps).sum())
            total += gaps.size
            cfg = VerifierConfig.for_circuit(circuit, honest.b, t=t, seed=int(rng.integers(2**63)))
            rejected += run_verifier(proof, circuit, cfg).outcome != ACC
        lo, hi = wilson_interval(hits, total)
        rows.append({
            "delta": delta,
            "achieved_gap": gate_gap(proof, circuit, i),
            "detect_rate": hits / total,
            "detect_low": lo,
            "detect_high": hi,
            "floor": delta**2 / 10,
            "reject_rate": rejected / trials,
            "reject_bound": 1 - (1 - delta**2 / 10) ** t,
        })
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--t", type=int, default=400)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--deltas", type=float, nargs="+",
                    default=[1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.3])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-o", "--output", default=None)
    args = ap.parse_args(argv)
    rows = sweep(args.n, args.m, args.t, args.trials, args.deltas, args.seed)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    writer = csv.DictWriter(out, fieldnames=list(rows[0]))
    writer.writeheader()
    writer.writerows(rows)
    if args.output:
        out.close()


if __name__ == "__main__":
    main()
