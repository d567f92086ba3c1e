"""Prove and verify Forrelation YES instances, and show NO instances fall below threshold.

    python3 scripts/forrelation_demo.py --n-max 5 --t 200
"""
import argparse
import json

import numpy as np

from qpcp.forrelation import CIRCUIT_THRESHOLD, gen_instance
from qpcp.proof import build_honest_proof
from qpcp.quantum import acceptance_probability, simulate
from qpcp.verifier import VerifierConfig, run_verifier


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-max", type=int, default=5)
    ap.add_argument("--t", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    for n in range(2, args.n_max + 1):
        for label in ("yes", "no"):
            inst = gen_instance(n, label, rng)
            c = inst.circuit()
            states = simulate(c)
            p = acceptance_probability(states[-1], c.acceptance)
            verdict = run_verifier(build_honest_proof(states), c,
                                   VerifierConfig.for_circuit(c, 96, t=args.t, seed=n))
            print(json.dumps({"n": n, "label": label, "phi": round(inst.phi, 6),
                              "p_accept": round(p, 6), "threshold": CIRCUIT_THRESHOLD,
                              "honest_verdict": verdict.outcome, "reason": verdict.reason}))


if __name__ == "__main__":
    main()
