"""Acceptance of the repeated two-prover protocol against a lying second prover.

Prover 1 answers from the honest proof; Prover 2 answers from a proof whose
initial segment is wrong, so the PCP verifier would reject it outright (s = 0).
Each round catches the lie only if the challenge lands on a corrupted entry;
the script reports the empirical acceptance for several round counts next to
(1 - (1 - s)/q_pi)^t.

    python3 scripts/mip_soundness.py --executions 200
"""
import argparse
import json
import math

import numpy as np

from qpcp.adversary import InitialStateLie, apply_tamper, mip_repeated_bound, wilson_interval
from qpcp.mip import MipConfig, answer_length, honest_p1, proof_p2, run_protocol
from qpcp.proof import build_honest_proof
from qpcp.quantum import random_circuit, simulate
from qpcp.verifier import VerifierConfig, default_eps, exact_budget


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--pcp-t", type=int, default=1)
    ap.add_argument("--executions", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    circuit = random_circuit(args.n, args.m, rng)
    honest = build_honest_proof(simulate(circuit))
    lie = apply_tamper(honest, InitialStateLie())
    pcp = VerifierConfig(args.pcp_t, default_eps(args.n, honest.b), 0,
                         exact_budget(circuit, args.pcp_t, honest.b))
    q = answer_length(circuit, MipConfig(1, pcp))
    full = math.ceil(2 * q)
    for rounds in sorted({1, q // 2, q, full}):
        cfg = MipConfig(max(rounds, 1), pcp)
        p1 = honest_p1(honest, circuit, cfg)
        acc = sum(run_protocol(circuit, p1, proof_p2(lie), cfg,
                               np.random.default_rng(int(rng.integers(2**63)))).accepted
                  for _ in range(args.executions))
        lo, hi = wilson_interval(acc, args.executions)
        print(json.dumps({"rounds": cfg.t, "q_pi": q, "accept_rate": acc / args.executions,
                          "wilson": [round(lo, 4), round(hi, 4)],
                          "bound_s0": mip_repeated_bound(0.0, q, cfg.t)}))


if __name__ == "__main__":
    main()
