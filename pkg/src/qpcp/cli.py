"""Command-line entry point.

Exit codes: 0 accept (or success), 1 reject, 2 I/O or validation error (with a
JSON error object on stderr).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import adversary, forrelation
from .mip import MipConfig, deviating_p1, honest_p1, proof_p2, run_protocol, write_transcripts
from .proof import DEFAULT_BITS, ProofFormatError, build_honest_proof, file_size, read_proof, write_proof
from .quantum import CircuitError, acceptance_probability, load_circuit, save_circuit, simulate
from .verifier import VerifierConfig, default_eps, exact_budget, run_verifier

log = logging.getLogger("qpcp")

DEFAULT_MAX_BYTES = 4 << 30


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _seed(text: str) -> int:
    try:
        value = int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be hex, got {text!r}")
    if not 0 <= value < 1 << 128:
        raise argparse.ArgumentTypeError("seed must fit in 128 bits")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=_seed, default=None, help="128-bit seed, hex")
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--human", action="store_true", help="tables instead of JSON")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="qpcp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="final acceptance probability")
    p.add_argument("circuit")

    p = sub.add_parser("prove", parents=[common], help="write the honest proof")
    p.add_argument("circuit")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bits", type=int, default=DEFAULT_BITS)
    p.add_argument("--max-bytes", type=int, default=DEFAULT_MAX_BYTES)

    p = sub.add_parser("verify", parents=[common], help="run the PCP verifier")
    p.add_argument("circuit")
    p.add_argument("proof")
    p.add_argument("--t", type=_positive, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--engine", choices=["fast", "reference"], default="fast")

    p = sub.add_parser("mip", parents=[common], help="run the two-prover protocol")
    p.add_argument("circuit")
    p.add_argument("--rounds", type=_positive, default=1)
    p.add_argument("--pcp-t", type=_positive, default=1)
    p.add_argument("--bits", type=int, default=DEFAULT_BITS)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--tamper", default=None, help="tamper spec JSON file")
    p.add_argument("-o", "--output", default=None, help="transcript JSON-lines file")

    p = sub.add_parser("forrelation", help="Forrelation instances")
    fsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    g = fsub.add_parser("gen", parents=[common])
    g.add_argument("--n", type=_positive, required=True)
    g.add_argument("--label", choices=["yes", "no"], required=True)
    g.add_argument("--max-attempts", type=_positive, default=10_000)
    g.add_argument("-o", "--output", required=True)
    g = fsub.add_parser("circuit", parents=[common])
    g.add_argument("instance")
    g.add_argument("-o", "--output", required=True)

    p = sub.add_parser("experiment", parents=[common], help="Monte-Carlo experiment")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)
    return parser


def _emit(obj, human: bool, out=None):
    out = out or sys.stdout
    if human:
        width = max((len(k) for k in obj), default=0)
        for k, v in obj.items():
            out.write(f"{k:<{width}}  {v}\n")
    else:
        out.write(json.dumps(obj, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    circuit = load_circuit(args.circuit)
    final = simulate(circuit)[-1]
    _emit({"acceptance_probability": acceptance_probability(final, circuit.acceptance),
           "n": circuit.n, "m": circuit.m}, args.human)
    return 0


def cmd_prove(args) -> int:
    circuit = load_circuit(args.circuit)
    size = file_size(circuit.n, circuit.m, args.bits)
    if size > args.max_bytes:
        raise CliError(f"proof would take {size} bytes, above the cap of {args.max_bytes}")
    states = simulate(circuit)
    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as ex:
            proof = build_honest_proof(states, args.bits, executor=ex)
    else:
        proof = build_honest_proof(states, args.bits)
    written = write_proof(proof, args.output)
    _emit({"output": args.output, "bytes": written, "n": circuit.n, "m": circuit.m,
           "b": args.bits}, args.human)
    return 0


def cmd_verify(args) -> int:
    circuit = load_circuit(args.circuit)
    proof = read_proof(args.proof)
    if (proof.n, proof.m) != (circuit.n, circuit.m):
        raise CliError(f"proof is for (n, m) = ({proof.n}, {proof.m}), "
                       f"circuit has ({circuit.n}, {circuit.m})")
    config = VerifierConfig.for_circuit(circuit, proof.b, args.t, args.eps, args.seed or 0)
    verdict = run_verifier(proof, circuit, config, args.engine)
    _emit(verdict.to_json(), args.human)
    return 0 if verdict.accepted else 1


def cmd_mip(args) -> int:
    circuit = load_circuit(args.circuit)
    eps = default_eps(circuit.n, args.bits) if args.eps is None else args.eps
    pcp = VerifierConfig(args.pcp_t, eps, 0, exact_budget(circuit, args.pcp_t, args.bits))
    config = MipConfig(args.rounds, pcp, args.bits)
    honest = build_honest_proof(simulate(circuit), args.bits)
    tamper = None
    if args.tamper:
        with open(args.tamper) as fh:
            tamper = adversary.tamper_from_dict(json.load(fh))
    if isinstance(tamper, adversary.P1Deviation):
        p1, p2 = deviating_p1(honest, circuit, config, tamper.position, tamper.value), proof_p2(honest)
    else:
        p2_proof = honest if tamper is None else adversary.apply_tamper(honest, tamper, circuit)
        p1, p2 = honest_p1(honest, circuit, config), proof_p2(p2_proof)
    result = run_protocol(circuit, p1, p2, config, np.random.default_rng(args.seed or 0))
    summary = {"type": "summary", "accepted": result.accepted, "rounds": args.rounds,
               "rounds_run": result.rounds_run, "communication_bits": result.communication_bits,
               "oracle_queries": result.oracle_queries}
    if args.output:
        with open(args.output, "w") as fh:
            write_transcripts(result.transcripts, fh)
    else:
        write_transcripts(result.transcripts, sys.stdout)
    _emit(summary, args.human)
    return 0 if result.accepted else 1


def cmd_forrelation(args) -> int:
    if args.action == "gen":
        inst = forrelation.gen_instance(args.n, args.label, np.random.default_rng(args.seed or 0),
                                        args.max_attempts)
        forrelation.save_instance(inst, args.output)
        _emit({"output": args.output, "n": inst.n, "phi": inst.phi, "label": inst.label,
               "attempts": inst.attempts}, args.human)
        return 0
    inst = forrelation.load_instance(args.instance)
    circuit = inst.circuit()
    save_circuit(circuit, args.output)
    _emit({"output": args.output, "n": circuit.n, "m": circuit.m}, args.human)
    return 0


def cmd_experiment(args) -> int:
    cfg = adversary.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("workers", args.threads)
    report = adversary.run_config(cfg, os.path.dirname(os.path.abspath(args.config)))
    with open(args.output, "w", newline="") as fh:
        fh.write(adversary.report_csv([report]))
    _emit(report.to_json(), args.human)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "prove": cmd_prove,
    "verify": cmd_verify,
    "mip": cmd_mip,
    "forrelation": cmd_forrelation,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=getattr(args, "log_level", "WARNING"), stream=sys.stderr)
        return COMMANDS[args.command](args)
    except (CliError, CircuitError, ProofFormatError, OSError, ValueError, KeyError,
            forrelation.InstanceGenerationError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
