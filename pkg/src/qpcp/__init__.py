"""Classical PCP and two-prover verification of quantum circuit acceptance."""
from .quantum import (
    AcceptancePredicate,
    BooleanOracle,
    Circuit,
    OracleGate,
    Single,
    StateVector,
    Two,
    acceptance_probability,
    load_circuit,
    random_circuit,
    save_circuit,
    simulate,
)
from .proof import PcpProof, ProofAccess, build_honest_proof, read_proof, write_proof
from .verifier import Verdict, VerifierConfig, run_verifier, verify, verify_fast

__version__ = "0.1.0"
