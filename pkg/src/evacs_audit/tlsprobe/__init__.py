"""Flawed-certificate corpus, local TLS endpoints and a strict/lax client harness."""

from .corpus import CertSpec, Corpus, Flaw, generate_corpus, load_corpus
from .endpoint import (
    ClientMode,
    FailureReason,
    ProbeNetworkError,
    ProbeOutcome,
    ServerHandle,
    probe,
    serve,
)
from .lint import LintError, LintReport, lint_certificate
from .matrix import ProbeMatrix, expected_accept, run_matrix

__all__ = [
    "CertSpec", "ClientMode", "Corpus", "FailureReason", "Flaw", "LintError", "LintReport",
    "ProbeMatrix", "ProbeNetworkError", "ProbeOutcome", "ServerHandle", "expected_accept",
    "generate_corpus", "lint_certificate", "load_corpus", "probe", "run_matrix", "serve",
]
