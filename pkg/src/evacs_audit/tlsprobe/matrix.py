"""Probe every corpus certificate with every client mode and compare to expectations."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, Flaw
from .endpoint import ClientMode, FailureReason, ProbeOutcome, probe, serve

EXPECTED_STRICT_REASON = {
    Flaw.VALID: None,
    Flaw.EXPIRED: FailureReason.EXPIRED,
    Flaw.UNTRUSTED_ISSUER: FailureReason.UNTRUSTED,
    Flaw.HOSTNAME_MISMATCH: FailureReason.HOSTNAME,
    Flaw.MISSING_HOSTNAME: FailureReason.HOSTNAME,
}


def expected_accept(flaw: Flaw, mode: ClientMode) -> bool:
    return mode is ClientMode.LAX or flaw is Flaw.VALID


@dataclass
class ProbeMatrix:
    observed: dict[tuple[Flaw, ClientMode], ProbeOutcome] = field(default_factory=dict)
    expected: dict[tuple[Flaw, ClientMode], bool] = field(default_factory=dict)
    ports: dict[Flaw, int] = field(default_factory=dict)

    @property
    def conforms(self) -> bool:
        return all(self.observed[key].accepted == want for key, want in self.expected.items())

    def deviations(self) -> list[tuple[Flaw, ClientMode]]:
        return [key for key, want in self.expected.items() if self.observed[key].accepted != want]

    def reasons_conform(self) -> bool:
        """Strict-mode rejections carry the reason their flaw implies."""
        return all(
            out.failure_reason == EXPECTED_STRICT_REASON[flaw]
            for (flaw, mode), out in self.observed.items()
            if mode is ClientMode.STRICT and not out.accepted
        )

    def to_dict(self) -> dict:
        cells = [
            {
                "flaw": flaw.value,
                "expected_accept": self.expected[(flaw, mode)],
                **out.to_dict(),
            }
            for (flaw, mode), out in sorted(self.observed.items(), key=lambda kv: (kv[0][1].value, kv[0][0].value))
        ]
        return {
            "conforms": self.conforms,
            "ports": {f.value: p for f, p in self.ports.items()},
            "cells": cells,
        }

    def format_table(self) -> str:
        modes = sorted({m for _, m in self.observed}, key=lambda m: m.value)
        lines = [(f"{'flaw':<20}" + "".join(f"{m.value:<22}" for m in modes)).rstrip()]
        for flaw in Flaw:
            if not any((flaw, m) in self.observed for m in modes):
                continue
            row = f"{flaw.value:<20}"
            for m in modes:
                out = self.observed[(flaw, m)]
                mark = "accept" if out.accepted else f"reject({out.failure_reason.value})"
                if out.accepted != self.expected[(flaw, m)]:
                    mark += " !"
                row += f"{mark:<22}"
            lines.append(row.rstrip())
        lines.append(f"conforms: {'yes' if self.conforms else 'NO'}")
        return "\n".join(lines)


def run_matrix(corpus: Corpus, modes: Iterable[ClientMode | str],
               trust_anchors: Sequence[str | Path] | None = None,
               expected_host: str | None = None, host: str = "127.0.0.1") -> ProbeMatrix:
    """Serve every corpus leaf on an ephemeral port and probe it in each mode.

    ``trust_anchors=None`` trusts the corpus CA; pass ``[]`` to trust nothing.
    """
    modes = [ClientMode(m) for m in modes]
    anchors = [corpus.ca_cert_path] if trust_anchors is None else list(trust_anchors)
    expected_host = expected_host or corpus.base_hostname
    matrix = ProbeMatrix()
    if not modes:
        return matrix
    servers = {flaw: serve(spec, 0, host) for flaw, spec in corpus.specs.items()}
    try:
        matrix.ports = {flaw: srv.port for flaw, srv in servers.items()}
        cells = [(flaw, mode) for flaw in servers for mode in modes]
        with ThreadPoolExecutor(max_workers=len(servers)) as pool:
            # one worker per server keeps each server to one connection at a time
            def run_flaw(flaw: Flaw) -> list[tuple[tuple[Flaw, ClientMode], ProbeOutcome]]:
                srv = servers[flaw]
                return [((flaw, m), probe(srv.host, srv.port, expected_host, m, anchors)) for m in modes]

            for results in pool.map(run_flaw, servers):
                matrix.observed.update(results)
        matrix.expected = {cell: expected_accept(*cell) for cell in cells}
    finally:
        for srv in servers.values():
            srv.stop()
    return matrix
