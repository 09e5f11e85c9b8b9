"""Audit tooling for a shuffled-ballot voting system.

Modules: ``prng`` (the voting server's generator), ``election`` (simulated
polling places and the published CSV), ``recovery`` (seed search and cast-order
reconstruction), ``bias`` (column-selection bias), ``tlsprobe`` (certificate
validation harness) and ``cli``.
"""

__version__ = "0.1.0"
