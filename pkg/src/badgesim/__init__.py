"""Host-runnable core of a wearable social-sensing badge.

Subpackages cover binary serialization (tinybuf), simulated non-volatile
memory (vmem), the sequential filesystem (seqfs), exchange FIFOs,
drift-compensated timekeeping (timebase), the badge application itself,
and a deterministic discrete-event simulator (sim).
"""

__version__ = "0.1.0"
