"""Deterministic simulator and reference library for blockchain-incentivized
software update delivery: escrow contracts that pay distributors per verified
delivery, a fair-exchange session protocol built on proofs of correct
encryption, and an adversarial test harness around both.
"""

from . import contract, crypto, dsn, encoding, ledger, protocol, sim

__version__ = "0.1.0"

__all__ = [
    "contract",
    "crypto",
    "dsn",
    "encoding",
    "ledger",
    "protocol",
    "sim",
    "__version__",
]
