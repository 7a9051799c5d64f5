from .client import LedgerHandle, LedgerNetwork, start_network
from .types import Block, LedgerTransaction, TxnType, build_txn, verify_chain_blocks, verify_chain_dicts
from .validator import LedgerConfig, ValidatorNode

__all__ = [
    "Block",
    "LedgerConfig",
    "LedgerHandle",
    "LedgerNetwork",
    "LedgerTransaction",
    "TxnType",
    "ValidatorNode",
    "build_txn",
    "start_network",
    "verify_chain_blocks",
    "verify_chain_dicts",
]
