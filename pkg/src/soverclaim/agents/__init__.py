from .base import AgentBase, AgentConfig, PendingDecision, RecordStore, Wallet
from .policy import DocumentCheck, DocumentValidationPolicy
from .roles import HolderAgent, IssuerAgent, VerifierAgent

__all__ = [
    "AgentBase",
    "AgentConfig",
    "DocumentCheck",
    "DocumentValidationPolicy",
    "HolderAgent",
    "IssuerAgent",
    "PendingDecision",
    "RecordStore",
    "VerifierAgent",
    "Wallet",
]
