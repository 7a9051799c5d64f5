"""soverclaim: self-sovereign claims platform.

Subsystems:
  crypto       signatures, AEAD, key wrapping, commitments, key stores
  did          DID syntax, documents, local + ledger resolution
  ledger       4-validator permissioned ledger simulation + browser API
  storage      erasure-coded encrypted document store (uplink/satellite/nodes)
  messaging    DIDComm-style pairwise encrypted messaging + handshake
  credentials  schemas, commitment-vector credentials, presentations, revocation
  audit        encrypted ledger-anchored audit trail
  agents       issuer / holder / verifier services + admin API
  bench        latency, load and resource measurement harness
"""

__version__ = "0.1.0"
