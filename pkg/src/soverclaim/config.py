"""Per-process TOML configuration."""

from __future__ import annotations

import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(Exception):
    pass


@dataclass
class AgentFileConfig:
    role: str
    name: str
    listen: str
    data_dir: str
    passphrase: str
    ledger_endpoints: list[str]
    quorum: int = 3
    satellite: str = ""
    auto_approve: bool = True
    protocol_timeout: float = 30.0
    erasure_k: int = 2
    erasure_n: int = 4
    segment_size: int = 4 * 1024 * 1024
    serve_ui: str = ""  # directory of built wallet UI assets, holder only

    REQUIRED = ("role", "name", "listen", "data_dir", "passphrase", "ledger_endpoints")


def load_agent_config(path: str) -> AgentFileConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        # tomllib reports line/column in the message
        raise ConfigError(f"config {path} does not parse: {exc}") from exc

    missing = [key for key in AgentFileConfig.REQUIRED if key not in raw]
    if missing:
        raise ConfigError(f"config {path} is missing required key(s): {', '.join(missing)}")
    if raw["role"] not in ("issuer", "holder", "verifier"):
        raise ConfigError(f"config {path}: role must be issuer|holder|verifier, got {raw['role']!r}")

    storage = raw.get("storage", {})
    return AgentFileConfig(
        role=raw["role"],
        name=raw["name"],
        listen=raw["listen"],
        data_dir=raw["data_dir"],
        passphrase=raw["passphrase"],
        ledger_endpoints=list(raw["ledger_endpoints"]),
        quorum=int(raw.get("quorum", 3)),
        satellite=raw.get("satellite", ""),
        auto_approve=bool(raw.get("auto_approve", True)),
        protocol_timeout=float(raw.get("protocol_timeout", 30.0)),
        erasure_k=int(storage.get("k", 2)),
        erasure_n=int(storage.get("n", 4)),
        segment_size=int(storage.get("segment_size", 4 * 1024 * 1024)),
        serve_ui=raw.get("serve_ui", ""),
    )
