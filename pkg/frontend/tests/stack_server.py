"""Boots the full platform over HTTP for the wallet UI test suite.
Holder decisions are manual (the UI is what approves them)."""

import signal
import sys
import tempfile
import time

from soverclaim.deploy import Platform, PlatformConfig

BASE_PORT = int(sys.argv[1]) if len(sys.argv) > 1 else 18700


def main() -> None:
    data_dir = tempfile.mkdtemp(prefix="wallet-ui-stack-")
    platform = Platform(
        data_dir,
        config=PlatformConfig(
            http_base_port=BASE_PORT,
            auto_approve=False,
            keystore_kdf={"kdf": "scrypt", "n": 1024, "r": 8, "p": 1},
            gc_grace_period=0.0,
        ),
    )
    print(f"READY base_port={BASE_PORT}", flush=True)

    stop = {"flag": False}
    signal.signal(signal.SIGTERM, lambda *a: stop.update(flag=True))
    signal.signal(signal.SIGINT, lambda *a: stop.update(flag=True))
    try:
        while not stop["flag"]:
            time.sleep(0.2)
    finally:
        platform.stop()


if __name__ == "__main__":
    main()
