"""Process and per-component resource sampling during a load run:
CPU time per service (grouped by thread name), RSS, and on-disk bytes
per data directory. CSV time series plus a summary."""

from __future__ import annotations

import io
import os
import threading
import time

import psutil

# thread-name prefix -> reported component
_COMPONENT_PREFIXES = (
    ("validator-", "validator"),
    ("msg-issuer", "issuer-agent"),
    ("msg-holder", "holder-agent"),
    ("msg-verifier", "verifier-agent"),
    ("issuer-", "issuer-agent"),
    ("holder-", "holder-agent"),
    ("verifier-", "verifier-agent"),
    ("val", "validator"),
)


def _component_of(name: str) -> str | None:
    for prefix, component in _COMPONENT_PREFIXES:
        if name.startswith(prefix):
            return component if component != "validator" else name.split("-out")[0]
    return None


def _dir_bytes(path: str) -> int:
    total = 0
    for root, _dirs, files in os.walk(path):
        for file in files:
            try:
                total += os.path.getsize(os.path.join(root, file))
            except OSError:
                pass
    return total


class ResourceSampler:
    """Samples at a fixed interval on a background thread."""

    def __init__(self, storage_dirs: dict[str, str] | None = None, interval: float = 0.2) -> None:
        self.interval = interval
        self.storage_dirs = storage_dirs or {}
        self.rows: list[dict] = []
        self._process = psutil.Process()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._thread_names: dict[int, str] = {}

    def _snapshot_thread_names(self) -> None:
        for thread in threading.enumerate():
            if thread.native_id is not None:
                self._thread_names[thread.native_id] = thread.name

    def _sample(self) -> None:
        self._snapshot_thread_names()
        cpu_percent = self._process.cpu_percent(interval=None)
        rss = self._process.memory_info().rss
        per_component: dict[str, float] = {}
        for thread in self._process.threads():
            name = self._thread_names.get(thread.id, "")
            component = _component_of(name)
            if component:
                per_component[component] = (
                    per_component.get(component, 0.0) + thread.user_time + thread.system_time
                )
        row = {
            "ts": round(time.time(), 3),
            "cpu_percent": cpu_percent,
            "rss_bytes": rss,
            "components_cpu_s": per_component,
            "storage_bytes": {name: _dir_bytes(path) for name, path in self.storage_dirs.items()},
        }
        self.rows.append(row)

    def _loop(self) -> None:
        self._process.cpu_percent(interval=None)  # prime the counter
        while not self._stop.wait(self.interval):
            self._sample()

    def start(self) -> "ResourceSampler":
        self._process.cpu_percent(interval=None)  # prime the counter
        self._sample()  # baseline before any load runs
        self._thread = threading.Thread(target=self._loop, daemon=True, name="resource-sampler")
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=2.0)
        self._sample()

    # -- outputs ---------------------------------------------------------

    def components(self) -> list[str]:
        names: list[str] = []
        for row in self.rows:
            for name in row["components_cpu_s"]:
                if name not in names:
                    names.append(name)
        return sorted(names)

    def to_csv(self) -> str:
        components = self.components()
        storage = sorted({name for row in self.rows for name in row["storage_bytes"]})
        out = io.StringIO()
        header = ["ts", "cpu_percent", "rss_bytes"]
        header += [f"cpu_s[{c}]" for c in components]
        header += [f"bytes[{s}]" for s in storage]
        out.write(",".join(header) + "\n")
        for row in self.rows:
            cells = [f"{row['ts']}", f"{row['cpu_percent']}", f"{row['rss_bytes']}"]
            cells += [f"{row['components_cpu_s'].get(c, 0.0):.3f}" for c in components]
            cells += [str(row["storage_bytes"].get(s, 0)) for s in storage]
            out.write(",".join(cells) + "\n")
        return out.getvalue()

    def summary(self) -> dict:
        if not self.rows:
            return {}
        last = self.rows[-1]
        first = self.rows[0]
        cpu_by_component = {
            c: round(
                last["components_cpu_s"].get(c, 0.0) - first["components_cpu_s"].get(c, 0.0), 3
            )
            for c in self.components()
        }
        storage_delta = {
            s: last["storage_bytes"].get(s, 0) - first["storage_bytes"].get(s, 0)
            for s in last["storage_bytes"]
        }
        return {
            "samples": len(self.rows),
            "peak_rss_bytes": max(r["rss_bytes"] for r in self.rows),
            "mean_cpu_percent": round(
                sum(r["cpu_percent"] for r in self.rows) / len(self.rows), 2
            ),
            "cpu_seconds_by_component": cpu_by_component,
            "storage_delta_bytes": storage_delta,
        }
