"""Latency and load measurement over the simulated WAN deployment.

Reproduces the evaluation setup: four regions with configurable one-way
link delay and jitter, one simulated user per thread, per-scenario
end-to-end latency with a per-step breakdown, throughput, and
bytes-persisted-per-request on the issuer.
"""

from __future__ import annotations

import os
import statistics
import threading
import time
from dataclasses import dataclass, field

from .. import crypto, did as did_mod
from ..audit import AuditLog, AuditLogEntry
from ..deploy import Platform, PlatformConfig
from ..errors import ScenarioUnknown, SoverClaimError
from ..ledger import LedgerConfig
from ..messaging import RetryPolicy

SCENARIOS = ("did", "connect", "storj", "issue", "present", "audit")

BENCH_KDF = {"kdf": "scrypt", "n": 2048, "r": 8, "p": 1}

PAPER_NOTE = (
    "reference deployment reported ~16 KB persisted per issuance request "
    "(~56 MB over ~3500 requests)"
)


@dataclass
class BenchConfig:
    scenario: str = "issue"
    users: int = 1
    link_latency_ms: float = 10.0
    jitter_ms: float = 3.0
    iterations: int = 12
    duration: float = 0.0  # seconds; when set, overrides iterations
    seed: int = 11
    document_bytes: int = 3 * 1024


@dataclass
class _UserResult:
    latencies: list[float] = field(default_factory=list)       # seconds
    steps: list[dict[str, float]] = field(default_factory=list)  # per-iteration step ms


def _quantiles(values_ms: list[float]) -> dict:
    ordered = sorted(values_ms)
    return {
        "median": round(statistics.median(ordered), 2),
        "p95": round(ordered[min(len(ordered) - 1, int(0.95 * len(ordered)))], 2),
        "mean": round(statistics.fmean(ordered), 2),
        "min": round(ordered[0], 2),
        "max": round(ordered[-1], 2),
    }


class BenchHarness:
    """Owns the platform lifecycle for one bench run."""

    def __init__(self, base_dir: str, config: BenchConfig) -> None:
        if config.scenario not in SCENARIOS:
            raise ScenarioUnknown(f"scenario must be one of {SCENARIOS}, got {config.scenario!r}")
        self.config = config
        self.platform = Platform(
            base_dir,
            config=PlatformConfig(
                seed=config.seed,
                wan_delay=config.link_latency_ms / 1000.0,
                wan_jitter=config.jitter_ms / 1000.0,
                ledger=LedgerConfig(),  # spec defaults: 50 ms batch window
                retry=RetryPolicy(attempts=4, backoff=0.2),
                keystore_kdf=BENCH_KDF,
                protocol_timeout=60.0,
            ),
        )
        self.base_dir = base_dir

    def close(self) -> None:
        self.platform.stop()

    # -- drivers -----------------------------------------------------------

    def _events_for_thread(self, agent, thread_id: str) -> dict[str, int]:
        out = {}
        for event in list(agent.events):
            data = event.get("data", {})
            if data.get("thread_id") == thread_id and "state" in data:
                out[data["state"]] = event["ts"]
        return out

    def _drive_did(self, user, result: _UserResult) -> None:
        t0 = time.monotonic()
        steps: dict[str, float] = {}
        kp = crypto.generate_keypair(crypto.Alg.SIGN)
        did_mod.create_local_did(kp)
        steps["local_did"] = (time.monotonic() - t0) * 1000

        t1 = time.monotonic()
        target = did_mod.sov_did_for_key(kp.public_key)
        document = did_mod.DidDocument(
            id=str(target),
            verification_methods=[
                did_mod.VerificationMethod(f"{target}#keys-1", "Ed25519", kp.public_key)
            ],
        )
        did_mod.register_public_did(user["ledger"], document, kp)
        steps["register_sov"] = (time.monotonic() - t1) * 1000

        t2 = time.monotonic()
        did_mod.resolve_public(user["ledger"], str(target))
        steps["resolve"] = (time.monotonic() - t2) * 1000

        result.latencies.append(time.monotonic() - t0)
        result.steps.append(steps)

    def _drive_connect(self, user, result: _UserResult) -> None:
        holder = user["holder"]
        t0 = time.monotonic()
        invitation = self.platform.issuer.messenger.create_invitation()
        t1 = time.monotonic()
        holder.messenger.accept_invitation(invitation, timeout=30.0)
        result.latencies.append(time.monotonic() - t0)
        result.steps.append(
            {
                "invitation": (t1 - t0) * 1000,
                "handshake": (time.monotonic() - t1) * 1000,
            }
        )

    def _drive_storj(self, user, result: _UserResult) -> None:
        holder = user["holder"]
        uplink = holder.uplink
        key = f"bench-{user['id']}-{len(result.latencies)}.bin"
        payload = os.urandom(self.config.document_bytes)
        t0 = time.monotonic()
        uplink.upload(user["bucket"], payload, key=key)
        t_up = time.monotonic()
        capability = uplink.share(user["bucket"], key, not_after=None)
        t_share = time.monotonic()
        data = uplink.download_shared(capability.url)
        t_down = time.monotonic()
        if data != payload:
            raise SoverClaimError("storj round trip corrupted the payload")
        uplink.delete(user["bucket"], key)
        t_del = time.monotonic()
        result.latencies.append(t_del - t0)
        result.steps.append(
            {
                "upload": (t_up - t0) * 1000,
                "share": (t_share - t_up) * 1000,
                "download": (t_down - t_share) * 1000,
                "delete": (t_del - t_down) * 1000,
            }
        )

    def _drive_issue(self, user, result: _UserResult) -> None:
        holder = user["holder"]
        t0 = time.monotonic()
        thread_id = holder.propose_credential(
            connection_id=user["issuer_conn"],
            claims={"name": "Bench User", "policy_no": f"POL-{user['id']}", "valid_until": "2030-01-01"},
            credential_type="Insurance Policy",
            document_url=user["share_url"],
            document_checksum=user["doc_checksum"],
            document_content_type="image/png",
        )
        record = self._wait(holder.issue_records, thread_id, {"DONE", "ABANDONED"})
        elapsed = time.monotonic() - t0
        if record["state"] != "DONE":
            raise SoverClaimError(f"bench issuance failed: {record.get('reason')}")
        result.latencies.append(elapsed)
        marks = self._events_for_thread(holder, thread_id)
        end_ms = time.time() * 1000
        start_ms = end_ms - elapsed * 1000
        steps = _segments(
            start_ms, marks, ["PROPOSAL_SENT", "OFFER_RECEIVED", "REQUEST_SENT"],
            ["propose", "validate_and_offer", "request"],
        )
        if "REQUEST_SENT" in marks:
            steps["issue_and_store"] = max(0.0, end_ms - marks["REQUEST_SENT"])
        result.steps.append(steps)

    def _drive_present(self, user, result: _UserResult) -> None:
        holder = user["holder"]
        verifier = self.platform.verifier
        t0 = time.monotonic()
        thread_id = verifier.request_presentation(user["verifier_conn"], ["policy_no"])
        record = self._wait(verifier.present_records, thread_id, {"DONE"})
        elapsed = time.monotonic() - t0
        if not record["result"]["granted"]:
            raise SoverClaimError(f"bench presentation denied: {record['result']}")
        result.latencies.append(elapsed)
        holder_marks = self._events_for_thread(holder, thread_id)
        verifier_marks = self._events_for_thread(verifier, thread_id)
        start_ms = (time.time() - elapsed) * 1000
        steps = {}
        if "REQUEST_SENT" in verifier_marks:
            steps["request"] = max(0.0, verifier_marks["REQUEST_SENT"] - start_ms)
            if "PRESENTATION_SENT" in holder_marks:
                steps["prove"] = max(
                    0.0, holder_marks["PRESENTATION_SENT"] - verifier_marks["REQUEST_SENT"]
                )
                end_ms = start_ms + elapsed * 1000
                steps["verify_and_result"] = max(0.0, end_ms - holder_marks["PRESENTATION_SENT"])
        result.steps.append(steps)

    def _drive_audit(self, user, result: _UserResult) -> None:
        holder = user["holder"]
        log: AuditLog = holder.audit
        t0 = time.monotonic()
        anchored = log.record_event(
            AuditLogEntry(
                operation="STATUS_RECEIVED",
                credential_type="Bench",
                user_did=log.submitter_did,
                counterparty_did="did:key:bench",
                timestamp=int(time.time() * 1000),
            )
        )
        t_rec = time.monotonic()
        entries = log.list_my_logs()
        t_read = time.monotonic()
        if anchored is None or not entries:
            raise SoverClaimError("audit anchor did not commit")
        result.latencies.append(t_read - t0)
        result.steps.append(
            {"record_anchor": (t_rec - t0) * 1000, "read_decrypt": (t_read - t_rec) * 1000}
        )

    def _wait(self, store, thread_id: str, states: set[str], timeout: float = 60.0) -> dict:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            record = store.get(thread_id)
            if record and record["state"] in states:
                return record
            time.sleep(0.002)
        raise SoverClaimError(f"thread {thread_id} stuck")

    # -- orchestration ---------------------------------------------------------

    def _prepare_user(self, index: int) -> dict:
        platform = self.platform
        holder = platform.holder if index == 0 else platform.new_holder(f"holder-{index}")
        if index > 0:
            holder.start()
        user: dict = {"id": index, "holder": holder, "ledger": holder.ledger}
        scenario = self.config.scenario
        bucket = f"bench-u{index}"
        user["bucket"] = bucket
        if scenario in ("storj", "issue", "present"):
            try:
                holder.uplink.make_bucket(bucket)
            except SoverClaimError:
                pass
        if scenario in ("issue", "present"):
            _, conn = platform.connect(platform.issuer, holder)
            user["issuer_conn"] = conn.connection_id
            document = b"\x89PNG\r\n\x1a\n" + os.urandom(self.config.document_bytes)
            holder.uplink.upload(bucket, document, key="claim.png")
            user["share_url"] = holder.uplink.share(bucket, "claim.png", None).url
            user["doc_checksum"] = crypto.sha256(document).hex()
        if scenario == "present":
            inviter_conn, holder_conn = platform.connect(platform.verifier, holder)
            user["verifier_conn"] = inviter_conn.connection_id
            # the presentation needs a credential in the wallet
            thread_id = holder.propose_credential(
                connection_id=user["issuer_conn"],
                claims={"name": "Bench User", "policy_no": f"POL-{index}", "valid_until": "2030-01-01"},
                credential_type="Insurance Policy",
                document_url=user["share_url"],
                document_checksum=user["doc_checksum"],
                document_content_type="image/png",
            )
            record = self._wait(holder.issue_records, thread_id, {"DONE", "ABANDONED"})
            if record["state"] != "DONE":
                raise SoverClaimError(f"bench setup issuance failed: {record.get('reason')}")
        return user

    def run(self) -> dict:
        config = self.config
        driver = getattr(self, f"_drive_{config.scenario}")
        users = [self._prepare_user(i) for i in range(config.users)]
        results = [_UserResult() for _ in users]

        issuer_bytes_before = self.platform.issuer.issue_records.persisted_bytes()
        started = time.monotonic()

        def loop(user, result) -> None:
            iteration = 0
            while True:
                if config.duration > 0:
                    if time.monotonic() - started >= config.duration:
                        break
                elif iteration >= config.iterations:
                    break
                driver(user, result)
                iteration += 1

        threads = [
            threading.Thread(target=loop, args=(user, result), daemon=True)
            for user, result in zip(users, results)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        wall = time.monotonic() - started

        all_latencies = [v * 1000 for r in results for v in r.latencies]
        if not all_latencies:
            raise SoverClaimError("bench produced no samples")
        step_names: list[str] = []
        for r in results:
            for steps in r.steps:
                for name in steps:
                    if name not in step_names:
                        step_names.append(name)
        step_stats = {
            name: _quantiles([s[name] for r in results for s in r.steps if name in s])
            for name in step_names
        }

        issuer_delta = self.platform.issuer.issue_records.persisted_bytes() - issuer_bytes_before
        issuances = len(all_latencies) if config.scenario == "issue" else 0

        report = {
            "schema": "soverclaim-bench-report/1",
            "scenario": config.scenario,
            "config": {
                "users": config.users,
                "link_latency_ms": config.link_latency_ms,
                "jitter_ms": config.jitter_ms,
                "iterations": config.iterations,
                "duration_s": config.duration,
                "seed": config.seed,
            },
            "samples": len(all_latencies),
            "wall_clock_s": round(wall, 3),
            "throughput_per_s": round(len(all_latencies) / wall, 3) if wall > 0 else 0.0,
            "end_to_end_ms": _quantiles(all_latencies),
            "steps_ms": step_stats,
            "generated_at": int(time.time() * 1000),
        }
        if issuances:
            report["persisted_bytes_per_request"] = {
                "issuer": round(issuer_delta / issuances, 1),
                "requests": issuances,
                "note": PAPER_NOTE,
            }
        return report


def _segments(start_ms: float, marks: dict[str, int], states: list[str], labels: list[str]) -> dict:
    steps: dict[str, float] = {}
    previous = start_ms
    for state, label in zip(states, labels):
        ts = marks.get(state)
        if ts is None:
            continue
        steps[label] = max(0.0, ts - previous)
        previous = ts
    return steps


def run_bench(base_dir: str, config: BenchConfig) -> dict:
    harness = BenchHarness(base_dir, config)
    try:
        return harness.run()
    finally:
        harness.close()
