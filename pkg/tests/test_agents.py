import os
import time

import pytest

from soverclaim import crypto
from soverclaim.agents import AgentConfig, DocumentCheck, DocumentValidationPolicy, HolderAgent
from soverclaim.encoding import b64, from_json

from .stack import FullStack, INSURANCE_ATTRS, TEST_KDF, wait_for, wait_record_state

CLAIMS = {"name": "Alice Doe", "policy_no": "POL-12345", "valid_until": "2027-12-31"}
PNG_DOC = b"\x89PNG\r\n\x1a\n" + os.urandom(3000)


@pytest.fixture
def stack(tmp_path):
    s = FullStack(tmp_path)
    yield s
    s.stop()


def run_issue(stack, claims=None, doc=PNG_DOC, not_after=None, content_type="image/png"):
    _, conn_holder = stack.connect(stack.issuer, stack.holder)
    url, checksum = stack.upload_and_share(doc, not_after=not_after)
    thread_id = stack.holder.propose_credential(
        connection_id=conn_holder.connection_id,
        claims=claims or CLAIMS,
        credential_type="Insurance Policy",
        document_url=url,
        document_checksum=checksum,
        document_content_type=content_type,
    )
    return thread_id, conn_holder


class TestIssueFlow:
    def test_happy_path(self, stack):
        before = len(stack.holder.wallet.list_credentials())
        thread_id, _ = run_issue(stack)
        holder_record = wait_record_state(stack.holder.issue_records, thread_id, {"DONE", "ABANDONED"})
        assert holder_record["state"] == "DONE", holder_record.get("reason")
        issuer_record = wait_record_state(stack.issuer.issue_records, thread_id, {"DONE"})
        assert issuer_record["state"] == "DONE"
        wallet = stack.holder.wallet.list_credentials()
        assert len(wallet) == before + 1
        credential = wallet[-1]
        assert {n for n, _, _ in credential.attributes} == set(INSURANCE_ATTRS)
        from soverclaim import credentials as creds

        assert creds.verify_credential(stack.holder.ledger, credential).ok

    def test_audit_trail_of_issue(self, stack):
        thread_id, _ = run_issue(stack)
        wait_record_state(stack.holder.issue_records, thread_id, {"DONE"})
        entries = wait_for(
            lambda: (lambda e: e if len(e) >= 2 else None)(stack.holder.audit.list_my_logs()),
            message="audit entries",
        )
        ops = [e.operation for _, e in entries]
        assert ops.count("CREDENTIAL_REQUESTED") == 1
        assert ops.count("CREDENTIAL_RECEIVED") == 1

    def test_expired_share_url_abandons(self, stack):
        expired = int(time.time() * 1000) - 10_000
        thread_id, _ = run_issue(stack, not_after=expired)
        issuer_record = wait_record_state(stack.issuer.issue_records, thread_id, {"ABANDONED"})
        assert "DocumentUnavailable" in issuer_record["reason"]
        holder_record = wait_record_state(stack.holder.issue_records, thread_id, {"ABANDONED"})
        assert holder_record["state"] == "ABANDONED"

    def test_oversized_document_rejected(self, stack):
        stack.issuer.policy = DocumentValidationPolicy(default=DocumentCheck(max_bytes=1024))
        thread_id, _ = run_issue(stack)
        issuer_record = wait_record_state(stack.issuer.issue_records, thread_id, {"ABANDONED"})
        assert "PolicyRejected" in issuer_record["reason"]

    def test_checksum_mismatch_rejected(self, stack):
        _, conn_holder = stack.connect(stack.issuer, stack.holder)
        url, _ = stack.upload_and_share(PNG_DOC)
        thread_id = stack.holder.propose_credential(
            connection_id=conn_holder.connection_id,
            claims=CLAIMS,
            credential_type="Insurance Policy",
            document_url=url,
            document_checksum="00" * 32,
            document_content_type="image/png",
        )
        issuer_record = wait_record_state(stack.issuer.issue_records, thread_id, {"ABANDONED"})
        assert "PolicyRejected" in issuer_record["reason"]

    def test_failed_ownership_challenge(self, stack):
        # An adversarial holder claims a subject DID it does not control.
        _, conn_holder = stack.connect(stack.issuer, stack.holder)
        url, checksum = stack.upload_and_share(PNG_DOC)
        imposter = crypto.generate_keypair(crypto.Alg.SIGN)
        from soverclaim.did import create_local_did

        other_did, _ = create_local_did(imposter)
        thread_id = "adversarial-thread-1"
        stack.holder.messenger.send(
            conn_holder.connection_id,
            "issue/propose",
            {
                "claims": CLAIMS,
                "credential_type": "Insurance Policy",
                "document_url": url,
                "document_checksum": checksum,
                "document_content_type": "image/png",
                "subject_did": str(other_did),
                "ownership_sig": b64(crypto.sign(imposter.secret_key, b"wrong portion")),
            },
            thread_id=thread_id,
        )
        issuer_record = wait_record_state(stack.issuer.issue_records, thread_id, {"ABANDONED"})
        assert "OwnershipUnproven" in issuer_record["reason"]

    def test_duplicate_issue_message_suppressed(self, stack):
        thread_id, conn_holder = run_issue(stack)
        wait_record_state(stack.holder.issue_records, thread_id, {"DONE"})
        count = len(stack.holder.wallet.list_credentials())
        issuer_record = stack.issuer.issue_records.get(thread_id)
        # Issuer re-sends the credential (as it would after a lost ack).
        stack.issuer.messenger.send(
            issuer_record["connection_id"],
            "issue/credential",
            {"credential": issuer_record["credential"]},
            thread_id=thread_id,
        )
        time.sleep(0.2)
        assert len(stack.holder.wallet.list_credentials()) == count


class TestPresentFlow:
    def _issue_first(self, stack):
        thread_id, _ = run_issue(stack)
        wait_record_state(stack.holder.issue_records, thread_id, {"DONE"})
        return stack.holder.wallet.list_credentials()[-1]

    def test_grant(self, stack):
        self._issue_first(stack)
        _, conn_holder = stack.connect(stack.verifier, stack.holder)
        thread_id = stack.verifier.request_presentation(
            conn_holder.connection_id
            if False
            else stack.verifier.messenger.list_connections()[0]["connection_id"],
            ["policy_no"],
        )
        record = wait_record_state(stack.verifier.present_records, thread_id, {"DONE"})
        assert record["result"]["granted"], record["result"]
        holder_record = wait_record_state(stack.holder.present_records, thread_id, {"DONE"})
        assert holder_record["result"]["granted"]

    def test_revoked_credential_denied(self, stack):
        credential = self._issue_first(stack)
        stack.issuer.revoke(credential.cred_id)
        stack.connect(stack.verifier, stack.holder)
        thread_id = stack.verifier.request_presentation(
            stack.verifier.messenger.list_connections()[0]["connection_id"], ["policy_no"]
        )
        record = wait_record_state(stack.verifier.present_records, thread_id, {"DONE"})
        assert not record["result"]["granted"]
        assert "not_revoked" in record["result"]["reason"]

    def test_unsatisfiable_declined(self, stack):
        self._issue_first(stack)
        stack.connect(stack.verifier, stack.holder)
        thread_id = stack.verifier.request_presentation(
            stack.verifier.messenger.list_connections()[0]["connection_id"], ["blood_type"]
        )
        record = wait_record_state(stack.verifier.present_records, thread_id, {"DONE"})
        assert not record["result"]["granted"]

    def test_audit_events_of_presentation(self, stack):
        self._issue_first(stack)
        stack.connect(stack.verifier, stack.holder)
        thread_id = stack.verifier.request_presentation(
            stack.verifier.messenger.list_connections()[0]["connection_id"], ["policy_no"]
        )
        wait_record_state(stack.holder.present_records, thread_id, {"DONE"})
        entries = wait_for(
            lambda: (lambda e: e if len(e) >= 4 else None)(stack.holder.audit.list_my_logs()),
            message="4 audit entries",
        )
        ops = [e.operation for _, e in entries]
        assert "PRESENTATION_SENT" in ops
        assert "STATUS_RECEIVED" in ops


class TestDecisions:
    @pytest.fixture
    def manual_stack(self, tmp_path):
        s = FullStack(tmp_path, auto_approve=False)
        yield s
        s.stop()

    def test_offer_approved_manually(self, manual_stack):
        stack = manual_stack
        thread_id, _ = run_issue(stack)
        decision = wait_for(
            lambda: next(iter(stack.holder.decisions.values()), None), message="pending offer"
        )
        assert decision.kind == "OFFER"
        stack.holder.resolve_decision(decision.decision_id, approve=True)
        record = wait_record_state(stack.holder.issue_records, thread_id, {"DONE"})
        assert record["state"] == "DONE"
        assert len(stack.holder.wallet.list_credentials()) == 1

    def test_offer_rejected(self, manual_stack):
        stack = manual_stack
        thread_id, _ = run_issue(stack)
        decision = wait_for(
            lambda: next(iter(stack.holder.decisions.values()), None), message="pending offer"
        )
        stack.holder.resolve_decision(decision.decision_id, approve=False)
        issuer_record = wait_record_state(stack.issuer.issue_records, thread_id, {"ABANDONED"})
        assert issuer_record["reason"] == "holder_rejected"
        assert stack.holder.wallet.list_credentials() == []

    def test_presentation_decision_flow(self, manual_stack):
        stack = manual_stack
        thread_id, _ = run_issue(stack)
        offer = wait_for(lambda: next(iter(stack.holder.decisions.values()), None), message="offer")
        stack.holder.resolve_decision(offer.decision_id, approve=True)
        wait_record_state(stack.holder.issue_records, thread_id, {"DONE"})

        stack.connect(stack.verifier, stack.holder)
        present_thread = stack.verifier.request_presentation(
            stack.verifier.messenger.list_connections()[0]["connection_id"], ["policy_no"]
        )
        decision = wait_for(
            lambda: next(
                (d for d in stack.holder.decisions.values() if d.kind == "PRESENT_REQUEST"), None
            ),
            message="present decision",
        )
        assert decision.details["requested"] == ["policy_no"]
        stack.holder.resolve_decision(decision.decision_id, approve=True)
        record = wait_record_state(stack.verifier.present_records, present_thread, {"DONE"})
        assert record["result"]["granted"]


class TestAuditorAccess:
    def test_grant_two_of_five(self, stack):
        for _ in range(2):
            thread_id, _ = run_issue(stack)
            wait_record_state(stack.holder.issue_records, thread_id, {"DONE"})
        entries = wait_for(
            lambda: (lambda e: e if len(e) >= 4 else None)(stack.holder.audit.list_my_logs()),
            message="4 anchored audit entries",
        )
        seqs = [s for s, _ in entries][:2]

        stack.connect(stack.verifier, stack.holder)
        conn_id = stack.verifier.messenger.list_connections()[-1]["connection_id"]
        audit_thread = stack.verifier.request_audit_access(conn_id, seqs)
        wait_for(lambda: stack.verifier.audit_outcomes[audit_thread] == "granted", message="grant")
        received = stack.verifier.received_releases[audit_thread]
        assert [e["seq_no"] for e in received] == seqs

    def test_denied_by_user(self, tmp_path):
        stack = FullStack(tmp_path, auto_approve=False)
        try:
            stack.connect(stack.verifier, stack.holder)
            conn_id = stack.verifier.messenger.list_connections()[0]["connection_id"]
            audit_thread = stack.verifier.request_audit_access(conn_id, [1])
            decision = wait_for(
                lambda: next(
                    (d for d in stack.holder.decisions.values() if d.kind == "AUDITOR_REQUEST"), None
                ),
                message="auditor decision",
            )
            stack.holder.resolve_decision(decision.decision_id, approve=False)
            wait_for(lambda: stack.verifier.audit_outcomes[audit_thread] == "denied", message="denial")
        finally:
            stack.stop()


class TestAdminApi:
    def test_basic_views(self, stack):
        net = stack.net
        response = net.get("net://holder", "/health")
        assert from_json(response.body)["role"] == "holder"
        response = net.request(
            "net://holder",
            __import__("soverclaim.transport", fromlist=["Request"]).Request(
                method="POST", path="/invitations", body=b"{}"
            ),
        )
        assert response.status == 201
        body = from_json(response.body)
        assert body["url"].startswith("didcomm://invite?oob=")
        response = net.get("net://holder", "/records/not-a-thread")
        assert response.status == 404
        response = net.get("net://holder", "/credentials")
        assert from_json(response.body) == []

    def test_connection_listing_after_handshake(self, stack):
        stack.connect(stack.issuer, stack.holder)
        response = stack.net.get("net://issuer", "/connections")
        records = from_json(response.body)
        assert len(records) == 1 and records[0]["state"] == "COMPLETE"


class TestCrashRecovery:
    def test_restart_abandons_inflight_keeps_wallet(self, tmp_path):
        stack = FullStack(tmp_path, auto_approve=False)
        try:
            done_thread, _ = run_issue(stack)
            offer = wait_for(
                lambda: next(iter(stack.holder.decisions.values()), None), message="offer"
            )
            stack.holder.resolve_decision(offer.decision_id, approve=True)
            wait_record_state(stack.holder.issue_records, done_thread, {"DONE"})

            # Second protocol run left hanging at the offer.
            hanging_thread, _ = run_issue(stack)
            wait_for(lambda: next(iter(stack.holder.decisions.values()), None), message="offer 2")

            stack.holder.stop()
            reborn = HolderAgent(
                "holder",
                stack.net,
                str(tmp_path / "holder"),
                stack.ledger_net.new_client(),
                config=AgentConfig(auto_approve=False, keystore_kdf=TEST_KDF),
                satellite_address=stack.satellite.address,
            )
            reborn.start()
            try:
                assert len(reborn.wallet.list_credentials()) == 1  # no duplicates, no loss
                done = reborn.issue_records.get(done_thread)
                assert done["state"] == "DONE"
                hanging = reborn.issue_records.get(hanging_thread)
                assert hanging["state"] == "ABANDONED"
                assert hanging["reason"] == "restarted mid-protocol"
            finally:
                reborn.stop()
        finally:
            stack.satellite.stop()
            for node in stack.nodes:
                node.stop()
            stack.ledger_net.stop()
            stack.issuer.stop()
            stack.verifier.stop()

    def test_wrong_passphrase_fails_reopen(self, tmp_path):
        from soverclaim.errors import WrongPassphrase

        stack = FullStack(tmp_path)
        try:
            stack.holder.stop()
            with pytest.raises(WrongPassphrase):
                HolderAgent(
                    "holder",
                    stack.net,
                    str(tmp_path / "holder"),
                    stack.ledger_net.new_client(),
                    passphrase="not the passphrase",
                    config=AgentConfig(keystore_kdf=TEST_KDF),
                )
        finally:
            stack.stop()
