import os
import time

import pytest

from soverclaim import crypto
from soverclaim.errors import (
    BadName,
    BucketExists,
    ExpiredCapability,
    NoSuchObject,
    NotEnoughShards,
    PartialDeletion,
)
from soverclaim.storage import Satellite, StorageNode, Uplink
from soverclaim.storage.bloom import BloomFilter
from soverclaim.storage.satellite import GcConfig
from soverclaim.transport import SimNetwork


@pytest.fixture
def stack(tmp_path):
    net = SimNetwork(seed=11)
    satellite = Satellite(net, gc_config=GcConfig(grace_period=0.0))
    satellite.start()
    nodes = []
    for i in range(4):
        node = StorageNode(
            node_id=f"node-{i}",
            store_dir=str(tmp_path / f"node{i}"),
            net=net,
            address=f"net://node-{i}",
            satellite_address=satellite.address,
        )
        node.start()
        nodes.append(node)
    uplink = Uplink(net, satellite.address, state_dir=str(tmp_path / "uplink"))
    return net, satellite, nodes, uplink


def scan_node_stores(nodes, needle: bytes) -> bool:
    """True if any node's on-disk bytes contain the needle."""
    for node in nodes:
        for shard_id in node.shard_ids():
            with open(node._path(shard_id), "rb") as fh:
                if needle in fh.read():
                    return True
    return False


class TestBuckets:
    def test_make_and_list_empty(self, stack):
        _, _, _, uplink = stack
        uplink.make_bucket("claims")
        assert uplink.list_objects("claims") == []

    def test_duplicate_bucket(self, stack):
        _, _, _, uplink = stack
        uplink.make_bucket("claims")
        with pytest.raises(BucketExists):
            uplink.make_bucket("claims")

    @pytest.mark.parametrize("bad", ["A!", "ab", "x" * 64, "UPPER", "under_score"])
    def test_bad_names(self, stack, bad):
        _, _, _, uplink = stack
        with pytest.raises(BadName):
            uplink.make_bucket(bad)


class TestUploadDownload:
    def test_small_file_one_segment_four_distinct_nodes(self, stack):
        _, satellite, nodes, uplink = stack
        uplink.make_bucket("claims")
        obj = uplink.upload("claims", os.urandom(3 * 1024), key="scan.png")
        assert len(obj.segment_pointers) == 1
        pointer = obj.segment_pointers[0]
        assert len(pointer.locations) == 4
        assert len({node_id for node_id, _ in pointer.locations}) == 4
        stored = {node.node_id: node.shard_ids() for node in nodes}
        for node_id, shard_id in pointer.locations:
            assert shard_id in stored[node_id]

    def test_roundtrip_hash(self, stack):
        _, _, _, uplink = stack
        uplink.make_bucket("claims")
        data = os.urandom(50_000)
        uplink.upload("claims", data, key="doc.bin")
        out = uplink.download("claims", "doc.bin")
        assert crypto.sha256(out) == crypto.sha256(data)

    def test_zero_byte_file(self, stack):
        _, _, _, uplink = stack
        uplink.make_bucket("claims")
        obj = uplink.upload("claims", b"", key="empty")
        assert len(obj.segment_pointers) == 1
        assert uplink.download("claims", "empty") == b""

    def test_multi_segment_layout(self, stack, tmp_path):
        _, _, nodes, uplink = stack
        uplink.segment_size = 64 * 1024  # shrink so the test stays quick
        uplink.make_bucket("claims")
        data = os.urandom(int(2.5 * 64 * 1024))  # ceil(2.5) = 3 segments
        obj = uplink.upload("claims", data, key="big.bin")
        assert len(obj.segment_pointers) == 3
        assert sum(len(n.shard_ids()) for n in nodes) == 12
        assert uplink.download("claims", "big.bin") == data

    def test_download_with_nodes_down(self, stack):
        _, _, nodes, uplink = stack
        uplink.make_bucket("claims")
        data = os.urandom(9_000)
        uplink.upload("claims", data, key="doc")
        nodes[0].stop()
        nodes[2].stop()
        assert uplink.download("claims", "doc") == data  # k=2 of 4 reachable
        nodes[1].stop()
        with pytest.raises(NotEnoughShards):
            uplink.download("claims", "doc")

    def test_no_plaintext_window_on_any_node(self, stack):
        _, _, nodes, uplink = stack
        uplink.make_bucket("claims")
        data = os.urandom(8_192)
        uplink.upload("claims", data, key="secret.bin")
        for start in range(0, len(data) - 16, 256):
            assert not scan_node_stores(nodes, data[start : start + 16])


class TestShare:
    def test_share_and_download_via_url(self, stack, tmp_path):
        _, _, _, uplink = stack
        uplink.make_bucket("claims")
        data = os.urandom(2_000)
        uplink.upload("claims", data, key="scan.png")
        cap = uplink.share("claims", "scan.png", not_after=None)
        assert cap.url.startswith("sj://claims/scan.png?token=")
        # A different uplink with no owner key downloads through the URL.
        net = uplink.net
        stranger = Uplink(net, uplink.satellite, state_dir=str(tmp_path / "stranger"))
        assert stranger.download_shared(cap.url) == data

    def test_expired_capability(self, stack, tmp_path):
        _, _, _, uplink = stack
        uplink.make_bucket("claims")
        uplink.upload("claims", b"payload", key="doc")
        cap = uplink.share("claims", "doc", not_after=int(time.time() * 1000) - 1000)
        stranger = Uplink(uplink.net, uplink.satellite, state_dir=str(tmp_path / "s2"))
        with pytest.raises(ExpiredCapability):
            stranger.download_shared(cap.url)

    def test_capability_scope(self, stack, tmp_path):
        from soverclaim.errors import BadSignature
        from soverclaim.storage import parse_share_url, share_url

        _, _, _, uplink = stack
        uplink.make_bucket("claims")
        uplink.upload("claims", b"aaa", key="a.txt")
        uplink.upload("claims", b"bbb", key="b.txt")
        cap = uplink.share("claims", "a.txt")
        # Rewrite the URL to point at another key; the grant does not cover it.
        _, _, url_token = parse_share_url(cap.url)
        forged_url = share_url("claims", "b.txt", url_token)
        stranger = Uplink(uplink.net, uplink.satellite, state_dir=str(tmp_path / "s3"))
        with pytest.raises(BadSignature):
            stranger.download_shared(forged_url)


class TestDelete:
    def test_clean_delete_receipts_and_pointers(self, stack):
        _, satellite, nodes, uplink = stack
        uplink.make_bucket("claims")
        uplink.upload("claims", os.urandom(4_000), key="doc")
        report = uplink.delete("claims", "doc")
        assert len(report.receipts) == 4
        assert all(r.status == "DELETED" for r in report.receipts)
        assert report.pointers_removed == 1
        assert not report.partial
        assert satellite.objects == {}
        with pytest.raises(NoSuchObject):
            uplink.download("claims", "doc")

    def test_receipts_verify_against_node_keys(self, stack):
        _, satellite, nodes, uplink = stack
        uplink.make_bucket("claims")
        uplink.upload("claims", os.urandom(1_000), key="doc")
        report = uplink.delete("claims", "doc")
        keys = {n.node_id: n.keypair.public_key for n in nodes}
        for receipt in report.receipts:
            assert receipt.verify(keys[receipt.node_id])

    def test_forged_receipts_rejected(self, stack):
        _, satellite, nodes, uplink = stack
        uplink.make_bucket("claims")
        uplink.upload("claims", os.urandom(1_000), key="doc")
        # Node 0 starts signing with a key the satellite has never seen.
        nodes[0].keypair = crypto.generate_keypair(crypto.Alg.SIGN)
        with pytest.raises(PartialDeletion) as excinfo:
            uplink.delete("claims", "doc")
        report = excinfo.value.report
        assert len(report.receipts) == 3
        assert "node-0" in report.unreachable

    def test_delete_with_node_down_then_gc(self, stack):
        _, satellite, nodes, uplink = stack
        uplink.make_bucket("claims")
        obj = uplink.upload("claims", os.urandom(4_000), key="doc")
        victim_shards = [s for n, s in obj.segment_pointers[0].locations if n == "node-3"]
        nodes[3].stop()
        with pytest.raises(PartialDeletion) as excinfo:
            uplink.delete("claims", "doc")
        report = excinfo.value.report
        assert len(report.receipts) == 3
        assert report.unreachable == ["node-3"]
        assert report.pointers_removed == 1
        # The node comes back still holding its orphan shard.
        nodes[3].start()
        assert victim_shards and set(victim_shards) <= set(nodes[3].shard_ids())
        deleted = satellite.run_gc()
        assert deleted["node-3"] == len(victim_shards)
        assert not set(victim_shards) & set(nodes[3].shard_ids())

    def test_delete_twice(self, stack):
        _, _, _, uplink = stack
        uplink.make_bucket("claims")
        uplink.upload("claims", b"x" * 100, key="doc")
        uplink.delete("claims", "doc")
        with pytest.raises(NoSuchObject):
            uplink.delete("claims", "doc")

    def test_metering_returns_to_baseline(self, stack):
        _, satellite, nodes, uplink = stack
        uplink.make_bucket("claims")
        baseline = {n.node_id: n.stored_bytes() for n in nodes}
        uplink.upload("claims", os.urandom(10_000), key="doc")
        assert any(n.stored_bytes() > baseline[n.node_id] for n in nodes)
        uplink.delete("claims", "doc")
        satellite.run_gc()
        assert {n.node_id: n.stored_bytes() for n in nodes} == baseline


class TestGc:
    def test_clean_delete_leaves_nothing_for_gc(self, stack):
        _, satellite, _, uplink = stack
        uplink.make_bucket("claims")
        uplink.upload("claims", os.urandom(500), key="doc")
        uplink.delete("claims", "doc")
        deleted = satellite.run_gc()
        assert all(count == 0 for count in deleted.values())

    def test_gc_never_deletes_live_shards(self, stack):
        _, satellite, nodes, uplink = stack
        uplink.make_bucket("claims")
        keys = []
        for i in range(250):  # 250 objects x 4 shards = 1000 live shards
            uplink.upload("claims", os.urandom(64), key=f"doc-{i}")
            keys.append(f"doc-{i}")
        total = sum(len(n.shard_ids()) for n in nodes)
        assert total == 1000
        deleted = satellite.run_gc()
        assert all(count == 0 for count in deleted.values())
        assert sum(len(n.shard_ids()) for n in nodes) == total
        for key in (keys[0], keys[100], keys[-1]):
            assert uplink.download("claims", key) is not None


def test_bloom_no_false_negatives():
    items = [os.urandom(8).hex() for _ in range(5000)]
    bloom = BloomFilter.for_items(items, fp_target=0.01)
    assert all(item in bloom for item in items)


def test_bloom_false_positive_rate_near_target():
    items = [f"live-{i}" for i in range(10_000)]
    bloom = BloomFilter.for_items(items, fp_target=0.01)
    probes = [f"other-{i}" for i in range(10_000)]
    fp = sum(p in bloom for p in probes) / len(probes)
    assert fp < 0.03


def test_bloom_roundtrip_serialization():
    bloom = BloomFilter.for_items(["a", "b", "c"])
    again = BloomFilter.from_dict(bloom.to_dict())
    assert "a" in again and "zz" not in again
