from .bloom import BloomFilter
from .erasure import ErasureParams, decode, encode
from .gf256 import BACKEND as GF_BACKEND
from .node import DeletionReceipt, StorageNode
from .satellite import GcConfig, Satellite, SegmentPointer
from .uplink import DeletionReport, ShareCapability, StoredObject, Uplink
from .urls import object_url, parse_object_url, parse_share_url, share_url

__all__ = [
    "BloomFilter",
    "DeletionReceipt",
    "DeletionReport",
    "ErasureParams",
    "GF_BACKEND",
    "GcConfig",
    "Satellite",
    "SegmentPointer",
    "ShareCapability",
    "StorageNode",
    "StoredObject",
    "Uplink",
    "decode",
    "encode",
    "object_url",
    "parse_object_url",
    "parse_share_url",
    "share_url",
]
