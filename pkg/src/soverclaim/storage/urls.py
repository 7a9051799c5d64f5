"""sj:// object URLs and capability-bearing share URLs."""

from __future__ import annotations

import re

from ..encoding import b64u, b64u_decode, canonical_json, from_json
from ..errors import BadName

BUCKET_RE = re.compile(r"^[a-z0-9-]{3,63}$")


def check_bucket_name(name: str) -> None:
    if not BUCKET_RE.match(name):
        raise BadName(f"bucket name {name!r} must match [a-z0-9-]{{3,63}}")


def object_url(bucket: str, key: str = "") -> str:
    return f"sj://{bucket}/{key}" if key else f"sj://{bucket}"


def parse_object_url(url: str) -> tuple[str, str]:
    """Split sj://bucket[/key] into (bucket, key); key may be empty."""
    if not url.startswith("sj://"):
        raise BadName(f"not an sj:// URL: {url!r}")
    rest = url[len("sj://"):]
    rest = rest.split("?", 1)[0]
    bucket, _, key = rest.partition("/")
    check_bucket_name(bucket)
    return bucket, key


def share_url(bucket: str, key: str, token: dict) -> str:
    return f"sj://{bucket}/{key}?token={b64u(canonical_json(token))}"


def parse_share_url(url: str) -> tuple[str, str, dict]:
    bucket, key = parse_object_url(url)
    _, sep, query = url.partition("?")
    if not sep or not query.startswith("token="):
        raise BadName(f"share URL carries no token: {url!r}")
    token = from_json(b64u_decode(query[len("token="):]))
    return bucket, key, token
