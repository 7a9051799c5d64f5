"""Operator command line: uplink-style storage commands, service
runners, the one-command demo, and the bench harness."""

from __future__ import annotations

import json
import os
import signal
import sys
import tempfile
import time
from datetime import datetime

import click

from . import crypto
from .config import ConfigError, load_agent_config
from .encoding import b64, b64_decode
from .errors import PartialDeletion, SoverClaimError
from .httpd import HttpNetwork
from .storage import ErasureParams, Uplink
from .storage.urls import parse_object_url

DEFAULT_STATE_DIR = os.path.expanduser("~/.soverclaim/uplink")


def _fail(exc: Exception) -> None:
    click.echo(f"{type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """SoverClaim: self-sovereign claims platform."""


# ---------------------------------------------------------------------------
# uplink
# ---------------------------------------------------------------------------

@main.group()
@click.option("--satellite", envvar="SOVERCLAIM_SATELLITE", default="http://127.0.0.1:7710",
              show_default=True, help="satellite endpoint")
@click.option("--state-dir", envvar="SOVERCLAIM_STATE", default=DEFAULT_STATE_DIR, show_default=True)
@click.option("--erasure", default="2,4", show_default=True, help="k,n erasure parameters")
@click.pass_context
def uplink(ctx, satellite: str, state_dir: str, erasure: str) -> None:
    """Storage client: mb, cp, ls, rm, share."""
    os.makedirs(state_dir, exist_ok=True)
    key_path = os.path.join(state_dir, "owner.key")
    if os.path.exists(key_path):
        with open(key_path) as fh:
            owner = crypto.keypair_from_secret(crypto.Alg.SIGN, b64_decode(fh.read().strip()))
    else:
        owner = crypto.generate_keypair(crypto.Alg.SIGN)
        with open(key_path, "w") as fh:
            fh.write(b64(owner.secret_key))
        os.chmod(key_path, 0o600)
    k, n = (int(x) for x in erasure.split(","))
    ctx.obj = Uplink(
        HttpNetwork(),
        satellite,
        state_dir=state_dir,
        owner=owner,
        erasure_params=ErasureParams(k, n),
    )


@uplink.command()
@click.argument("url")
@click.pass_obj
def mb(up: Uplink, url: str) -> None:
    """Create a bucket: mb sj://<bucket>."""
    try:
        bucket, _ = parse_object_url(url)
        up.make_bucket(bucket)
    except SoverClaimError as exc:
        _fail(exc)
    click.echo(f"created bucket sj://{bucket}")


@uplink.command()
@click.argument("src")
@click.argument("dst")
@click.pass_obj
def cp(up: Uplink, src: str, dst: str) -> None:
    """Copy a file in (cp <path> sj://bucket[/key]) or out
    (cp sj://bucket/key <path>)."""
    try:
        if src.startswith("sj://"):
            bucket, key = parse_object_url(src)
            data = up.download(bucket, key)
            with open(dst, "wb") as fh:
                fh.write(data)
            click.echo(f"downloaded sj://{bucket}/{key} -> {dst} ({len(data)} bytes)")
        else:
            bucket, key = parse_object_url(dst)
            obj = up.upload(bucket, src, key=key or None)
            click.echo(f"uploaded {src} -> sj://{bucket}/{obj.key} "
                       f"({obj.size} bytes, {len(obj.segment_pointers)} segment(s))")
    except (SoverClaimError, OSError) as exc:
        _fail(exc)


@uplink.command()
@click.argument("url")
@click.pass_obj
def ls(up: Uplink, url: str) -> None:
    """List objects: ls sj://<bucket>."""
    try:
        bucket, _ = parse_object_url(url)
        for key in up.list_objects(bucket):
            click.echo(key)
    except SoverClaimError as exc:
        _fail(exc)


@uplink.command()
@click.argument("url")
@click.pass_obj
def rm(up: Uplink, url: str) -> None:
    """Delete an object with signed receipts: rm sj://<bucket>/<key>."""
    try:
        bucket, key = parse_object_url(url)
        report = up.delete(bucket, key)
    except PartialDeletion as exc:
        click.echo(
            f"PartialDeletion: {len(exc.report.receipts)} receipt(s), "
            f"unreachable nodes {exc.report.unreachable}; GC will finish",
            err=True,
        )
        sys.exit(1)
    except SoverClaimError as exc:
        _fail(exc)
    click.echo(f"deleted sj://{bucket}/{key}: {len(report.receipts)} signed receipt(s), "
               f"{report.pointers_removed} pointer(s) removed")


@uplink.command()
@click.argument("url")
@click.option("--url", "as_url", is_flag=True, help="render the capability as a share URL")
@click.option("--not-after", default="none", show_default=True,
              help="expiry: none, unix ms, or ISO date")
@click.pass_obj
def share(up: Uplink, url: str, as_url: bool, not_after: str) -> None:
    """Mint a read capability: share --url --not-after=none sj://b/k."""
    try:
        bucket, key = parse_object_url(url)
        expiry = _parse_not_after(not_after)
        capability = up.share(bucket, key, expiry)
    except (SoverClaimError, ValueError) as exc:
        _fail(exc)
    if as_url:
        click.echo(capability.url)
    else:
        click.echo(json.dumps(capability.token, indent=2))


def _parse_not_after(text: str) -> int | None:
    if text.lower() == "none":
        return None
    if text.isdigit():
        return int(text)
    return int(datetime.fromisoformat(text).timestamp() * 1000)


# ---------------------------------------------------------------------------
# service runners
# ---------------------------------------------------------------------------

@main.group()
def ledger() -> None:
    """Validator pool control."""


@ledger.command("run")
@click.option("--validators", default=4, show_default=True)
@click.option("--faults", "-f", default=1, show_default=True)
@click.option("--base-port", default=9700, show_default=True)
@click.option("--genesis-out", default="", help="write genesis + endpoints JSON here")
def ledger_run(validators: int, faults: int, base_port: int, genesis_out: str) -> None:
    """Run validator nodes over HTTP (n >= 3f+1)."""
    from .ledger import start_network

    net = HttpNetwork()
    addresses = [f"http://127.0.0.1:{base_port + i}" for i in range(validators)]
    try:
        network = start_network(validators, faults, net=net, addresses=addresses)
    except SoverClaimError as exc:
        _fail(exc)
    if genesis_out:
        with open(genesis_out, "w") as fh:
            json.dump(
                {"endpoints": addresses, "quorum": network.quorum,
                 "genesis": network.genesis_block.to_dict()},
                fh, indent=2,
            )
    click.echo(f"ledger up: {validators} validators, quorum {network.quorum}")
    for address in addresses:
        click.echo(f"  {address}")
    _hold(network.stop)


@main.group("satellite")
def satellite_group() -> None:
    """Storage metadata satellite."""


@satellite_group.command("run")
@click.option("--port", default=7710, show_default=True)
@click.option("--gc-grace", default=24 * 3600.0, show_default=True, help="GC grace period (s)")
def satellite_run(port: int, gc_grace: float) -> None:
    """Run the storage metadata satellite over HTTP."""
    from .storage import GcConfig, Satellite

    net = HttpNetwork()
    service = Satellite(net, address=f"http://127.0.0.1:{port}", gc_config=GcConfig(grace_period=gc_grace))
    service.start()
    click.echo(f"satellite up at http://127.0.0.1:{port}")
    _hold(service.stop)


@main.group("node")
def node_group() -> None:
    """Storage nodes."""


@node_group.command("run")
@click.option("--id", "node_id", required=True, type=int)
@click.option("--port", default=0, help="defaults to 7711 + id")
@click.option("--satellite", default="http://127.0.0.1:7710", show_default=True)
@click.option("--store-dir", default="", help="defaults to ./node-<id>-store")
def node_run(node_id: int, port: int, satellite: str, store_dir: str) -> None:
    """Run one storage node over HTTP."""
    from .storage import StorageNode

    port = port or 7711 + node_id
    store_dir = store_dir or f"./node-{node_id}-store"
    net = HttpNetwork()
    node = StorageNode(
        node_id=f"node-{node_id}",
        store_dir=store_dir,
        net=net,
        address=f"http://127.0.0.1:{port}",
        satellite_address=satellite,
    )
    try:
        node.start()
    except SoverClaimError as exc:
        _fail(exc)
    click.echo(f"storage node node-{node_id} up at http://127.0.0.1:{port}, store {store_dir}")
    _hold(node.stop)


@main.command("agent")
@click.argument("action", type=click.Choice(["run"]))
@click.option("--role", default="", help="issuer|holder|verifier (config wins if set there)")
@click.option("--config", "config_path", required=True, type=click.Path())
def agent_cmd(action: str, role: str, config_path: str) -> None:
    """Run an agent process from a TOML config."""
    from .agents import AgentConfig, HolderAgent, IssuerAgent, VerifierAgent
    from .errors import DuplicateSchemaId
    from .ledger import LedgerHandle

    try:
        cfg = load_agent_config(config_path)
    except ConfigError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    if role and role != cfg.role:
        click.echo(f"--role {role} conflicts with config role {cfg.role}", err=True)
        sys.exit(1)

    net = HttpNetwork()
    handle = LedgerHandle(net, cfg.ledger_endpoints, cfg.quorum)
    agent_config = AgentConfig(
        protocol_timeout=cfg.protocol_timeout, auto_approve=cfg.auto_approve
    )
    common = dict(
        net=net, data_dir=cfg.data_dir, ledger=handle,
        passphrase=cfg.passphrase, config=agent_config, address=cfg.listen,
    )
    try:
        if cfg.role == "issuer":
            agent = IssuerAgent("issuer", **common)
            if cfg.satellite:
                agent.attach_storage(cfg.satellite)
        elif cfg.role == "holder":
            agent = HolderAgent("holder", satellite_address=cfg.satellite or None, **common)
            if agent.uplink is not None:
                agent.uplink.erasure_params = ErasureParams(cfg.erasure_k, cfg.erasure_n)
                agent.uplink.segment_size = cfg.segment_size
        else:
            agent = VerifierAgent("verifier", **common)
        if cfg.role == "holder" and cfg.serve_ui:
            _attach_static_ui(agent, cfg.serve_ui)
        agent.start()
        if cfg.role == "issuer":
            agent.register_public_identity()
            try:
                agent.setup_credential_type("insurance", "1.0", ["name", "policy_no", "valid_until"])
            except DuplicateSchemaId:
                pass  # resuming with an already-anchored schema
    except SoverClaimError as exc:
        _fail(exc)
    click.echo(f"{cfg.role} agent up at {cfg.listen}")
    _hold(agent.stop)


def _attach_static_ui(agent, ui_dir: str) -> None:
    from .transport import Request, Response

    types = {".html": "text/html", ".js": "text/javascript", ".css": "text/css",
             ".map": "application/json", ".svg": "image/svg+xml"}

    def serve(request: Request, filename: str = "index.html") -> Response:
        path = os.path.normpath(os.path.join(ui_dir, filename))
        if not path.startswith(os.path.normpath(ui_dir)) or not os.path.isfile(path):
            return Response.error(404, "NotFound", filename)
        with open(path, "rb") as fh:
            body = fh.read()
        return Response(200, body, types.get(os.path.splitext(path)[1], "application/octet-stream"))

    agent.messenger.router.add("GET", "/ui", serve)
    agent.messenger.router.add("GET", "/ui/{filename}", serve)


def _hold(cleanup) -> None:
    stop = {"flag": False}

    def handler(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    try:
        while not stop["flag"]:
            time.sleep(0.2)
    finally:
        cleanup()


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------

@main.group()
def demo() -> None:
    """One-command full platform."""


def _boot_platform(base_port: int, data_dir: str, auto_approve: bool = True):
    from .deploy import Platform, PlatformConfig, http_addresses

    platform = Platform(
        data_dir,
        config=PlatformConfig(
            http_base_port=base_port,
            auto_approve=auto_approve,
            keystore_kdf={"kdf": "scrypt", "n": 4096, "r": 8, "p": 1},
            gc_grace_period=0.0,
        ),
    )
    addresses = http_addresses(base_port)
    click.echo("platform up:")
    click.echo(f"  validators  {', '.join(addresses['validators'])}")
    click.echo(f"  satellite   {addresses['satellite']}")
    click.echo(f"  nodes       {', '.join(addresses['nodes'])}")
    click.echo(f"  issuer      {addresses['issuer']}")
    click.echo(f"  holder      {addresses['holder']}")
    click.echo(f"  verifier    {addresses['verifier']}")
    return platform


@demo.command("up")
@click.option("--base-port", default=9700, show_default=True)
@click.option("--data-dir", default="", help="defaults to a temp dir")
@click.option("--run-scenario", is_flag=True, help="run the full claim scenario, then keep serving")
@click.option("--manual-approvals", is_flag=True, help="wallet decisions require the UI")
@click.option("--ui-dir", default="", help="serve wallet UI assets from this directory at /ui")
def demo_up(base_port: int, data_dir: str, run_scenario: bool, manual_approvals: bool, ui_dir: str) -> None:
    """Start validators, satellite, nodes, and all three agents."""
    data_dir = data_dir or tempfile.mkdtemp(prefix="soverclaim-demo-")
    platform = _boot_platform(base_port, data_dir, auto_approve=not manual_approvals)
    if ui_dir:
        _attach_static_ui(platform.holder, ui_dir)
        click.echo(f"  wallet UI   http://127.0.0.1:{base_port + 31}/ui")
    if run_scenario:
        from .scenario import run_claim_scenario

        report = run_claim_scenario(
            platform.issuer, platform.holder, platform.verifier,
            platform.satellite, nodes=platform.nodes,
        )
        click.echo(json.dumps(report, indent=2))
        if not report["ok"]:
            platform.stop()
            sys.exit(1)
    _hold(platform.stop)


@demo.command("scenario")
@click.option("--base-port", default=9700, show_default=True)
@click.option("--data-dir", default="", help="defaults to a temp dir")
def demo_scenario(base_port: int, data_dir: str) -> None:
    """Boot the platform, run the end-to-end claim scenario, tear down."""
    from .scenario import run_claim_scenario

    data_dir = data_dir or tempfile.mkdtemp(prefix="soverclaim-demo-")
    platform = _boot_platform(base_port, data_dir)
    try:
        report = run_claim_scenario(
            platform.issuer, platform.holder, platform.verifier,
            platform.satellite, nodes=platform.nodes,
        )
        click.echo(json.dumps(report, indent=2))
        sys.exit(0 if report["ok"] else 1)
    finally:
        platform.stop()


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

@main.group()
def bench() -> None:
    """Latency / load / resource measurement."""


@bench.command("run")
@click.option("--scenario", default="issue", show_default=True,
              help="did|connect|storj|issue|present|audit or 'all'")
@click.option("--users", default=1, show_default=True)
@click.option("--link-latency", default=10.0, show_default=True, help="one-way ms between regions")
@click.option("--jitter", default=3.0, show_default=True)
@click.option("--iterations", default=12, show_default=True)
@click.option("--duration", default=0.0, show_default=True, help="seconds; overrides iterations")
@click.option("--seed", default=11, show_default=True)
@click.option("--out", default="bench-report.json", show_default=True)
@click.option("--svg", default="bench-report.svg", show_default=True)
def bench_run(scenario, users, link_latency, jitter, iterations, duration, seed, out, svg) -> None:
    """Measure per-scenario latency under WAN emulation."""
    from .bench import SCENARIOS, BenchConfig, render_svg, render_table, run_bench, write_json

    names = list(SCENARIOS) if scenario == "all" else [scenario]
    reports = []
    for name in names:
        config = BenchConfig(
            scenario=name, users=users, link_latency_ms=link_latency,
            jitter_ms=jitter, iterations=iterations, duration=duration, seed=seed,
        )
        with tempfile.TemporaryDirectory(prefix="soverclaim-bench-") as td:
            try:
                report = run_bench(td, config)
            except SoverClaimError as exc:
                _fail(exc)
        reports.append(report)
        click.echo(render_table(report))
        click.echo("")
    write_json(reports if len(reports) > 1 else reports[0], out)
    render_svg(reports, svg)
    click.echo(f"wrote {out} and {svg}")


@bench.command("resources")
@click.option("--duration", default=10.0, show_default=True)
@click.option("--interval", default=0.2, show_default=True)
@click.option("--out", default="bench-resources.csv", show_default=True)
def bench_resources(duration: float, interval: float, out: str) -> None:
    """Sample CPU/memory/storage per component during an issuance load."""
    from .bench import BenchConfig, BenchHarness, ResourceSampler

    with tempfile.TemporaryDirectory(prefix="soverclaim-res-") as td:
        harness = BenchHarness(td, BenchConfig(scenario="issue", users=1, duration=duration))
        dirs = {f"node-{i}": node.store_dir for i, node in enumerate(harness.platform.nodes)}
        dirs["issuer"] = harness.platform.issuer.data_dir
        dirs["holder"] = harness.platform.holder.data_dir
        sampler = ResourceSampler(storage_dirs=dirs, interval=interval).start()
        try:
            report = harness.run()
        finally:
            sampler.stop()
            harness.close()
    with open(out, "w") as fh:
        fh.write(sampler.to_csv())
    click.echo(json.dumps(sampler.summary(), indent=2))
    click.echo(f"issuance samples: {report['samples']}; wrote {out}")


if __name__ == "__main__":
    main()
