from .harness import SCENARIOS, BenchConfig, BenchHarness, run_bench
from .report import render_svg, render_table, write_json
from .resources import ResourceSampler

__all__ = [
    "SCENARIOS",
    "BenchConfig",
    "BenchHarness",
    "ResourceSampler",
    "render_svg",
    "render_table",
    "run_bench",
    "write_json",
]
