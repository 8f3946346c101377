"""Seeded single-bottleneck scenarios with known ground truth.

Each scenario is a healthy full-mesh facility topology where every stage
runs at twice the goal or more, plus exactly one injected fault that drags
that stage to half the goal or less. The expected diagnosis follows from
what was injected, never from running the harness.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pdtn.dataset import generate_manifest
from pdtn.topology import load_topology

GOAL = 15e9
KINDS = ("site_fs", "site_dtn", "wan_path", "end_to_end_integration")
GIB = 2**30


@dataclass(frozen=True)
class Scenario:
    seed: int
    kind: str
    location: tuple[str, ...]
    doc: dict
    expected: frozenset

    @property
    def topology(self):
        return load_topology(self.doc)


def small_manifest(seed: int = 7):
    """48 files of 100 MB to 1 GB plus a few small ones, about 24 GB in all."""
    return generate_manifest({"1K-10K": 4, "1M-10M": 4, "100M-1G": 40}, 24 * 10**9, seed, directory_count=5)


def make_scenario(seed: int) -> Scenario:
    rng = np.random.default_rng([seed, 0x747269])
    kind = KINDS[seed % len(KINDS)]
    n_sites = int(rng.integers(3, 5))
    sites = [f"S{i}" for i in range(n_sites)]
    counts = {s: int(rng.integers(2, 5)) for s in sites}
    # Healthy per-site filesystem aggregate between 4x and 6x the goal.
    fs_site = {s: float(rng.uniform(4, 6)) * GOAL for s in sites}
    nic = {s: 100e9 for s in sites}
    penalty = {}
    link_loss = {}
    link_capacity = {}

    victim = sites[int(rng.integers(0, n_sites))]
    margin = float(rng.uniform(2.5, 4.0))  # injected stage lands at goal / margin
    if kind == "site_fs":
        fs_site[victim] = GOAL / margin
        location = (victim,)
        expected = {("site_fs", (victim,))}
    elif kind == "site_dtn":
        nic[victim] = GOAL / margin / counts[victim]
        location = (victim,)
        expected = {("site_dtn", (victim,))}
    elif kind == "end_to_end_integration":
        penalty[victim] = GOAL / margin / counts[victim]
        location = (victim,)
        expected = {("end_to_end_integration", (victim,))}
    else:
        a, b = sorted(rng.choice(sites, size=2, replace=False).tolist())
        if rng.random() < 0.5:
            link_loss[(a, b)] = float(10 ** rng.uniform(-3, -2))
        else:
            link_capacity[(a, b)] = GOAL / margin
        location = (a, b)
        expected = {("wan_path", (a, b)), ("wan_path", (b, a))}

    rtt = {}
    for i, a in enumerate(sites):
        for b in sites[i + 1:]:
            rtt[(a, b)] = float(rng.uniform(0.005, 0.03))

    doc = {
        "sites": [
            {"id": s, "port_buffer": 4 * GIB,
             **({"integration_penalty": {"rate_cap": penalty[s]}} if s in penalty else {})}
            for s in sites
        ],
        "presets": [
            {"name": f"fs-{s}", "effective_fs_throughput": fs_site[s] / 8 / counts[s], "metadata_op_latency": 0.001}
            for s in sites
        ],
        "nodes": [
            {
                "id": s.lower(), "site": s, "count": counts[s],
                "wan_iface_speed": nic[s], "fs_iface_speed": 200e9,
                "cpu_hash_rate": 4e9, "tcp_window_limit": 512 * 2**20, "fs_tuning": f"fs-{s}",
            }
            for s in sites
        ],
        "links": [
            {
                "id": f"{a}-{b}", "endpoints": [a, b],
                "capacity": link_capacity.get((a, b), 400e9),
                "rtt_contribution": rtt[(a, b)],
                "egress_buffer": 4 * GIB,
                "loss_rate": link_loss.get((a, b), 0.0),
            }
            for (a, b) in rtt
        ],
        "routes": [],
    }
    return Scenario(seed, kind, location, doc, frozenset(expected))
