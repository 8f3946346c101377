"""Random small flow sets on random line/star topologies, for fairness checks."""
from __future__ import annotations

import math

import numpy as np

from oracles import pair_loss
from pdtn.simnet import Flow
from pdtn.topology import load_topology


def random_case(seed: int):
    """Up to 5 links and 6 flows. Returns (topology, flows, expected caps, resource sets, capacities)."""
    rng = np.random.default_rng(seed)
    n_sites = int(rng.integers(2, 6))
    sites = [f"S{i}" for i in range(n_sites)]
    hub = rng.random() < 0.5 and n_sites >= 3
    links = []
    if hub:
        names = sites + ["H"]
        for s in sites[: min(n_sites, 5)]:
            links.append((f"{s}-H", s, "H"))
        sites = sites[: min(n_sites, 5)]
    else:
        names = sites
        for a, b in zip(sites, sites[1:]):
            links.append((f"{a}-{b}", a, b))
    speeds = [10e9, 25e9, 40e9, 100e9]
    doc = {
        "sites": [{"id": s, "port_buffer": int(rng.choice([0, 2**20, 2**30]))} for s in sites]
        + ([{"id": "H", "kind": "router"}] if hub else []),
        "presets": [{"name": "p", "effective_fs_throughput": 1e9}],
        "nodes": [
            {
                "id": s.lower(), "site": s, "wan_iface_speed": float(rng.choice(speeds)),
                "fs_iface_speed": 100e9, "cpu_hash_rate": 1e9,
                "tcp_window_limit": int(rng.choice([2**20, 2**24, 2**30])), "fs_tuning": "p",
            }
            for s in sites
        ],
        "links": [
            {
                "id": lid, "endpoints": [a, b], "capacity": float(rng.choice(speeds)),
                "rtt_contribution": float(rng.uniform(0.001, 0.03)),
                "egress_buffer": int(rng.choice([0, 2**30])),
                "loss_rate": float(rng.choice([0.0, 0.0, 1e-6, 1e-4])),
            }
            for lid, a, b in links
        ],
        "routes": [],
    }
    if hub:
        doc["routes"] = [
            {"src": a, "dst": b, "links": [f"{a}-H", f"{b}-H"]}
            for i, a in enumerate(sites) for b in sites[i + 1:]
        ]
    else:
        doc["routes"] = [
            {"src": a, "dst": b, "links": [f"{x}-{y}" for x, y in zip(sites[i:j], sites[i + 1:j + 1])]}
            for i, a in enumerate(sites) for j, b in enumerate(sites) if j > i + 1
        ]
    t = load_topology(doc)
    node = {n.site: n for n in t.nodes}
    site_of = {s["id"]: s for s in doc["sites"]}

    flows, caps, resources = [], [], []
    for k in range(int(rng.integers(1, 7))):
        a, b = rng.choice(sites, size=2, replace=False).tolist()
        window = float(rng.choice([0, 2**22, 2**26]))
        f = Flow(f"f{k}", node[a].id, node[b].id, 1e9, window_limit=window)
        flows.append(f)
        route = t.routes[(a, b)]
        rtt = sum(l.rtt_contribution for l in route.links)
        hops = [(l.capacity, l.egress_buffer, l.loss_rate) for l in route.links]
        src_speed, dst_speed = node[a].wan_iface_speed, node[b].wan_iface_speed
        loss = pair_loss(src_speed, dst_speed, hops, site_of[b]["port_buffer"], rtt)
        w = window or min(node[a].tcp_window_limit, node[b].tcp_window_limit)
        mathis = math.inf if loss <= 0 else 1.22 * (1500 * 8 / rtt) / math.sqrt(loss)
        caps.append(min(w * 8 / rtt, mathis, min(src_speed, dst_speed)))
        res = {f"tx:{node[a].id}", f"rx:{node[b].id}"}
        for l, rev in zip(route.links, route.reversed_flags):
            res.add(f"{l.id}:{'rev' if rev else 'fwd'}")
        resources.append(res)
    capacities = {}
    for n in t.nodes:
        capacities[f"tx:{n.id}"] = n.wan_iface_speed
        capacities[f"rx:{n.id}"] = n.wan_iface_speed
    for l in t.links:
        capacities[f"{l.id}:fwd"] = l.capacity
        capacities[f"{l.id}:rev"] = l.capacity
    return t, flows, caps, resources, capacities
