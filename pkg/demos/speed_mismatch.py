"""A 100G sender into a 10G receiver port: loss and throughput as the port buffer grows."""
import math

from pdtn.simnet import Flow, Network, allocate, mismatch_loss_rate, required_buffer
from pdtn.topology import load_topology

RTT = 0.02


def topology(port_buffer):
    node = {"fs_iface_speed": 1e11, "cpu_hash_rate": 1e10, "tcp_window_limit": 2**30, "fs_tuning": "p"}
    return load_topology({
        "sites": [{"id": "A"}, {"id": "B", "port_buffer": port_buffer}],
        "presets": [{"name": "p", "effective_fs_throughput": 1e10}],
        "nodes": [{"id": "a", "site": "A", "wan_iface_speed": 100e9, **node},
                  {"id": "b", "site": "B", "wan_iface_speed": 10e9, **node}],
        "links": [{"id": "ab", "endpoints": ["A", "B"], "capacity": 100e9, "rtt_contribution": RTT,
                   "egress_buffer": 2**30}],
        "routes": [],
    })


bdp = required_buffer(RTT, 10e9)
print(f"one BDP at 10 Gb/s and {RTT * 1e3:.0f} ms: {bdp / 2**20:.1f} MiB")
for fraction in (0, 0.25, 0.5, 0.99, 1.0, 2.0):
    buffer = math.ceil(bdp * fraction)
    t = topology(buffer)
    rate = allocate([Flow("x", "a", "b", 1e9)], t, network=Network(t)).rates["x"]
    loss = mismatch_loss_rate(100e9, 10e9, buffer, RTT)
    print(f"buffer {fraction:>4.2f} BDP  loss {loss:4.2f}  single stream {rate / 1e9:8.4f} Gb/s")
