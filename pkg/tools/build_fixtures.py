"""Regenerate the shipped topology fixtures under src/pdtn/fixtures/.

All numbers here are illustrative. The facilities' real RTTs, DTN counts and
filesystem rates are not known here; the values below were chosen by fitting
the simulated reference-manifest mesh to the target rates in
tests/data/end-rates.csv (slower direction of each pair), so run ``python tools/build_fixtures.py
--check`` after changing the engine to see how far the fixtures drift.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

SITES = ["ALCF", "NCSA", "NERSC", "OLCF"]
OUT = Path(__file__).resolve().parents[1] / "src" / "pdtn" / "fixtures"

# One direct WAN path per facility pair; RTTs fitted against the end-state rates.
RTT = {
    ("ALCF", "NCSA"): 0.01896,
    ("ALCF", "NERSC"): 0.02742,
    ("ALCF", "OLCF"): 0.02031,
    ("NCSA", "NERSC"): 0.0429,
    ("NCSA", "OLCF"): 0.02767,
    ("NERSC", "OLCF"): 0.02904,
}

MIB = 2**20


def _doc(note, *, windows, fs_per_node, metadata, penalty=None, extra_ifaces=None):
    penalty = penalty or {}
    extra_ifaces = extra_ifaces or {}
    sites = []
    for s in SITES:
        site = {"id": s, "port_buffer": 64 * MIB}
        if s in penalty:
            site["integration_penalty"] = penalty[s]
        sites.append(site)
    nodes = []
    for s in SITES:
        node = {
            "id": f"{s.lower()}-dtn",
            "site": s,
            "count": 4,
            "wan_iface_speed": 100e9,
            "fs_iface_speed": 100e9,
            "cpu_hash_rate": 2.5e9,
            "tcp_window_limit": windows[s],
            "fs_tuning": f"{s.lower()}-fs",
        }
        if s in extra_ifaces:
            node["extra_wan_ifaces"] = extra_ifaces[s]
        nodes.append(node)
    return {
        "_note": note,
        "sites": sites,
        "presets": [
            {"name": f"{s.lower()}-fs", "effective_fs_throughput": fs_per_node[s], "metadata_op_latency": metadata[s]}
            for s in SITES
        ],
        "nodes": nodes,
        "links": [
            {
                "id": f"{a.lower()}-{b.lower()}",
                "endpoints": [a, b],
                "capacity": 100e9,
                "rtt_contribution": RTT[(a, b)],
                "egress_buffer": 256 * MIB,
            }
            for i, a in enumerate(SITES)
            for b in SITES[i + 1:]
        ],
        "routes": [],
    }


def end_state():
    return _doc(
        "Illustrative end-of-project facilities: simple DTNs, tuned TCP windows and filesystem clients.",
        windows={s: 4 * MIB for s in SITES},
        fs_per_node={s: 2.5e9 for s in SITES},
        metadata={s: 0.002 for s in SITES},
    )


def start_state():
    return _doc(
        "Illustrative start-of-project facilities: untuned TCP windows, slow metadata, "
        "and a NERSC filesystem that delivers only 6 Gb/s across its DTNs.",
        windows={"ALCF": 900 * 1024, "NCSA": 750 * 1024, "NERSC": 900 * 1024, "OLCF": 900 * 1024},
        fs_per_node={"ALCF": 2.5e9, "NCSA": 2.5e9, "NERSC": 6e9 / 8 / 4, "OLCF": 2.5e9},
        metadata={s: 0.005 for s in SITES},
    )


def integration_trap():
    return _doc(
        "Illustrative trap: OLCF runs complex dual-WAN DTNs whose filesystem and WAN stages each pass "
        "on their own, but chaining them caps every node at 2.5 Gb/s end to end.",
        windows={s: 4 * MIB for s in SITES},
        fs_per_node={s: 2.5e9 for s in SITES},
        metadata={s: 0.002 for s in SITES},
        penalty={"OLCF": {"rate_cap": 2.5e9, "per_file_latency": 0.0}},
        extra_ifaces={"OLCF": [100e9]},
    )


FIXTURES = {"end-state": end_state, "start-state": start_state, "integration-trap": integration_trap}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="run the reference mesh on each fixture and print it")
    args = ap.parse_args()
    OUT.mkdir(parents=True, exist_ok=True)
    for name, build in FIXTURES.items():
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(build(), indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")
    if args.check:
        from pdtn.dataset import reference_manifest
        from pdtn.harness import render_matrix, run_mesh
        from pdtn.topology import load_topology_file

        manifest = reference_manifest()
        for name in FIXTURES:
            print(f"\n{name}")
            print(render_matrix(run_mesh(load_topology_file(OUT / f"{name}.json"), manifest)), end="")


if __name__ == "__main__":
    main()
