"""Run the facility mesh at project start, then localize what holds each pair back."""
from pathlib import Path

from pdtn.dataset import reference_manifest
from pdtn.harness import component_tests, render_matrix, run_mesh, triangulate
from pdtn.simnet import Network
from pdtn.topology import load_topology_file

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "pdtn" / "fixtures"
GOAL = 15e9

manifest = reference_manifest(seed=42)
for name in ("start-state", "integration-trap", "end-state"):
    topology = load_topology_file(FIXTURES / f"{name}.json")
    mesh = run_mesh(topology, manifest, seed=42)
    network = Network(topology)
    components = {s: component_tests(topology, s, seed=42, network=network) for s in topology.facility_sites}
    print(f"== {name}")
    print(render_matrix(mesh, GOAL), end="")
    diagnoses = triangulate(mesh, components, GOAL)
    for d in diagnoses:
        print(f"  suspect {d}")
    if not diagnoses:
        print("  every pair meets the goal")
    print()
