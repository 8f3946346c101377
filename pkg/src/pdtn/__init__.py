"""Simulated multi-DTN bulk data transfer: datasets, topologies, a fluid network
simulator, a batching transfer engine and a mesh-testing harness."""
from .dataset import (
    DatasetManifest,
    FileEntry,
    SizeHistogram,
    generate_manifest,
    materialize,
    reference_manifest,
    summarize,
)
from .engine import TransferJob, TransferPolicy, TransferReport, checksum_of, execute, goal_rate, plan_batches
from .harness import RateMatrix, component_tests, render_matrix, run_mesh, triangulate
from .simnet import Flow, Simulation, TcpModelParams, allocate
from .topology import Topology, load_topology, load_topology_file

__all__ = [
    "DatasetManifest",
    "FileEntry",
    "Flow",
    "RateMatrix",
    "Simulation",
    "SizeHistogram",
    "TcpModelParams",
    "Topology",
    "TransferJob",
    "TransferPolicy",
    "TransferReport",
    "allocate",
    "checksum_of",
    "component_tests",
    "execute",
    "generate_manifest",
    "goal_rate",
    "load_topology",
    "load_topology_file",
    "materialize",
    "plan_batches",
    "reference_manifest",
    "render_matrix",
    "run_mesh",
    "summarize",
    "triangulate",
]

__version__ = "0.1.0"
