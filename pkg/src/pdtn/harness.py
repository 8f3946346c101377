"""Mesh testing, component tests, bottleneck triangulation and matrix rendering.

A mesh runs one transfer job per ordered site pair, one after another on a
fresh simulation each, and collects goodput into a RateMatrix. Component
tests measure each stage alone: the filesystem from node parameters, the
WAN and the DTN cluster itself from memory-to-memory flows. Triangulation
compares the two views to point at the component most likely at fault.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetManifest
from .engine import TransferFailure, TransferJob, TransferPolicy, assign, execute
from .simnet import Flow, Network, Simulation, SimulationStall, TcpModelParams
from .topology import DtnNode, Topology

__all__ = [
    "DEFAULT_GOAL",
    "SUSPECT_KINDS",
    "BottleneckDiagnosis",
    "ComponentReport",
    "Evidence",
    "RateMatrix",
    "component_tests",
    "diagnoses_to_json",
    "render_matrix",
    "run_mesh",
    "triangulate",
]

DEFAULT_GOAL = 15e9
SUSPECT_KINDS = ("site_fs", "site_dtn", "wan_path", "end_to_end_integration")
_CORNER = "Source \\ Destination"


@dataclass(frozen=True)
class RateMatrix:
    sites: tuple[str, ...]
    rates: dict[tuple[str, str], float]
    failures: tuple[tuple[str, str, str], ...] = ()  # (src, dst, reason)

    @property
    def complete(self) -> bool:
        n = len(self.sites)
        return not self.failures and len(self.rates) == n * (n - 1)

    def rate(self, src: str, dst: str) -> float:
        return self.rates[(src, dst)]

    def pairs(self) -> list[tuple[str, str]]:
        return [(s, d) for s in self.sites for d in self.sites if s != d and (s, d) in self.rates]

    def minimum(self) -> tuple[tuple[str, str], float]:
        pair = min(self.pairs(), key=lambda p: (self.rates[p], p))
        return pair, self.rates[pair]

    def below(self, goal: float) -> list[tuple[str, str]]:
        return [p for p in self.pairs() if self.rates[p] < goal]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["src", "dst", "gbps"])
        for s, d in self.pairs():
            writer.writerow([s, d, f"{self.rates[(s, d)] / 1e9:.6f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, sites: Sequence[str] | None = None) -> RateMatrix:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["src", "dst", "gbps"]:
            raise ValueError(f"matrix CSV must have header src,dst,gbps, got {reader.fieldnames}")
        rates = {}
        seen: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            try:
                value = float(row["gbps"]) * 1e9
            except (TypeError, ValueError):
                raise ValueError(f"line {lineno}: bad rate {row['gbps']!r}") from None
            if row["src"] == row["dst"]:
                raise ValueError(f"line {lineno}: diagonal entry {row['src']}")
            rates[(row["src"], row["dst"])] = value
            for sid in (row["src"], row["dst"]):
                if sid not in seen:
                    seen.append(sid)
        return cls(tuple(sites) if sites is not None else tuple(seen), rates)

    @classmethod
    def from_gbps(cls, sites: Sequence[str], table: Sequence[Sequence[float | None]]) -> RateMatrix:
        """Build from a square table of Gb/s values, rows are sources; the diagonal is ignored."""
        rates = {}
        for i, s in enumerate(sites):
            for j, d in enumerate(sites):
                if i != j:
                    rates[(s, d)] = float(table[i][j]) * 1e9
        return cls(tuple(sites), rates)


@dataclass(frozen=True)
class ComponentReport:
    site: str
    fs_read_rate: float
    fs_write_rate: float
    wan_path_rates: dict[str, float]
    dtn_loopback_rate: float

    def to_dict(self) -> dict:
        return {
            "site": self.site,
            "fs_read_gbps": round(self.fs_read_rate / 1e9, 6),
            "fs_write_gbps": round(self.fs_write_rate / 1e9, 6),
            "dtn_loopback_gbps": round(self.dtn_loopback_rate / 1e9, 6),
            "wan_path_gbps": {peer: round(r / 1e9, 6) for peer, r in sorted(self.wan_path_rates.items())},
        }


@dataclass(frozen=True)
class Evidence:
    measurement: str
    value: float
    threshold: float


@dataclass(frozen=True)
class BottleneckDiagnosis:
    suspect: str
    location: tuple[str, ...]
    evidence: tuple[Evidence, ...]

    def __post_init__(self) -> None:
        if self.suspect not in SUSPECT_KINDS:
            raise ValueError(f"unknown suspect kind {self.suspect!r}")
        if not self.evidence:
            raise ValueError("a diagnosis needs evidence")

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return self.suspect, self.location

    def __str__(self) -> str:
        return f"{self.suspect}({','.join(self.location)})"

    def to_dict(self) -> dict:
        return {
            "suspect": self.suspect,
            "location": list(self.location),
            "evidence": [
                {"measurement": e.measurement, "gbps": round(e.value / 1e9, 6), "threshold_gbps": round(e.threshold / 1e9, 6)}
                for e in self.evidence
            ],
        }


def diagnoses_to_json(diagnoses: Iterable[BottleneckDiagnosis]) -> str:
    return json.dumps([d.to_dict() for d in diagnoses], indent=2) + "\n"


# -- mesh --------------------------------------------------------------------


def run_mesh(
    topology: Topology,
    manifest: DatasetManifest,
    policy: TransferPolicy | None = None,
    seed: int = 0,
    *,
    sites: Sequence[str] | None = None,
    params: TcpModelParams | None = None,
    corruption_probability: float = 0.0,
) -> RateMatrix:
    """Goodput of one transfer per ordered site pair, pairs run one after another.

    Every pair uses the same job seed so pairs differ only by topology. A
    pair whose job fails is left out of ``rates`` and listed in ``failures``.
    """
    policy = policy or TransferPolicy()
    sites = tuple(sites) if sites is not None else tuple(topology.facility_sites)
    if len(sites) < 2:
        raise ValueError("need >= 2 sites for a mesh")
    for sid in sites:
        topology.site(sid)
    network = Network(topology, params)
    rates: dict[tuple[str, str], float] = {}
    failures = []
    for src in sites:
        for dst in sites:
            if src == dst:
                continue
            job = TransferJob(
                f"{src}->{dst}", manifest, src, dst, policy, seed=seed,
                corruption_probability=corruption_probability, allow_empty=True,
            )
            try:
                report = execute(job, topology, Simulation(topology, params, network=network))
            except (TransferFailure, SimulationStall) as exc:
                failures.append((src, dst, str(exc)))
                continue
            rates[(src, dst)] = report.average_rate
    return RateMatrix(sites, rates, tuple(failures))


# -- component tests -----------------------------------------------------------


def _memory_flows(
    src_nodes: Sequence[DtnNode],
    dst_nodes: Sequence[DtnNode],
    policy: TransferPolicy,
    rng: np.random.Generator,
    tag: str,
) -> list[Flow]:
    """Long-lived memory-to-memory streams laid out like one fully striped batch."""
    lanes = [f"{tag}.{j}" for j in range(policy.concurrency)]
    pairs = assign(lanes, src_nodes, dst_nodes, seed=0)
    by_id = {n.id: n for n in (*src_nodes, *dst_nodes)}
    flows = []
    for lane in lanes:
        s, d = by_id[pairs[lane][0]], by_id[pairs[lane][1]]
        for k in range(policy.streams_per_batch):
            si = 0 if s.is_simple else int(rng.integers(0, len(s.wan_iface_speeds)))
            di = 0 if d.is_simple else int(rng.integers(0, len(d.wan_iface_speeds)))
            flows.append(Flow(f"{lane}/s{k}", s.id, d.id, 1.0, src_iface=si, dst_iface=di))
    return flows


def _aggregate(network: Network, flows: list[Flow]) -> float:
    return float(sum(network.shares(flows).values()))


def component_tests(
    topology: Topology,
    site: str,
    seed: int = 0,
    *,
    policy: TransferPolicy | None = None,
    params: TcpModelParams | None = None,
    network: Network | None = None,
) -> ComponentReport:
    """Stage-by-stage rates for one site.

    The filesystem rate sums each node's effective client throughput. WAN
    rates toward every other facility and the loopback rate inside the
    cluster come from memory-to-memory streams striped as one batch of
    ``policy`` would be, so they include TCP window and loss limits but
    never the filesystem or any integration penalty.
    """
    topology.site(site)
    policy = policy or TransferPolicy()
    network = network or Network(topology, params)
    nodes = topology.nodes_at(site)
    if not nodes:
        return ComponentReport(site, 0.0, 0.0, {p: 0.0 for p in topology.facility_sites if p != site}, 0.0)
    fs = float(sum(topology.node_fs_rate(n) for n in nodes))
    peers = [p for p in topology.facility_sites if p != site]
    streams = np.random.SeedSequence([seed, 0x636F6D70]).spawn(len(peers) + 1)
    wan = {}
    for peer, ss in zip(peers, streams):
        peer_nodes = topology.nodes_at(peer)
        if not peer_nodes:
            wan[peer] = 0.0
            continue
        rng = np.random.default_rng(ss)
        wan[peer] = _aggregate(network, _memory_flows(nodes, peer_nodes, policy, rng, f"wan:{site}>{peer}"))
    rng = np.random.default_rng(streams[-1])
    loop = _aggregate(network, _memory_flows(nodes, nodes, policy, rng, f"loop:{site}"))
    return ComponentReport(site, fs, fs, wan, loop)


# -- triangulation ---------------------------------------------------------------


def triangulate(
    mesh: RateMatrix,
    components: Mapping[str, ComponentReport] | Iterable[ComponentReport],
    goal: float = DEFAULT_GOAL,
) -> list[BottleneckDiagnosis]:
    """Locate likely bottlenecks from end-to-end and component measurements.

    1. A site whose filesystem read or write rate is under the goal gets
       ``site_fs``; one whose DTN loopback rate is under it gets ``site_dtn``.
    2. A memory-to-memory WAN rate under the goal gets ``wan_path`` unless an
       endpoint already has ``site_dtn``, which would explain it.
    3. Slow end-to-end pairs that nothing above explains are blamed on
       ``end_to_end_integration`` at the site common to most of them, repeated
       until every such pair is covered (ties go to the lower site id).
    """
    if not isinstance(components, Mapping):
        components = {c.site: c for c in components}
    missing = [s for s in mesh.sites if s not in components]
    if missing:
        raise ValueError(f"components missing for mesh sites: {', '.join(missing)}")

    out: list[BottleneckDiagnosis] = []
    blamed_sites: set[str] = set()
    dtn_sites: set[str] = set()
    for site in sorted(mesh.sites):
        c = components[site]
        fs_ev = [
            Evidence(f"fs_{kind}:{site}", rate, goal)
            for kind, rate in (("read", c.fs_read_rate), ("write", c.fs_write_rate))
            if rate < goal
        ]
        if fs_ev:
            out.append(BottleneckDiagnosis("site_fs", (site,), tuple(fs_ev)))
            blamed_sites.add(site)
        if c.dtn_loopback_rate < goal:
            out.append(BottleneckDiagnosis("site_dtn", (site,), (Evidence(f"dtn_loopback:{site}", c.dtn_loopback_rate, goal),)))
            blamed_sites.add(site)
            dtn_sites.add(site)

    blamed_paths: set[tuple[str, str]] = set()
    for src in sorted(mesh.sites):
        for dst in sorted(mesh.sites):
            if src == dst or src in dtn_sites or dst in dtn_sites:
                continue
            rate = components[src].wan_path_rates.get(dst)
            if rate is None:
                raise ValueError(f"components for {src} lack a WAN rate toward {dst}")
            if rate < goal:
                out.append(BottleneckDiagnosis("wan_path", (src, dst), (Evidence(f"wan:{src}->{dst}", rate, goal),)))
                blamed_paths.add((src, dst))

    unexplained = [
        (s, d) for s, d in mesh.below(goal)
        if s not in blamed_sites and d not in blamed_sites and (s, d) not in blamed_paths
    ]
    failed = sorted({(f[0], f[1]) for f in mesh.failures} - blamed_paths)
    unexplained += [p for p in failed if p[0] not in blamed_sites and p[1] not in blamed_sites]
    remaining = set(unexplained)
    while remaining:
        cover: dict[str, int] = {}
        for s, d in remaining:
            cover[s] = cover.get(s, 0) + 1
            cover[d] = cover.get(d, 0) + 1
        site = min(cover, key=lambda x: (-cover[x], x))
        hit = sorted(p for p in remaining if site in p)
        evidence = tuple(
            Evidence(f"end_to_end:{s}->{d}", mesh.rates.get((s, d), 0.0), goal) for s, d in hit
        )
        out.append(BottleneckDiagnosis("end_to_end_integration", (site,), evidence))
        remaining -= set(hit)
    return out


# -- rendering -------------------------------------------------------------------


def _cell(rate: float | None, goal: float) -> str:
    if rate is None or math.isnan(rate):
        return "n/a"
    text = f"{rate / 1e9:.1f}"
    return text + "*" if rate < goal else text


def render_matrix(matrix: RateMatrix, goal: float = DEFAULT_GOAL) -> str:
    """Fixed-width table in Gb/s, sources as rows; cells under ``goal`` end in ``*``."""
    sites = list(matrix.sites)
    rows = [[_CORNER, *sites]]
    for s in sites:
        rows.append([s] + ["" if s == d else _cell(matrix.rates.get((s, d)), goal) for d in sites])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r in rows:
        head = r[0].ljust(widths[0])
        cells = [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join([head, *cells]).rstrip())
    return "\n".join(lines) + "\n"
