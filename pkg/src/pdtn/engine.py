"""Multi-DTN bulk transfer orchestration on the simulated network.

A job moves a manifest from one site's DTN cluster to another's. Files are
grouped into batches in manifest order: the first batch is small and, once
it completes without a checksum failure, the rest use the escalated size.
Each batch is striped over up to ``concurrency`` lane transfers. A lane is
a contiguous slice of the batch bound to one (source DTN, destination DTN)
pair, and it runs ``streams_per_batch`` parallel streams that pull files
one at a time. The next batch starts only after every file of the current
batch has transferred and verified, so every batch boundary leaves DTNs
idle while the slowest lane drains.

Per file a stream pays ``per_file_overhead`` plus filesystem metadata
latency, then moves the bytes as a simulator flow. Checksumming at both ends
follows the transfer and overlaps with the stream's next file.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import DatasetManifest, FileEntry, content_stream
from .simnet import Flow, Simulation, TcpModelParams
from .topology import DtnNode, Topology

__all__ = [
    "JOB_SETUP_S",
    "NETWORK_USE",
    "Batch",
    "BatchTiming",
    "TransferFailure",
    "TransferJob",
    "TransferPolicy",
    "TransferReport",
    "assign",
    "checksum_of",
    "execute",
    "goal_rate",
    "plan_batches",
]

# (concurrency, streams_per_batch) for the standard network-use levels.
NETWORK_USE: dict[str, tuple[int, int]] = {
    "minimal": (1, 1),
    "default": (4, 2),
    "aggressive": (8, 4),
}
JOB_SETUP_S = 0.001
_CORRUPT_KEY = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class TransferPolicy:
    initial_batch_files: int = 1000
    escalated_batch_files: int = 10000
    concurrency: int = 8
    streams_per_batch: int = 4
    per_file_overhead: float = 0.025
    checksum_enabled: bool = True
    max_retries_per_file: int = 3
    network_use: str = "aggressive"

    def __post_init__(self) -> None:
        if self.initial_batch_files < 1:
            raise ValueError("initial_batch_files must be >= 1")
        if self.initial_batch_files > self.escalated_batch_files:
            raise ValueError("initial_batch_files must not exceed escalated_batch_files")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if self.streams_per_batch < 1:
            raise ValueError("streams_per_batch must be >= 1")
        if self.per_file_overhead < 0:
            raise ValueError("per_file_overhead must be >= 0")
        if self.max_retries_per_file < 0:
            raise ValueError("max_retries_per_file must be >= 0")
        if self.network_use not in (*NETWORK_USE, "custom"):
            raise ValueError(f"unknown network_use {self.network_use!r}")

    @classmethod
    def for_network_use(cls, label: str, **overrides) -> TransferPolicy:
        """Policy for a network-use level; overriding concurrency or streams makes it ``custom``."""
        if label == "custom":
            return cls(network_use="custom", **overrides)
        try:
            concurrency, streams = NETWORK_USE[label]
        except KeyError:
            raise ValueError(f"unknown network_use {label!r}") from None
        fields = {"concurrency": concurrency, "streams_per_batch": streams, "network_use": label}
        if any(k in overrides and overrides[k] != fields[k] for k in ("concurrency", "streams_per_batch")):
            fields["network_use"] = "custom"
        fields.update({k: v for k, v in overrides.items() if k != "network_use"})
        return cls(**fields)

    @classmethod
    def fixed(cls, batch_files: int = 1000, **overrides) -> TransferPolicy:
        """Same batch size throughout, no escalation."""
        return cls(initial_batch_files=batch_files, escalated_batch_files=batch_files, **overrides)

    @property
    def escalates(self) -> bool:
        return self.escalated_batch_files > self.initial_batch_files


@dataclass(frozen=True)
class TransferJob:
    id: str
    manifest: DatasetManifest
    src_site: str
    dst_site: str
    policy: TransferPolicy = field(default_factory=TransferPolicy)
    seed: int = 0
    corruption_probability: float = 0.0
    allow_empty: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.corruption_probability < 1.0:
            raise ValueError("corruption_probability must be in [0, 1)")
        if len(self.manifest) == 0 and not self.allow_empty:
            raise ValueError(f"job {self.id}: empty manifest (pass allow_empty=True to permit)")


@dataclass
class Batch:
    id: str
    start: int
    entries: tuple[FileEntry, ...]
    src_node: str | None = None
    dst_node: str | None = None
    state: str = "pending"

    @property
    def stop(self) -> int:
        return self.start + len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_bytes(self) -> int:
        return sum(e.size_bytes for e in self.entries)


class TransferFailure(RuntimeError):
    def __init__(self, job_id: str, path: str, attempts: int):
        super().__init__(f"job {job_id}: {path} failed verification after {attempts} attempts")
        self.job_id = job_id
        self.path = path
        self.attempts = attempts


def _plan(entries, start: int, first: int, rest: int, first_index: int = 0) -> list[Batch]:
    batches = []
    pos, size = start, first
    n = len(entries)
    while pos < n:
        stop = min(pos + size, n)
        batches.append(Batch(f"b{first_index + len(batches):03d}", pos, tuple(entries[pos:stop])))
        pos, size = stop, rest
    return batches


def plan_batches(manifest: DatasetManifest, policy: TransferPolicy) -> list[Batch]:
    """Contiguous batches: ``initial_batch_files`` first, then ``escalated_batch_files``.

    >>> [len(b) for b in plan_batches(reference, TransferPolicy())]  # doctest: +SKIP
    [1000, 10000, 8260]
    """
    return _plan(manifest.entries, 0, policy.initial_batch_files, policy.escalated_batch_files)


def _node_id(node) -> str:
    return node.id if isinstance(node, DtnNode) else str(node)


def assign(batches, src_nodes, dst_nodes, seed: int = 0) -> dict[str, tuple[str, str]]:
    """Bind each unit to a (source, destination) DTN pair by rotation.

    Nodes are ordered by id. Unit ``i`` takes rotation slot ``k = (i + seed)
    mod (S*D)`` with source ``k mod S`` and destination ``(k mod S + k div S)
    mod D``. The slots enumerate the cross product exactly once per cycle, and
    consecutive units move to a different source and destination whenever the
    clusters allow.
    """
    src = sorted(_node_id(n) for n in src_nodes)
    dst = sorted(_node_id(n) for n in dst_nodes)
    if not src or not dst:
        raise ValueError("both clusters need at least one DTN")
    s, d = len(src), len(dst)
    out = {}
    for i, unit in enumerate(batches):
        k = (i + seed) % (s * d)
        out[unit.id if hasattr(unit, "id") else str(unit)] = (src[k % s], dst[(k % s + k // s) % d])
    return out


def checksum_of(content_seed: int, size_bytes: int) -> bytes:
    """SHA-256 of the deterministic content stream of a file."""
    h = hashlib.sha256()
    for chunk in content_stream(content_seed, size_bytes):
        h.update(chunk)
    return h.digest()


def goal_rate(n_bytes: int, duration_s: float) -> float:
    """Sustained bits/s needed to move ``n_bytes`` in ``duration_s``."""
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    return n_bytes * 8.0 / duration_s


@dataclass
class BatchTiming:
    id: str
    files: int
    bytes: int
    start_s: float
    end_s: float = math.nan
    state: str = "active"
    checksum_failures: int = 0
    lanes: int = 0


@dataclass
class TransferReport:
    job_id: str
    bytes_transferred: int
    elapsed_s: float
    retransmitted_bytes: int
    checksum_failures: int
    batches: list[BatchTiming]
    retransmitted_files: int = 0
    delivered: list[tuple[str, int, int]] = field(default_factory=list, repr=False)
    log: list = field(default_factory=list, repr=False)

    @property
    def average_rate(self) -> float:
        """Goodput in bits/s; retransmitted bytes do not count."""
        return self.bytes_transferred * 8.0 / self.elapsed_s

    @property
    def avg_gbps(self) -> float:
        return self.average_rate / 1e9

    def delivered_digests(self) -> list[tuple[str, bytes]]:
        return [(path, checksum_of(seed, size)) for path, seed, size in self.delivered]

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "bytes": self.bytes_transferred,
            "elapsed_s": round(self.elapsed_s, 9),
            "avg_gbps": round(self.avg_gbps, 9),
            "retransmitted_bytes": self.retransmitted_bytes,
            "checksum_failures": self.checksum_failures,
            "batches": [
                {k: (round(v, 9) if isinstance(v, float) else v) for k, v in asdict(b).items()}
                for b in self.batches
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def summary_line(self) -> str:
        return f"{self.job_id} {self.bytes_transferred} B in {self.elapsed_s:.3f} s = {self.avg_gbps:.2f} Gbps"


def _split_lanes(entries: tuple[FileEntry, ...], lanes: int) -> list[tuple[int, int]]:
    """Contiguous (start, stop) slices balancing bytes, every slice non-empty."""
    n = len(entries)
    lanes = min(lanes, n)
    if lanes <= 1:
        return [(0, n)]
    weights = np.fromiter((e.size_bytes + 1 for e in entries), dtype=np.float64, count=n)
    cum = np.cumsum(weights)
    cuts = np.searchsorted(cum, cum[-1] * np.arange(1, lanes) / lanes, side="left") + 1
    bounds = [0]
    for j, c in enumerate(cuts.tolist()):
        lo = bounds[-1] + 1
        hi = n - (lanes - 1 - j)
        bounds.append(min(max(int(c), lo), hi))
    bounds.append(n)
    return list(zip(bounds[:-1], bounds[1:]))


class _Lane:
    __slots__ = ("id", "batch", "src", "dst", "queue", "outstanding", "idle", "file_latency", "verify_rate_src",
                 "verify_rate_dst")

    def __init__(self, lane_id, batch, src: DtnNode, dst: DtnNode, indices, file_latency):
        self.id = lane_id
        self.batch = batch
        self.src = src
        self.dst = dst
        self.queue = deque(indices)
        self.outstanding = len(indices)
        self.idle: list[_Stream] = []
        self.file_latency = file_latency


class _Stream:
    __slots__ = ("lane", "name", "src_iface", "dst_iface")

    def __init__(self, lane, name, src_iface, dst_iface):
        self.lane = lane
        self.name = name
        self.src_iface = src_iface
        self.dst_iface = dst_iface


class _ActiveBatch:
    __slots__ = ("batch", "timing", "lanes_left", "failures")

    def __init__(self, batch, timing, lanes_left):
        self.batch = batch
        self.timing = timing
        self.lanes_left = lanes_left
        self.failures = 0


class _JobRun:
    def __init__(self, job: TransferJob, topology: Topology, sim: Simulation):
        self.job = job
        self.policy = job.policy
        self.topology = topology
        self.sim = sim
        self.entries = job.manifest.entries
        self.src_nodes = topology.nodes_at(job.src_site)
        self.dst_nodes = topology.nodes_at(job.dst_site)
        if not self.src_nodes or not self.dst_nodes:
            raise ValueError(f"job {job.id}: both {job.src_site} and {job.dst_site} need at least one DTN")
        self.inter_site = job.src_site != job.dst_site

        fault_ss, iface_ss = np.random.SeedSequence(job.seed).spawn(2)
        n = len(self.entries)
        attempts = self.policy.max_retries_per_file + 1
        if job.corruption_probability > 0 and n:
            sizes = np.fromiter((e.size_bytes for e in self.entries), dtype=np.int64, count=n)
            draws = np.random.default_rng(fault_ss).random((n, attempts))
            self.faults = (draws < job.corruption_probability) & (sizes[:, None] > 0)
        else:
            self.faults = None
        self.iface_rng = np.random.default_rng(iface_ss)

        self.attempt = [0] * n
        self.corrupt_delivered: dict[int, int] = {}
        self.pending: deque[Batch] = deque(plan_batches(job.manifest, self.policy))
        self.batch_counter = len(self.pending)
        self.lanes_assigned = 0
        self.timings: list[BatchTiming] = []
        self.first_batch_id = self.pending[0].id if self.pending else None
        self.retransmitted_bytes = 0
        self.retransmitted_files: set[int] = set()
        self.checksum_failures = 0
        self.verified = 0
        self.t0 = sim.now
        self.t_end = math.nan
        self.peak = {"lanes": 0, "batches": 0, "flows": 0}
        self._lanes_active = 0
        self._flows_active = 0

    # -- batch level -------------------------------------------------------

    def start(self) -> None:
        self.sim.record("job_start", self.job.id, f"files={len(self.entries)} src={self.job.src_site} dst={self.job.dst_site}")
        self.sim.schedule(self.sim.now + JOB_SETUP_S, self._next_batch)

    def _next_batch(self) -> None:
        if not self.pending:
            self.t_end = self.sim.now
            self.sim.record("job_done", self.job.id, f"bytes={self.job.manifest.total_bytes}")
            return
        batch = self.pending.popleft()
        batch.state = "active"
        timing = BatchTiming(batch.id, len(batch), batch.total_bytes, self.sim.now - self.t0)
        self.timings.append(timing)
        slices = _split_lanes(batch.entries, self.policy.concurrency)
        lane_ids = [f"{batch.id}.{j}" for j in range(len(slices))]
        pairs = assign(lane_ids, self.src_nodes, self.dst_nodes, seed=self.job.seed + self.lanes_assigned)
        self.lanes_assigned += len(slices)
        batch.src_node, batch.dst_node = pairs[lane_ids[0]]
        timing.lanes = len(slices)
        active = _ActiveBatch(batch, timing, len(slices))
        self.peak["batches"] = max(self.peak["batches"], 1)
        self.sim.record("batch_start", batch.id, f"files={len(batch)} lanes={len(slices)}")
        for lane_id, (lo, hi) in zip(lane_ids, slices):
            src = self.topology.node(pairs[lane_id][0])
            dst = self.topology.node(pairs[lane_id][1])
            lane = _Lane(lane_id, active, src, dst, range(batch.start + lo, batch.start + hi), self._file_latency(src, dst))
            self._lanes_active += 1
            self.peak["lanes"] = max(self.peak["lanes"], self._lanes_active)
            self.sim.record("lane_start", lane_id, f"src={src.id} dst={dst.id} files={hi - lo}")
            for k in range(min(self.policy.streams_per_batch, hi - lo)):
                stream = _Stream(lane, f"{lane_id}/s{k}", self._pick_iface(src), self._pick_iface(dst))
                self._pull(stream)

    def _file_latency(self, src: DtnNode, dst: DtnNode) -> float:
        t = self.policy.per_file_overhead
        t += self.topology.preset_for(src).metadata_op_latency + self.topology.preset_for(dst).metadata_op_latency
        if self.inter_site:
            t += self.topology.site(src.site).integration_penalty.per_file_latency
            t += self.topology.site(dst.site).integration_penalty.per_file_latency
        return t

    def _pick_iface(self, node: DtnNode) -> int:
        if node.is_simple:
            return 0
        return int(self.iface_rng.integers(0, len(node.wan_iface_speeds)))

    def _lane_done(self, lane: _Lane) -> None:
        self._lanes_active -= 1
        self.sim.record("lane_done", lane.id)
        active = lane.batch
        active.lanes_left -= 1
        if active.lanes_left:
            return
        batch, timing = active.batch, active.timing
        batch.state = "failed" if active.failures else "done"
        timing.state = batch.state
        timing.end_s = self.sim.now - self.t0
        timing.checksum_failures = active.failures
        self.sim.record("batch_done", batch.id, f"state={batch.state}")
        if batch.id == self.first_batch_id and active.failures and self.policy.escalates:
            # First batch did not transfer cleanly: re-plan the rest at the initial size.
            size = self.policy.initial_batch_files
            self.pending = deque(_plan(self.entries, batch.stop, size, size, first_index=self.batch_counter))
            self.batch_counter += len(self.pending)
            self.sim.record("escalation_revoked", batch.id, f"remaining_batches={len(self.pending)}")
        self._next_batch()

    # -- file level ----------------------------------------------------------

    def _pull(self, stream: _Stream) -> None:
        lane = stream.lane
        if not lane.queue:
            lane.idle.append(stream)
            return
        idx = lane.queue.popleft()
        if lane.file_latency > 0:
            self.sim.schedule(self.sim.now + lane.file_latency, lambda: self._send(stream, idx))
        else:
            self._send(stream, idx)

    def _send(self, stream: _Stream, idx: int) -> None:
        entry = self.entries[idx]
        if entry.size_bytes == 0:
            self._transferred(stream, idx)
            return
        lane = stream.lane
        flow = Flow(
            id=f"{stream.name}/{idx}.{self.attempt[idx]}",
            src_node=lane.src.id,
            dst_node=lane.dst.id,
            remaining_bytes=float(entry.size_bytes),
            src_iface=stream.src_iface,
            dst_iface=stream.dst_iface,
            read_fs=True,
            write_fs=True,
        )
        self._flows_active += 1
        self.peak["flows"] = max(self.peak["flows"], self._flows_active)
        self.sim.start_flow(flow, lambda f: self._on_flow_done(stream, idx))

    def _on_flow_done(self, stream: _Stream, idx: int) -> None:
        self._flows_active -= 1
        self._transferred(stream, idx)

    def _transferred(self, stream: _Stream, idx: int) -> None:
        lane = stream.lane
        size = self.entries[idx].size_bytes
        if self.policy.checksum_enabled and size:
            delay = max(size / lane.src.cpu_hash_rate, size / lane.dst.cpu_hash_rate)
            self.sim.schedule(self.sim.now + delay, lambda: self._verify(lane, idx))
        else:
            self._verify(lane, idx)
        self._pull(stream)

    def _verify(self, lane: _Lane, idx: int) -> None:
        attempt = self.attempt[idx]
        corrupted = self.faults is not None and bool(self.faults[idx, attempt])
        entry = self.entries[idx]
        if corrupted and self.policy.checksum_enabled:
            self.checksum_failures += 1
            lane.batch.failures += 1
            self.retransmitted_bytes += entry.size_bytes
            self.retransmitted_files.add(idx)
            self.sim.record("verify_fail", f"{lane.id}/{idx}.{attempt}", entry.path)
            self.attempt[idx] = attempt + 1
            if self.attempt[idx] > self.policy.max_retries_per_file:
                raise TransferFailure(self.job.id, entry.path, self.attempt[idx])
            lane.queue.appendleft(idx)
            if lane.idle:
                self._pull(lane.idle.pop(0))
            return
        if corrupted:
            self.corrupt_delivered[idx] = attempt
        self.verified += 1
        lane.outstanding -= 1
        if lane.outstanding == 0:
            self._lane_done(lane)

    def report(self) -> TransferReport:
        if self.verified != len(self.entries) or math.isnan(self.t_end):
            raise RuntimeError(f"job {self.job.id} did not complete ({self.verified}/{len(self.entries)} verified)")
        delivered = []
        for idx, e in enumerate(self.entries):
            seed = e.content_seed
            if idx in self.corrupt_delivered:
                seed = (seed ^ _CORRUPT_KEY ^ (self.corrupt_delivered[idx] + 1)) & (2**64 - 1)
            delivered.append((e.path, seed, e.size_bytes))
        return TransferReport(
            job_id=self.job.id,
            bytes_transferred=self.job.manifest.total_bytes,
            elapsed_s=self.t_end - self.t0,
            retransmitted_bytes=self.retransmitted_bytes,
            checksum_failures=self.checksum_failures,
            batches=self.timings,
            retransmitted_files=len(self.retransmitted_files),
            delivered=delivered,
        )


def execute(
    job: TransferJob,
    topology: Topology,
    sim: Simulation | None = None,
    *,
    params: TcpModelParams | None = None,
) -> TransferReport:
    """Run one transfer job to completion on ``sim`` (a fresh simulation if omitted).

    Raises TransferFailure when a file exhausts its retries; SimulationStall
    propagates from the simulator.
    """
    for sid in (job.src_site, job.dst_site):
        topology.site(sid)
    sim = sim or Simulation(topology, params)
    run = _JobRun(job, topology, sim)
    log_start = len(sim.log)
    run.start()
    sim.run()
    report = run.report()
    report.log = sim.log[log_start:]
    report.peak_lanes = run.peak["lanes"]
    report.peak_flows = run.peak["flows"]
    return report
