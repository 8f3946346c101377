"""Deterministic fluid network simulator.

Flows share capacitated resources (DTN interfaces, WAN links, filesystem
clients) under max-min fairness. Each flow is also capped by its TCP window
over the path RTT, by the loss-response rate of the path, and by the slower
of its two endpoint interfaces. Rates are piecewise constant between events;
they are recomputed only when a flow starts or finishes.
"""
from __future__ import annotations

import heapq
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .topology import DtnNode, Link, Topology, route_between

__all__ = [
    "Allocation",
    "Flow",
    "FlowCaps",
    "FlowStart",
    "LogRecord",
    "Network",
    "SimResult",
    "Simulation",
    "SimulationStall",
    "TcpModelParams",
    "allocate",
    "format_event_log",
    "mathis_rate",
    "max_min_shares",
    "mismatch_loss_rate",
    "required_buffer",
    "run",
]

_SAT_TOL = 1e-12


class SimulationStall(RuntimeError):
    def __init__(self, flow_id: str, time: float):
        super().__init__(f"simulation stalled at t={time:.6f}s: flow {flow_id} has zero rate and nothing is pending")
        self.flow_id = flow_id
        self.time = time


@dataclass(frozen=True, slots=True)
class TcpModelParams:
    mss: int = 1500
    mathis_constant: float = 1.22
    base_loss_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.mss <= 0:
            raise ValueError("mss must be > 0")
        if self.mathis_constant <= 0:
            raise ValueError("mathis_constant must be > 0")
        if not 0.0 <= self.base_loss_rate < 1.0:
            raise ValueError("base_loss_rate must be in [0, 1)")


def mathis_rate(mss: float, rtt: float, loss: float, constant: float = 1.22) -> float:
    """Loss-limited TCP rate in bits/s: C * (MSS*8 / RTT) / sqrt(p). Unbounded when lossless."""
    if loss <= 0.0 or rtt <= 0.0:
        return math.inf
    return constant * (mss * 8.0 / rtt) / math.sqrt(loss)


def required_buffer(rtt: float, egress_capacity: float) -> float:
    """Bytes of port buffer that absorb a line-rate burst: one BDP of the slow side."""
    return rtt * egress_capacity / 8.0


def mismatch_loss_rate(arrival_rate: float, egress_capacity: float, egress_buffer: float, rtt: float) -> float:
    """Fluid tail-drop loss for traffic arriving faster than an egress port drains.

    Zero when the port keeps up or when its buffer holds one bandwidth-delay
    product of the egress side; otherwise the overflow fraction
    ``(arrival - capacity) / arrival``.
    """
    if egress_capacity <= 0:
        raise ValueError("egress_capacity must be > 0")
    if min(arrival_rate, egress_buffer, rtt) < 0:
        raise ValueError("arrival_rate, egress_buffer and rtt must be >= 0")
    if arrival_rate <= egress_capacity:
        return 0.0
    if egress_buffer >= required_buffer(rtt, egress_capacity):
        return 0.0
    return (arrival_rate - egress_capacity) / arrival_rate


@dataclass(slots=True, eq=False)
class Flow:
    """One TCP stream carrying ``remaining_bytes``.

    ``read_fs``/``write_fs`` chain the source or destination filesystem into
    the flow; memory-to-memory tests leave both off. ``window_limit`` of 0
    means "take the smaller endpoint window".
    """

    id: str
    src_node: str
    dst_node: str
    remaining_bytes: float
    window_limit: float = 0.0
    src_iface: int = 0
    dst_iface: int = 0
    read_fs: bool = False
    write_fs: bool = False
    path: tuple[Link, ...] = ()
    state: str = "active"
    size_bytes: float = 0.0
    rate: float = 0.0
    start_time: float = math.nan
    finish_time: float = math.nan
    key: tuple = ()
    cap: float = math.inf
    on_finish: Callable | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.remaining_bytes < 0:
            raise ValueError(f"flow {self.id}: remaining_bytes must be >= 0")
        if not self.size_bytes:
            self.size_bytes = self.remaining_bytes


@dataclass(frozen=True, slots=True)
class FlowCaps:
    window: float
    loss: float
    interface: float
    path_loss: float
    rtt: float

    @property
    def rate(self) -> float:
        return min(self.window, self.loss, self.interface)


@dataclass(frozen=True)
class Allocation:
    rates: dict[str, float]
    timestamp: float = 0.0

    def total(self) -> float:
        return sum(self.rates.values())


@dataclass(frozen=True, slots=True)
class LogRecord:
    time: float
    seq: int
    kind: str
    flow_id: str = ""
    detail: str = ""

    def format(self) -> str:
        return f"{self.time:.9f}\t{self.seq}\t{self.kind}\t{self.flow_id}\t{self.detail}"


def format_event_log(log: Iterable[LogRecord]) -> str:
    return "".join(rec.format() + "\n" for rec in log)


def max_min_shares(
    classes: Sequence[tuple[Sequence[str], float, int]],
    capacities: Mapping[str, float],
) -> list[float]:
    """Progressive filling over flow classes.

    Each class is ``(resources, cap, count)``: ``count`` identical flows using
    every resource in ``resources`` and individually capped at ``cap``. All
    unfrozen flows grow at a common level; a class freezes when it reaches its
    cap or when one of its resources saturates. Returns the per-flow rate of
    each class.
    """
    n = len(classes)
    rates = [0.0] * n
    users: dict[str, list[int]] = {}
    for i, (resources, _cap, count) in enumerate(classes):
        if count <= 0:
            raise ValueError("class count must be positive")
        for r in resources:
            users.setdefault(r, []).append(i)
    load = dict.fromkeys(users, 0.0)
    unfrozen_count = {r: sum(classes[i][2] for i in idx) for r, idx in users.items()}
    unfrozen = set(range(n))

    while unfrozen:
        level = math.inf
        for r in sorted(users):
            m = unfrozen_count[r]
            if m:
                level = min(level, (capacities[r] - load[r]) / m)
        for i in unfrozen:
            level = min(level, classes[i][1])
        if math.isinf(level):
            raise ValueError("a flow has neither a finite cap nor a constraining resource")
        level = max(level, 0.0)
        done = {i for i in unfrozen if classes[i][1] <= level * (1 + _SAT_TOL)}
        for r in users:
            m = unfrozen_count[r]
            if m and (capacities[r] - load[r]) / m <= level * (1 + _SAT_TOL) + _SAT_TOL:
                done.update(i for i in users[r] if i in unfrozen)
        for i in sorted(done):
            resources, cap, count = classes[i]
            rates[i] = min(cap, level)
            for r in resources:
                load[r] += rates[i] * count
                unfrozen_count[r] -= count
        unfrozen -= done
    return rates


class Network:
    """Capacities and per-flow constraints derived from a topology.

    Resource ids: ``nic>N/k`` and ``nic<N/k`` (transmit/receive on interface k
    of node N), ``link:L:fwd|rev``, ``fsr:N`` / ``fsw:N`` (filesystem read and
    write on N) and ``int:N`` (the integration penalty ceiling of N's site).
    """

    def __init__(self, topology: Topology, params: TcpModelParams | None = None):
        self.topology = topology
        self.params = params or TcpModelParams()
        self._nodes = {n.id: n for n in topology.nodes}
        self.capacities: dict[str, float] = {}
        for node in topology.nodes:
            for k, speed in enumerate(node.wan_iface_speeds):
                self.capacities[f"nic>{node.id}/{k}"] = speed
                self.capacities[f"nic<{node.id}/{k}"] = speed
            fs = topology.node_fs_rate(node)
            self.capacities[f"fsr:{node.id}"] = fs
            self.capacities[f"fsw:{node.id}"] = fs
            cap = topology.site(node.site).integration_penalty.rate_cap
            if math.isfinite(cap):
                self.capacities[f"int:{node.id}"] = cap
        for link in topology.links:
            self.capacities[f"link:{link.id}:fwd"] = link.capacity
            self.capacities[f"link:{link.id}:rev"] = link.capacity
        self._prep_cache: dict[tuple, tuple] = {}
        self._alloc_cache: dict[tuple, list[float]] = {}

    def node(self, node_id: str) -> DtnNode:
        return self._nodes[node_id]

    def _describe(self, flow: Flow) -> tuple:
        ckey = (flow.src_node, flow.dst_node, flow.src_iface, flow.dst_iface, flow.read_fs, flow.write_fs, flow.window_limit)
        hit = self._prep_cache.get(ckey)
        if hit is not None:
            return hit
        src, dst = self._nodes[flow.src_node], self._nodes[flow.dst_node]
        route = route_between(self.topology, src.site, dst.site)
        src_speed = src.wan_iface_speeds[flow.src_iface]
        dst_speed = dst.wan_iface_speeds[flow.dst_iface]
        rtt = route.rtt

        resources = [f"nic>{src.id}/{flow.src_iface}"]
        survive = 1.0 - self.params.base_loss_rate
        arrival = src_speed
        for link, direction in route.hops():
            resources.append(f"link:{link.id}:{direction}")
            survive *= 1.0 - mismatch_loss_rate(arrival, link.capacity, link.egress_buffer, rtt)
            survive *= 1.0 - link.loss_rate
            arrival = min(arrival, link.capacity)
        port_buffer = self.topology.site(dst.site).port_buffer
        survive *= 1.0 - mismatch_loss_rate(arrival, dst_speed, port_buffer, rtt)
        resources.append(f"nic<{dst.id}/{flow.dst_iface}")
        loss = 1.0 - survive

        if flow.read_fs:
            resources.append(f"fsr:{src.id}")
        if flow.write_fs:
            resources.append(f"fsw:{dst.id}")
        if (flow.read_fs or flow.write_fs) and src.site != dst.site:
            for node in (src, dst):
                if f"int:{node.id}" in self.capacities:
                    resources.append(f"int:{node.id}")

        window = flow.window_limit or min(src.tcp_window_limit, dst.tcp_window_limit)
        caps = FlowCaps(
            window=math.inf if rtt <= 0 else window * 8.0 / rtt,
            loss=mathis_rate(self.params.mss, rtt, loss, self.params.mathis_constant),
            interface=min(src_speed, dst_speed),
            path_loss=loss,
            rtt=rtt,
        )
        result = (tuple(sorted(resources)), caps, route.links)
        self._prep_cache[ckey] = result
        return result

    def prepare(self, flow: Flow) -> Flow:
        """Resolve a flow's path, resources and cap in place."""
        resources, caps, links = self._describe(flow)
        flow.path = links
        flow.cap = caps.rate
        flow.key = (resources, caps.rate)
        return flow

    def flow_caps(self, flow: Flow) -> FlowCaps:
        return self._describe(flow)[1]

    def resources_of(self, flow: Flow) -> tuple[str, ...]:
        return self._describe(flow)[0]

    def shares(self, flows: Iterable[Flow]) -> dict[str, float]:
        """Max-min rates for the given flows, memoized on the multiset of flow classes."""
        counts: dict[tuple, int] = {}
        members: dict[tuple, list[Flow]] = {}
        for f in flows:
            if not f.key:
                self.prepare(f)
            counts[f.key] = counts.get(f.key, 0) + 1
            members.setdefault(f.key, []).append(f)
        rates = self.class_rates(counts)
        out: dict[str, float] = {}
        for k, group in members.items():
            for f in group:
                out[f.id] = rates[k]
        return out

    def class_rates(self, counts: Mapping[tuple, int]) -> dict[tuple, float]:
        """Per-flow rate of each flow class given how many flows each class has."""
        keys = sorted(counts)
        memo = tuple((k, counts[k]) for k in keys)
        rates = self._alloc_cache.get(memo)
        if rates is None:
            rates = max_min_shares([(k[0], k[1], counts[k]) for k in keys], self.capacities)
            self._alloc_cache[memo] = rates
        return dict(zip(keys, rates))


def allocate(
    flows: Iterable[Flow],
    topology: Topology,
    params: TcpModelParams | None = None,
    *,
    timestamp: float = 0.0,
    network: Network | None = None,
) -> Allocation:
    """Max-min fair allocation of the active flows at one instant."""
    net = network or Network(topology, params)
    active = sorted((f for f in flows if f.state == "active"), key=lambda f: f.id)
    if not active:
        return Allocation({}, timestamp)
    return Allocation(dict(sorted(net.shares(active).items())), timestamp)


@dataclass(frozen=True, slots=True)
class FlowStart:
    at: float
    flow: Flow


@dataclass
class SimResult:
    log: list[LogRecord]
    flows: list[Flow]
    time: float

    def event_log_text(self) -> str:
        return format_event_log(self.log)


class Simulation:
    """Single-threaded discrete-event loop on a simulated clock.

    Callers start flows and schedule callbacks; ``run`` advances time to the
    next flow completion or timer, whichever is first. Simultaneous flow
    completions are processed in flow-id order before timers at the same
    instant; timers fire in scheduling order.
    """

    def __init__(self, topology: Topology, params: TcpModelParams | None = None, *, network: Network | None = None):
        self.network = network or Network(topology, params)
        self.topology = topology
        self.now = 0.0
        self.log: list[LogRecord] = []
        self.flows: list[Flow] = []
        self.active: dict[str, Flow] = {}
        self.peak_active = 0
        self._timers: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0
        self._timer_seq = 0
        self._dirty = False
        self._classes: dict[tuple, dict[str, Flow]] = {}

    def record(self, kind: str, flow_id: str = "", detail: str = "") -> None:
        self.log.append(LogRecord(self.now, self._seq, kind, flow_id, detail))
        self._seq += 1

    def schedule(self, at: float, callback: Callable[[], None]) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        heapq.heappush(self._timers, (at, self._timer_seq, callback))
        self._timer_seq += 1

    def start_flow(self, flow: Flow, on_finish: Callable[[Flow], None] | None = None) -> Flow:
        if flow.id in self.active:
            raise ValueError(f"flow {flow.id} is already active")
        self.network.prepare(flow)
        flow.start_time = self.now
        flow.on_finish = on_finish
        self.flows.append(flow)
        self.record("flow_start", flow.id, f"src={flow.src_node} dst={flow.dst_node} bytes={flow.size_bytes:.0f}")
        if flow.remaining_bytes <= 0:
            self._finish(flow)
            return flow
        flow.state = "active"
        self.active[flow.id] = flow
        self._classes.setdefault(flow.key, {})[flow.id] = flow
        self.peak_active = max(self.peak_active, len(self.active))
        self._dirty = True
        return flow

    def _finish(self, flow: Flow) -> None:
        flow.remaining_bytes = 0.0
        flow.state = "done"
        flow.rate = 0.0
        flow.finish_time = self.now
        self.record("flow_finish", flow.id, f"bytes={flow.size_bytes:.0f}")
        if flow.on_finish is not None:
            flow.on_finish(flow)

    def _reallocate(self) -> None:
        if self.active:
            rates = self.network.class_rates({k: len(m) for k, m in self._classes.items()})
            for k, members in self._classes.items():
                r = rates[k]
                for f in members.values():
                    f.rate = r
        self._dirty = False

    def run(self, until: float | None = None) -> SimResult:
        while True:
            if self._dirty:
                self._reallocate()
            t_flow = math.inf
            for f in self.active.values():
                if f.rate > 0:
                    t = self.now + f.remaining_bytes * 8.0 / f.rate
                    if t < t_flow:
                        t_flow = t
            t_timer = self._timers[0][0] if self._timers else math.inf
            t_next = min(t_flow, t_timer)
            if math.isinf(t_next):
                if self.active:
                    raise SimulationStall(min(self.active), self.now)
                break
            if until is not None and t_next > until:
                self._advance(until)
                break
            self._advance(t_next)
            if t_flow <= t_timer:
                tol = 1e-12 * max(1.0, t_next)
                ending = sorted(
                    fid for fid, f in self.active.items()
                    if f.rate > 0 and f.remaining_bytes * 8.0 / f.rate <= tol
                )
                if not ending:  # rounding left a sliver; finish the earliest flow
                    ending = [min(self.active, key=lambda fid: (self.active[fid].remaining_bytes / self.active[fid].rate
                                                                if self.active[fid].rate > 0 else math.inf, fid))]
                for fid in ending:
                    flow = self.active.pop(fid)
                    group = self._classes[flow.key]
                    del group[fid]
                    if not group:
                        del self._classes[flow.key]
                    self._dirty = True
                    self._finish(flow)
            else:
                _, _, callback = heapq.heappop(self._timers)
                callback()
        return SimResult(self.log, self.flows, self.now)

    def _advance(self, t: float) -> None:
        dt = t - self.now
        if dt > 0:
            for f in self.active.values():
                if f.rate > 0:
                    left = f.remaining_bytes - f.rate * dt / 8.0
                    f.remaining_bytes = left if left > 0.0 else 0.0
        self.now = t


def run(
    events: Iterable[FlowStart],
    topology: Topology,
    params: TcpModelParams | None = None,
    *,
    until: float | None = None,
) -> SimResult:
    """Run a simulation from an initial set of flow starts."""
    sim = Simulation(topology, params)
    for ev in sorted(events, key=lambda e: (e.at, e.flow.id)):
        if ev.at < 0:
            raise ValueError("event timestamps must be >= 0")
        sim.schedule(ev.at, lambda f=ev.flow: sim.start_flow(f))
    return sim.run(until)
