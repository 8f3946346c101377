"""Facility and WAN topology: sites, DTN clusters, filesystem presets, links, routes.

A topology is loaded from a JSON document with exactly the top-level keys
``sites``, ``nodes``, ``links``, ``presets`` and ``routes``. Keys starting
with ``_`` are comments and are ignored at any level; any other unknown key
is rejected. See ``docs/topology-schema.md`` for the full schema.

Rates are bits/s, except ``cpu_hash_rate`` and filesystem throughput, which
are bytes/s.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import permutations

__all__ = [
    "DtnNode",
    "FsTuningPreset",
    "IntegrationPenalty",
    "Link",
    "Route",
    "Site",
    "Topology",
    "TopologyError",
    "load_topology",
    "load_topology_file",
    "path_between",
]


class TopologyError(ValueError):
    """Invalid topology document; ``field_path`` locates the offending field."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field_path = field_path


@dataclass(frozen=True, slots=True)
class IntegrationPenalty:
    """Extra cost paid only when filesystem and WAN stages are chained at a site.

    ``rate_cap`` is a per-node bits/s ceiling on end-to-end flows,
    ``per_file_latency`` extra seconds per file. Component tests never see it.
    """

    rate_cap: float = math.inf
    per_file_latency: float = 0.0

    @property
    def active(self) -> bool:
        return math.isfinite(self.rate_cap) or self.per_file_latency > 0


@dataclass(frozen=True, slots=True)
class Site:
    id: str
    kind: str = "facility"  # facility | router
    port_buffer: int = 0  # bytes of buffering on the switch ports facing the DTNs
    integration_penalty: IntegrationPenalty = field(default_factory=IntegrationPenalty)

    @property
    def is_facility(self) -> bool:
        return self.kind == "facility"


@dataclass(frozen=True, slots=True)
class FsTuningPreset:
    name: str
    effective_fs_throughput: float  # bytes/s per node
    metadata_op_latency: float = 0.0  # seconds per file operation


@dataclass(frozen=True, slots=True)
class DtnNode:
    id: str
    site: str
    wan_iface_speed: float
    fs_iface_speed: float
    cpu_hash_rate: float
    tcp_window_limit: int
    fs_tuning: str
    extra_wan_iface_speeds: tuple[float, ...] = ()

    @property
    def extra_wan_ifaces(self) -> int:
        return len(self.extra_wan_iface_speeds)

    @property
    def is_simple(self) -> bool:
        return not self.extra_wan_iface_speeds

    @property
    def wan_iface_speeds(self) -> tuple[float, ...]:
        return (self.wan_iface_speed, *self.extra_wan_iface_speeds)


@dataclass(frozen=True, slots=True)
class Link:
    id: str
    endpoints: tuple[str, str]
    capacity: float
    rtt_contribution: float = 0.0
    egress_buffer: int = 0
    loss_rate: float = 0.0


@dataclass(frozen=True, slots=True)
class Route:
    """A directed traversal: links in order, each with its travel direction."""

    src: str
    dst: str
    links: tuple[Link, ...]
    reversed_flags: tuple[bool, ...]
    rtt: float

    def hops(self):
        """(link, direction) pairs; direction is ``"fwd"`` or ``"rev"``."""
        return [(link, "rev" if rev else "fwd") for link, rev in zip(self.links, self.reversed_flags)]

    def reverse(self) -> Route:
        return Route(
            self.dst,
            self.src,
            tuple(reversed(self.links)),
            tuple(not f for f in reversed(self.reversed_flags)),
            self.rtt,
        )


@dataclass(frozen=True)
class Topology:
    sites: tuple[Site, ...]
    nodes: tuple[DtnNode, ...]
    links: tuple[Link, ...]
    presets: tuple[FsTuningPreset, ...]
    routes: dict[tuple[str, str], Route] = field(repr=False, default_factory=dict)

    def site(self, site_id: str) -> Site:
        for s in self.sites:
            if s.id == site_id:
                return s
        raise KeyError(f"unknown site {site_id!r}")

    def node(self, node_id: str) -> DtnNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"unknown node {node_id!r}")

    def preset(self, name: str) -> FsTuningPreset:
        for p in self.presets:
            if p.name == name:
                return p
        raise KeyError(f"unknown preset {name!r}")

    def preset_for(self, node: DtnNode) -> FsTuningPreset:
        return self.preset(node.fs_tuning)

    @property
    def facility_sites(self) -> list[str]:
        return sorted(s.id for s in self.sites if s.is_facility)

    def nodes_at(self, site_id: str) -> list[DtnNode]:
        return sorted((n for n in self.nodes if n.site == site_id), key=lambda n: n.id)

    def site_pairs(self) -> list[tuple[str, str]]:
        return list(permutations(self.facility_sites, 2))

    @property
    def is_all_simple(self) -> bool:
        return all(n.is_simple for n in self.nodes)

    def classification(self) -> str:
        return "all-simple" if self.is_all_simple else "mixed"

    def node_fs_rate(self, node: DtnNode) -> float:
        """Effective filesystem rate of one node in bits/s."""
        return min(self.preset_for(node).effective_fs_throughput * 8.0, node.fs_iface_speed)


def path_between(topology: Topology, src_site: str, dst_site: str) -> tuple[list[Link], float]:
    """Links from ``src_site`` to ``dst_site`` in travel order, and the path RTT."""
    route = route_between(topology, src_site, dst_site)
    return list(route.links), route.rtt


def route_between(topology: Topology, src_site: str, dst_site: str) -> Route:
    for sid in (src_site, dst_site):
        topology.site(sid)
    if src_site == dst_site:
        return Route(src_site, dst_site, (), (), 0.0)
    try:
        return topology.routes[(src_site, dst_site)]
    except KeyError:
        raise TopologyError("routes", f"no path between {src_site} and {dst_site}") from None


# -- loading ---------------------------------------------------------------

_TOP_KEYS = {"sites", "nodes", "links", "presets", "routes"}
_SITE_KEYS = {"id", "kind", "port_buffer", "integration_penalty"}
_PENALTY_KEYS = {"rate_cap", "per_file_latency"}
_PRESET_KEYS = {"name", "effective_fs_throughput", "metadata_op_latency"}
_NODE_KEYS = {
    "id", "site", "count", "wan_iface_speed", "fs_iface_speed", "extra_wan_ifaces",
    "cpu_hash_rate", "tcp_window_limit", "fs_tuning",
}
_LINK_KEYS = {"id", "endpoints", "capacity", "rtt_contribution", "egress_buffer", "loss_rate"}
_ROUTE_KEYS = {"src", "dst", "links"}


def _check_keys(obj, allowed: set[str], required: set[str], where: str) -> dict:
    if not isinstance(obj, dict):
        raise TopologyError(where, "expected an object")
    for key in obj:
        if key.startswith("_"):
            continue
        if key not in allowed:
            raise TopologyError(f"{where}.{key}" if where else key, "unknown key")
    for key in sorted(required):
        if key not in obj:
            raise TopologyError(f"{where}.{key}" if where else key, "missing required key")
    return {k: v for k, v in obj.items() if not k.startswith("_")}


def _number(value, where: str, *, minimum: float = 0.0, strict: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TopologyError(where, f"expected a number, got {value!r}")
    value = float(value)
    if math.isnan(value) or value < minimum or (strict and value <= minimum):
        op = ">" if strict else ">="
        raise TopologyError(where, f"must be {op} {minimum:g}, got {value:g}")
    return value


def _string(value, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise TopologyError(where, f"expected a non-empty string, got {value!r}")
    return value


def _list(doc: dict, key: str) -> list:
    value = doc[key]
    if not isinstance(value, list):
        raise TopologyError(key, "expected a list")
    return value


def _load_sites(items: list) -> list[Site]:
    sites = []
    for i, raw in enumerate(items):
        where = f"sites[{i}]"
        obj = _check_keys(raw, _SITE_KEYS, {"id"}, where)
        kind = obj.get("kind", "facility")
        if kind not in ("facility", "router"):
            raise TopologyError(f"{where}.kind", f"must be 'facility' or 'router', got {kind!r}")
        penalty = IntegrationPenalty()
        if "integration_penalty" in obj:
            p = _check_keys(obj["integration_penalty"], _PENALTY_KEYS, set(), f"{where}.integration_penalty")
            penalty = IntegrationPenalty(
                rate_cap=_number(p.get("rate_cap", math.inf), f"{where}.integration_penalty.rate_cap", strict=True),
                per_file_latency=_number(p.get("per_file_latency", 0.0), f"{where}.integration_penalty.per_file_latency"),
            )
        sites.append(Site(
            id=_string(obj["id"], f"{where}.id"),
            kind=kind,
            port_buffer=int(_number(obj.get("port_buffer", 0), f"{where}.port_buffer")),
            integration_penalty=penalty,
        ))
    return sites


def _load_presets(items: list) -> list[FsTuningPreset]:
    presets = []
    for i, raw in enumerate(items):
        where = f"presets[{i}]"
        obj = _check_keys(raw, _PRESET_KEYS, {"name", "effective_fs_throughput"}, where)
        presets.append(FsTuningPreset(
            name=_string(obj["name"], f"{where}.name"),
            effective_fs_throughput=_number(obj["effective_fs_throughput"], f"{where}.effective_fs_throughput", strict=True),
            metadata_op_latency=_number(obj.get("metadata_op_latency", 0.0), f"{where}.metadata_op_latency"),
        ))
    return presets


def _load_nodes(items: list) -> list[tuple[str, DtnNode]]:
    nodes = []
    for i, raw in enumerate(items):
        where = f"nodes[{i}]"
        obj = _check_keys(
            raw, _NODE_KEYS,
            {"id", "site", "wan_iface_speed", "fs_iface_speed", "cpu_hash_rate", "tcp_window_limit", "fs_tuning"},
            where,
        )
        wan = _number(obj["wan_iface_speed"], f"{where}.wan_iface_speed", strict=True)
        extra = obj.get("extra_wan_ifaces", 0)
        if isinstance(extra, list):
            extra_speeds = tuple(
                _number(v, f"{where}.extra_wan_ifaces[{j}]", strict=True) for j, v in enumerate(extra)
            )
        else:
            extra_speeds = (wan,) * int(_number(extra, f"{where}.extra_wan_ifaces"))
        count = obj.get("count", 1)
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise TopologyError(f"{where}.count", f"must be a positive integer, got {count!r}")
        base_id = _string(obj["id"], f"{where}.id")
        for k in range(count):
            node_id = base_id if count == 1 else f"{base_id}{k + 1:02d}"
            nodes.append((where, DtnNode(
                id=node_id,
                site=_string(obj["site"], f"{where}.site"),
                wan_iface_speed=wan,
                fs_iface_speed=_number(obj["fs_iface_speed"], f"{where}.fs_iface_speed", strict=True),
                cpu_hash_rate=_number(obj["cpu_hash_rate"], f"{where}.cpu_hash_rate", strict=True),
                tcp_window_limit=int(_number(obj["tcp_window_limit"], f"{where}.tcp_window_limit", strict=True)),
                fs_tuning=_string(obj["fs_tuning"], f"{where}.fs_tuning"),
                extra_wan_iface_speeds=extra_speeds,
            )))
    return nodes


def _load_links(items: list) -> list[Link]:
    links = []
    for i, raw in enumerate(items):
        where = f"links[{i}]"
        obj = _check_keys(raw, _LINK_KEYS, {"id", "endpoints", "capacity"}, where)
        ends = obj["endpoints"]
        if not isinstance(ends, list) or len(ends) != 2:
            raise TopologyError(f"{where}.endpoints", "expected a pair of attachment points")
        loss = _number(obj.get("loss_rate", 0.0), f"{where}.loss_rate")
        if loss >= 1.0:
            raise TopologyError(f"{where}.loss_rate", "must be < 1")
        links.append(Link(
            id=_string(obj["id"], f"{where}.id"),
            endpoints=(_string(ends[0], f"{where}.endpoints[0]"), _string(ends[1], f"{where}.endpoints[1]")),
            capacity=_number(obj["capacity"], f"{where}.capacity", strict=True),
            rtt_contribution=_number(obj.get("rtt_contribution", 0.0), f"{where}.rtt_contribution"),
            egress_buffer=int(_number(obj.get("egress_buffer", 0), f"{where}.egress_buffer")),
            loss_rate=loss,
        ))
    return links


def _walk(src: str, dst: str, links: list[Link], where: str) -> Route:
    at = src
    flags = []
    for j, link in enumerate(links):
        a, b = link.endpoints
        if a == at:
            flags.append(False)
            at = b
        elif b == at:
            flags.append(True)
            at = a
        else:
            raise TopologyError(f"{where}.links[{j}]", f"link {link.id!r} does not continue the path from {at!r}")
    if at != dst:
        raise TopologyError(f"{where}.links", f"path ends at {at!r}, not {dst!r}")
    return Route(src, dst, tuple(links), tuple(flags), sum(l.rtt_contribution for l in links))


def load_topology(config_text: str | dict) -> Topology:
    """Parse and validate a topology document (JSON text or an already-decoded dict)."""
    if isinstance(config_text, str):
        try:
            doc = json.loads(config_text)
        except json.JSONDecodeError as exc:
            raise TopologyError("", f"parse error: {exc}") from exc
    else:
        doc = config_text
    doc = _check_keys(doc, _TOP_KEYS, _TOP_KEYS, "")

    sites = _load_sites(_list(doc, "sites"))
    site_ids = [s.id for s in sites]
    if len(set(site_ids)) != len(site_ids):
        raise TopologyError("sites", "duplicate site id")
    site_by_id = {s.id: s for s in sites}

    presets = _load_presets(_list(doc, "presets"))
    preset_by_name = {p.name: p for p in presets}
    if len(preset_by_name) != len(presets):
        raise TopologyError("presets", "duplicate preset name")

    loaded = _load_nodes(_list(doc, "nodes"))
    node_ids = set()
    for where, node in loaded:
        if node.id in node_ids:
            raise TopologyError(f"{where}.id", f"duplicate node id {node.id!r}")
        node_ids.add(node.id)
        site = site_by_id.get(node.site)
        if site is None:
            raise TopologyError(f"{where}.site", f"unknown site {node.site!r}")
        if not site.is_facility:
            raise TopologyError(f"{where}.site", f"DTN nodes cannot sit at router {node.site!r}")
        preset = preset_by_name.get(node.fs_tuning)
        if preset is None:
            raise TopologyError(f"{where}.fs_tuning", f"unknown preset {node.fs_tuning!r}")
        if preset.effective_fs_throughput > node.fs_iface_speed / 8.0:
            raise TopologyError(
                f"{where}.fs_tuning",
                f"node {node.id}: preset {preset.name!r} effective_fs_throughput "
                f"{preset.effective_fs_throughput:g} B/s exceeds fs_iface_speed/8 = {node.fs_iface_speed / 8.0:g} B/s",
            )
    nodes = [node for _, node in loaded]

    links = _load_links(_list(doc, "links"))
    link_by_id: dict[str, Link] = {}
    for i, link in enumerate(links):
        if link.id in link_by_id:
            raise TopologyError(f"links[{i}].id", f"duplicate link id {link.id!r}")
        for j, end in enumerate(link.endpoints):
            if end not in site_by_id:
                raise TopologyError(f"links[{i}].endpoints[{j}]", f"unknown attachment point {end!r}")
        link_by_id[link.id] = link

    routes: dict[tuple[str, str], Route] = {}
    for i, raw in enumerate(_list(doc, "routes")):
        where = f"routes[{i}]"
        obj = _check_keys(raw, _ROUTE_KEYS, _ROUTE_KEYS, where)
        src, dst = _string(obj["src"], f"{where}.src"), _string(obj["dst"], f"{where}.dst")
        for key, sid in (("src", src), ("dst", dst)):
            if sid not in site_by_id:
                raise TopologyError(f"{where}.{key}", f"unknown site {sid!r}")
        if src == dst:
            raise TopologyError(where, "route endpoints must differ")
        if not isinstance(obj["links"], list) or not obj["links"]:
            raise TopologyError(f"{where}.links", "expected a non-empty list of link ids")
        seq = []
        for j, lid in enumerate(obj["links"]):
            if lid not in link_by_id:
                raise TopologyError(f"{where}.links[{j}]", f"unknown link {lid!r}")
            seq.append(link_by_id[lid])
        route = _walk(src, dst, seq, where)
        for key, r in (((src, dst), route), ((dst, src), route.reverse())):
            if key in routes and routes[key].links != r.links:
                raise TopologyError(where, f"conflicting route for {key[0]}->{key[1]}")
            routes[key] = r

    # Pairs without a declared route fall back to a single direct link.
    facility = sorted(s.id for s in sites if s.is_facility)
    for a, b in permutations(facility, 2):
        if (a, b) in routes:
            continue
        direct = sorted(
            (l for l in links if set(l.endpoints) == {a, b}), key=lambda l: l.id
        )
        if not direct:
            raise TopologyError("routes", f"no path between {a} and {b}")
        routes[(a, b)] = _walk(a, b, [direct[0]], "routes")

    return Topology(
        sites=tuple(sites),
        nodes=tuple(sorted(nodes, key=lambda n: n.id)),
        links=tuple(links),
        presets=tuple(presets),
        routes=routes,
    )


def load_topology_file(path) -> Topology:
    with open(path, encoding="utf-8") as fh:
        return load_topology(fh.read())
