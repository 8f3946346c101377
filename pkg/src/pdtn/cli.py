"""Command-line entry point: ``pdtn <command> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 transfer failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import dataset, engine, harness
from .simnet import SimulationStall, format_event_log
from .topology import Topology, TopologyError, load_topology_file

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSFER = 3
DEFAULT_SEED = 42
DEFAULT_TOPOLOGY = "end-state"
PRESETS = ("petascale-reference",)


class ConfigError(Exception):
    """A user-facing configuration problem; reported on stderr with exit code 2."""


# -- helpers -------------------------------------------------------------------


def fixture_dir() -> Path:
    override = os.environ.get("PDTN_FIXTURES")
    if override:
        return Path(override)
    return Path(str(resources.files("pdtn") / "fixtures"))


def resolve_topology(value: str) -> Topology:
    """Load a topology from a file path or a fixture name."""
    path = Path(value)
    if not path.is_file() and os.sep not in value and "/" not in value:
        candidate = fixture_dir() / (value if value.endswith(".json") else f"{value}.json")
        if candidate.is_file():
            path = candidate
    if not path.is_file():
        raise ConfigError(f"topology not found: {value}")
    try:
        return load_topology_file(path)
    except TopologyError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_counts(text: str) -> dict[str, int]:
    counts = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        label, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--counts item {item!r} is not LABEL=COUNT")
        try:
            counts[label.strip()] = int(value)
        except ValueError:
            raise ConfigError(f"--counts item {item!r} has a non-integer count") from None
    return counts


def _manifest(args, *, calibrate_default: bool) -> dataset.DatasetManifest:
    if getattr(args, "manifest", None):
        try:
            return dataset.read_manifest(args.manifest)
        except FileNotFoundError:
            raise ConfigError(f"manifest not found: {args.manifest}") from None
    if getattr(args, "empty", False):
        return dataset.generate_manifest({}, seed=args.seed)
    calibrate = args.calibrate or calibrate_default or args.total_bytes is not None
    scale = Fraction(args.scale)
    if args.counts:
        counts = _parse_counts(args.counts)
        target = args.total_bytes if calibrate else None
        if calibrate and target is None:
            raise ConfigError("--calibrate with --counts needs --total-bytes")
        return dataset.generate_manifest(counts, target, args.seed, scale)
    if args.preset not in PRESETS:
        raise ConfigError(f"unknown dataset preset {args.preset!r}")
    if args.total_bytes is not None:
        return dataset.generate_manifest(
            dataset.REFERENCE_COUNTS, args.total_bytes, args.seed, scale,
            max_file_bytes=dataset.REFERENCE_MAX_FILE_BYTES,
        )
    return dataset.reference_manifest(args.seed, calibrate=calibrate, scale_factor=scale)


def _policy(args) -> engine.TransferPolicy:
    base = engine.TransferPolicy.for_network_use(args.network_use)
    fields = {
        "initial_batch_files": args.policy_batch if args.policy_batch is not None else base.initial_batch_files,
        "escalated_batch_files": base.escalated_batch_files if args.policy_escalated is None else args.policy_escalated,
        "concurrency": base.concurrency if args.policy_concurrency is None else args.policy_concurrency,
        "streams_per_batch": base.streams_per_batch if args.policy_streams is None else args.policy_streams,
        "per_file_overhead": base.per_file_overhead if args.policy_overhead is None else args.policy_overhead,
        "checksum_enabled": not args.no_checksum,
        "max_retries_per_file": base.max_retries_per_file if args.max_retries is None else args.max_retries,
    }
    if args.no_escalate:
        fields["escalated_batch_files"] = fields["initial_batch_files"]
    elif fields["escalated_batch_files"] < fields["initial_batch_files"]:
        fields["escalated_batch_files"] = fields["initial_batch_files"]
    label = args.network_use
    if (fields["concurrency"], fields["streams_per_batch"]) != (base.concurrency, base.streams_per_batch):
        label = "custom"
    return engine.TransferPolicy(network_use=label, **fields)


def _emit(text: str) -> None:
    sys.stdout.write(text)


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _components(topology: Topology, sites, args, policy) -> dict[str, harness.ComponentReport]:
    return {s: harness.component_tests(topology, s, args.seed, policy=policy) for s in sites}


def _sites(args, topology: Topology) -> list[str]:
    if not args.sites:
        return topology.facility_sites
    sites = [s.strip() for s in args.sites.split(",") if s.strip()]
    for s in sites:
        try:
            topology.site(s)
        except KeyError:
            raise ConfigError(f"unknown site {s!r}") from None
    return sites


# -- commands --------------------------------------------------------------------


def cmd_gen_dataset(args) -> int:
    manifest = _manifest(args, calibrate_default=False)
    hist = dataset.summarize(manifest)
    if not args.out:
        sys.stdout.write(dataset.format_manifest(manifest))
        return EXIT_OK
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    dataset.write_manifest(manifest, args.out)
    if args.format == "structured":
        _emit(_dump({
            "manifest": str(args.out),
            "files": len(manifest),
            "directories": manifest.directory_count,
            "bytes": manifest.total_bytes,
            "decade_counts": hist.decade_counts,
        }))
    elif args.format == "csv":
        _emit("decade,files\n" + "".join(f"{k},{v}\n" for k, v in hist.decade_counts.items()))
    else:
        width = max(len(k) for k in hist.decade_counts)
        lines = [f"{k.ljust(width)}  {v:>6}" for k, v in hist.decade_counts.items()]
        lines.append(f"files={len(manifest)} dirs={manifest.directory_count} bytes={manifest.total_bytes}")
        _emit("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_transfer(args) -> int:
    topology = resolve_topology(args.topology)
    manifest = _manifest(args, calibrate_default=True)
    policy = _policy(args)
    facilities = topology.facility_sites
    src = args.src or (facilities[0] if facilities else None)
    dst = args.dst or (facilities[1] if len(facilities) > 1 else None)
    if src is None or dst is None:
        raise ConfigError("need >= 2 sites for a transfer")
    job = engine.TransferJob(
        args.job_id or f"{src}->{dst}", manifest, src, dst, policy,
        seed=args.seed, corruption_probability=args.corruption, allow_empty=True,
    )
    try:
        report = engine.execute(job, topology)
    except engine.TransferFailure as exc:
        print(f"pdtn: transfer failed: {exc.path} ({exc})", file=sys.stderr)
        return EXIT_TRANSFER
    except SimulationStall as exc:
        print(f"pdtn: transfer failed: {exc}", file=sys.stderr)
        return EXIT_TRANSFER
    out = _out_dir(args)
    if out:
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "events.tsv").write_text(format_event_log(report.log), encoding="utf-8")
        (out / "summary.txt").write_text(report.summary_line() + "\n", encoding="utf-8")
    if args.format == "structured":
        _emit(report.to_json())
    elif args.format == "csv":
        d = report.to_dict()
        _emit("job_id,bytes,elapsed_s,avg_gbps,retransmitted_bytes,checksum_failures\n"
              f"{d['job_id']},{d['bytes']},{d['elapsed_s']},{d['avg_gbps']},{d['retransmitted_bytes']},{d['checksum_failures']}\n")
    else:
        _emit(report.summary_line() + "\n")
    return EXIT_OK


def _diagnosis_text(diagnoses) -> str:
    if not diagnoses:
        return "no bottleneck found\n"
    lines = []
    for d in diagnoses:
        ev = ", ".join(f"{e.measurement}={e.value / 1e9:.1f}<{e.threshold / 1e9:.1f}" for e in d.evidence)
        lines.append(f"{d}: {ev}")
    return "\n".join(lines) + "\n"


def cmd_mesh(args) -> int:
    topology = resolve_topology(args.topology)
    sites = _sites(args, topology)
    if len(sites) < 2:
        raise ConfigError("need ≥2 sites for a mesh")
    manifest = _manifest(args, calibrate_default=True)
    policy = _policy(args)
    goal = args.goal * 1e9
    matrix = harness.run_mesh(topology, manifest, policy, args.seed, sites=sites)
    diagnoses = None
    if args.diagnose:
        diagnoses = harness.triangulate(matrix, _components(topology, sites, args, policy), goal)
    out = _out_dir(args)
    text = harness.render_matrix(matrix, goal)
    if out:
        (out / "matrix.txt").write_text(text, encoding="utf-8")
        (out / "matrix.csv").write_text(matrix.to_csv(), encoding="utf-8")
        if diagnoses is not None:
            (out / "diagnosis.json").write_text(harness.diagnoses_to_json(diagnoses), encoding="utf-8")
    if args.format == "structured":
        doc = {
            "sites": list(matrix.sites),
            "goal_gbps": args.goal,
            "rates_gbps": [{"src": s, "dst": d, "gbps": round(matrix.rates[(s, d)] / 1e9, 6)} for s, d in matrix.pairs()],
            "below_goal": [list(p) for p in matrix.below(goal)],
            "failures": [{"src": s, "dst": d, "reason": r} for s, d, r in matrix.failures],
        }
        if diagnoses is not None:
            doc["diagnosis"] = [x.to_dict() for x in diagnoses]
        _emit(_dump(doc))
    elif args.format == "csv":
        _emit(matrix.to_csv())
    else:
        _emit(text)
        if diagnoses is not None:
            _emit("\n" + _diagnosis_text(diagnoses))
    for s, d, reason in matrix.failures:
        print(f"pdtn: pair {s}->{d} failed: {reason}", file=sys.stderr)
    return EXIT_TRANSFER if matrix.failures else EXIT_OK


def cmd_components(args) -> int:
    topology = resolve_topology(args.topology)
    sites = _sites(args, topology)
    reports = _components(topology, sites, args, _policy(args))
    if args.format == "structured":
        _emit(_dump([r.to_dict() for r in reports.values()]))
        text = None
    else:
        rows = []
        for r in reports.values():
            rows.append((r.site, "fs_read", "", r.fs_read_rate))
            rows.append((r.site, "fs_write", "", r.fs_write_rate))
            rows.append((r.site, "dtn_loopback", "", r.dtn_loopback_rate))
            rows.extend((r.site, "wan", peer, rate) for peer, rate in sorted(r.wan_path_rates.items()))
        if args.format == "csv":
            text = "site,component,peer,gbps\n" + "".join(f"{s},{c},{p},{v / 1e9:.6f}\n" for s, c, p, v in rows)
        else:
            text = "".join(f"{s:<8} {c + (':' + p if p else ''):<18} {v / 1e9:8.2f} Gb/s\n" for s, c, p, v in rows)
        _emit(text)
    out = _out_dir(args)
    if out:
        (out / "components.json").write_text(_dump([r.to_dict() for r in reports.values()]), encoding="utf-8")
    return EXIT_OK


def _read_matrix(path: str) -> harness.RateMatrix:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"matrix file not found: {path}") from None
    try:
        return harness.RateMatrix.from_csv(text)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_diagnose(args) -> int:
    topology = resolve_topology(args.topology)
    policy = _policy(args)
    goal = args.goal * 1e9
    if args.matrix:
        matrix = _read_matrix(args.matrix)
    else:
        sites = _sites(args, topology)
        if len(sites) < 2:
            raise ConfigError("need ≥2 sites for a mesh")
        matrix = harness.run_mesh(topology, _manifest(args, calibrate_default=True), policy, args.seed, sites=sites)
    try:
        diagnoses = harness.triangulate(matrix, _components(topology, matrix.sites, args, policy), goal)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    doc = harness.diagnoses_to_json(diagnoses)
    out = _out_dir(args)
    if out:
        (out / "diagnosis.json").write_text(doc, encoding="utf-8")
    if args.format == "structured":
        _emit(doc)
    elif args.format == "csv":
        _emit("suspect,location\n" + "".join(f"{d.suspect},{'|'.join(d.location)}\n" for d in diagnoses))
    else:
        _emit(_diagnosis_text(diagnoses))
    return EXIT_OK


def cmd_render(args) -> int:
    matrix = _read_matrix(args.matrix)
    goal = args.goal * 1e9
    text = harness.render_matrix(matrix, goal)
    out = _out_dir(args)
    if out:
        (out / "matrix.txt").write_text(text, encoding="utf-8")
    _emit(matrix.to_csv() if args.format == "csv" else text)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"seed for every random stream (default {DEFAULT_SEED})")
    p.add_argument("--topology", default=DEFAULT_TOPOLOGY, help="topology file or fixture name (default end-state)")
    p.add_argument("--format", choices=("text", "csv", "structured"), default="text")
    p.add_argument("--out", "-o", help="output file (gen-dataset) or directory (other commands)")
    return p


def _dataset_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--manifest", help="read the manifest from a file instead of generating it")
    g.add_argument("--preset", default="petascale-reference", help="named dataset (petascale-reference)")
    g.add_argument("--counts", help="decade counts, e.g. '1M-10M=50,1G-10G=4'")
    g.add_argument("--calibrate", action="store_true", help="calibrate sizes to the target byte total")
    g.add_argument("--total-bytes", type=int, help="byte target when calibrating")
    g.add_argument("--scale", default="1", help="scale factor applied to the byte target (a fraction)")


def _policy_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("transfer policy")
    g.add_argument("--network-use", choices=tuple(engine.NETWORK_USE), default="aggressive")
    g.add_argument("--policy.batch", dest="policy_batch", type=int, help="files in the first batch")
    g.add_argument("--policy.escalated", dest="policy_escalated", type=int, help="files per batch after escalation")
    g.add_argument("--policy.concurrency", dest="policy_concurrency", type=int)
    g.add_argument("--policy.streams", dest="policy_streams", type=int)
    g.add_argument("--policy.overhead", dest="policy_overhead", type=float, help="seconds of overhead per file")
    g.add_argument("--no-escalate", action="store_true", help="keep the first batch size for the whole job")
    g.add_argument("--no-checksum", action="store_true")
    g.add_argument("--max-retries", type=int)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="pdtn", description="Simulated multi-DTN bulk transfer toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-dataset", parents=[common], help="generate a dataset manifest")
    _dataset_options(p)
    p.add_argument("--empty", action="store_true", help="emit an empty manifest")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("transfer", parents=[common], help="run one transfer job")
    _dataset_options(p)
    _policy_options(p)
    p.add_argument("--src")
    p.add_argument("--dst")
    p.add_argument("--job-id")
    p.add_argument("--corruption", type=float, default=0.0, help="per-file corruption probability")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("mesh", parents=[common], help="pairwise transfers across sites")
    _dataset_options(p)
    _policy_options(p)
    p.add_argument("--sites", help="comma-separated subset of sites")
    p.add_argument("--goal", type=float, default=harness.DEFAULT_GOAL / 1e9, help="goal in Gb/s")
    p.add_argument("--diagnose", action="store_true", help="triangulate bottlenecks from component tests")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("components", parents=[common], help="filesystem, WAN and DTN component tests")
    _policy_options(p)
    p.add_argument("--sites", help="comma-separated subset of sites")
    p.set_defaults(func=cmd_components)

    p = sub.add_parser("diagnose", parents=[common], help="triangulate bottlenecks")
    _dataset_options(p)
    _policy_options(p)
    p.add_argument("--matrix", help="mesh CSV (src,dst,gbps); runs the mesh when omitted")
    p.add_argument("--sites", help="comma-separated subset of sites")
    p.add_argument("--goal", type=float, default=harness.DEFAULT_GOAL / 1e9, help="goal in Gb/s")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("render", parents=[common], help="render a mesh CSV as a rate table")
    p.add_argument("--matrix", required=True, help="mesh CSV (src,dst,gbps)")
    p.add_argument("--goal", type=float, default=harness.DEFAULT_GOAL / 1e9, help="goal in Gb/s")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"pdtn: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TopologyError, dataset.ManifestFormatError, dataset.CalibrationError, ValueError, KeyError) as exc:
        print(f"pdtn: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"pdtn: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
