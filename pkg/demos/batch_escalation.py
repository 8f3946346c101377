"""Growing batches after a clean first batch versus staying at 1000 files."""
from pathlib import Path

from pdtn.dataset import reference_manifest
from pdtn.engine import TransferJob, TransferPolicy, execute
from pdtn.topology import load_topology_file

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "pdtn" / "fixtures"

topology = load_topology_file(FIXTURES / "end-state.json")
manifest = reference_manifest(seed=42)

for label, policy in (("fixed 1000", TransferPolicy.fixed(1000)), ("1000 -> 10000", TransferPolicy())):
    report = execute(TransferJob(label, manifest, "ALCF", "NCSA", policy, seed=42), topology)
    print(f"{label:<14} {len(report.batches):>3} batches  {report.elapsed_s:8.1f} s  {report.avg_gbps:6.2f} Gb/s")
    for b in report.batches[:3]:
        print(f"    {b.id}: {b.files:>5} files {b.bytes / 1e9:9.1f} GB in {b.end_s - b.start_s:7.1f} s")
