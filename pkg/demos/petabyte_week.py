"""How fast must a petabyte move to arrive within a week, and what does the reference dataset look like?"""
from pdtn import dataset
from pdtn.engine import goal_rate

WEEK = 7 * 24 * 3600

rate = goal_rate(10**15, WEEK)
print(f"1 PB in one week needs {rate / 1e9:.2f} Gb/s sustained")

manifest = dataset.reference_manifest(seed=42)
hist = dataset.summarize(manifest)
print(f"\nreference dataset: {len(manifest)} files in {manifest.directory_count} directories, "
      f"{manifest.total_bytes / 1e12:.2f} TB")
for label, count in hist.nonzero().items():
    print(f"  {label:<10}{count:>7}")

for gbps in (10, 15, 25):
    hours = manifest.total_bytes * 8 / (gbps * 1e9) / 3600
    print(f"at {gbps:>2} Gb/s the dataset takes {hours:5.1f} h")
