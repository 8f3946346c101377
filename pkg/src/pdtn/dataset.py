"""Reference test data set: generation, summary, manifest I/O and materialization.

A manifest describes a directory tree by path, size and a per-file content
seed. File bodies are never stored; they are regenerated on demand from the
seed with a counter-mode generator (``content_stream``), so checksums are
reproducible without holding terabytes of data.
"""
from __future__ import annotations

import math
import os
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = [
    "DECADE_LABELS",
    "REFERENCE_COUNTS",
    "REFERENCE_DIRECTORIES",
    "REFERENCE_MAX_FILE_BYTES",
    "REFERENCE_TOTAL_BYTES",
    "DEFAULT_MATERIALIZE_CAP",
    "CalibrationError",
    "DatasetManifest",
    "FileEntry",
    "ManifestFormatError",
    "MaterializeError",
    "SizeHistogram",
    "content_stream",
    "decade_bounds",
    "decade_index",
    "decade_label",
    "format_manifest",
    "generate_manifest",
    "materialize",
    "parse_manifest",
    "read_manifest",
    "reference_manifest",
    "summarize",
    "write_manifest",
]

# File counts per order of magnitude for the reference directory.
REFERENCE_COUNTS: dict[str, int] = {
    "0-10": 7,
    "10-100": 1,
    "100-1K": 59,
    "1K-10K": 3170,
    "10K-100K": 1560,
    "100K-1M": 2817,
    "1M-10M": 3901,
    "10M-100M": 3800,
    "100M-1G": 2295,
    "1G-10G": 1647,
    "10G-100G": 3,
}
REFERENCE_TOTAL_BYTES = 4_442_781_786_482
REFERENCE_DIRECTORIES = 211
REFERENCE_MAX_FILE_BYTES = 11_300_000_000

DEFAULT_MATERIALIZE_CAP = 2 * 10**9
MAX_DIRECTORY_DEPTH = 3

_SUFFIXES = ["", "K", "M", "G", "T", "P", "E"]
_MANIFEST_MAGIC = "pdtn-manifest"
_MANIFEST_VERSION = "v1"
_STREAM_CHUNK_WORDS = 1 << 19  # 4 MiB per chunk


def _power_label(k: int) -> str:
    group, rem = divmod(k, 3)
    return f"{10**rem}{_SUFFIXES[group]}"


def decade_label(k: int) -> str:
    """Label of decade ``k`` in the Table-1 style, e.g. 3 -> ``"1K-10K"``."""
    if k < 0:
        raise ValueError(f"decade index must be >= 0, got {k}")
    lo = "0" if k == 0 else _power_label(k)
    return f"{lo}-{_power_label(k + 1)}"


DECADE_LABELS: tuple[str, ...] = tuple(decade_label(k) for k in range(15))
_LABEL_INDEX = {label: k for k, label in enumerate(DECADE_LABELS)}


def decade_index(size: int) -> int:
    """Decade of a byte size: [10^k, 10^(k+1)) for k >= 1, with 0..9 in decade 0."""
    if size < 0:
        raise ValueError(f"size must be >= 0, got {size}")
    if size < 10:
        return 0
    return len(str(int(size))) - 1


def decade_bounds(k: int) -> tuple[int, int]:
    """Inclusive (lo, hi) byte bounds of decade ``k``."""
    return (0 if k == 0 else 10**k, 10 ** (k + 1) - 1)


def _label_to_index(label: str) -> int:
    try:
        return _LABEL_INDEX[label]
    except KeyError:
        raise ValueError(f"unknown decade label {label!r}") from None


@dataclass(frozen=True, slots=True)
class FileEntry:
    path: str
    size_bytes: int
    content_seed: int

    def __post_init__(self) -> None:
        if not self.path or self.path.startswith("/") or "\\" in self.path:
            raise ValueError(f"invalid relative path {self.path!r}")
        if any(part in ("", ".", "..") for part in self.path.split("/")):
            raise ValueError(f"invalid path component in {self.path!r}")
        if self.size_bytes < 0:
            raise ValueError(f"{self.path}: size_bytes must be >= 0")
        if not 0 <= self.content_seed < 2**64:
            raise ValueError(f"{self.path}: content_seed must be a 64-bit unsigned integer")

    @property
    def directory(self) -> str:
        head, _, _ = self.path.rpartition("/")
        return head


def _directory_prefixes(paths) -> set[str]:
    prefixes: set[str] = set()
    for path in paths:
        parts = path.split("/")[:-1]
        for depth in range(1, len(parts) + 1):
            prefixes.add("/".join(parts[:depth]))
    return prefixes


def _sort_key(path: str) -> tuple[str, ...]:
    return tuple(path.split("/"))


@dataclass(frozen=True)
class DatasetManifest:
    """An ordered file tree. ``entries`` are depth-first lexicographic."""

    entries: tuple[FileEntry, ...]
    directory_count: int
    generator_seed: int = 0
    scale_factor: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        for entry in self.entries:
            if entry.path in seen:
                raise ValueError(f"duplicate path {entry.path!r}")
            seen.add(entry.path)
        actual = len(_directory_prefixes(seen))
        if actual != self.directory_count:
            raise ValueError(
                f"directory_count {self.directory_count} does not match {actual} distinct directories"
            )
        if self.scale_factor <= 0:
            raise ValueError("scale_factor must be > 0")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_bytes(self) -> int:
        return sum(e.size_bytes for e in self.entries)

    @classmethod
    def from_entries(cls, entries, *, generator_seed: int = 0, scale_factor=1) -> DatasetManifest:
        """Build a manifest from arbitrary entries, sorting them and counting directories."""
        ordered = sorted(entries, key=lambda e: _sort_key(e.path))
        dirs = len(_directory_prefixes(e.path for e in ordered))
        return cls(tuple(ordered), dirs, generator_seed, Fraction(scale_factor))


@dataclass(frozen=True)
class SizeHistogram:
    decade_counts: dict[str, int]
    total_bytes: int = 0

    @property
    def file_count(self) -> int:
        return sum(self.decade_counts.values())

    def nonzero(self) -> dict[str, int]:
        return {k: v for k, v in self.decade_counts.items() if v}


class CalibrationError(ValueError):
    """The byte target cannot be met within the decade bounds of the requested counts."""

    def __init__(self, message: str, decade: str):
        super().__init__(message)
        self.decade = decade


class ManifestFormatError(ValueError):
    pass


class MaterializeError(OSError):
    pass


def summarize(manifest: DatasetManifest) -> SizeHistogram:
    """Count files per decade; labels for every decade up to 10G-100G are always present."""
    counts = dict.fromkeys(DECADE_LABELS[:11], 0)
    total = 0
    for entry in manifest.entries:
        label = DECADE_LABELS[decade_index(entry.size_bytes)]
        counts[label] = counts.get(label, 0) + 1
        total += entry.size_bytes
    return SizeHistogram(counts, total)


def _normalize_counts(counts) -> dict[int, int]:
    if isinstance(counts, SizeHistogram):
        counts = counts.decade_counts
    result: dict[int, int] = {}
    for label, n in counts.items():
        k = _label_to_index(label) if isinstance(label, str) else int(label)
        n = int(n)
        if n < 0:
            raise ValueError(f"count for {decade_label(k)} must be >= 0, got {n}")
        if n:
            result[k] = result.get(k, 0) + n
    return dict(sorted(result.items()))


def _directory_tree(count: int) -> list[str]:
    """``count`` directory paths, breadth-first, at most three levels deep."""
    if count <= 0:
        return []
    fanout = 1
    while sum(fanout**d for d in range(1, MAX_DIRECTORY_DEPTH + 1)) < count:
        fanout += 1
    dirs: list[str] = []
    level = [""]
    for depth in range(1, MAX_DIRECTORY_DEPTH + 1):
        # Children are dealt round-robin so the last partial level is spread evenly.
        per_parent = [0] * len(level)
        budget = min(count - len(dirs), fanout * len(level))
        for i in range(budget):
            per_parent[i % len(level)] += 1
        nxt = []
        for parent, n in zip(level, per_parent):
            for j in range(n):
                name = f"d{j:02d}"
                nxt.append(f"{parent}/{name}" if parent else name)
        dirs.extend(nxt)
        level = nxt
        if len(dirs) == count:
            break
    return dirs


def _sample_sizes(decades: np.ndarray, lo: np.ndarray, hi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(decades))
    sizes = np.empty(len(decades), dtype=np.float64)
    first = decades == 0
    sizes[first] = np.floor(u[first] * 10.0)
    rest = ~first
    log_lo = np.log10(lo[rest].astype(np.float64))
    log_hi = np.log10(hi[rest].astype(np.float64) + 1.0)
    sizes[rest] = 10.0 ** (log_lo + u[rest] * (log_hi - log_lo))
    return sizes


def _calibrate(base: np.ndarray, decades: np.ndarray, lo: np.ndarray, hi: np.ndarray, target: int) -> np.ndarray:
    lo_sum, hi_sum = int(lo.sum()), int(hi.sum())
    if not lo_sum <= target <= hi_sum:
        bound = lo if target < lo_sum else hi
        contrib: dict[int, int] = {}
        for k, b in zip(decades.tolist(), bound.tolist()):
            contrib[k] = contrib.get(k, 0) + b
        binding = max(contrib, key=lambda k: (contrib[k], k))
        side = "below the minimum" if target < lo_sum else "above the maximum"
        raise CalibrationError(
            f"byte target {target} is {side} reachable total "
            f"{lo_sum if target < lo_sum else hi_sum}; binding decade {decade_label(binding)}",
            decade_label(binding),
        )

    lo_f, hi_f = lo.astype(np.float64), hi.astype(np.float64)

    def scaled(alpha: float) -> np.ndarray:
        return np.clip(np.floor(base * alpha), lo_f, hi_f).astype(np.int64)

    # Total is monotone in the common multiplier; bisect in log space for the
    # largest multiplier whose clamped total stays at or under the target.
    a, b = -60.0, 60.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if int(scaled(math.exp(mid)).sum()) <= target:
            a = mid
        else:
            b = mid
        if b - a < 1e-15:
            break
    alpha = math.exp(a)
    sizes = scaled(alpha)
    residual = target - int(sizes.sum())

    # Largest-remainder top-up, biggest decade by bytes first.
    frac = base * alpha - np.floor(base * alpha)
    by_bytes: dict[int, int] = {}
    for k, s in zip(decades.tolist(), sizes.tolist()):
        by_bytes[k] = by_bytes.get(k, 0) + s
    for k in sorted(by_bytes, key=lambda k: (-by_bytes[k], -k)):
        if residual <= 0:
            break
        idx = np.flatnonzero(decades == k)
        while residual > 0:
            room = hi[idx] - sizes[idx]
            open_idx = idx[room > 0]
            if len(open_idx) == 0:
                break
            order = open_idx[np.lexsort((open_idx, -frac[open_idx]))]
            share, extra = divmod(residual, len(order))
            add = np.full(len(order), share, dtype=np.int64)
            add[:extra] += 1
            add = np.minimum(add, hi[order] - sizes[order])
            sizes[order] += add
            residual -= int(add.sum())
    return sizes


def generate_manifest(
    counts: Mapping[str, int] | SizeHistogram,
    total_bytes_target: int | None = None,
    seed: int = 0,
    scale_factor=1,
    *,
    directory_count: int = REFERENCE_DIRECTORIES,
    max_file_bytes: int | None = None,
) -> DatasetManifest:
    """Generate a manifest whose decade histogram equals ``counts`` exactly.

    Sizes are drawn log-uniformly inside each decade (uniformly over 0..9 for
    the first). When ``total_bytes_target`` is given, sizes are rescaled by a
    common multiplier, clamped to their decade, so the total equals
    ``round(scale_factor * total_bytes_target)``. Files are shuffled over
    ``min(directory_count, files)`` directories, each holding at least one file.

    Raises CalibrationError when the target cannot be met inside the decade bounds.
    """
    scale = Fraction(scale_factor)
    if scale <= 0:
        raise ValueError("scale_factor must be > 0")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    per_decade = _normalize_counts(counts)
    n_files = sum(per_decade.values())
    if n_files == 0:
        return DatasetManifest((), 0, seed, scale)
    if total_bytes_target is not None and total_bytes_target <= 0:
        raise ValueError("total_bytes_target must be > 0 when calibrating")

    rng = np.random.default_rng(seed)
    decades = np.concatenate([np.full(n, k, dtype=np.int64) for k, n in per_decade.items()])
    lo = np.array([decade_bounds(k)[0] for k in decades.tolist()], dtype=np.int64)
    hi = np.array([decade_bounds(k)[1] for k in decades.tolist()], dtype=np.int64)
    if max_file_bytes is not None:
        hi = np.minimum(hi, max_file_bytes)
        if np.any(hi < lo):
            k = int(decades[np.argmax(hi < lo)])
            raise CalibrationError(f"max_file_bytes {max_file_bytes} is below decade {decade_label(k)}", decade_label(k))

    base = _sample_sizes(decades, lo, hi, rng)
    if total_bytes_target is None:
        sizes = np.clip(np.floor(base), lo, hi).astype(np.int64)
    else:
        target = round(scale * total_bytes_target)
        sizes = _calibrate(base, decades, lo, hi, target)

    dirs = _directory_tree(min(directory_count, n_files))
    order = rng.permutation(n_files)
    slot = np.empty(n_files, dtype=np.int64)
    slot[: len(dirs)] = np.arange(len(dirs))
    slot[len(dirs):] = rng.integers(0, len(dirs), size=n_files - len(dirs))
    seeds = rng.integers(0, 2**64, size=n_files, dtype=np.uint64)

    per_dir_index = [0] * len(dirs)
    entries = []
    for pos, file_idx in enumerate(order.tolist()):
        d = int(slot[pos])
        name = f"f{per_dir_index[d]:05d}.dat"
        per_dir_index[d] += 1
        entries.append(FileEntry(f"{dirs[d]}/{name}", int(sizes[file_idx]), int(seeds[pos])))
    entries.sort(key=lambda e: _sort_key(e.path))
    return DatasetManifest(tuple(entries), len(dirs), seed, scale)


def reference_manifest(seed: int = 42, *, calibrate: bool = True, scale_factor=1) -> DatasetManifest:
    """The 19,260-file / 211-directory reference set, optionally calibrated to 4.44 TB."""
    return generate_manifest(
        REFERENCE_COUNTS,
        REFERENCE_TOTAL_BYTES if calibrate else None,
        seed,
        scale_factor,
        directory_count=REFERENCE_DIRECTORIES,
        max_file_bytes=REFERENCE_MAX_FILE_BYTES,
    )


# -- content ---------------------------------------------------------------

def content_stream(content_seed: int, size_bytes: int, chunk_bytes: int | None = None) -> Iterator[bytes]:
    """Yield the deterministic byte content of a file in chunks.

    Philox is counter based, so the stream is a pure function of
    (content_seed, offset) and chunking does not change the bytes produced.
    """
    if size_bytes < 0:
        raise ValueError("size_bytes must be >= 0")
    words_per_chunk = _STREAM_CHUNK_WORDS if chunk_bytes is None else max(1, chunk_bytes // 8)
    gen = np.random.Philox(key=content_seed)
    remaining = size_bytes
    while remaining > 0:
        n_words = min(words_per_chunk, -(-remaining // 8))
        block = gen.random_raw(n_words).astype("<u8").tobytes()
        if len(block) > remaining:
            block = block[:remaining]
        remaining -= len(block)
        yield block


def materialize(
    manifest: DatasetManifest,
    root_dir: str | os.PathLike,
    *,
    cap_bytes: int = DEFAULT_MATERIALIZE_CAP,
) -> int:
    """Write every manifest file under ``root_dir``; returns the number written."""
    total = manifest.total_bytes
    if total > cap_bytes:
        raise MaterializeError(f"manifest holds {total} bytes, above the {cap_bytes}-byte cap")
    root = Path(root_dir)
    written = 0
    for entry in manifest.entries:
        target = root / entry.path
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "wb") as fh:
                for chunk in content_stream(entry.content_seed, entry.size_bytes):
                    fh.write(chunk)
        except OSError as exc:
            raise MaterializeError(f"{target}: {exc}") from exc
        written += 1
    return written


# -- manifest file format ----------------------------------------------------

def format_manifest(manifest: DatasetManifest) -> str:
    header = (
        f"{_MANIFEST_MAGIC} {_MANIFEST_VERSION} seed={manifest.generator_seed:016x} "
        f"dirs={manifest.directory_count} files={len(manifest)} bytes={manifest.total_bytes}"
    )
    lines = [header]
    lines.extend(f"{e.path}\t{e.size_bytes}\t{e.content_seed:016x}" for e in manifest.entries)
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> DatasetManifest:
    lines = text.splitlines()
    if not lines:
        raise ManifestFormatError("empty manifest text")
    head = lines[0].split(" ")
    if len(head) != 6 or head[0] != _MANIFEST_MAGIC or head[1] != _MANIFEST_VERSION:
        raise ManifestFormatError(f"bad manifest header: {lines[0]!r}")
    fields: dict[str, str] = {}
    for item in head[2:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise ManifestFormatError(f"bad header field {item!r}")
        fields[key] = value
    try:
        seed = int(fields["seed"], 16)
        dirs, files, total = int(fields["dirs"]), int(fields["files"]), int(fields["bytes"])
    except (KeyError, ValueError) as exc:
        raise ManifestFormatError(f"bad manifest header: {lines[0]!r}") from exc

    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ManifestFormatError(f"line {lineno}: expected 3 tab-separated fields")
        try:
            entries.append(FileEntry(parts[0], int(parts[1]), int(parts[2], 16)))
        except ValueError as exc:
            raise ManifestFormatError(f"line {lineno}: {exc}") from exc
    if len(entries) != files or sum(e.size_bytes for e in entries) != total:
        raise ManifestFormatError("header totals disagree with manifest body")
    if [_sort_key(e.path) for e in entries] != sorted(_sort_key(e.path) for e in entries):
        raise ManifestFormatError("entries are not in depth-first lexicographic order")
    try:
        return DatasetManifest(tuple(entries), dirs, seed)
    except ValueError as exc:
        raise ManifestFormatError(str(exc)) from exc


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    Path(path).write_text(format_manifest(manifest), encoding="utf-8", newline="\n")


def read_manifest(path: str | os.PathLike) -> DatasetManifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))
