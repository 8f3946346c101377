import hashlib
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import decade_of, digest_of_stream, resum_manifest_file
from pdtn.dataset import (
    DECADE_LABELS,
    REFERENCE_COUNTS,
    REFERENCE_TOTAL_BYTES,
    CalibrationError,
    DatasetManifest,
    FileEntry,
    ManifestFormatError,
    MaterializeError,
    content_stream,
    decade_label,
    format_manifest,
    generate_manifest,
    materialize,
    parse_manifest,
    read_manifest,
    reference_manifest,
    summarize,
    write_manifest,
)
from pdtn.engine import checksum_of


@pytest.fixture(scope="module")
def reference():
    return reference_manifest(42)


def test_reference_counts_and_directories(reference):
    assert len(reference) == 19260
    assert reference.directory_count == 211
    assert summarize(reference).nonzero() == dict(REFERENCE_COUNTS)


def test_reference_total_and_extremes(reference):
    sizes = [e.size_bytes for e in reference.entries]
    assert sum(sizes) == REFERENCE_TOTAL_BYTES
    assert min(sizes) == 0 or min(sizes) < 10
    assert max(sizes) <= 11_300_000_000


def test_bucket_rule_examples():
    m = DatasetManifest.from_entries([FileEntry("a/x", 5, 1), FileEntry("a/y", 500, 2), FileEntry("b/z", 5_000_000, 3)])
    h = summarize(m)
    assert h.decade_counts["0-10"] == 1
    assert h.decade_counts["100-1K"] == 1
    assert h.decade_counts["1M-10M"] == 1
    assert h.file_count == 3
    assert h.total_bytes == 5_000_505


@pytest.mark.parametrize("size,label", [(0, "0-10"), (9, "0-10"), (10, "10-100"), (999, "100-1K"), (1000, "1K-10K"),
                                        (10**9, "1G-10G"), (11_300_000_000, "10G-100G")])
def test_bucket_boundaries(size, label):
    m = DatasetManifest.from_entries([FileEntry("d/f", size, 0)])
    assert summarize(m).nonzero() == {label: 1}
    assert DECADE_LABELS[decade_of(size)] == label


def test_labels():
    assert decade_label(0) == "0-10"
    assert decade_label(3) == "1K-10K"
    assert decade_label(10) == "10G-100G"


def test_empty_counts():
    m = generate_manifest({k: 0 for k in REFERENCE_COUNTS})
    assert len(m) == 0 and m.directory_count == 0 and m.total_bytes == 0
    h = summarize(m)
    assert h.total_bytes == 0 and all(v == 0 for v in h.decade_counts.values())


def test_determinism(reference):
    again = reference_manifest(42)
    assert format_manifest(again) == format_manifest(reference)
    assert format_manifest(reference_manifest(43)) != format_manifest(reference)


def test_scale_factor_calibration():
    m = reference_manifest(1, scale_factor=Fraction(1, 2))
    target = REFERENCE_TOTAL_BYTES / 2
    assert abs(m.total_bytes - target) / target <= 0.005
    assert summarize(m).nonzero() == dict(REFERENCE_COUNTS)
    assert m.scale_factor == Fraction(1, 2)


def test_scale_below_decade_floor_is_infeasible():
    # 1,647 files of at least 1 GB already exceed a hundredth of the target.
    with pytest.raises(CalibrationError) as err:
        reference_manifest(1, scale_factor=Fraction(1, 100))
    assert err.value.decade == "1G-10G"


def test_uncalibrated_keeps_histogram():
    m = reference_manifest(3, calibrate=False)
    assert summarize(m).nonzero() == dict(REFERENCE_COUNTS)


def test_infeasible_calibration_names_decade():
    with pytest.raises(CalibrationError) as err:
        generate_manifest({"1K-10K": 10}, 10**9, seed=1)
    assert err.value.decade == "1K-10K"
    assert "1K-10K" in str(err.value)


def test_bad_counts():
    with pytest.raises(ValueError):
        generate_manifest({"1K-10K": -1})
    with pytest.raises(ValueError):
        generate_manifest({"nope": 3})
    with pytest.raises(ValueError):
        generate_manifest({"1K-10K": 3}, scale_factor=0)


counts_strategy = st.dictionaries(
    st.sampled_from(DECADE_LABELS[:9]), st.integers(min_value=0, max_value=40), min_size=1, max_size=6
)


@settings(max_examples=40, deadline=None)
@given(counts=counts_strategy, seed=st.integers(0, 2**32), dirs=st.integers(1, 30))
def test_histogram_round_trip_and_directories(counts, seed, dirs):
    m = generate_manifest(counts, seed=seed, directory_count=dirs)
    assert summarize(m).nonzero() == {k: v for k, v in counts.items() if v}
    prefixes = {"/".join(e.path.split("/")[:k]) for e in m.entries for k in range(1, len(e.path.split("/")))}
    assert len(prefixes) == m.directory_count
    paths = [e.path for e in m.entries]
    assert len(set(paths)) == len(paths)
    assert all(not p.startswith("/") for p in paths)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), frac=st.floats(0.05, 0.95))
def test_calibration_accuracy_property(seed, frac):
    counts = {"1K-10K": 30, "1M-10M": 20, "100M-1G": 5}
    lo = 30 * 10**3 + 20 * 10**6 + 5 * 10**8
    hi = 30 * 10**4 + 20 * 10**7 + 5 * 10**9
    target = int(lo + frac * (hi - lo))
    m = generate_manifest(counts, target, seed)
    assert abs(m.total_bytes - target) / target <= 0.005
    assert summarize(m).nonzero() == counts


def test_manifest_file_round_trip(tmp_path, reference):
    path = tmp_path / "m.tsv"
    write_manifest(reference, path)
    header = path.read_text().splitlines()[0]
    assert header == "pdtn-manifest v1 seed=000000000000002a dirs=211 files=19260 bytes=4442781786482"
    total, files, dirs = resum_manifest_file(path)
    assert (total, files, dirs) == (REFERENCE_TOTAL_BYTES, 19260, 211)
    assert read_manifest(path) == reference


def test_manifest_header_must_agree():
    text = format_manifest(generate_manifest({"1K-10K": 3}, seed=1))
    broken = text.replace("files=3", "files=4")
    with pytest.raises(ManifestFormatError):
        parse_manifest(broken)
    with pytest.raises(ManifestFormatError):
        parse_manifest("garbage\n")


def test_content_stream_chunking_invariant():
    whole = b"".join(content_stream(99, 100_003))
    pieces = b"".join(content_stream(99, 100_003, chunk_bytes=4096))
    assert whole == pieces and len(whole) == 100_003
    assert b"".join(content_stream(99, 17)) == whole[:17]


def test_checksum_empty_and_purity():
    assert checksum_of(1, 0) == hashlib.sha256(b"").digest() == checksum_of(2**63, 0)
    assert checksum_of(5, 12345) == checksum_of(5, 12345)
    assert checksum_of(5, 12345) == digest_of_stream(5, 12345)


def test_materialize_zero_byte_file(tmp_path):
    m = DatasetManifest.from_entries([FileEntry("d/empty", 0, 3)])
    assert materialize(m, tmp_path) == 1
    assert (tmp_path / "d/empty").stat().st_size == 0


def test_materialize_matches_checksum(tmp_path):
    seed = 0xDEADBEEF
    m = DatasetManifest.from_entries([FileEntry("a/b/one", 1_048_576, seed)])
    materialize(m, tmp_path)
    data = (tmp_path / "a/b/one").read_bytes()
    assert len(data) == 1_048_576
    assert hashlib.sha256(data).digest() == checksum_of(seed, 1_048_576)
    materialize(m, tmp_path)  # idempotent
    assert (tmp_path / "a/b/one").read_bytes() == data


def test_materialize_cap_writes_nothing(tmp_path):
    m = DatasetManifest.from_entries([FileEntry("x/a", 1_500_000_000, 1), FileEntry("x/b", 1_500_000_000, 2)])
    with pytest.raises(MaterializeError):
        materialize(m, tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_materialize_write_failure_has_path(tmp_path):
    (tmp_path / "blocker").write_text("file, not a directory")
    m = DatasetManifest.from_entries([FileEntry("blocker/f", 4, 1)])
    with pytest.raises(MaterializeError) as err:
        materialize(m, tmp_path)
    assert "blocker" in str(err.value)


def test_file_entry_validation():
    with pytest.raises(ValueError):
        FileEntry("/abs", 1, 0)
    with pytest.raises(ValueError):
        FileEntry("a", -1, 0)
    with pytest.raises(ValueError):
        DatasetManifest.from_entries([FileEntry("a/x", 1, 0), FileEntry("a/x", 2, 0)])
