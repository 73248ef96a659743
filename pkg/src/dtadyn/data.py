"""Affinity-record ingestion, transformation, descriptor joining, and folds.

Raw affinities in nM become dimensionless values via -log10(value / 1e9);
negatives after transformation are dropped.  KIBA-scored records are already
on the transformed scale and bypass the formula.  Records join dynamics
descriptors case-insensitively on pdb_id; unmatched records are dropped with
a counted reason.

Prepared-dataset cache (binary, little-endian, so training never re-parses
the raw delimited files) — field order, version 1:

    magic b"DTAC" | u32 version | u32 record count
    per record:
        str smiles | str protein_sequence | str pdb_id
        u8 measure (0=Kd 1=Ki 2=IC50 3=KIBA)
        u8 has_raw | f64 raw_value (only if has_raw)
        f64 affinity | f64 x4 descriptors (avg_rmsf, avg_gyr, div_se, div_mm)

    str = u32 byte length + UTF-8 bytes.
"""

from __future__ import annotations

import csv
import math
import struct
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from . import smiles as smiles_mod
from .protein import DuplicatePdbId, DynamicDescriptor

MEASURES = ("Kd", "Ki", "IC50", "KIBA")

CACHE_MAGIC = b"DTAC"
CACHE_VERSION = 1


class NonPositiveValue(ValueError):
    pass


class TooFewRecords(ValueError):
    pass


@dataclass(frozen=True)
class AffinityRecord:
    """One drug-target pair with its transformed affinity."""

    smiles: str
    protein_sequence: str
    pdb_id: str
    measure: str
    raw_value: float | None
    affinity: float
    descriptors: DynamicDescriptor | None = None


@dataclass
class DropReport:
    """Counts of records removed (by reason) or flagged during preparation."""

    dropped: Counter = field(default_factory=Counter)
    warnings: Counter = field(default_factory=Counter)

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped.values())


@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignments: np.ndarray  # per-record fold index in [0, k)

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)


def transform_affinity(raw_value: float) -> float:
    """-log10(value / 1e9) for a raw affinity in nM."""
    if raw_value <= 0:
        raise NonPositiveValue(f"affinity value must be positive, got {raw_value}")
    return 9.0 - math.log10(raw_value)


def read_affinity_file(path) -> tuple[list[AffinityRecord], DropReport]:
    """Read the affinity input file (header: smiles, protein_sequence,
    pdb_id, measure, value) and apply the log transform.

    Rows with a non-positive value or an unknown measure are dropped and
    counted, not fatal.  Raises ValueError with a line number on
    structurally malformed rows.
    """
    records: list[AffinityRecord] = []
    report = DropReport()
    with open(path, newline="") as fh:
        sample = fh.readline()
        delim = "\t" if "\t" in sample else ","
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=delim)
        required = ("smiles", "protein_sequence", "pdb_id", "measure", "value")
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise ValueError(f"affinity file missing column(s): {', '.join(missing)}")
        for line_no, row in enumerate(reader, start=2):
            try:
                value = float(row["value"])
            except (ValueError, TypeError):
                raise ValueError(
                    f"line {line_no}: value {row.get('value')!r} is not a number"
                ) from None
            measure = row["measure"].strip()
            if measure not in MEASURES:
                report.dropped["unknown_measure"] += 1
                continue
            if measure == "KIBA":
                raw, affinity = None, value  # already on the transformed scale
            else:
                if value <= 0:
                    report.dropped["non_positive_value"] += 1
                    continue
                raw, affinity = value, transform_affinity(value)
            records.append(
                AffinityRecord(
                    smiles=row["smiles"].strip(),
                    protein_sequence=row["protein_sequence"].strip(),
                    pdb_id=row["pdb_id"].strip(),
                    measure=measure,
                    raw_value=raw,
                    affinity=affinity,
                )
            )
    return records, report


def filter_records(
    records: list[AffinityRecord],
    descriptor_table: dict[str, DynamicDescriptor],
    report: DropReport | None = None,
) -> tuple[list[AffinityRecord], DropReport]:
    """Drop negative affinities, unmatched pdb_ids, and unparseable SMILES.

    Filtering is total: every removal lands in the report under its reason.
    Duplicate (smiles, pdb_id, measure) rows are kept but counted as
    warnings.
    """
    report = report or DropReport()
    kept: list[AffinityRecord] = []
    seen: set[tuple[str, str, str]] = set()
    for rec in records:
        if rec.affinity < 0:
            report.dropped["negative_affinity"] += 1
            continue
        if rec.pdb_id.upper() not in descriptor_table:
            report.dropped["no_descriptor"] += 1
            continue
        try:
            smiles_mod.parse(smiles_mod.tokenize(rec.smiles))
        except smiles_mod.SmilesError:
            report.dropped["unparseable_smiles"] += 1
            continue
        key = (rec.smiles, rec.pdb_id.upper(), rec.measure)
        if key in seen:
            report.warnings["duplicate_pair"] += 1
        seen.add(key)
        kept.append(rec)
    return kept, report


def join_descriptors(
    records: list[AffinityRecord],
    descriptor_table: dict[str, DynamicDescriptor],
) -> list[AffinityRecord]:
    """Attach each record's descriptor row, matching pdb_id case-insensitively.

    The table must be keyed uniquely (uppercased); a table built elsewhere
    with case-colliding keys raises DuplicatePdbId.
    """
    upper: dict[str, DynamicDescriptor] = {}
    for key, desc in descriptor_table.items():
        up = key.upper()
        if up in upper:
            raise DuplicatePdbId(f"pdb_id {up!r} appears more than once")
        upper[up] = desc
    return [replace(rec, descriptors=upper[rec.pdb_id.upper()]) for rec in records]


def prepare(
    records: list[AffinityRecord],
    descriptor_table: dict[str, DynamicDescriptor],
    report: DropReport | None = None,
) -> tuple[list[AffinityRecord], DropReport]:
    """filter -> join: the standard preparation pipeline."""
    kept, report = filter_records(records, descriptor_table, report)
    return join_descriptors(kept, descriptor_table), report


def kfold_split(n_records: int, k: int = 5, seed: int = 0) -> FoldSplit:
    """Seeded shuffle then round-robin assignment; sizes differ by at most 1."""
    if n_records < k:
        raise TooFewRecords(f"{n_records} records cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_records)
    assignments = np.empty(n_records, dtype=np.int64)
    assignments[order] = np.arange(n_records) % k
    return FoldSplit(k=k, assignments=assignments)


@dataclass(frozen=True)
class DatasetSummary:
    targets: int
    ligands: int
    entries: int
    histogram: list[tuple[float, float, int]]  # (bin lo, bin hi, count)


def summarize(records: list[AffinityRecord], bin_width: float = 0.5) -> DatasetSummary:
    """Unique-target/ligand/entry counts plus an affinity histogram."""
    if not records:
        return DatasetSummary(0, 0, 0, [])
    affinities = np.array([r.affinity for r in records])
    lo = math.floor(affinities.min() / bin_width) * bin_width
    hi = math.ceil(affinities.max() / bin_width) * bin_width
    n_bins = max(1, round((hi - lo) / bin_width))
    counts, edges = np.histogram(affinities, bins=n_bins, range=(lo, lo + n_bins * bin_width))
    histogram = [
        (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(n_bins)
    ]
    return DatasetSummary(
        targets=len({r.pdb_id.upper() for r in records}),
        ligands=len({r.smiles for r in records}),
        entries=len(records),
        histogram=histogram,
    )


# ---------------------------------------------------------------------------
# prepared-dataset cache


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, fmt: str):
        values = struct.unpack_from("<" + fmt, self.blob, self.pos)
        self.pos += struct.calcsize("<" + fmt)
        return values if len(values) > 1 else values[0]

    def take_str(self) -> str:
        n = self.take("I")
        raw = self.blob[self.pos : self.pos + n]
        self.pos += n
        return raw.decode("utf-8")


def save_cache(path, records: list[AffinityRecord]) -> None:
    """Write prepared records to the versioned binary cache format."""
    parts = [CACHE_MAGIC, struct.pack("<II", CACHE_VERSION, len(records))]
    for rec in records:
        if rec.descriptors is None:
            raise ValueError("record missing descriptors; run prepare() first")
        parts.append(_pack_str(rec.smiles))
        parts.append(_pack_str(rec.protein_sequence))
        parts.append(_pack_str(rec.pdb_id))
        parts.append(struct.pack("<B", MEASURES.index(rec.measure)))
        if rec.raw_value is None:
            parts.append(struct.pack("<B", 0))
        else:
            parts.append(struct.pack("<Bd", 1, rec.raw_value))
        parts.append(struct.pack("<d", rec.affinity))
        parts.append(struct.pack("<4d", *rec.descriptors.as_vector()))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_cache(path) -> list[AffinityRecord]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a prepared-dataset cache")
    reader = _Reader(blob)
    reader.pos = 4
    version, count = reader.take("II")
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
    records = []
    for _ in range(count):
        smiles = reader.take_str()
        seq = reader.take_str()
        pdb_id = reader.take_str()
        measure = MEASURES[reader.take("B")]
        raw = reader.take("d") if reader.take("B") else None
        affinity = reader.take("d")
        desc = DynamicDescriptor(*reader.take("4d"))
        records.append(
            AffinityRecord(
                smiles=smiles,
                protein_sequence=seq,
                pdb_id=pdb_id,
                measure=measure,
                raw_value=raw,
                affinity=affinity,
                descriptors=desc,
            )
        )
    return records
