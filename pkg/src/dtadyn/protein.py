"""Protein-side inputs: integer sequence encoding and the four dynamics
descriptors with min-max normalization.

The residue vocabulary maps the 25 amino-acid letters (20 standard plus
B, O, U, X, Z) to 1..25 in alphabetical order; 0 is padding and unknown.
Normalization statistics are fitted on training records only and applied
with clamping elsewhere, so held-out descriptor values can never leak into
the fitted range.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

# A..Z without J: 25 residue letters, ids 1..25; 0 = padding/unknown.
RESIDUE_ALPHABET = "ABCDEFGHIKLMNOPQRSTUVWXYZ"
RESIDUE_TO_ID = {ch: i + 1 for i, ch in enumerate(RESIDUE_ALPHABET)}
VOCAB_SIZE = len(RESIDUE_ALPHABET) + 1  # 26

DESCRIPTOR_NAMES = ("avg_rmsf", "avg_gyr", "div_se", "div_mm")

MAX_SEQ_LEN = 1000


class EmptyInput(ValueError):
    pass


class DegenerateRange(ValueError):
    pass


class DuplicatePdbId(ValueError):
    pass


@dataclass(frozen=True)
class DynamicDescriptor:
    """Per-protein dynamics summary: residue fluctuation, compactness, and
    two conformation-divergence TM-scores."""

    avg_rmsf: float
    avg_gyr: float
    div_se: float
    div_mm: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.avg_rmsf, self.avg_gyr, self.div_se, self.div_mm],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class NormalizationStats:
    """Per-descriptor (min, max) fitted on training data.

    ``degenerate`` flags descriptors whose fitted range collapsed to a
    point; normalize() refuses to use those.
    """

    mins: tuple[float, float, float, float]
    maxs: tuple[float, float, float, float]

    @property
    def degenerate(self) -> tuple[bool, bool, bool, bool]:
        return tuple(hi <= lo for lo, hi in zip(self.mins, self.maxs))


@dataclass(frozen=True)
class ProteinInput:
    """Model-ready protein: fixed-length id vector plus normalized descriptors."""

    sequence_ids: np.ndarray
    raw_length: int
    descriptors: np.ndarray  # normalized 4-vector in [0, 1]


def encode_sequence(seq: str, max_len: int = MAX_SEQ_LEN) -> np.ndarray:
    """Map a residue string to a fixed-length int vector.

    Case-insensitive; unknown characters map to 0; longer sequences are
    truncated and shorter ones padded with 0.
    """
    ids = np.zeros(max_len, dtype=np.int64)
    for i, ch in enumerate(seq[:max_len]):
        ids[i] = RESIDUE_TO_ID.get(ch.upper(), 0)
    return ids


def fit_normalization(descriptors: list[DynamicDescriptor]) -> NormalizationStats:
    """Per-descriptor minima and maxima over the provided (training) records."""
    if not descriptors:
        raise EmptyInput("cannot fit normalization on zero records")
    table = np.stack([d.as_vector() for d in descriptors])
    return NormalizationStats(
        mins=tuple(float(v) for v in table.min(axis=0)),
        maxs=tuple(float(v) for v in table.max(axis=0)),
    )


def normalize(d: DynamicDescriptor, stats: NormalizationStats) -> np.ndarray:
    """(x - min) / (max - min) per descriptor, clamped to [0, 1]."""
    if any(stats.degenerate):
        bad = [n for n, flag in zip(DESCRIPTOR_NAMES, stats.degenerate) if flag]
        raise DegenerateRange(f"degenerate fitted range for: {', '.join(bad)}")
    lo = np.array(stats.mins)
    hi = np.array(stats.maxs)
    scaled = (d.as_vector() - lo) / (hi - lo)
    return np.clip(scaled, 0.0, 1.0)


def read_descriptor_table(path) -> dict[str, DynamicDescriptor]:
    """Read the descriptor file: delimited text with header columns
    pdb_id, avg_rmsf, avg_gyr, div_se, div_mm.  Keys are uppercased.

    Raises ValueError on a duplicated pdb_id or a missing column.
    """
    table: dict[str, DynamicDescriptor] = {}
    with open(path, newline="") as fh:
        sample = fh.readline()
        delim = "\t" if "\t" in sample else ","
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=delim)
        required = ("pdb_id",) + DESCRIPTOR_NAMES
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise ValueError(f"descriptor file missing column(s): {', '.join(missing)}")
        for line_no, row in enumerate(reader, start=2):
            key = row["pdb_id"].strip().upper()
            if key in table:
                raise DuplicatePdbId(f"duplicate pdb_id {key!r} at line {line_no}")
            try:
                table[key] = DynamicDescriptor(
                    avg_rmsf=float(row["avg_rmsf"]),
                    avg_gyr=float(row["avg_gyr"]),
                    div_se=float(row["div_se"]),
                    div_mm=float(row["div_mm"]),
                )
            except ValueError as exc:
                raise ValueError(f"bad descriptor value at line {line_no}: {exc}") from None
    return table
