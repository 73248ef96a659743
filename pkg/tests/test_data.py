"""Ingestion, transform, join, fold, summary, and cache tests."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtadyn import data
from dtadyn.data import (
    AffinityRecord,
    NonPositiveValue,
    TooFewRecords,
    kfold_split,
    transform_affinity,
)
from dtadyn.protein import DuplicatePdbId, DynamicDescriptor

DESC = DynamicDescriptor(1.0, 20.0, 0.8, 0.6)


def record(smiles="CCO", pdb="1ABC", affinity=5.0, measure="Kd", raw=None):
    return AffinityRecord(
        smiles=smiles,
        protein_sequence="MKT",
        pdb_id=pdb,
        measure=measure,
        raw_value=raw,
        affinity=affinity,
    )


class TestTransform:
    def test_anchor_1e9(self):
        assert transform_affinity(1e9) == pytest.approx(0.0, abs=1e-12)

    def test_anchor_one(self):
        assert transform_affinity(1.0) == pytest.approx(9.0, abs=1e-12)

    def test_anchor_1000(self):
        assert transform_affinity(1000.0) == pytest.approx(6.0, abs=1e-12)

    def test_non_positive(self):
        with pytest.raises(NonPositiveValue):
            transform_affinity(0.0)
        with pytest.raises(NonPositiveValue):
            transform_affinity(-4.0)

    @given(st.floats(1e-6, 1e12), st.floats(1e-6, 1e12))
    def test_strictly_decreasing(self, a, b):
        if a == b:
            return
        lo, hi = min(a, b), max(a, b)
        assert transform_affinity(lo) > transform_affinity(hi)


class TestReadAffinityFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "aff.csv"
        path.write_text(
            "smiles,protein_sequence,pdb_id,measure,value\n"
            "CCO,MKT,1ABC,Kd,1000\n"
            "CCO,MKT,1ABC,KIBA,11.2\n"
            "CCO,MKT,1ABC,Ki,-5\n"
        )
        records, report = data.read_affinity_file(path)
        assert len(records) == 2
        assert records[0].affinity == pytest.approx(6.0)
        assert records[0].raw_value == 1000.0
        assert records[1].affinity == 11.2  # KIBA scores pass through verbatim
        assert records[1].raw_value is None
        assert report.dropped["non_positive_value"] == 1

    def test_unknown_measure_dropped(self, tmp_path):
        path = tmp_path / "aff.csv"
        path.write_text(
            "smiles,protein_sequence,pdb_id,measure,value\nCCO,M,1A,EC50,5\n"
        )
        records, report = data.read_affinity_file(path)
        assert not records
        assert report.dropped["unknown_measure"] == 1

    def test_bad_value_line_number(self, tmp_path):
        path = tmp_path / "aff.csv"
        path.write_text(
            "smiles,protein_sequence,pdb_id,measure,value\n"
            "CCO,M,1A,Kd,10\nCCO,M,1A,Kd,oops\n"
        )
        with pytest.raises(ValueError, match="line 3"):
            data.read_affinity_file(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "aff.csv"
        path.write_text("smiles,value\nCCO,1\n")
        with pytest.raises(ValueError, match="missing column"):
            data.read_affinity_file(path)


class TestFilter:
    def test_negative_affinity_dropped(self):
        kept, report = data.filter_records(
            [record(affinity=-1.0), record(affinity=0.0)], {"1ABC": DESC}
        )
        assert len(kept) == 1  # affinity exactly 0 is kept
        assert report.dropped["negative_affinity"] == 1

    def test_unmatched_pdb_dropped_with_reason(self):
        kept, report = data.filter_records([record(pdb="9XYZ")], {"1ABC": DESC})
        assert not kept
        assert report.dropped["no_descriptor"] == 1

    def test_unparseable_smiles_dropped(self):
        kept, report = data.filter_records(
            [record(smiles="C(C")], {"1ABC": DESC}
        )
        assert not kept
        assert report.dropped["unparseable_smiles"] == 1

    def test_duplicates_kept_but_warned(self):
        kept, report = data.filter_records(
            [record(), record()], {"1ABC": DESC}
        )
        assert len(kept) == 2
        assert report.warnings["duplicate_pair"] == 1


class TestJoin:
    def test_shared_descriptor(self):
        joined = data.join_descriptors(
            [record(), record(smiles="C=C")], {"1ABC": DESC}
        )
        assert joined[0].descriptors is joined[1].descriptors is DESC

    def test_case_insensitive(self):
        joined = data.join_descriptors([record(pdb="4jmu")], {"4JMU": DESC})
        assert joined[0].descriptors is DESC

    def test_duplicate_key_after_casefold(self):
        with pytest.raises(DuplicatePdbId):
            data.join_descriptors([record()], {"1abc": DESC, "1ABC": DESC})

    def test_empty_table_drops_everything(self):
        kept, report = data.filter_records([record(), record()], {})
        assert not kept
        assert report.dropped["no_descriptor"] == 2


class TestKfold:
    def test_even_split(self):
        split = kfold_split(10, k=5, seed=0)
        sizes = [len(split.fold_indices(f)) for f in range(5)]
        assert sizes == [2, 2, 2, 2, 2]

    def test_uneven_split(self):
        split = kfold_split(11, k=5, seed=0)
        sizes = sorted((len(split.fold_indices(f)) for f in range(5)), reverse=True)
        assert sizes == [3, 2, 2, 2, 2]

    def test_deterministic(self):
        a = kfold_split(20, k=5, seed=42)
        b = kfold_split(20, k=5, seed=42)
        assert np.array_equal(a.assignments, b.assignments)

    def test_too_few(self):
        with pytest.raises(TooFewRecords):
            kfold_split(4, k=5)

    @given(n=st.integers(5, 200), seed=st.integers(0, 1000))
    def test_partition_property(self, n, seed):
        split = kfold_split(n, k=5, seed=seed)
        union = np.concatenate([split.fold_indices(f) for f in range(5)])
        assert sorted(union.tolist()) == list(range(n))
        sizes = [len(split.fold_indices(f)) for f in range(5)]
        assert max(sizes) - min(sizes) <= 1


class TestSummarize:
    def test_empty(self):
        summary = data.summarize([])
        assert (summary.targets, summary.ligands, summary.entries) == (0, 0, 0)

    def test_counts(self):
        summary = data.summarize(
            [record(pdb="1ABC"), record(pdb="2DEF")]
        )
        assert summary.targets == 2
        assert summary.ligands == 1
        assert summary.entries == 2

    def test_histogram_covers_all(self):
        records = [record(affinity=a) for a in (0.1, 0.4, 2.3, 5.0, 5.1)]
        summary = data.summarize(records, bin_width=0.5)
        assert sum(count for _, _, count in summary.histogram) == 5


class TestCache:
    def test_round_trip(self, tmp_path):
        records = data.join_descriptors(
            [record(), record(smiles="C=C", measure="KIBA", affinity=11.0)],
            {"1ABC": DESC},
        )
        path = tmp_path / "d.cache"
        data.save_cache(path, records)
        loaded = data.load_cache(path)
        assert loaded == records

    def test_byte_identical_rewrite(self, tmp_path):
        records = data.join_descriptors([record()], {"1ABC": DESC})
        p1, p2 = tmp_path / "a.cache", tmp_path / "b.cache"
        data.save_cache(p1, records)
        data.save_cache(p2, records)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"NOPExxxx")
        with pytest.raises(ValueError, match="not a prepared-dataset cache"):
            data.load_cache(path)

    def test_missing_descriptors_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="missing descriptors"):
            data.save_cache(tmp_path / "d.cache", [record()])
