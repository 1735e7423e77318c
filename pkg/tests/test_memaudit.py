import numpy as np
import pytest

from skullkit.fid import FeatureMatrix
from skullkit.memaudit import (IdMismatchError, audit_report, nearest_by_cosine,
                               nearest_by_mse)
from skullkit.slicecore import CtSlice


def make_slices(rng, n, prefix):
    return [CtSlice(rng.uniform(0, 2000, (128, 128)).astype(np.float32),
                    f"{prefix}_{i:03d}") for i in range(n)]


def oracle_best_mse(synth, reals):
    """All-pairs loop search; returns (real_id, mse) per synthetic slice."""
    out = []
    for s in synth:
        best = None
        for r in reals:
            diff = np.asarray(s.pixels, dtype=np.float64) - np.asarray(r.pixels, dtype=np.float64)
            m = float(np.mean(diff * diff))
            if best is None or (m, r.id) < best:
                best = (m, r.id)
        out.append((best[1], best[0]))
    return out


def oracle_best_cosine(xs, ys, real_ids):
    out = []
    for u in xs:
        best = None
        for j, v in enumerate(ys):
            sim = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
            if best is None or (-sim, real_ids[j]) < best:
                best = (-sim, real_ids[j])
        out.append((best[1], -best[0]))
    return out


class TestNearestByMse:
    def test_planted_duplicate_rank_one(self, rng):
        reals = make_slices(rng, 10, "real")
        synth = [CtSlice(reals[4].pixels, "synth_copy")]
        records = nearest_by_mse(synth, reals, k=3)
        assert records[0].neighbors[0].real_id == "real_004"
        assert records[0].neighbors[0].value == 0.0
        assert records[0].exact_duplicate

    def test_constant_offset_mse(self, rng):
        reals = make_slices(rng, 3, "real")
        shifted = CtSlice(np.asarray(reals[1].pixels) + 10.0, "shifted")
        records = nearest_by_mse([shifted], reals, k=1)
        assert records[0].neighbors[0].real_id == "real_001"
        # f32 storage rounds the +10 shift, so compare at f32 resolution
        assert records[0].neighbors[0].value == pytest.approx(100.0, rel=1e-4)

    def test_top1_matches_oracle(self, rng):
        synth = make_slices(rng, 20, "synth")
        reals = make_slices(rng, 20, "real")
        records = nearest_by_mse(synth, reals, k=1)
        for record, (oid, omse) in zip(records, oracle_best_mse(synth, reals)):
            assert record.neighbors[0].real_id == oid
            assert record.neighbors[0].value == pytest.approx(omse, rel=1e-9)

    def test_neighbors_sorted_best_first(self, rng):
        records = nearest_by_mse(make_slices(rng, 3, "s"), make_slices(rng, 8, "r"), k=5)
        for rec in records:
            values = [nb.value for nb in rec.neighbors]
            assert values == sorted(values)

    def test_self_audit(self, rng):
        slices = make_slices(rng, 6, "x")
        records = nearest_by_mse(slices, slices, k=1)
        for rec, sl in zip(records, slices):
            assert rec.neighbors[0].real_id == sl.id
            assert rec.neighbors[0].value == 0.0

    def test_empty_rejected(self, rng):
        with pytest.raises(ValueError):
            nearest_by_mse([], make_slices(rng, 2, "r"), 1)


class TestNearestByCosine:
    def test_identical_row(self, rng):
        ys = rng.normal(size=(10, 8))
        xs = ys[[3]]
        records = nearest_by_cosine(FeatureMatrix(np.vstack([xs, ys[0:1]])),
                                    FeatureMatrix(ys), k=2)
        assert records[0].neighbors[0].real_id == "real_0003"
        assert records[0].neighbors[0].value == pytest.approx(1.0)

    def test_orthogonal(self):
        xs = FeatureMatrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
        ys = FeatureMatrix(np.array([[0.0, 1.0], [0.0, 2.0]]))
        records = nearest_by_cosine(xs, ys, k=1)
        assert records[0].neighbors[0].value == pytest.approx(0.0, abs=1e-12)

    def test_ordering_matches_oracle(self, rng):
        xs = rng.normal(size=(30, 8))
        ys = rng.normal(size=(30, 8))
        real_ids = [f"real_{i:04d}" for i in range(30)]
        records = nearest_by_cosine(FeatureMatrix(xs), FeatureMatrix(ys), k=1)
        for rec, (oid, osim) in zip(records, oracle_best_cosine(xs, ys, real_ids)):
            assert rec.neighbors[0].real_id == oid
            assert rec.neighbors[0].value == pytest.approx(osim, rel=1e-9)

    def test_scale_invariance(self, rng):
        xs = rng.normal(size=(5, 6))
        ys = rng.normal(size=(7, 6))
        a = nearest_by_cosine(FeatureMatrix(xs), FeatureMatrix(ys), k=3)
        b = nearest_by_cosine(FeatureMatrix(7.5 * xs), FeatureMatrix(0.2 * ys), k=3)
        for ra, rb in zip(a, b):
            assert [n.real_id for n in ra.neighbors] == [n.real_id for n in rb.neighbors]
            for na, nb in zip(ra.neighbors, rb.neighbors):
                assert na.value == pytest.approx(nb.value, abs=1e-12)

    def test_zero_norm_rejected(self):
        xs = FeatureMatrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            nearest_by_cosine(xs, xs, 1)


class TestAuditReport:
    def _records(self, rng, synth, reals):
        mse = nearest_by_mse(synth, reals, k=2)
        feats_s = FeatureMatrix(rng.normal(size=(len(synth), 8)))
        feats_r = FeatureMatrix(rng.normal(size=(len(reals), 8)))
        cosine = nearest_by_cosine(feats_s, feats_r, k=2,
                                   synth_ids=[s.id for s in synth],
                                   real_ids=[r.id for r in reals])
        return mse, cosine

    def test_clean_verdict(self, rng):
        synth = make_slices(rng, 5, "synth")
        reals = make_slices(rng, 5, "real")
        mse, cosine = self._records(rng, synth, reals)
        report = audit_report(mse, cosine, mse_near_threshold=100.0)
        assert report.verdict == "clean"
        assert report.flagged == ()

    def test_exact_duplicate_flagged(self, rng):
        reals = make_slices(rng, 5, "real")
        synth = make_slices(rng, 4, "synth") + [CtSlice(reals[0].pixels, "synth_dup")]
        mse, cosine = self._records(rng, synth, reals)
        report = audit_report(mse, cosine, mse_near_threshold=1.0)
        assert report.verdict == "memorization suspected"
        assert "synth_dup" in report.flagged

    def test_noisy_duplicate_near_flag(self, rng):
        # adding N(0, 20 HU) noise gives expected MSE sigma^2 = 400
        reals = make_slices(rng, 20, "real")
        noisy = CtSlice(np.asarray(reals[7].pixels) + rng.normal(0, 20, (128, 128)),
                        "synth_noisy")
        synth = [noisy, make_slices(rng, 1, "synth_other")[0]]
        mse = nearest_by_mse(synth, reals, k=1)
        assert mse[0].neighbors[0].real_id == "real_007"
        assert mse[0].neighbors[0].value == pytest.approx(400.0, rel=0.15)
        _, cosine = self._records(rng, synth, reals)
        report = audit_report(mse, cosine, mse_near_threshold=450.0)
        assert report.verdict == "memorization suspected"
        by_id = {r["synthetic_id"]: r for r in report.records}
        assert by_id["synth_noisy"]["near_duplicate"]
        assert not by_id["synth_other_000"]["near_duplicate"]

    def test_id_mismatch(self, rng):
        synth = make_slices(rng, 3, "synth")
        reals = make_slices(rng, 3, "real")
        mse, cosine = self._records(rng, synth, reals)
        with pytest.raises(IdMismatchError):
            audit_report(mse[:2], cosine, 10.0)

    def test_report_is_json_ready(self, rng):
        import json
        synth = make_slices(rng, 3, "synth")
        reals = make_slices(rng, 3, "real")
        mse, cosine = self._records(rng, synth, reals)
        report = audit_report(mse, cosine, 10.0)
        assert json.dumps(report.to_dict())
