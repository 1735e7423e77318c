import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skullkit import fixtures
from skullkit.slicecore import (DEFAULT_WINDOW, BoneMask, CtSlice, IntensityWindow,
                                ManifestEntry, Provenance, SliceFormat,
                                SliceFormatError, Volume, apply_mask, crop_or_pad,
                                denormalize, load_dataset, load_slice, load_volume,
                                normalize, read_manifest, save_slice, select_slices,
                                threshold_mask, write_manifest)


def plain_mean(pixels):
    # independent of numpy reductions: plain Python accumulation
    total = 0.0
    count = 0
    for row in pixels.tolist():
        for v in row:
            total += v
            count += 1
    return total / count


class TestCtSlice:
    def test_rejects_wrong_shape(self):
        with pytest.raises(SliceFormatError):
            CtSlice(pixels=np.zeros((64, 64)), id="bad")

    def test_rejects_non_finite(self):
        bad = np.zeros((128, 128))
        bad[0, 0] = np.nan
        with pytest.raises(SliceFormatError):
            CtSlice(pixels=bad, id="bad")

    def test_pixels_immutable(self):
        sl = fixtures.checkerboard_slice()
        with pytest.raises(ValueError):
            sl.pixels[0, 0] = 1.0


class TestIo:
    def test_all_zero_roundtrip(self, tmp_path):
        zero = CtSlice(pixels=np.zeros((128, 128)), id="zero")
        save_slice(zero, tmp_path / "zero.npy")
        back = load_slice(tmp_path / "zero.npy")
        assert np.array_equal(back.pixels, zero.pixels)
        assert back.pixels.max() == 0.0

    def test_npy_roundtrip_bit_exact(self, tmp_path, rng):
        sl = CtSlice(pixels=rng.uniform(-500, 3000, (128, 128)).astype(np.float32),
                     id="rand")
        save_slice(sl, tmp_path / "r.npy", SliceFormat.NPY_F32)
        back = load_slice(tmp_path / "r.npy")
        assert np.max(np.abs(back.pixels - sl.pixels)) == 0.0

    def test_checkerboard_mean_from_file(self, tmp_path):
        sl = fixtures.checkerboard_slice()
        save_slice(sl, tmp_path / "cb.npy")
        back = load_slice(tmp_path / "cb.npy")
        # oracle: plain-Python mean over the fixture
        assert plain_mean(back.pixels) == pytest.approx(500.0, abs=1e-9)

    def test_pgm16_negative_hu_integers_exact(self, tmp_path, rng):
        values = rng.integers(-1000, 3000, size=(128, 128)).astype(np.float32)
        sl = CtSlice(pixels=values, id="neg")
        save_slice(sl, tmp_path / "neg.pgm", SliceFormat.PGM16)
        back = load_slice(tmp_path / "neg.pgm", SliceFormat.PGM16)
        assert np.array_equal(back.pixels, values)

    def test_pgm16_offset_header_present(self, tmp_path):
        sl = CtSlice(pixels=np.full((128, 128), -50.0), id="neg")
        save_slice(sl, tmp_path / "n.pgm", SliceFormat.PGM16)
        header = (tmp_path / "n.pgm").read_bytes()[:64]
        assert b"hu_offset=50" in header

    def test_pgm16_default_offset_zero(self, tmp_path):
        raw = b"P5\n128 128\n65535\n" + (np.arange(16384) % 4000).astype(">u2").tobytes()
        (tmp_path / "p.pgm").write_bytes(raw)
        sl = load_slice(tmp_path / "p.pgm", SliceFormat.PGM16)
        assert sl.pixels[0, 5] == 5.0

    def test_pgm16_range_error(self, tmp_path):
        sl = CtSlice(pixels=np.full((128, 128), 70000.0), id="big")
        with pytest.raises(SliceFormatError):
            save_slice(sl, tmp_path / "big.pgm", SliceFormat.PGM16)

    def test_malformed_files(self, tmp_path):
        (tmp_path / "junk.npy").write_bytes(b"not numpy at all")
        with pytest.raises(SliceFormatError):
            load_slice(tmp_path / "junk.npy")
        np.save(tmp_path / "small.npy", np.zeros((4, 4), dtype=np.float32))
        with pytest.raises(SliceFormatError):
            load_slice(tmp_path / "small.npy")
        (tmp_path / "junk.pgm").write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(SliceFormatError):
            load_slice(tmp_path / "junk.pgm", SliceFormat.PGM16)


class TestNormalize:
    def test_endpoints(self):
        w = IntensityWindow(0.0, 3000.0)
        sl = CtSlice(pixels=np.full((128, 128), 0.0), id="lo")
        assert normalize(sl, w).pixels[0, 0] == -1.0
        sl = CtSlice(pixels=np.full((128, 128), 3000.0), id="hi")
        assert normalize(sl, w).pixels[0, 0] == 1.0

    def test_midpoint(self):
        sl = CtSlice(pixels=np.full((128, 128), 1500.0), id="mid")
        assert normalize(sl, IntensityWindow(0, 3000)).pixels[0, 0] == 0.0

    def test_clamping(self):
        sl = CtSlice(pixels=np.full((128, 128), 9999.0), id="out")
        assert normalize(sl, IntensityWindow(0, 3000)).pixels.max() == 1.0

    def test_denormalize_endpoints(self):
        w = IntensityWindow(100.0, 2100.0)
        lo = denormalize(normalize(CtSlice(pixels=np.full((128, 128), 100.0), id="x"), w))
        assert np.all(lo.pixels == 100.0)
        hi = denormalize(normalize(CtSlice(pixels=np.full((128, 128), 2100.0), id="y"), w))
        assert np.all(hi.pixels == 2100.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_roundtrip_property(self, seed):
        rng = np.random.default_rng(seed)
        w = DEFAULT_WINDOW
        pixels = rng.uniform(w.lo, w.hi, (128, 128)).astype(np.float32)
        sl = CtSlice(pixels=pixels, id=f"s{seed}")
        back = denormalize(normalize(sl, w))
        assert np.max(np.abs(back.pixels - pixels)) <= 1e-6

    @settings(max_examples=25, deadline=None)
    @given(p1=st.floats(0, 3000), p2=st.floats(0, 3000))
    def test_monotone(self, p1, p2):
        lo, hi = sorted([p1, p2])
        a = normalize(CtSlice(np.full((128, 128), lo), "a")).pixels[0, 0]
        b = normalize(CtSlice(np.full((128, 128), hi), "b")).pixels[0, 0]
        assert a <= b

    def test_window_validation(self):
        with pytest.raises(ValueError):
            IntensityWindow(5, 5)


class TestThresholdMask:
    def test_all_zero(self):
        mask = threshold_mask(CtSlice(np.zeros((128, 128)), "z"))
        assert mask.cardinality == 0

    def test_strict_at_floor(self):
        at = CtSlice(np.full((128, 128), 10.0), "at")
        above = CtSlice(np.full((128, 128), 10.5), "above")
        assert threshold_mask(at).cardinality == 0
        assert threshold_mask(above).cardinality == 128 * 128

    def test_checkerboard_cardinality(self):
        # oracle: half of 128*128 cells carry 1000 HU
        mask = threshold_mask(fixtures.checkerboard_slice())
        assert mask.cardinality == 8192

    def test_mask_apply_idempotent(self, rng):
        sl = CtSlice(rng.uniform(0, 2000, (128, 128)).astype(np.float32), "r")
        mask = threshold_mask(sl)
        once = apply_mask(sl, mask)
        twice = apply_mask(once, threshold_mask(once))
        assert np.array_equal(once.pixels, twice.pixels)


class TestApplyMask:
    def test_all_true_identity(self, rng):
        sl = CtSlice(rng.uniform(0, 100, (128, 128)).astype(np.float32), "r")
        out = apply_mask(sl, BoneMask(np.ones((128, 128), dtype=bool)))
        assert np.array_equal(out.pixels, sl.pixels)

    def test_all_false_zero(self, rng):
        sl = CtSlice(rng.uniform(0, 100, (128, 128)).astype(np.float32), "r")
        out = apply_mask(sl, BoneMask(np.zeros((128, 128), dtype=bool)))
        assert out.pixels.max() == 0.0

    def test_masked_mean_matches_masked_in_pixels(self, rng):
        from skullkit.radiometrics import mean_intensity
        sl = CtSlice(rng.uniform(0, 2000, (128, 128)).astype(np.float32), "r")
        masked = apply_mask(sl, threshold_mask(sl))
        # oracle: mean over masked-in pixels of the original
        keep = np.asarray(sl.pixels, dtype=np.float64)
        keep = keep[keep > 10.0]
        assert mean_intensity(masked) == pytest.approx(keep.mean(), rel=1e-12)


class TestSelectSlices:
    def test_every_fifth(self):
        vol = Volume(slices=np.stack([np.full((128, 128), float(d)) for d in range(25)]))
        out = select_slices(vol, step=5)
        assert len(out) == 5
        assert [s.pixels[0, 0] for s in out] == [0.0, 5.0, 10.0, 15.0, 20.0]

    def test_step_one_returns_all(self):
        vol = Volume(slices=np.zeros((7, 128, 128)))
        assert len(select_slices(vol, step=1)) == 7

    @pytest.mark.parametrize("n,step", [(1, 1), (25, 5), (24, 5), (26, 5), (100, 7)])
    def test_count_law(self, n, step):
        vol = Volume(slices=np.zeros((n, 128, 128)))
        assert len(select_slices(vol, step)) == (n - 1) // step + 1

    def test_sampling_interval_mm(self):
        vol = Volume(slices=np.zeros((25, 128, 128)), slice_spacing_mm=0.625)
        assert vol.slice_spacing_mm * 5 == pytest.approx(3.125)

    def test_center_crop(self):
        big = np.zeros((140, 140), dtype=np.float32)
        big[70, 70] = 7.0  # grid center
        out = crop_or_pad(big)
        assert out.shape == (128, 128)
        assert out[64, 64] == 7.0

    def test_symmetric_pad(self):
        small = np.ones((100, 100), dtype=np.float32)
        out = crop_or_pad(small)
        assert out.shape == (128, 128)
        assert out[14, 14] == 1.0 and out[13, 13] == 0.0
        assert out[113, 113] == 1.0 and out[114, 114] == 0.0

    def test_validation(self):
        vol = Volume(slices=np.zeros((3, 128, 128)))
        with pytest.raises(ValueError):
            select_slices(vol, step=0)
        with pytest.raises(SliceFormatError):
            Volume(slices=np.zeros((0, 128, 128)))


class TestManifest:
    def test_roundtrip_and_load(self, tmp_path, rng):
        slices = [CtSlice(rng.uniform(0, 100, (128, 128)).astype(np.float32),
                          f"s{i}", Provenance.SYNTHETIC) for i in range(3)]
        manifest = fixtures.write_slice_dir(slices, tmp_path)
        entries = read_manifest(manifest)
        assert [e.id for e in entries] == ["s0", "s1", "s2"]
        assert entries[0].provenance is Provenance.SYNTHETIC
        loaded = load_dataset(manifest)
        assert np.array_equal(loaded[1].pixels, slices[1].pixels)

    def test_malformed(self, tmp_path):
        (tmp_path / "m.json").write_text("{not json")
        with pytest.raises(SliceFormatError):
            read_manifest(tmp_path / "m.json")


def test_load_volume_roundtrip(tmp_path):
    stack = fixtures.demo_volume(depth=6)
    np.save(tmp_path / "v.npy", stack)
    vol = load_volume(tmp_path / "v.npy")
    assert vol.n_slices == 6
    out = select_slices(vol, step=5)
    assert len(out) == 2
