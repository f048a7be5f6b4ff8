import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sigweave as sw
from sigweave.data import toy_clean_pattern
from sigweave.errors import (
    DataFormatError,
    InfeasibilityError,
    SchemaError,
    StratificationError,
)


def schema33():
    return sw.AttributeSchema((("env", 3), ("person", 3)))


class TestSchema:
    def test_needs_two_attributes(self):
        with pytest.raises(SchemaError):
            sw.AttributeSchema((("solo", 4),))

    def test_needs_two_categories(self):
        with pytest.raises(SchemaError):
            sw.AttributeSchema((("a", 2), ("b", 1)))

    def test_scenario_validation(self):
        s = schema33()
        assert s.validate_scenario([1, 2]) == (1, 2)
        with pytest.raises(SchemaError):
            s.validate_scenario((1, 3))
        with pytest.raises(SchemaError):
            s.validate_scenario((1,))

    def test_all_scenarios(self):
        assert len(schema33().all_scenarios()) == 9


class TestToyGenerator:
    def test_formula_spot_value(self):
        # y=(0,0), pixel (0,1): row term 0.5, bump exp(-(1-8/3)^2/8)
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 1, 0.0, seed=0)
        sample = next(s for s in ds.samples if s.scenario == (0, 0))
        b2 = math.exp(-((1 - (0.5) * 16 / 3) ** 2) / (2 * (16 / 8) ** 2))
        expected = 0.5 * 0.5 + 0.5 * b2
        assert sample.signal[0, 1] == pytest.approx(expected, abs=1e-6)
        assert sample.signal[0, 1] == pytest.approx(0.6034, abs=5e-4)

    def test_formula_full_oracle(self):
        # independent direct evaluation of the closed form, every pixel
        H = W = 16
        ds = sw.generate_toy_dataset(schema33(), H, W, 1, 0.0, seed=0)
        for s in ds.samples:
            l1, l2 = s.scenario
            ref = np.empty((H, W))
            for r in range(H):
                for u in range(W):
                    b1 = 0.5 + 0.5 * math.sin(2 * math.pi * (l1 + 1) * r / H)
                    b2 = math.exp(-((u - (l2 + 0.5) * W / 3) ** 2) / (2 * (W / 8) ** 2))
                    ref[r, u] = min(1.0, max(0.0, 0.5 * b1 + 0.5 * b2))
            np.testing.assert_allclose(s.signal, ref.astype(np.float32), atol=1e-7)

    def test_third_attribute_term(self):
        schema = sw.AttributeSchema((("a", 2), ("b", 2), ("c", 2)))
        ds = sw.generate_toy_dataset(schema, 8, 8, 1, 0.0, seed=0)
        s = next(x for x in ds.samples if x.scenario == (0, 0, 1))
        b1 = 0.5 + 0.5 * math.sin(0.0)
        b2 = math.exp(-((0 - 0.5 * 8 / 2) ** 2) / (2 * 1.0**2))
        b3 = math.cos(2 * math.pi * 2 * (0 + 0) / 16)
        expected = min(1.0, max(0.0, 0.5 * b1 + 0.5 * b2 + 0.1 * b3))
        assert s.signal[0, 0] == pytest.approx(expected, abs=1e-6)

    def test_determinism(self):
        a = sw.generate_toy_dataset(schema33(), 16, 16, 3, 0.1, seed=42)
        b = sw.generate_toy_dataset(schema33(), 16, 16, 3, 0.1, seed=42)
        assert a == b
        c = sw.generate_toy_dataset(schema33(), 16, 16, 3, 0.1, seed=43)
        assert any(not np.array_equal(x.signal, y.signal) for x, y in zip(a.samples, c.samples))

    def test_counts_and_range(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 10, 0.2, seed=0)
        assert len(ds.samples) == 90
        for s in ds.samples:
            assert s.signal.dtype == np.float32
            assert s.signal.min() >= 0.0 and s.signal.max() <= 1.0

    def test_argument_errors(self):
        with pytest.raises(ValueError):
            sw.generate_toy_dataset(schema33(), 4, 16, 1, 0.0, 0)
        with pytest.raises(ValueError):
            sw.generate_toy_dataset(schema33(), 16, 16, 0, 0.0, 0)
        with pytest.raises(ValueError):
            sw.generate_toy_dataset(schema33(), 16, 16, 1, 0.5, 0)
        with pytest.raises(ValueError):
            sw.generate_toy_dataset(schema33(), 16, 16, 1, float("nan"), 0)
        with pytest.raises(SchemaError):
            sw.generate_toy_dataset("nope", 16, 16, 1, 0.0, 0)

    def test_row_frequency_separability(self):
        # dominant row-FFT bin tracks attribute 1's category
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 1, 0.0, seed=0)
        bins = {}
        for s in ds.samples:
            profile = s.signal.mean(axis=1)
            spectrum = np.abs(np.fft.rfft(profile - profile.mean()))
            bins.setdefault(s.scenario[0], set()).add(int(np.argmax(spectrum[1:]) + 1))
        assert all(len(v) == 1 for v in bins.values())
        assert bins[0] != bins[1] != bins[2]
        assert {next(iter(bins[k])) for k in bins} == {1, 2, 3}

    def test_shared_attribute_shares_component(self):
        # same attribute-2 category -> identical column bump component
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 1, 0.0, seed=0)
        by = {s.scenario: s.signal.astype(np.float64) for s in ds.samples}
        # subtracting two signals that share l2 cancels the bump: rows constant
        delta = by[(0, 1)] - by[(2, 1)]
        assert np.ptp(delta, axis=1).max() < 1e-6


class TestSplit:
    def test_eight_two(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 10, 0.0, seed=0)
        out = sw.split_dataset(ds, 0.8, seed=5)
        for y, members in out.by_scenario().items():
            assert sum(s.split == "train" for s in members) == 8
            assert sum(s.split == "test" for s in members) == 2

    def test_half_of_two(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 2, 0.0, seed=0)
        out = sw.split_dataset(ds, 0.5, seed=5)
        for members in out.by_scenario().values():
            assert sorted(s.split for s in members) == ["test", "train"]

    def test_determinism_and_partition(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 7, 0.05, seed=0)
        a = sw.split_dataset(ds, 0.8, seed=5)
        b = sw.split_dataset(ds, 0.8, seed=5)
        assert a == b
        assert sorted(s.id for s in a.samples) == sorted(s.id for s in ds.samples)
        for orig, new in zip(ds.samples, a.samples):
            assert orig.id == new.id
            assert np.array_equal(orig.signal, new.signal)

    def test_small_stratum_error(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 1, 0.0, seed=0)
        with pytest.raises(StratificationError):
            sw.split_dataset(ds, 0.8, seed=0)

    def test_fraction_bounds(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 2, 0.0, seed=0)
        with pytest.raises(ValueError):
            sw.split_dataset(ds, 1.0, seed=0)


class TestHoldOut:
    def test_counts(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 10, 0.0, seed=0)
        existing, held = sw.hold_out_unseen(ds, [(2, 0)])
        assert len(existing.existing_scenarios) == 8
        assert len(held) == 10
        assert all(s.scenario == (2, 0) for s in held)
        assert existing.unseen_scenarios == {(2, 0)}

    def test_empty_targets_error(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 2, 0.0, seed=0)
        with pytest.raises(ValueError):
            sw.hold_out_unseen(ds, [])

    def test_infeasible_holdout(self):
        # removing a full row leaves no donor for attribute 1's category
        schema = sw.AttributeSchema((("a", 2), ("b", 2)))
        ds = sw.generate_toy_dataset(schema, 16, 16, 2, 0.0, seed=0)
        with pytest.raises(InfeasibilityError):
            sw.hold_out_unseen(ds, [(1, 0), (1, 1)])

    def test_split_tags_preserved(self):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 10, 0.0, seed=0)
        ds = sw.split_dataset(ds, 0.8, seed=1)
        _, held = sw.hold_out_unseen(ds, [(2, 0)])
        assert sum(s.split == "test" for s in held) == 2


class TestManifestIO:
    def test_round_trip(self, tmp_path):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 3, 0.1, seed=7)
        ds = sw.split_dataset(ds, 0.8, seed=8)
        existing, _ = sw.hold_out_unseen(ds, [(1, 1)])
        sw.save_dataset(existing, tmp_path / "ds")
        again = sw.load_dataset(tmp_path / "ds")
        assert again == existing

    @settings(max_examples=10, deadline=None)
    @given(
        sizes=st.tuples(st.integers(2, 3), st.integers(2, 3)),
        per=st.integers(1, 3),
        noise=st.sampled_from([0.0, 0.05, 0.2]),
        seed=st.integers(0, 10_000),
    )
    def test_round_trip_property(self, tmp_path_factory, sizes, per, noise, seed):
        schema = sw.AttributeSchema((("a", sizes[0]), ("b", sizes[1])))
        ds = sw.generate_toy_dataset(schema, 8, 8, per, noise, seed=seed)
        path = tmp_path_factory.mktemp("rt") / "ds"
        sw.save_dataset(ds, path)
        assert sw.load_dataset(path) == ds

    def test_missing_signal_file(self, tmp_path):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 2, 0.0, seed=0)
        sw.save_dataset(ds, tmp_path / "ds")
        victim = ds.samples[3].id
        (tmp_path / "ds" / f"{victim}.f32").unlink()
        with pytest.raises(DataFormatError, match=victim):
            sw.load_dataset(tmp_path / "ds")

    def test_wrong_byte_length(self, tmp_path):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 2, 0.0, seed=0)
        sw.save_dataset(ds, tmp_path / "ds")
        victim = ds.samples[0].id
        fpath = tmp_path / "ds" / f"{victim}.f32"
        fpath.write_bytes(fpath.read_bytes()[:-8])
        with pytest.raises(DataFormatError, match="1016 bytes, expected 1024"):
            sw.load_dataset(tmp_path / "ds")

    def test_pixel_out_of_range(self, tmp_path):
        ds = sw.generate_toy_dataset(schema33(), 16, 16, 2, 0.0, seed=0)
        sw.save_dataset(ds, tmp_path / "ds")
        victim = ds.samples[0]
        bad = victim.signal.copy()
        bad[0, 0] = 1.5
        (tmp_path / "ds" / f"{victim.id}.f32").write_bytes(bad.astype("<f4").tobytes())
        with pytest.raises(DataFormatError, match="0, 1"):
            sw.load_dataset(tmp_path / "ds")

    def test_bad_unseen_scenario(self, tmp_path):
        import json

        ds = sw.generate_toy_dataset(schema33(), 16, 16, 2, 0.0, seed=0)
        sw.save_dataset(ds, tmp_path / "ds")
        mpath = tmp_path / "ds" / "manifest.json"
        manifest = json.loads(mpath.read_text())
        manifest["unseen"] = [[9, 9]]
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(DataFormatError, match="unseen"):
            sw.load_dataset(tmp_path / "ds")

    def test_no_manifest(self, tmp_path):
        with pytest.raises(DataFormatError):
            sw.load_dataset(tmp_path)


def test_clean_pattern_matches_zero_noise():
    schema = schema33()
    ds = sw.generate_toy_dataset(schema, 16, 16, 2, 0.0, seed=3)
    for s in ds.samples:
        np.testing.assert_array_equal(s.signal, toy_clean_pattern(schema, s.scenario, 16, 16))
