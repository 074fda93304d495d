import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsbfsm.errors import DomainError, EmptyPartitionError, LoadError, SpecError
from dsbfsm.hsi_io import (
    GroundTruth,
    HyperCube,
    Partition,
    SyntheticSpec,
    extract_partition,
    generate_synthetic,
    header_path_for,
    load_cube,
    load_ground_truth,
    parse_band_list,
    parse_synthetic_config,
    save_cube,
    save_ground_truth,
)


def write_raw(tmp_path, values, dtype="f32le", shape=(2, 2, 2)):
    cube = tmp_path / "c.bsq"
    cube.write_bytes(np.asarray(values, dtype="<f4").tobytes())
    header = {"bands": shape[0], "rows": shape[1], "cols": shape[2], "dtype": dtype, "interleave": "bsq"}
    (tmp_path / "c.hdr.json").write_text(json.dumps(header))
    return cube


@pytest.fixture
def small_scene():
    spec = SyntheticSpec(classes=3, bands=6, rows=12, cols=12, informative_bands=(2, 3), sigma=0.05, seed=4, block=4)
    return generate_synthetic(spec)


class TestCubeFiles:
    def test_header_path(self):
        assert header_path_for("/a/scene.bsq").name == "scene.hdr.json"

    def test_load_2x2x2(self, tmp_path):
        values = np.arange(8, dtype=np.float32) * 0.5
        cube = load_cube(write_raw(tmp_path, values))
        assert (cube.bands, cube.rows, cube.cols) == (2, 2, 2)
        np.testing.assert_array_equal(cube.data.ravel(), values)
        assert cube.data[1, 0, 1] == 2.5

    def test_truncated_file(self, tmp_path):
        path = write_raw(tmp_path, np.zeros(8))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(LoadError, match="28"):
            load_cube(path)

    def test_unsupported_dtype(self, tmp_path):
        with pytest.raises(LoadError, match="f64le"):
            load_cube(write_raw(tmp_path, np.zeros(8), dtype="f64le"))

    def test_non_finite_reports_offset(self, tmp_path):
        values = np.zeros(8)
        values[3] = np.nan
        with pytest.raises(LoadError) as exc:
            load_cube(write_raw(tmp_path, values))
        assert exc.value.offset == 12

    def test_missing_file_names_path(self, tmp_path):
        write_raw(tmp_path, np.zeros(8))
        (tmp_path / "c.bsq").unlink()
        with pytest.raises(LoadError, match="c.bsq"):
            load_cube(tmp_path / "c.bsq")

    @settings(max_examples=25, deadline=None)
    @given(
        st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
        st.integers(0, 2**32 - 1),
    )
    def test_round_trip_bit_exact(self, tmp_path_factory, shape, seed):
        data = np.random.default_rng(seed).normal(size=shape).astype(np.float32).astype(np.float64)
        path = tmp_path_factory.mktemp("rt") / "x.bsq"
        save_cube(HyperCube(data), path)
        np.testing.assert_array_equal(load_cube(path).data, data)

    def test_cube_is_read_only(self):
        cube = HyperCube(np.zeros((1, 2, 2)))
        with pytest.raises(ValueError):
            cube.data[0, 0, 0] = 1.0

    def test_cube_rejects_non_finite(self):
        with pytest.raises(DomainError):
            HyperCube(np.full((1, 1, 1), np.inf))


class TestGroundTruth:
    def test_small_grid(self, tmp_path):
        path = tmp_path / "g.gt.txt"
        path.write_text("0 1\n2 2\n")
        gt = load_ground_truth(path, 2, 2)
        assert gt.n_classes == 2
        assert int((gt.labels == 0).sum()) == 1

    def test_all_zero(self, tmp_path):
        path = tmp_path / "g.gt.txt"
        path.write_text("0 0\n0 0\n")
        assert load_ground_truth(path).n_classes == 0

    def test_row_width_mismatch(self, tmp_path):
        path = tmp_path / "g.gt.txt"
        path.write_text("1 1 1\n1 1\n")
        with pytest.raises(LoadError, match="row 1"):
            load_ground_truth(path, 2, 2)

    def test_negative_label(self, tmp_path):
        path = tmp_path / "g.gt.txt"
        path.write_text("1 -1\n")
        with pytest.raises(LoadError):
            load_ground_truth(path)

    def test_round_trip(self, tmp_path):
        gt = GroundTruth(np.array([[0, 3], [1, 2]]))
        save_ground_truth(gt, tmp_path / "g.gt.txt")
        np.testing.assert_array_equal(load_ground_truth(tmp_path / "g.gt.txt").labels, gt.labels)


class TestPartition:
    def test_full_image_all_labeled(self, small_scene):
        cube, gt = small_scene
        part = extract_partition(cube, gt, max_pixels=None)
        assert len(part) == int((gt.labels > 0).sum())
        np.testing.assert_array_equal(part.spectra, cube.data[:, part.rows, part.cols].T)

    def test_missing_class(self, small_scene):
        cube, gt = small_scene
        with pytest.raises(EmptyPartitionError):
            extract_partition(cube, gt, classes={7})

    def test_region_outside(self, small_scene):
        cube, gt = small_scene
        with pytest.raises(DomainError):
            extract_partition(cube, gt, region=(0, 20, 0, 5))

    def test_region_filter(self, small_scene):
        cube, gt = small_scene
        part = extract_partition(cube, gt, region=(2, 6, 3, 9), classes={1, 2})
        assert set(part.labels.tolist()) <= {1, 2}
        assert part.rows.min() >= 2 and part.rows.max() < 6
        assert part.cols.min() >= 3 and part.cols.max() < 9

    def test_quota_10000_to_2000(self):
        labels = np.zeros((100, 100), dtype=int)
        labels.ravel()[:5003] = 1
        labels.ravel()[5003:8000] = 2
        labels.ravel()[8000:] = 3
        cube = HyperCube(np.zeros((1, 100, 100)))
        part = extract_partition(cube, GroundTruth(labels), max_pixels=2000, seed=3)
        assert len(part) == 2000
        counts = part.class_counts()
        for c, original in {1: 5003, 2: 2997, 3: 2000}.items():
            assert abs(counts[c] - original * 2000 / 10000) <= 1

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 60))
    def test_subsample_invariants(self, seed, budget):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 4, size=(9, 9))
        labels[0, :3] = [1, 2, 3]
        cube = HyperCube(rng.normal(size=(2, 9, 9)))
        a = extract_partition(cube, GroundTruth(labels), max_pixels=budget, seed=seed)
        b = extract_partition(cube, GroundTruth(labels), max_pixels=budget, seed=seed)
        assert (a.labels >= 1).all()
        assert sum(a.class_counts().values()) == len(a) == min(budget, int((labels > 0).sum()))
        np.testing.assert_array_equal(a.rows, b.rows)
        np.testing.assert_array_equal(a.cols, b.cols)

    def test_partition_rejects_background_and_duplicates(self):
        with pytest.raises(DomainError):
            Partition(np.array([0]), np.array([0]), np.array([0]), np.zeros((1, 1)), (2, 2))
        with pytest.raises(DomainError):
            Partition(np.array([0, 0]), np.array([1, 1]), np.array([1, 1]), np.zeros((2, 1)), (2, 2))


class TestSynthetic:
    def test_band_list(self):
        assert parse_band_list("0,3,10-12") == (0, 3, 10, 11, 12)
        assert parse_band_list("") == ()

    def test_noise_free_two_class(self):
        spec = SyntheticSpec(classes=2, bands=5, rows=8, cols=8, informative_bands=(0,), sigma=0.0, seed=1, block=4)
        cube, gt = generate_synthetic(spec)
        lab = gt.labels
        band0 = cube.data[0]
        assert np.unique(band0[lab == 1]).size == 1
        assert np.unique(band0[lab == 2]).size == 1
        assert band0[lab == 1][0] != band0[lab == 2][0]
        for b in range(1, 5):
            assert np.unique(cube.data[b]).size == 1

    def test_deterministic(self):
        spec = SyntheticSpec(classes=3, bands=10, rows=16, cols=16, informative_bands=(2, 3, 4), sigma=0.1, seed=9)
        a, ga = generate_synthetic(spec)
        b, gb = generate_synthetic(spec)
        np.testing.assert_array_equal(a.data, b.data)
        np.testing.assert_array_equal(ga.labels, gb.labels)

    def test_separation_at_least_five_sigma(self):
        spec = SyntheticSpec(
            classes=3, bands=50, rows=40, cols=40, informative_bands=tuple(range(20, 30)), sigma=0.1, seed=2
        )
        cube, gt = generate_synthetic(spec)
        noiseless, _ = generate_synthetic(SyntheticSpec(**{**spec.__dict__, "sigma": 0.0}))
        for b in range(50):
            means = sorted({float(noiseless.data[b][gt.labels == c][0]) for c in (1, 2, 3)})
            gaps = np.diff(means)
            if 20 <= b < 30:
                assert gaps.min() >= 5 * 0.1 - 1e-6
            else:
                assert np.allclose(gaps, 0.0)

    def test_class_regions_are_blocks(self):
        spec = SyntheticSpec(classes=3, bands=2, rows=8, cols=8, block=4)
        _, gt = generate_synthetic(spec)
        assert np.unique(gt.labels[:4, :4]).size == 1
        assert gt.labels[0, 0] != gt.labels[0, 4]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"sigma": -0.1},
            {"classes": 1},
            {"informative_bands": (7,)},
            {"noise_corr": 1.0},
        ],
    )
    def test_spec_errors(self, kwargs):
        base = {"classes": 2, "bands": 5, "rows": 4, "cols": 4}
        with pytest.raises(SpecError):
            SyntheticSpec(**{**base, **kwargs})

    def test_config_text(self):
        spec = parse_synthetic_config(
            "# scene\nclasses=3\nbands=8\nrows=6\ncols=6\ninformative_bands=1-2\nsigma=0.2\nseed=5\n"
        )
        assert spec.informative_bands == (1, 2)
        assert spec.sigma == 0.2 and spec.seed == 5

    @pytest.mark.parametrize("text", ["classes=3\nbands=4\nrows=2", "classes=3\nbands=4\nrows=2\ncols=2\ncolour=1"])
    def test_config_errors(self, text):
        with pytest.raises(SpecError):
            parse_synthetic_config(text)
