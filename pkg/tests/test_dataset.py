import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrtfgp import dataset
from hrtfgp.container import ContainerError
from hrtfgp.dataset import (Direction, DatasetError, HrtfSet, cipic_like_grid,
                            equiangular_grid, export_hrtf, fibonacci_grid,
                            import_hrtf, synth_sphere_hrtf, wrap_phase)


class TestDirection:
    def test_unit_norm_enforced(self):
        with pytest.raises(DatasetError):
            Direction(1.0, 1.0, 0.0)

    def test_from_vector_normalizes(self):
        d = Direction.from_vector([3.0, 4.0, 0.0])
        assert d.x == pytest.approx(0.6)
        assert d.y == pytest.approx(0.8)

    def test_zero_vector_rejected(self):
        with pytest.raises(DatasetError):
            Direction.from_vector([0.0, 0.0, 0.0])

    @settings(max_examples=60, deadline=None)
    @given(az=st.floats(-np.pi + 1e-9, np.pi),
           el=st.floats(-np.pi / 2 + 1e-6, np.pi / 2 - 1e-6))
    def test_angle_round_trip(self, az, el):
        d = Direction.from_angles(az, el)
        az2, el2 = d.to_angles()
        assert el2 == pytest.approx(el, abs=1e-9)
        assert az2 == pytest.approx(az, abs=1e-7)

    def test_pole_azimuth_is_lossy_but_elevation_exact(self):
        d = Direction.from_angles(1.0, np.pi / 2)
        _, el = d.to_angles()
        assert el == pytest.approx(np.pi / 2)


class TestGrids:
    def test_cipic_like_count(self):
        g = cipic_like_grid()
        assert len(g) == 1250
        assert g.scheme == "cipic_like"

    @pytest.mark.parametrize("grid", [
        cipic_like_grid(), equiangular_grid(12, 6), fibonacci_grid(100)])
    def test_unit_norms(self, grid):
        norms = np.linalg.norm(grid.as_matrix(), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_duplicate_directions_rejected(self):
        d = Direction.from_angles(0.1, 0.2)
        with pytest.raises(DatasetError):
            dataset.SphericalGrid((d, d), "fibonacci")


def test_wrap_phase_range_and_fixed_points():
    phi = np.array([0.0, np.pi, -np.pi, 3 * np.pi, -2.5 * np.pi, 1.0])
    w = wrap_phase(phi)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    assert w[0] == 0.0
    assert w[1] == pytest.approx(np.pi)
    assert w[5] == pytest.approx(1.0)
    # congruence mod 2 pi
    np.testing.assert_allclose(np.cos(w), np.cos(phi), atol=1e-12)
    np.testing.assert_allclose(np.sin(w), np.sin(phi), atol=1e-12)


class TestSynth:
    def test_left_direction_favors_left_ear(self, small_grid):
        g = dataset.SphericalGrid(
            (Direction(1.0, 0.0, 0.0), Direction(0.0, 1.0, 0.0)), "fibonacci")
        h = synth_sphere_hrtf(g, 0.0875, 32, 44100.0)
        above_1k = h.frequencies > 1000.0
        assert np.all(h.left_mag[0, above_1k] >= h.right_mag[0, above_1k])

    def test_median_plane_symmetry(self):
        g = dataset.SphericalGrid(
            (Direction(0.0, 1.0, 0.0), Direction(0.0, 0.0, 1.0)), "fibonacci")
        h = synth_sphere_hrtf(g, 0.0875, 32, 44100.0)
        np.testing.assert_allclose(h.left_mag, h.right_mag, atol=1e-9)
        np.testing.assert_allclose(h.left_phase, h.right_phase, atol=1e-9)

    def test_determinism_bit_identical(self, small_grid, tmp_path):
        h1 = synth_sphere_hrtf(small_grid, 0.09, 32, 44100.0)
        h2 = synth_sphere_hrtf(small_grid, 0.09, 32, 44100.0)
        assert h1 == h2
        export_hrtf(h1, tmp_path / "a.json")
        export_hrtf(h2, tmp_path / "b.json")
        for blob in ("left_mag", "right_mag", "frequencies"):
            a = (tmp_path / f"a.{blob}.f32").read_bytes()
            b = (tmp_path / f"b.{blob}.f32").read_bytes()
            assert a == b

    def test_parameter_validation(self, small_grid):
        with pytest.raises(DatasetError):
            synth_sphere_hrtf(small_grid, 0.2, 32, 44100.0)
        with pytest.raises(DatasetError):
            synth_sphere_hrtf(small_grid, 0.0875, 8, 44100.0)
        with pytest.raises(DatasetError):
            synth_sphere_hrtf(small_grid, 0.0875, 32, 4000.0)

    def test_magnitudes_nonnegative(self, small_hrtf):
        assert np.all(small_hrtf.left_mag >= 0)
        assert np.all(small_hrtf.right_mag >= 0)


class TestContainerRoundTrip:
    def test_import_export_identity(self, small_hrtf, tmp_path):
        path = tmp_path / "set.json"
        export_hrtf(small_hrtf, path)
        back = import_hrtf(path)
        assert back == small_hrtf

    def test_reexport_byte_identical(self, small_hrtf, tmp_path):
        p1 = tmp_path / "one.json"
        export_hrtf(small_hrtf, p1)
        p2 = tmp_path / "two.json"
        export_hrtf(import_hrtf(p1), p2)
        for blob in ("frequencies", "left_mag", "right_mag", "left_phase",
                     "right_phase", "directions"):
            assert (tmp_path / f"one.{blob}.f32").read_bytes() == \
                (tmp_path / f"two.{blob}.f32").read_bytes()

    def test_dimension_mismatch_names_field(self, small_hrtf, tmp_path):
        path = tmp_path / "set.json"
        export_hrtf(small_hrtf, path)
        manifest = json.loads(path.read_text())
        blob = tmp_path / manifest["blobs"]["frequencies"]
        data = blob.read_bytes()
        blob.write_bytes(data[:-4])  # drop one f32 entry
        with pytest.raises(ContainerError, match="frequencies"):
            import_hrtf(path)

    def test_nan_blob_rejected(self, small_hrtf, tmp_path):
        path = tmp_path / "set.json"
        export_hrtf(small_hrtf, path)
        manifest = json.loads(path.read_text())
        blob = tmp_path / manifest["blobs"]["left_mag"]
        arr = np.frombuffer(blob.read_bytes(), dtype="<f4").copy()
        arr[3] = np.nan
        blob.write_bytes(arr.tobytes())
        with pytest.raises(ContainerError):
            import_hrtf(path)

    def test_empty_subject_id_rejected(self, small_hrtf):
        with pytest.raises(DatasetError):
            HrtfSet("", small_hrtf.frequencies, small_hrtf.directions_raw,
                    small_hrtf.left_mag, small_hrtf.right_mag,
                    small_hrtf.left_phase, small_hrtf.right_phase,
                    small_hrtf.sample_rate_hz)
