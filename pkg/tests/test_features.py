import numpy as np
import pytest

from hrtfgp import features
from hrtfgp.features import (FeatureError, FeatureMatrix, extract_features,
                             min_phase_ir, render_binaural)


def make_set(left_mag, right_mag, left_phase=None, right_phase=None,
             sample_rate=44100.0):
    from hrtfgp.dataset import Direction, HrtfSet, fibonacci_grid
    left_mag = np.atleast_2d(np.asarray(left_mag, dtype=float))
    n, d = left_mag.shape
    right_mag = np.atleast_2d(np.asarray(right_mag, dtype=float))
    if left_phase is None:
        left_phase = np.zeros((n, d))
    if right_phase is None:
        right_phase = np.zeros((n, d))
    dirs = fibonacci_grid(max(n, 4)).as_matrix()[:n]
    freqs = np.linspace(200.0, 20000.0, d)
    return HrtfSet("probe", freqs, np.asarray(dirs), left_mag, right_mag,
                   np.atleast_2d(left_phase), np.atleast_2d(right_phase),
                   sample_rate)


class TestExtract:
    def test_equal_ears_give_constant_lmr(self):
        mag = np.linspace(0.5, 2.0, 16)[None, :]
        fm = extract_features(make_set(mag, mag), "LMR")
        np.testing.assert_allclose(fm.X, np.log(2.0), atol=1e-12)

    def test_equal_ears_give_unit_amr(self):
        mag = np.linspace(0.5, 2.0, 16)[None, :]
        fm = extract_features(make_set(mag, mag), "AMR")
        np.testing.assert_allclose(fm.X, 1.0, atol=1e-12)

    def test_constant_delay_gives_constant_pd(self):
        freqs = np.linspace(200.0, 20000.0, 16)
        tau = 1e-5
        lp = np.zeros((1, 16))
        rp = (2 * np.pi * freqs * tau)[None, :]
        fm = extract_features(make_set(np.ones((1, 16)), np.ones((1, 16)),
                                       lp, rp - lp * 0), "PD")
        expected = features.wrap_phase(-2 * np.pi * freqs * tau)
        np.testing.assert_allclose(fm.X[0], expected, atol=1e-12)

    def test_mp_is_concatenation(self):
        lm = np.linspace(0.2, 1.0, 8)[None, :]
        rm = np.linspace(1.0, 0.2, 8)[None, :]
        fm = extract_features(make_set(lm, rm), "MP")
        np.testing.assert_allclose(fm.X, np.hstack([lm, rm]))

    def test_pd_invariant_to_common_phase_offset(self, small_hrtf):
        from hrtfgp.dataset import HrtfSet, wrap_phase
        base = extract_features(small_hrtf, "PD")
        shifted = HrtfSet(
            small_hrtf.subject_id, small_hrtf.frequencies,
            small_hrtf.directions_raw, small_hrtf.left_mag,
            small_hrtf.right_mag,
            wrap_phase(small_hrtf.left_phase + 0.8),
            wrap_phase(small_hrtf.right_phase + 0.8),
            small_hrtf.sample_rate_hz)
        off = extract_features(shifted, "PD")
        np.testing.assert_allclose(off.X, base.X, atol=1e-6)

    @pytest.mark.parametrize("kind", features.FEATURE_KINDS)
    def test_range_invariants_on_synth_set(self, small_hrtf, kind):
        fm = extract_features(small_hrtf, kind)
        assert np.all(np.isfinite(fm.X))
        if kind == "LMR":
            assert np.all(fm.X >= 0)
        elif kind == "AMR":
            assert np.all(fm.X >= 0) and np.all(fm.X < 2)
        elif kind == "PD":
            assert np.all(fm.X > -np.pi) and np.all(fm.X <= np.pi)
        else:
            assert np.all(fm.X >= 0)
            assert fm.X.shape[1] == 2 * fm.frequencies.size

    def test_zero_denominator_floored(self):
        lm = np.full((1, 8), 1.0)
        rm = np.zeros((1, 8))
        rm[0, 0] = 0.5  # keep the not-all-zero row invariant satisfied
        for kind in ("LMR", "AMR"):
            fm = extract_features(make_set(lm, rm), kind)
            assert np.all(np.isfinite(fm.X))

    def test_eps_must_be_positive(self, small_hrtf):
        with pytest.raises(FeatureError):
            extract_features(small_hrtf, "LMR", eps=0.0)

    def test_unknown_kind_rejected(self, small_hrtf):
        with pytest.raises(FeatureError):
            extract_features(small_hrtf, "ITD")

    def test_matrix_invariants_enforced(self):
        with pytest.raises(FeatureError):
            FeatureMatrix("AMR", np.array([[2.5]]), np.array([[1.0, 0, 0]]),
                          np.array([100.0]))
        with pytest.raises(FeatureError):
            FeatureMatrix("PD", np.array([[4.0]]), np.array([[1.0, 0, 0]]),
                          np.array([100.0]))


class TestMinPhase:
    def test_flat_magnitude_is_unit_impulse(self):
        ir = min_phase_ir(np.ones(16), 64)
        assert ir[0] == pytest.approx(1.0, abs=1e-9)
        assert np.abs(ir[1:]).max() < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_reconstruction_within_half_db(self, seed):
        rng = np.random.default_rng(seed)
        # 33 bins land exactly on every 4th bin of a 256-point rfft grid
        d = 33
        mag = np.exp(rng.standard_normal(d) * 0.5)
        n_fft = 256
        ir = min_phase_ir(mag, n_fft)
        spec = np.abs(np.fft.rfft(ir))
        db = 20 * np.abs(np.log10(spec[::4] / mag))
        assert db.max() <= 0.5

    def test_energy_front_loaded(self):
        rng = np.random.default_rng(9)
        mag = np.exp(rng.standard_normal(32) * 0.4)
        ir = min_phase_ir(mag, 128)
        total = np.sum(ir ** 2)
        assert np.sum(ir[:32] ** 2) >= 0.9 * total

    def test_rejections(self):
        with pytest.raises(FeatureError):
            min_phase_ir(np.zeros(8), 32)
        with pytest.raises(FeatureError):
            min_phase_ir(np.ones(8), 12)   # not power of two
        with pytest.raises(FeatureError):
            min_phase_ir(np.ones(8), 8)    # too short
        with pytest.raises(FeatureError):
            min_phase_ir(-np.ones(8), 32)


class TestRender:
    def test_shape_seed_and_normalization(self):
        row = np.concatenate([np.linspace(0.5, 1.5, 16),
                              np.linspace(1.5, 0.5, 16)])
        a = render_binaural(row, 7, 0.25, 8000.0)
        b = render_binaural(row, 7, 0.25, 8000.0)
        c = render_binaural(row, 8, 0.25, 8000.0)
        assert a.shape == (2000, 2)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert np.abs(a).max() == pytest.approx(0.9)

    def test_louder_left_filter_gives_louder_left_channel(self):
        row = np.concatenate([np.full(16, 2.0), np.full(16, 0.5)])
        out = render_binaural(row, 3, 0.25, 8000.0, normalize=False)
        assert np.sqrt(np.mean(out[:, 0] ** 2)) > np.sqrt(np.mean(out[:, 1] ** 2))

    def test_rejections(self):
        with pytest.raises(FeatureError):
            render_binaural(np.ones(15), 0, 0.25, 8000.0)
        with pytest.raises(FeatureError):
            render_binaural(np.ones(16), 0, 9.0, 8000.0)
