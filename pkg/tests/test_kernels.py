import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrtfgp import kernels
from hrtfgp._gram_np import gram as gram_np
from hrtfgp.kernels import KernelSpec, gram_matrix, kernel_eval


def random_spec(rng, nu, dim):
    return KernelSpec(nu, np.exp(rng.standard_normal(dim) * 0.3),
                      float(np.exp(rng.standard_normal() * 0.3)))


def test_self_covariance_is_signal_variance():
    spec = KernelSpec("half", np.array([0.7, 2.0]), 1.5)
    x = np.array([0.3, -1.2])
    assert kernel_eval(spec, x, x) == pytest.approx(1.5 ** 2)


def test_exponential_at_one_length_scale():
    spec = KernelSpec("half", np.array([1.0]), 1.0)
    assert kernel_eval(spec, np.array([0.0]), np.array([1.0])) == \
        pytest.approx(np.exp(-1.0), abs=1e-12)


def test_three_half_closed_form():
    spec = KernelSpec("three_half", np.array([2.0]), 1.0)
    r = 0.9
    s = np.sqrt(3) * r / 2.0
    assert kernel_eval(spec, np.array([0.0]), np.array([r])) == \
        pytest.approx((1 + s) * np.exp(-s), abs=1e-12)


def test_gauss_closed_form():
    spec = KernelSpec("inf", np.array([0.5]), 1.0)
    assert kernel_eval(spec, np.array([0.0]), np.array([0.5])) == \
        pytest.approx(np.exp(-0.5), abs=1e-12)


@pytest.mark.parametrize("nu", kernels.NU_TAGS)
def test_product_of_one_dimensional_factors(nu):
    rng = np.random.default_rng(3)
    spec = random_spec(rng, nu, 3)
    x = rng.standard_normal(3)
    xp = rng.standard_normal(3)
    prod = 1.0
    for k in range(3):
        one = KernelSpec(nu, spec.length_scales[k:k + 1], 1.0)
        prod *= kernel_eval(one, x[k:k + 1], xp[k:k + 1])
    assert kernel_eval(spec, x, xp) == pytest.approx(
        spec.signal_scale ** 2 * prod, rel=1e-12)


@pytest.mark.parametrize("nu", kernels.NU_TAGS)
def test_gram_symmetry_and_psd(nu):
    rng = np.random.default_rng(7)
    spec = random_spec(rng, nu, 4)
    x = rng.standard_normal((25, 4))
    g = gram_matrix(spec, x, x)
    assert np.allclose(g, g.T)
    assert np.all(g > 0)
    assert np.all(np.diag(g) == pytest.approx(spec.signal_scale ** 2))
    evals = np.linalg.eigvalsh((g + g.T) / 2)
    assert evals.min() >= -1e-8 * spec.signal_scale ** 2


@pytest.mark.parametrize("nu", kernels.NU_TAGS)
def test_backends_agree(nu):
    rng = np.random.default_rng(11)
    xa = np.ascontiguousarray(rng.standard_normal((13, 5)))
    xb = np.ascontiguousarray(rng.standard_normal((9, 5)))
    ell = np.ascontiguousarray(np.exp(rng.standard_normal(5) * 0.2))
    ref = gram_np(kernels._NU_CODE[nu], xa, xb, ell)
    cy = pytest.importorskip("hrtfgp._gram_cy")
    out = cy.gram(kernels._NU_CODE[nu], xa, xb, ell)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-14)


def test_dimension_mismatch_rejected():
    spec = KernelSpec("inf", np.array([1.0, 1.0]), 1.0)
    with pytest.raises(ValueError):
        kernel_eval(spec, np.zeros(3), np.zeros(3))


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        KernelSpec("inf", np.array([1.0, -1.0]), 1.0)
    with pytest.raises(ValueError):
        KernelSpec("inf", np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        KernelSpec("quartic", np.array([1.0]), 1.0)


@settings(max_examples=40, deadline=None)
@given(
    nu=st.sampled_from(kernels.NU_TAGS),
    seed=st.integers(0, 10_000),
)
def test_kernel_bounded_and_symmetric(nu, seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, nu, 3)
    x = rng.standard_normal(3) * 3
    xp = rng.standard_normal(3) * 3
    v = kernel_eval(spec, x, xp)
    assert 0 < v <= spec.signal_scale ** 2 + 1e-12
    assert v == pytest.approx(kernel_eval(spec, xp, x), rel=1e-12)


@pytest.mark.parametrize("nu", kernels.NU_TAGS)
def test_log_length_grad_factor_matches_finite_difference(nu):
    # d k / d log ell equals the per-dimension factor times the kernel value
    rng = np.random.default_rng(5)
    ell = np.exp(rng.standard_normal(2) * 0.2)
    x = rng.standard_normal(2)
    xp = rng.standard_normal(2)
    h = 1e-6
    for k in range(2):
        up = ell.copy()
        dn = ell.copy()
        up[k] *= np.exp(h)
        dn[k] *= np.exp(-h)
        fd = (kernel_eval(KernelSpec(nu, up, 1.0), x, xp)
              - kernel_eval(KernelSpec(nu, dn, 1.0), x, xp)) / (2 * h)
        r = np.abs(x - xp)[None, None, :]
        fac = kernels.log_length_grad_factor(nu, r, ell)[0, 0, k]
        analytic = fac * kernel_eval(KernelSpec(nu, ell, 1.0), x, xp)
        assert analytic == pytest.approx(fd, rel=1e-5, abs=1e-10)
