"""Product-Matern covariance functions and the Gram-matrix backend dispatch.

The covariance between two feature vectors is the product of independent
one-dimensional Matern factors of a single smoothness class, scaled by a
signal variance:

    k(x, x') = alpha^2 * prod_k K_nu(|x_k - x'_k|, ell_k)

with K_{1/2}(r, l) = e^{-r/l}, K_{3/2}(r, l) = (1 + sqrt(3) r/l) e^{-sqrt(3) r/l}
and K_inf(r, l) = e^{-r^2 / (2 l^2)}.

Gram construction is the hot loop of both hyperparameter training and greedy
subset selection, so it is served by a compiled extension when available.
Set HRTFGP_FORCE_NUMPY=1 to force the NumPy fallback.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import _gram_np

if os.environ.get("HRTFGP_FORCE_NUMPY"):
    _backend = _gram_np
    BACKEND = "numpy"
else:
    try:
        from . import _gram_cy as _backend

        BACKEND = "cython"
    except ImportError:  # extension not built
        _backend = _gram_np
        BACKEND = "numpy"

NU_TAGS = ("half", "three_half", "inf")
_NU_CODE = {"half": 0, "three_half": 1, "inf": 2}

_SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class KernelSpec:
    """Smoothness class, per-dimension length scales, and signal scale."""

    nu: str
    length_scales: np.ndarray
    signal_scale: float

    def __post_init__(self):
        if self.nu not in NU_TAGS:
            raise ValueError(f"unknown smoothness tag {self.nu!r}")
        ell = np.asarray(self.length_scales, dtype=float)
        if ell.ndim != 1 or ell.size == 0:
            raise ValueError("length_scales must be a non-empty 1-D array")
        if not np.all(ell > 0):
            raise ValueError("length scales must be positive")
        if not self.signal_scale > 0:
            raise ValueError("signal scale must be positive")
        object.__setattr__(self, "length_scales", ell)
        object.__setattr__(self, "signal_scale", float(self.signal_scale))

    @property
    def dim(self):
        return self.length_scales.size


def gram_matrix(spec: KernelSpec, xa, xb) -> np.ndarray:
    """Cross-covariance matrix k(xa_i, xb_j), including the alpha^2 factor."""
    xa = np.ascontiguousarray(xa, dtype=float)
    xb = np.ascontiguousarray(xb, dtype=float)
    if xa.ndim != 2 or xb.ndim != 2:
        raise ValueError("inputs must be 2-D (n, d) arrays")
    if xa.shape[1] != spec.dim or xb.shape[1] != spec.dim:
        raise ValueError(
            f"feature dimension mismatch: kernel has {spec.dim}, "
            f"inputs have {xa.shape[1]} and {xb.shape[1]}"
        )
    base = _backend.gram(_NU_CODE[spec.nu], xa, xb, spec.length_scales)
    return (spec.signal_scale ** 2) * base


def kernel_eval(spec: KernelSpec, x, xp) -> float:
    """Covariance between two single feature vectors."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    return float(gram_matrix(spec, x, xp)[0, 0])


def log_length_grad_factor(nu: str, r, ell_k) -> np.ndarray:
    """Elementwise d log K_nu / d log ell_k at pairwise distances r.

    Multiplying the noise-free Gram by this factor gives dK/d log ell_k.
    """
    if nu == "half":
        return r / ell_k
    if nu == "three_half":
        s = _SQRT3 * r / ell_k
        return s * s / (1.0 + s)
    return (r / ell_k) ** 2
