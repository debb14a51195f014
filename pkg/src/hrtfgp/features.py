"""Sound-source-invariant binaural features, minimum-phase filter
reconstruction, and stereo rendering for listening tests.

The four feature kinds are per-frequency functions of same-direction left and
right ear HRTFs:

    LMR  log(|H_L| / |H_R| + 1)        log-magnitude ratio
    PD   wrap(angle H_L - angle H_R)   phase difference
    AMR  2 |H_L| / (|H_L| + |H_R|)     average magnitude ratio
    MP   [|H_L|, |H_R|]                magnitude pairs

Denominators are floored at a small epsilon; LMR otherwise approaches a
singularity as |H_R| -> 0.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .dataset import HrtfSet, wrap_phase

FEATURE_KINDS = ("LMR", "PD", "AMR", "MP")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D' feature rows paired with N x 3 unit target directions."""

    kind: str
    X: np.ndarray
    Y: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise FeatureError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(self.X)):
            raise FeatureError("feature matrix contains non-finite entries")
        d = self.frequencies.size
        expected = 2 * d if self.kind == "MP" else d
        if self.X.shape[1] != expected:
            raise FeatureError(
                f"{self.kind} features must have width {expected}, got {self.X.shape[1]}"
            )
        if self.kind == "LMR" and np.any(self.X < 0):
            raise FeatureError("LMR entries must be >= 0")
        if self.kind == "AMR" and (np.any(self.X < 0) or np.any(self.X >= 2)):
            raise FeatureError("AMR entries must lie in [0, 2)")
        if self.kind == "PD" and (np.any(self.X <= -np.pi) or np.any(self.X > np.pi)):
            raise FeatureError("PD entries must lie in (-pi, pi]")
        if self.kind == "MP" and np.any(self.X < 0):
            raise FeatureError("MP entries must be >= 0")


def default_eps(hrtf: HrtfSet) -> float:
    return 1e-6 * float(max(hrtf.left_mag.max(), hrtf.right_mag.max()))


def extract_features(hrtf: HrtfSet, kind: str, eps: float = None) -> FeatureMatrix:
    """Compute one feature kind for every direction row of the set."""
    if kind not in FEATURE_KINDS:
        raise FeatureError(f"unknown feature kind {kind!r}")
    if eps is None:
        eps = default_eps(hrtf)
    if not eps > 0:
        raise FeatureError("eps must be positive")

    lm = hrtf.left_mag.astype(float)
    rm = hrtf.right_mag.astype(float)
    if kind == "LMR":
        x = np.log(lm / np.maximum(rm, eps) + 1.0)
    elif kind == "PD":
        x = wrap_phase(hrtf.left_phase.astype(float) - hrtf.right_phase.astype(float))
    elif kind == "AMR":
        x = 2.0 * lm / np.maximum(lm + rm, eps)
        # |H_R| = 0 with |H_L| >= eps hits the open upper bound exactly
        x = np.minimum(x, 2.0 * (1.0 - 1e-12))
    else:
        x = np.hstack([lm, rm])
    return FeatureMatrix(kind, x, hrtf.directions(), hrtf.frequencies.astype(float))


def min_phase_ir(magnitude, n_fft: int) -> np.ndarray:
    """Minimum-phase impulse response with the given magnitude response.

    Real-cepstrum method: interpolate the D magnitude bins (assumed to span
    [0, Nyquist]) onto the n_fft rfft grid, floor at 1e-6 of the peak, fold
    the real cepstrum onto causal quefrencies, and exponentiate back.
    """
    magnitude = np.asarray(magnitude, dtype=float)
    d = magnitude.size
    if np.any(magnitude < 0):
        raise FeatureError("magnitude entries must be >= 0")
    peak = magnitude.max()
    if peak == 0:
        raise FeatureError("all-zero magnitude has no minimum-phase filter")
    if n_fft < 2 * d or n_fft & (n_fft - 1):
        raise FeatureError("n_fft must be a power of two with n_fft >= 2 D")

    half = n_fft // 2
    grid = np.linspace(0.0, 1.0, half + 1)
    src = np.linspace(0.0, 1.0, d)
    mag = np.interp(grid, src, magnitude)
    mag = np.maximum(mag, 1e-6 * peak)

    log_mag = np.log(mag)
    # full mirror-symmetric spectrum -> real cepstrum
    full = np.concatenate([log_mag, log_mag[-2:0:-1]])
    cep = np.fft.ifft(full).real
    folded = np.zeros(n_fft)
    folded[0] = cep[0]
    folded[1:half] = 2.0 * cep[1:half]
    folded[half] = cep[half]
    spectrum = np.exp(np.fft.fft(folded))
    return np.fft.ifft(spectrum).real


def render_binaural(mp_row, noise_seed: int, dur: float, sample_rate: float,
                    n_fft: int = None, normalize: bool = True):
    """Convolve seeded white Gaussian noise with left/right minimum-phase
    filters built from the two halves of an MP feature row.

    Returns an (n_samples, 2) float array; when `normalize` is set the pair
    is jointly peak-normalized to 0.9 full scale.
    """
    mp_row = np.asarray(mp_row, dtype=float)
    if mp_row.size % 2:
        raise FeatureError("MP row must have even length (left and right halves)")
    if not 0.1 <= dur <= 5.0:
        raise FeatureError("duration must lie in [0.1, 5] seconds")
    d = mp_row.size // 2
    if n_fft is None:
        n_fft = 1 << int(np.ceil(np.log2(2 * d)))
    rng = np.random.default_rng(noise_seed)
    noise = rng.standard_normal(int(round(dur * sample_rate)))
    left = fftconvolve(noise, min_phase_ir(mp_row[:d], n_fft))[: noise.size]
    right = fftconvolve(noise, min_phase_ir(mp_row[d:], n_fft))[: noise.size]
    out = np.stack([left, right], axis=1)
    if normalize:
        peak = np.abs(out).max()
        if peak > 0:
            out = out * (0.9 / peak)
    return out
