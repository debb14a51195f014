"""HRTF-based binaural sound-source localization workbench.

Gaussian-process localization models over binaural features, greedy training-
sample selection, a conditional mixture-of-Gaussians HRTF generator, and an
active-learning loop that personalizes HRTFs from listener feedback.
"""

from .kernels import BACKEND, KernelSpec, gram_matrix, kernel_eval

__version__ = "0.1.0"

__all__ = ["BACKEND", "KernelSpec", "gram_matrix", "kernel_eval", "__version__"]
