"""waveclean: causal time-domain speech denoising at edge-device scale.

A wave U-Net generator (strided causal convs, multi-scale residual groups,
squeeze-excitation gating, GRU bottleneck) trained adversarially against a
quality-predicting discriminator, on a from-scratch tape autodiff core with
compiled hot kernels, plus streaming inference, WAV/weight I/O, footprint
accounting and a CLI.
"""

__version__ = "0.1.0"

from .discriminator import Discriminator, DiscriminatorConfig  # noqa: F401
from .generator import Generator, GeneratorConfig  # noqa: F401
from .kernels import active_backend  # noqa: F401
from .tensor import Tensor, no_grad  # noqa: F401
