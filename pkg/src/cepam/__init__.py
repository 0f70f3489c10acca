"""CEPAM: communication-efficient, privacy-adaptable gradient transport.

The package combines a randomized lattice quantizer whose quantization
error exactly simulates a prescribed additive noise (Gaussian or Laplace),
a bit-exact entropy codec for the resulting messages, a differential
privacy accountant, and a deterministic federated-learning simulator used
to validate the distortion, compression, privacy and convergence behavior
of the scheme at desk scale.
"""

__version__ = "0.1.0"

from .lattice import LatticeSpec, cell_contains, nearest_lattice_point, sample_cell_uniform
from .noise import GaussianBall, LaplaceInterval, make_noise_family
from .randomness import RandomTape, derive_key
from .quantizers import (
    EncodedSubvector,
    RejectionOverflowError,
    lrsuq_decode,
    lrsuq_encode,
    rsuq_encode,
    sdq_decode,
    sdq_encode,
)

__all__ = [
    "LatticeSpec",
    "GaussianBall",
    "LaplaceInterval",
    "RandomTape",
    "EncodedSubvector",
    "RejectionOverflowError",
    "make_noise_family",
    "derive_key",
    "nearest_lattice_point",
    "cell_contains",
    "sample_cell_uniform",
    "sdq_encode",
    "sdq_decode",
    "rsuq_encode",
    "lrsuq_encode",
    "lrsuq_decode",
]
