"""Random Fourier features for the Gaussian kernel exp(-||x - x'||^2 / sigma^2)."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, InvalidDimensionError, InvalidParameterError


@dataclass(frozen=True, eq=False)
class RffParams:
    """Frozen frequencies/phases shared by every agent of one physical node.

    ``frequencies`` has shape (dim_out, dim_in); ``phases`` shape (dim_out,).
    """

    frequencies: np.ndarray
    phases: np.ndarray
    dim_in: int
    dim_out: int
    kernel_width: float
    seed: int

    def __eq__(self, other):
        if not isinstance(other, RffParams):
            return NotImplemented
        return (
            (self.dim_in, self.dim_out, self.kernel_width, self.seed)
            == (other.dim_in, other.dim_out, other.kernel_width, other.seed)
            and np.array_equal(self.frequencies, other.frequencies)
            and np.array_equal(self.phases, other.phases)
        )

    def __hash__(self):
        return hash((self.dim_in, self.dim_out, self.kernel_width, self.seed))


def sample_rff_params(p, D, sigma=1.0, seed=0):
    """Draw D random frequencies for p-dimensional inputs.

    Frequencies are N(0, 2/sigma^2) per coordinate so that
    E[z(x).z(x')] = exp(-||x - x'||^2 / sigma^2); phases are U[0, 2*pi].
    """
    if p < 1 or D < 1:
        raise InvalidDimensionError(f"need p >= 1 and D >= 1, got p={p}, D={D}")
    if not sigma > 0:
        raise InvalidParameterError(f"kernel width must be > 0, got {sigma}")
    rng = np.random.default_rng(seed)
    freqs = rng.normal(0.0, np.sqrt(2.0) / sigma, size=(D, p))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=D)
    freqs.setflags(write=False)
    phases.setflags(write=False)
    return RffParams(freqs, phases, int(p), int(D), float(sigma), int(seed))


def map_features(params, x):
    """z_i = sqrt(2/D) cos(w_i . x + phase_i). Accepts one p-vector or an (n, p) batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != params.dim_in:
        raise DimensionMismatchError(f"expected inputs of length {params.dim_in}, got shape {x.shape}")
    Z = kernels.rff_map(params.frequencies, params.phases, np.ascontiguousarray(X))
    return Z[0] if single else Z


def approx_kernel(z1, z2):
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != z2.shape:
        raise DimensionMismatchError(f"feature vectors differ in shape: {z1.shape} vs {z2.shape}")
    return float(z1 @ z2)


def gaussian_kernel(x1, x2, sigma=1.0):
    """Exact kernel, used as the reference the features approximate."""
    diff = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    return float(np.exp(-(diff @ diff) / sigma**2))
