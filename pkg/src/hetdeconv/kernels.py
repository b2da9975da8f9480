"""Smoothing kernels and the quadrature engine for the deconvolution kernel.

The contaminated direction is smoothed with a kernel whose Fourier transform
(1 - v^2)^3 is supported on [-1, 1]; that compact support is what turns the
Fourier-inversion integral into a fixed-interval quadrature.  The error-free
direction uses the standard normal kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import factorial

import numpy as np
from numpy.polynomial.legendre import leggauss

from .error_models import ErrorEnsemble

TWO_PI = 2.0 * np.pi

# Relative tolerance for the imaginary residue of Fourier sums over symmetric
# node pairs.  Scaled by the evaluation magnitude: supersmooth error laws at
# small bandwidths produce kernel values far above 1, where an absolute
# threshold would reject pure roundoff.
IMAG_TOL = 1e-10


class QuadratureRule(str, Enum):
    GAUSS_LEGENDRE = "gauss-legendre"
    TRAPEZOID = "trapezoid"


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and weights for integrating over the kernel support [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray
    rule: QuadratureRule

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "rule", QuadratureRule(self.rule))
        if nodes.size < 16:
            raise ValueError(f"need at least 16 nodes, got {nodes.size}")
        if nodes.shape != weights.shape:
            raise ValueError("nodes and weights must have matching shapes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if nodes[0] < -1.0 or nodes[-1] > 1.0:
            raise ValueError("nodes must lie in [-1, 1]")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 2.0) > 1e-10:
            raise ValueError(f"weights must sum to 2, got {weights.sum()!r}")
        nodes.setflags(write=False)
        weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.nodes.size

    @classmethod
    def gauss_legendre(cls, m: int = 128) -> "QuadratureGrid":
        nodes, weights = leggauss(m)
        # Symmetrize so paired +/-v nodes cancel odd integrands exactly.
        nodes = 0.5 * (nodes - nodes[::-1])
        weights = 0.5 * (weights + weights[::-1])
        return cls(nodes, weights, QuadratureRule.GAUSS_LEGENDRE)

    @classmethod
    def trapezoid(cls, m: int = 129) -> "QuadratureGrid":
        nodes = np.linspace(-1.0, 1.0, m)
        h = 2.0 / (m - 1)
        weights = np.full(m, h)
        weights[0] = weights[-1] = h / 2.0
        return cls(nodes, weights, QuadratureRule.TRAPEZOID)


def gaussian_kernel(u):
    """Standard normal density, the kernel for the error-free direction."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / np.sqrt(TWO_PI)


def bandlimited_kernel_ft(v):
    """Fourier transform of the contaminated-direction kernel: (1-v^2)^3 on [-1, 1]."""
    v = np.asarray(v, dtype=float)
    inside = np.abs(v) <= 1.0
    base = 1.0 - v * v
    return np.where(inside, base * base * base, 0.0)


_DEFAULT_QUAD = QuadratureGrid.gauss_legendre(128)


def bandlimited_kernel(u, quad: QuadratureGrid | None = None):
    """Contaminated-direction kernel by Fourier inversion on the quadrature grid.

    This is the production path; the closed form below exists as an oracle.
    """
    quad = quad or _DEFAULT_QUAD
    u = np.asarray(u, dtype=float)
    profile = quad.weights * bandlimited_kernel_ft(quad.nodes)
    vals = np.cos(np.multiply.outer(u, quad.nodes)) @ profile / TWO_PI
    return vals if vals.ndim else float(vals)


# Moments of the kernel transform: c_k = int_{-1}^{1} v^{2k} (1-v^2)^3 dv.
_SERIES_TERMS = 18
_SERIES_COEF = np.array(
    [
        (-1.0) ** k
        / factorial(2 * k)
        * 2.0
        * (1.0 / (2 * k + 1) - 3.0 / (2 * k + 3) + 3.0 / (2 * k + 5) - 1.0 / (2 * k + 7))
        for k in range(_SERIES_TERMS)
    ]
)


def bandlimited_kernel_closed_form(u):
    """Exact antiderivative evaluation of the contaminated-direction kernel.

    Used only as a cross-check oracle for the quadrature path.  The
    sin/cos closed form cancels catastrophically near 0, so |u| < 2 switches
    to the Taylor series of the integral.
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.empty_like(u)

    small = np.abs(u) < 2.0
    if small.any():
        powers = np.power.outer(u[small] ** 2, np.arange(_SERIES_TERMS))
        out[small] = powers @ _SERIES_COEF / TWO_PI
    if (~small).any():
        x = u[~small]
        s, c = np.sin(x), np.cos(x)
        integral = (
            96.0 * c / x**4
            - 576.0 * s / x**5
            - 1440.0 * c / x**6
            + 1440.0 * s / x**7
        )
        out[~small] = integral / TWO_PI
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class DeconvWeights:
    """Tabulated integrand weights kernel_ft(v_m) * psi_j(v_m / b), shape (n, M)."""

    ensemble: ErrorEnsemble
    bandwidth: float
    quad: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", values)
        if values.shape != (self.ensemble.n, self.quad.size):
            raise ValueError(
                f"weights shape {values.shape} does not match "
                f"(n={self.ensemble.n}, M={self.quad.size})"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite deconvolution weights; validate the ensemble first")
        values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.ensemble.n


def build_deconv_weights(
    ensemble: ErrorEnsemble, bandwidth: float, quad: QuadratureGrid
) -> DeconvWeights:
    """Tabulate the per-observation, per-node deconvolution weights.

    The shared denominator is evaluated once per node and reused across all
    observations.  Raises DegenerateDenominator if it falls below the floor.
    """
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    psi = ensemble.deconv_weight_matrix(quad.nodes / bandwidth)
    values = bandlimited_kernel_ft(quad.nodes)[None, :] * psi
    return DeconvWeights(ensemble=ensemble, bandwidth=float(bandwidth), quad=quad, values=values)


def _real_part_checked(values: np.ndarray) -> np.ndarray:
    """Drop the imaginary part after checking it is roundoff-level small."""
    mag = np.abs(values)
    scale = max(1.0, float(mag.max())) if mag.size else 1.0
    worst = float(np.abs(values.imag).max()) if mag.size else 0.0
    if worst > IMAG_TOL * scale:
        raise AssertionError(
            f"imaginary residue {worst:.3e} exceeds {IMAG_TOL:.0e} * scale {scale:.3e}; "
            "asymmetric error law or corrupted weights"
        )
    return values.real


def deconv_kernel(weights: DeconvWeights, j: int, arg: float) -> float:
    """Generalized deconvolution kernel for observation j at a single argument.

    Callers supply arg = (t - W_j) / b.
    """
    if not 0 <= j < weights.n:
        raise IndexError(f"observation index {j} outside 0..{weights.n - 1}")
    phases = np.exp(-1j * float(arg) * weights.quad.nodes)
    total = (weights.quad.weights * phases) @ weights.values[j] / TWO_PI
    return float(_real_part_checked(np.atleast_1d(total))[0])


def deconv_kernel_grid(weights: DeconvWeights, obs_args, eval_args) -> np.ndarray:
    """Kernel values L_j(eval_args[i] - obs_args[j]) for all j, i at once.

    Factorizes exp(-i v (e_i - o_j)) = exp(i v o_j) exp(-i v e_i) so the sum
    over quadrature nodes becomes one (n, M) @ (M, I) product.
    """
    obs_args = np.atleast_1d(np.asarray(obs_args, dtype=float))
    eval_args = np.atleast_1d(np.asarray(eval_args, dtype=float))
    v = weights.quad.nodes
    obs_phase = np.exp(1j * np.outer(obs_args, v))
    eval_phase = np.exp(-1j * np.outer(v, eval_args))
    combined = (weights.values * obs_phase * weights.quad.weights) @ eval_phase / TWO_PI
    return _real_part_checked(combined)
