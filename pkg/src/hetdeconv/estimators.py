"""Regression estimators for one exact covariate and one error-contaminated covariate.

Implements the heteroscedastic partial deconvolution estimator (ratio of a
response-weighted kernel sum to a joint-density estimate), the naive
Nadaraya-Watson baseline that ignores the measurement error, the partial-linear
shortcut for separable models, and the variance-bound diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .error_models import DENOMINATOR_FLOOR, ErrorEnsemble, validate_ensemble
from .exceptions import (
    DegenerateDenominator,
    DegenerateDesign,
    DimensionMismatch,
    EnsembleInvalid,
)
from .kernels import (
    TWO_PI,
    DeconvWeights,
    QuadratureGrid,
    bandlimited_kernel_ft,
    build_deconv_weights,
    deconv_kernel_grid,
    gaussian_kernel,
)

# Ratio guard: density estimates with |value| <= RIDGE_SCALE / (h*b) are
# flagged and the ratio is taken against the signed floor instead.  The
# deconvolution kernel takes negative values, so finite samples can push the
# density estimate to zero or below far from the data.
RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class Sample:
    """Observed triples (x_j, w_j, y_j) bound to the error ensemble of the w's."""

    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    ensemble: ErrorEnsemble

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        w = np.asarray(self.w, dtype=float)
        y = np.asarray(self.y, dtype=float)
        for name, arr in (("x", x), ("w", w), ("y", y)):
            if arr.ndim != 1:
                raise DimensionMismatch(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if not (x.size == w.size == y.size):
            raise DimensionMismatch(
                f"x, w, y lengths differ: {x.size}, {w.size}, {y.size}"
            )
        if x.size < 2:
            raise DimensionMismatch("need at least 2 observations")
        if self.ensemble.n != x.size:
            raise DimensionMismatch(
                f"ensemble has {self.ensemble.n} models for {x.size} observations"
            )
        for name, arr in (("x", x), ("w", w), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class Bandwidths:
    """Smoothing parameters: h for the exact direction, b for the contaminated one."""

    h: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "b", float(self.b))
        if not (self.h > 0 and self.b > 0):
            raise ValueError(f"bandwidths must be positive, got h={self.h}, b={self.b}")


def floored_ratio(num, den, floor):
    """num/den with |den| <= floor replaced by the signed floor; returns (ratio, flagged)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    flagged = np.abs(den) <= floor
    signed_floor = np.where(den >= 0.0, floor, -floor)
    safe = np.where(flagged, signed_floor, den)
    with np.errstate(over="ignore"):
        ratio = num / safe
    return ratio, flagged


@dataclass(frozen=True)
class DeconvEstimator:
    """Fitted state: sample, bandwidths, quadrature grid, tabulated weights.

    Immutable after fit; every evaluation is pure.
    """

    sample: Sample
    bandwidths: Bandwidths
    quad: QuadratureGrid
    weights: DeconvWeights

    def __post_init__(self):
        if self.weights.ensemble is not self.sample.ensemble:
            raise DimensionMismatch("weights were built against a different ensemble")
        if self.weights.bandwidth != self.bandwidths.b:
            raise DimensionMismatch("weights were built for a different bandwidth")

    @property
    def ridge_floor(self) -> float:
        return RIDGE_SCALE / (self.bandwidths.h * self.bandwidths.b)

    def _kernel_matrices(self, x_values, t_values):
        """Exact-direction kernel matrix (n, X) and deconvolution matrix (n, T)."""
        h, b = self.bandwidths.h, self.bandwidths.b
        x_values = np.atleast_1d(np.asarray(x_values, dtype=float))
        t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
        kx = gaussian_kernel((x_values[None, :] - self.sample.x[:, None]) / h)
        lt = deconv_kernel_grid(self.weights, self.sample.w / b, t_values / b)
        return kx, lt

    def numerator_grid(self, x_values, t_values) -> np.ndarray:
        """Response-weighted kernel sum on the tensor grid, shape (X, T)."""
        h, b = self.bandwidths.h, self.bandwidths.b
        kx, lt = self._kernel_matrices(x_values, t_values)
        return (kx * self.sample.y[:, None]).T @ lt / (h * b)

    def density_grid(self, x_values, t_values) -> np.ndarray:
        """Joint-density estimate on the tensor grid, shape (X, T)."""
        h, b = self.bandwidths.h, self.bandwidths.b
        kx, lt = self._kernel_matrices(x_values, t_values)
        return kx.T @ lt / (h * b)

    def predict_grid(self, x_values, t_values):
        """Regression estimate and ridge flags on the tensor grid: (values, flags)."""
        h, b = self.bandwidths.h, self.bandwidths.b
        kx, lt = self._kernel_matrices(x_values, t_values)
        num = (kx * self.sample.y[:, None]).T @ lt / (h * b)
        den = kx.T @ lt / (h * b)
        return floored_ratio(num, den, self.ridge_floor)

    def numerator(self, x: float, t: float) -> float:
        return float(self.numerator_grid([x], [t])[0, 0])

    def density(self, x: float, t: float) -> float:
        return float(self.density_grid([x], [t])[0, 0])

    def predict_flagged(self, x: float, t: float) -> tuple[float, bool]:
        vals, flags = self.predict_grid([x], [t])
        return float(vals[0, 0]), bool(flags[0, 0])

    def predict(self, x: float, t: float) -> float:
        return self.predict_flagged(x, t)[0]


def fit(sample: Sample, bandwidths: Bandwidths, quad: QuadratureGrid) -> DeconvEstimator:
    """Validate the ensemble at bandwidth b and tabulate the estimator weights.

    Raises EnsembleInvalid when the shared denominator degenerates on the
    scaled quadrature grid, DimensionMismatch on inconsistent inputs.
    """
    report = validate_ensemble(sample.ensemble, bandwidths.b, quad.nodes / bandwidths.b)
    if not report.passed:
        raise EnsembleInvalid(
            f"ensemble degenerates at b={bandwidths.b:g}: {report.summary()}", report
        )
    weights = build_deconv_weights(sample.ensemble, bandwidths.b, quad)
    return DeconvEstimator(sample=sample, bandwidths=bandwidths, quad=quad, weights=weights)


def naive_regression_grid(sample: Sample, bandwidths: Bandwidths, x_values, t_values):
    """Nadaraya-Watson on (x, w) with normal kernels both ways: (values, flags).

    Ignores the measurement error entirely; the ridge policy matches the
    deconvolution estimator with the denominator on the same density scale.
    """
    h, b = bandwidths.h, bandwidths.b
    x_values = np.atleast_1d(np.asarray(x_values, dtype=float))
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    kx = gaussian_kernel((x_values[None, :] - sample.x[:, None]) / h)
    kt = gaussian_kernel((t_values[None, :] - sample.w[:, None]) / b)
    scale = sample.n * h * b
    num = (kx * sample.y[:, None]).T @ kt / scale
    den = kx.T @ kt / scale
    return floored_ratio(num, den, RIDGE_SCALE / (h * b))


def naive_regression(sample: Sample, bandwidths: Bandwidths, x: float, t: float) -> float:
    vals, _ = naive_regression_grid(sample, bandwidths, [x], [t])
    return float(vals[0, 0])


def linear_slope(sample: Sample) -> float:
    """Centered least-squares slope of y on x.

    Root-n consistent for the separable model because the exact covariate is
    independent of the contaminated one, so the nonlinear term is uncorrelated
    with x.  Raises DegenerateDesign when x has zero variance.
    """
    dx = sample.x - sample.x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DegenerateDesign("x has zero variance; slope is not identifiable")
    dy = sample.y - sample.y.mean()
    return float(dx @ dy) / sxx


def partial_linear_grid(
    sample: Sample,
    b: float,
    quad: QuadratureGrid,
    slope: float,
    x_values,
    t_values,
    weights: DeconvWeights | None = None,
):
    """Separable-model estimator: x*slope plus a deconvolution-kernel mean of residuals.

    Only the contaminated direction is smoothed; returns (values, flags) with
    flags constant across x (the denominator depends on t alone).
    """
    if weights is None:
        report = validate_ensemble(sample.ensemble, b, quad.nodes / b)
        if not report.passed:
            raise EnsembleInvalid(
                f"ensemble degenerates at b={b:g}: {report.summary()}", report
            )
        weights = build_deconv_weights(sample.ensemble, b, quad)
    x_values = np.atleast_1d(np.asarray(x_values, dtype=float))
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    lt = deconv_kernel_grid(weights, sample.w / b, t_values / b)
    resid = sample.y - sample.x * slope
    num = resid @ lt / b
    den = lt.sum(axis=0) / b
    ratio, flagged = floored_ratio(num, den, RIDGE_SCALE / b)
    values = x_values[:, None] * slope + ratio[None, :]
    flags = np.broadcast_to(flagged[None, :], values.shape).copy()
    return values, flags


def partial_linear(
    sample: Sample, b: float, quad: QuadratureGrid, slope: float, x: float, t: float
) -> float:
    vals, _ = partial_linear_grid(sample, b, quad, slope, [x], [t])
    return float(vals[0, 0])


def variance_bound_diagnostic(
    ensemble: ErrorEnsemble, bandwidths: Bandwidths, quad: QuadratureGrid, c_sup: float
) -> float:
    """Upper bound on the estimator's variance term, up to the caller's sup-norm constant.

    Computes c_sup / (2 pi h b) * int_{-1}^{1} kernel_ft(u)^2 / S(u/b) du,
    the substituted form of the variance bound; monotone diagnostics only.
    """
    if c_sup <= 0:
        raise ValueError(f"c_sup must be positive, got {c_sup}")
    h, b = bandwidths.h, bandwidths.b
    denom = ensemble.denominator(quad.nodes / b)
    if np.any(denom <= DENOMINATOR_FLOOR):
        idx = int(np.argmin(denom))
        raise DegenerateDenominator(
            f"denominator {denom[idx]:.3e} at node {idx} below floor"
        )
    integrand = bandlimited_kernel_ft(quad.nodes) ** 2 / denom
    integral = float(quad.weights @ integrand)
    return c_sup * integral / (TWO_PI * h * b)
